//! Little-endian binary containers.
//!
//! Slab (`.mvps`), 16-byte header then payload:
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `MVPS`                |
//! | 4      | 4    | version, u32 (currently 1)  |
//! | 8      | 4    | primitive count, u32        |
//! | 12     | 4    | grid resolution M, u32      |
//! | 16     | 16·M³·N | f32 values              |
//!
//! Values are ordered primitive-major, then channel (r, g, b, σ), then z,
//! y, x with x fastest.
//!
//! Float image (`.mvpf`), 20-byte header then pixels:
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `MVPF`                |
//! | 4      | 4    | version, u32 (currently 1)  |
//! | 8      | 4    | width, u32                  |
//! | 12     | 4    | height, u32                 |
//! | 16     | 4    | channels, u32               |
//! | 20     | 4·W·H·C | f32 values, row-major, channels interleaved |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::primitive::{PrimitiveSlab, CHANNELS};

pub const SLAB_MAGIC: [u8; 4] = *b"MVPS";
pub const IMAGE_MAGIC: [u8; 4] = *b"MVPF";
pub const BINARY_VERSION: u32 = 1;

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f32s(out: &mut Vec<u8>, data: &[f32]) {
    out.reserve(data.len() * 4);
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Truncated(format!("{what}: need {n} bytes at offset {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: [u8; 4]) -> Result<()> {
        let m: [u8; 4] = self.take(4, "magic")?.try_into().unwrap();
        if m != magic {
            return Err(Error::BadMagic(m));
        }
        let version = self.u32("version")?;
        if version != BINARY_VERSION {
            return Err(Error::VersionMismatch {
                expected: BINARY_VERSION,
                found: version,
            });
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Truncated(what.into()))?, what)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_slab(slab: &PrimitiveSlab<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + slab.data().len() * 4);
    out.extend_from_slice(&SLAB_MAGIC);
    push_u32(&mut out, BINARY_VERSION);
    push_u32(&mut out, slab.n_prim() as u32);
    push_u32(&mut out, slab.m() as u32);
    push_f32s(&mut out, slab.data());
    out
}

pub fn decode_slab(bytes: &[u8]) -> Result<PrimitiveSlab<f32>> {
    let mut c = Cursor { bytes, pos: 0 };
    c.header(SLAB_MAGIC)?;
    let n = c.u32("primitive count")? as usize;
    let m = c.u32("resolution")? as usize;
    let len = n
        .checked_mul(CHANNELS)
        .and_then(|x| x.checked_mul(m.checked_pow(3)?))
        .ok_or_else(|| Error::Parse(format!("slab of {n} primitives at M={m} is too large")))?;
    let data = c.f32s(len, "slab payload")?;
    c.finish()?;
    PrimitiveSlab::new(n, m, data)
}

pub fn encode_image(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + img.data().len() * 4);
    out.extend_from_slice(&IMAGE_MAGIC);
    push_u32(&mut out, BINARY_VERSION);
    push_u32(&mut out, img.width());
    push_u32(&mut out, img.height());
    push_u32(&mut out, img.channels());
    push_f32s(&mut out, img.data());
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let mut c = Cursor { bytes, pos: 0 };
    c.header(IMAGE_MAGIC)?;
    let w = c.u32("width")?;
    let h = c.u32("height")?;
    let ch = c.u32("channels")?;
    let len = (w as usize)
        .checked_mul(h as usize)
        .and_then(|x| x.checked_mul(ch as usize))
        .ok_or_else(|| Error::Parse("image too large".into()))?;
    let data = c.f32s(len, "pixels")?;
    c.finish()?;
    Image::from_data(w, h, ch, data)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

pub fn save_slab(slab: &PrimitiveSlab<f32>, path: &Path) -> Result<()> {
    Ok(fs::write(path, encode_slab(slab))?)
}

pub fn load_slab(path: &Path) -> Result<PrimitiveSlab<f32>> {
    decode_slab(&read_file(path)?)
}

pub fn save_float_image(img: &Image, path: &Path) -> Result<()> {
    Ok(fs::write(path, encode_image(img))?)
}

pub fn load_float_image(path: &Path) -> Result<Image> {
    decode_image(&read_file(path)?)
}
