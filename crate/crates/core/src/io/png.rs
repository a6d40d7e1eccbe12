use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

use super::binary::read_file;

pub const GAMMA: f32 = 2.2;

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

/// Linear value to an 8-bit code with a fixed 2.2 gamma encode.
pub fn encode_u8(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v.powf(1.0 / GAMMA) * 255.0).round() as u8
}

pub fn decode_u8(c: u8) -> f32 {
    (c as f32 / 255.0).powf(GAMMA)
}

/// 8-bit PNG of a 1-, 3- or 4-channel linear image.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::InvalidInput(format!("cannot write a {c}-channel PNG"))),
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width(), img.height());
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_source_gamma(png::ScaledFloat::new(1.0 / GAMMA));
        let mut w = enc.write_header().map_err(png_err)?;
        let bytes: Vec<u8> = img.data().iter().map(|&v| encode_u8(v)).collect();
        w.write_image_data(&bytes).map_err(png_err)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| png_err("image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let ch = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(png_err("unexpanded palette")),
    };
    let data = buf[..info.buffer_size()].iter().map(|&c| decode_u8(c)).collect();
    Image::from_data(info.width, info.height, ch, data)
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let bytes = encode_png(img)?;
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&bytes)?;
    Ok(f.flush()?)
}

pub fn load_png(path: &Path) -> Result<Image> {
    decode_png(&read_file(path)?)
}

/// Loads a float dump (`.mvpf`) losslessly or a PNG, by extension.
pub fn load_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => load_png(path),
        _ => super::binary::load_float_image(path),
    }
}
