use rayon::prelude::*;

use super::march::{march, MarchConfig, MarchResult, MarchScratch, SceneView};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Ray};
use crate::image::Image;
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    /// Premultiplied color, three channels.
    pub color: Image,
    /// One channel.
    pub alpha: Image,
    /// Lattice samples per pixel.
    pub samples: Vec<u32>,
    /// Primitive evaluations per pixel.
    pub prim_samples: Vec<u32>,
}

impl RenderOutput {
    pub fn total_samples(&self) -> u64 {
        self.samples.iter().map(|&s| s as u64).sum()
    }

    pub fn total_prim_samples(&self) -> u64 {
        self.prim_samples.iter().map(|&s| s as u64).sum()
    }
}

/// Key that decorrelates the jitter of one camera's pixels from another's.
pub fn ray_key(camera: u32, pixel: u32) -> u64 {
    ((camera as u64) << 32) | pixel as u64
}

/// Marches one ray per pixel center. Rows render in parallel; every pixel
/// is independent, so the result does not depend on scheduling.
pub fn render<T: Real>(view: &SceneView<'_, T>, cam: &Camera<T>, cfg: &MarchConfig, camera_index: u32) -> Result<RenderOutput> {
    cfg.validate()?;
    let (w, h) = (cam.width(), cam.height());
    let rows: Vec<Vec<(Vec3f, f32, u32, u32)>> = (0..h)
        .into_par_iter()
        .map_init(MarchScratch::<T>::default, |scratch, y| {
            (0..w)
                .map(|x| {
                    let id = y * w + x;
                    let ray = cam.pixel_ray(id);
                    let mut segs = std::mem::take(&mut scratch.segments);
                    view.geometry.intersect(&ray, &mut segs);
                    let r = march(&ray, &segs, view, cfg, cfg.offset(ray_key(camera_index, id)), scratch);
                    scratch.segments = segs;
                    (
                        [r.rgb.x.as_f32(), r.rgb.y.as_f32(), r.rgb.z.as_f32()],
                        r.alpha.as_f32(),
                        r.samples,
                        r.prim_samples,
                    )
                })
                .collect()
        })
        .collect();
    let mut out = RenderOutput {
        color: Image::new(w, h, 3),
        alpha: Image::new(w, h, 1),
        samples: Vec::with_capacity(cam.pixel_count()),
        prim_samples: Vec::with_capacity(cam.pixel_count()),
    };
    for (id, (rgb, a, s, ps)) in rows.into_iter().flatten().enumerate() {
        out.color.pixel_mut(id).copy_from_slice(&rgb);
        out.alpha.pixel_mut(id)[0] = a;
        out.samples.push(s);
        out.prim_samples.push(ps);
    }
    Ok(out)
}

type Vec3f = [f32; 3];

/// Marches an arbitrary ray batch; `keys[i]` seeds the jitter of `rays[i]`.
pub fn render_rays<T: Real>(view: &SceneView<'_, T>, rays: &[Ray<T>], keys: &[u64], cfg: &MarchConfig) -> Result<Vec<MarchResult<T>>> {
    cfg.validate()?;
    if keys.len() != rays.len() {
        return Err(Error::ShapeMismatch("one jitter key per ray required".into()));
    }
    Ok(rays
        .par_iter()
        .zip(keys.par_iter())
        .map_init(MarchScratch::<T>::default, |scratch, (ray, &key)| {
            let mut segs = std::mem::take(&mut scratch.segments);
            view.geometry.intersect(ray, &mut segs);
            let r = march(ray, &segs, view, cfg, cfg.offset(key), scratch);
            scratch.segments = segs;
            r
        })
        .collect())
}

/// `Ĩ = A·I + (1 − A)·B` per pixel.
pub fn composite(out: &RenderOutput, background: &Image) -> Result<Image> {
    if !out.color.same_shape(background) {
        return Err(Error::ShapeMismatch(format!(
            "background is {}x{}x{}, render is {}x{}x3",
            background.width(),
            background.height(),
            background.channels(),
            out.color.width(),
            out.color.height()
        )));
    }
    let mut img = Image::new(background.width(), background.height(), 3);
    for id in 0..img.pixel_count() {
        let a = out.alpha.pixel(id)[0];
        let c = out.color.pixel(id);
        let b = background.pixel(id);
        let o = img.pixel_mut(id);
        for k in 0..3 {
            o[k] = composite_value(a, c[k], b[k]);
        }
    }
    Ok(img)
}

#[inline(always)]
pub fn composite_value<T: Real>(alpha: T, color: T, background: T) -> T {
    alpha * color + (T::one() - alpha) * background
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mat3, Vec3};
    use crate::primitive::{PrimitiveSlab, WindowParams, WorldTransform};
    use crate::renderer::FrameGeometry;

    fn output(alpha: f32, color: f32) -> RenderOutput {
        RenderOutput {
            color: Image::filled(3, 2, &[color; 3]),
            alpha: Image::filled(3, 2, &[alpha]),
            samples: vec![0; 6],
            prim_samples: vec![0; 6],
        }
    }

    #[test]
    fn composite_limits() {
        let bg = Image::filled(3, 2, &[0.2, 0.4, 0.9]);
        assert_eq!(composite(&output(0.0, 1.0), &bg).unwrap(), bg);
        assert_eq!(composite(&output(1.0, 0.7), &bg).unwrap(), Image::filled(3, 2, &[0.7; 3]));
        let half = composite(&output(0.5, 1.0), &Image::new(3, 2, 3)).unwrap();
        assert_eq!(half, Image::filled(3, 2, &[0.5; 3]));
        assert!(composite(&output(0.5, 1.0), &Image::new(2, 2, 3)).is_err());
    }

    #[test]
    fn empty_scene_renders_black() {
        let slab = PrimitiveSlab::<f32>::constant(0, 2, Vec3::zero(), 0.0);
        let geo = FrameGeometry::from_world(vec![]).unwrap();
        let view = SceneView::new(&slab, &geo, WindowParams::default()).unwrap();
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zero(), Vec3::new(0.0, -1.0, 0.0), 20.0, 8, 6).unwrap();
        let out = render(&view, &cam, &MarchConfig::default(), 0).unwrap();
        assert!(out.alpha.data().iter().all(|&a| a == 0.0));
        assert!(out.color.data().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn render_is_repeatable() {
        let slab = PrimitiveSlab::<f32>::constant(1, 2, Vec3::new(1.0, 0.5, 0.2), 3.0);
        let geo = FrameGeometry::from_world(vec![WorldTransform::new(Vec3::zero(), Mat3::identity(), Vec3::splat(0.5))]).unwrap();
        let view = SceneView::new(&slab, &geo, WindowParams::default()).unwrap();
        let cam = Camera::look_at(Vec3::new(0.3, 0.2, -3.0), Vec3::zero(), Vec3::new(0.0, -1.0, 0.0), 30.0, 16, 12).unwrap();
        let cfg = MarchConfig { step: 0.01, jitter: true, seed: 9, ..Default::default() };
        let a = render(&view, &cam, &cfg, 0).unwrap();
        let b = render(&view, &cam, &cfg, 0).unwrap();
        assert_eq!(a, b);
        assert!(a.alpha.data().iter().any(|&x| x > 0.5));
    }
}
