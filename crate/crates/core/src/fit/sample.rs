use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Camera, Vec3};
use crate::image::Image;
use crate::renderer::ray_key;

use super::objective::RayBatch;

/// One calibrated image with the background seen by its camera.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    /// Camera id, used to key ray jitter.
    pub id: u32,
    pub camera: Camera<f32>,
    pub target: Image,
    pub background: Image,
}

impl View {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.camera.width(), self.camera.height());
        for (name, img) in [("target", &self.target), ("background", &self.background)] {
            if img.width() != w || img.height() != h || img.channels() != 3 {
                return Err(Error::ShapeMismatch(format!(
                    "{name} image is {}x{}x{}, camera {} is {w}x{h}",
                    img.width(),
                    img.height(),
                    img.channels(),
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Draws `batch` distinct views from `pool`, then `rays_per_image` distinct
/// pixels uniformly from each.
pub fn sample_rays<R: Rng>(views: &[View], pool: &[usize], batch: usize, rays_per_image: usize, rng: &mut R) -> Result<RayBatch<f32>> {
    if pool.is_empty() || views.is_empty() {
        return Err(Error::Empty("training views"));
    }
    if batch == 0 || batch > pool.len() {
        return Err(Error::InvalidInput(format!("batch of {batch} images from {} views", pool.len())));
    }
    let mut out = RayBatch {
        rays: Vec::with_capacity(batch * rays_per_image),
        keys: Vec::with_capacity(batch * rays_per_image),
        targets: Vec::with_capacity(batch * rays_per_image),
        backgrounds: Vec::with_capacity(batch * rays_per_image),
        pixel_weights: None,
    };
    for vi in index::sample(rng, pool.len(), batch) {
        let view = views
            .get(pool[vi])
            .ok_or_else(|| Error::InvalidInput(format!("view index {} out of range", pool[vi])))?;
        let n = view.camera.pixel_count();
        if rays_per_image > n {
            return Err(Error::InvalidInput(format!("{rays_per_image} rays requested from a {n}-pixel image")));
        }
        for p in index::sample(rng, n, rays_per_image) {
            let t = view.target.pixel(p);
            let b = view.background.pixel(p);
            out.rays.push(view.camera.pixel_ray(p as u32));
            out.keys.push(ray_key(view.id, p as u32));
            out.targets.push(Vec3::new(t[0], t[1], t[2]));
            out.backgrounds.push(Vec3::new(b[0], b[1], b[2]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn view(id: u32, w: u32, h: u32) -> View {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -2.0), Vec3::zero(), Vec3::new(0.0, -1.0, 0.0), 10.0, w, h).unwrap();
        let mut target = Image::new(w, h, 3);
        for p in 0..target.pixel_count() {
            target.pixel_mut(p)[0] = p as f32;
        }
        View {
            id,
            camera: cam,
            target,
            background: Image::filled(w, h, &[0.1, 0.2, 0.3]),
        }
    }

    #[test]
    fn single_ray() {
        let views = [view(0, 4, 3)];
        let b = sample_rays(&views, &[0], 1, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.len(), 1);
        let p = b.rays[0].pixel;
        assert_eq!(b.targets[0].x, p as f32);
        assert_eq!(b.backgrounds[0], Vec3::new(0.1, 0.2, 0.3));
        b.validate().unwrap();
    }

    #[test]
    fn seeded_batches_repeat() {
        let views = [view(0, 8, 8), view(1, 8, 8), view(2, 8, 8)];
        let a = sample_rays(&views, &[0, 1, 2], 2, 10, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_rays(&views, &[0, 1, 2], 2, 10, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pixels_are_distinct_per_image() {
        let views = [view(0, 5, 5)];
        let b = sample_rays(&views, &[0], 1, 25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut px: Vec<u32> = b.rays.iter().map(|r| r.pixel).collect();
        px.sort_unstable();
        assert_eq!(px, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn too_many_rays_rejected() {
        let views = [view(0, 2, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_rays(&views, &[0], 1, 5, &mut rng).is_err());
        assert!(sample_rays(&views, &[0], 2, 1, &mut rng).is_err());
        assert!(sample_rays(&views, &[], 1, 1, &mut rng).is_err());
    }

    #[test]
    fn pixel_histogram_is_uniform() {
        let (w, h, k, draws) = (4u32, 4u32, 4usize, 250_000usize);
        let views = [view(0, w, h)];
        let n = (w * h) as usize;
        let mut counts = vec![0u64; n];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..draws {
            for r in sample_rays(&views, &[0], 1, k, &mut rng).unwrap().rays {
                counts[r.pixel as usize] += 1;
            }
        }
        let p = k as f64 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "count {c}, expected {mean} ± {sd}");
        }
    }
}
