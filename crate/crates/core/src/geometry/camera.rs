use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::{Mat3, Vec2, Vec3};
use super::rotation::Rotation;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T: Real> {
    pub origin: Vec3<T>,
    /// Unit length.
    pub dir: Vec3<T>,
    pub pixel: u32,
}

impl<T: Real> Ray<T> {
    #[inline(always)]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.dir * t
    }
}

/// Pinhole camera. Extrinsics map world to camera: `x_cam = R x_world + t`,
/// with the OpenCV convention (x right, y down, z forward).
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T: Real> {
    intrinsics: Mat3<T>,
    intrinsics_inv: Mat3<T>,
    rotation: Rotation<T>,
    translation: Vec3<T>,
    width: u32,
    height: u32,
}

impl<T: Real> Camera<T> {
    pub fn new(
        intrinsics: Mat3<T>,
        rotation: Rotation<T>,
        translation: Vec3<T>,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let k = &intrinsics.m;
        let upper = k[1][0] == T::zero()
            && k[2][0] == T::zero()
            && k[2][1] == T::zero()
            && k[2][2] == T::one();
        if !upper || k[0][0] <= T::zero() || k[1][1] <= T::zero() {
            return Err(Error::InvalidInput(
                "intrinsics must be upper triangular with positive focal lengths and K[2][2] = 1"
                    .into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image size must be non-zero".into()));
        }
        let intrinsics_inv = intrinsics
            .inverse()
            .ok_or_else(|| Error::InvalidInput("singular intrinsics".into()))?;
        Ok(Self {
            intrinsics,
            intrinsics_inv,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    pub fn look_at(
        eye: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
        focal: T,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye).normalized();
        let right = forward.cross(up);
        if right.norm() <= T::epsilon() {
            return Err(Error::Degenerate("look-at direction parallel to up".into()));
        }
        let right = right.normalized();
        let down = forward.cross(right);
        let rot = Rotation::from_matrix_unchecked(Mat3::from_rows(right, down, forward));
        let translation = -rot.apply(eye);
        let half = T::lit(0.5);
        let z = T::zero();
        let k = Mat3::from_rows(
            Vec3::new(focal, z, T::lit(width as f64) * half),
            Vec3::new(z, focal, T::lit(height as f64) * half),
            Vec3::new(z, z, T::one()),
        );
        Self::new(k, rot, translation, width, height)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn intrinsics(&self) -> &Mat3<T> {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Rotation<T> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3<T> {
        self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        -self.rotation.apply_inverse(self.translation)
    }

    /// Pixel coordinates of a world point, `None` behind the camera.
    pub fn project(&self, p: Vec3<T>) -> Option<Vec2<T>> {
        let pc = self.rotation.apply(p) + self.translation;
        if pc.z <= T::zero() {
            return None;
        }
        let h = self.intrinsics.mul_vec(pc);
        Some(Vec2::new(h.x / h.z, h.y / h.z))
    }

    /// Ray through continuous pixel coordinates; the center of pixel `(i, j)`
    /// is at `(i + 0.5, j + 0.5)`.
    pub fn generate_ray(&self, pixel: Vec2<T>) -> Result<Ray<T>> {
        let w = T::lit(self.width as f64);
        let h = T::lit(self.height as f64);
        if !(pixel.x >= T::zero() && pixel.x < w && pixel.y >= T::zero() && pixel.y < h) {
            return Err(Error::PixelOutOfBounds {
                x: pixel.x.as_f64(),
                y: pixel.y.as_f64(),
                width: self.width,
                height: self.height,
            });
        }
        let id = pixel.y.floor().as_f64() as u32 * self.width + pixel.x.floor().as_f64() as u32;
        Ok(self.ray_unchecked(pixel, id))
    }

    #[inline]
    fn ray_unchecked(&self, pixel: Vec2<T>, id: u32) -> Ray<T> {
        let d_cam = self
            .intrinsics_inv
            .mul_vec(Vec3::new(pixel.x, pixel.y, T::one()));
        Ray {
            origin: self.center(),
            dir: self.rotation.apply_inverse(d_cam).normalized(),
            pixel: id,
        }
    }

    /// Ray through the center of the pixel with linear index `id`.
    pub fn pixel_ray(&self, id: u32) -> Ray<T> {
        let x = id % self.width;
        let y = id / self.width;
        let half = T::lit(0.5);
        self.ray_unchecked(
            Vec2::new(T::lit(x as f64) + half, T::lit(y as f64) + half),
            id,
        )
    }

    pub fn to_json(&self) -> CameraJson {
        let k = self.intrinsics.cast::<f64>();
        CameraJson {
            k: std::array::from_fn(|i| k.m[i / 3][i % 3]),
            r_axis_angle: self.rotation.axis_angle().cast::<f64>().into(),
            t: self.translation.cast::<f64>().into(),
            width: self.width,
            height: self.height,
        }
    }

    pub fn from_json(j: &CameraJson) -> Result<Self> {
        let k = Mat3 {
            m: std::array::from_fn(|r| std::array::from_fn(|c| T::lit(j.k[r * 3 + c]))),
        };
        Self::new(
            k,
            Rotation::from_axis_angle(Vec3::from(j.r_axis_angle).cast()),
            Vec3::from(j.t).cast(),
            j.width,
            j.height,
        )
    }
}

/// On-disk calibration record for one camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R_axis_angle")]
    pub r_axis_angle: [f64; 3],
    pub t: [f64; 3],
    pub width: u32,
    pub height: u32,
}

pub fn load_cameras<T: Real>(path: &Path) -> Result<Vec<Camera<T>>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let records: Vec<CameraJson> = serde_json::from_slice(&std::fs::read(path)?)?;
    records.iter().map(Camera::from_json).collect()
}

pub fn save_cameras<T: Real>(cameras: &[Camera<T>], path: &Path) -> Result<()> {
    let records: Vec<CameraJson> = cameras.iter().map(Camera::to_json).collect();
    std::fs::write(path, serde_json::to_vec_pretty(&records)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_camera() -> Camera<f64> {
        let k = Mat3::from_rows(
            Vec3::new(120.0, 0.0, 32.0),
            Vec3::new(0.0, 110.0, 24.0),
            Vec3::new(0.0, 0.0, 1.0),
        );
        Camera::new(
            k,
            Rotation::from_axis_angle(Vec3::new(0.1, -0.3, 0.05)),
            Vec3::new(0.2, -0.1, 3.0),
            64,
            48,
        )
        .unwrap()
    }

    #[test]
    fn principal_point_is_optical_axis() {
        let k = Mat3::from_rows(
            Vec3::new(100.0, 0.0, 16.0),
            Vec3::new(0.0, 100.0, 8.0),
            Vec3::new(0.0, 0.0, 1.0),
        );
        let cam = Camera::<f64>::new(k, Rotation::identity(), Vec3::zero(), 32, 16).unwrap();
        let ray = cam.generate_ray(Vec2::new(16.0, 8.0)).unwrap();
        assert!((ray.dir - Vec3::new(0.0, 0.0, 1.0)).max_abs() < 1e-15);
        assert_eq!(ray.origin, Vec3::zero());
    }

    #[test]
    fn corner_pixel_matches_inverse_intrinsics() {
        let cam = test_camera();
        let px = Vec2::new(0.5, 0.5);
        let ray = cam.generate_ray(px).unwrap();
        // Direct oracle: solve K d = [u, v, 1] by back-substitution.
        let k = cam.intrinsics().m;
        let y = (px.y - k[1][2]) / k[1][1];
        let x = (px.x - k[0][2] - k[0][1] * y) / k[0][0];
        let d_cam = Vec3::new(x, y, 1.0).normalized();
        let expect = cam.rotation().apply_inverse(d_cam);
        assert!((ray.dir - expect).max_abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_pixel_is_rejected() {
        let cam = test_camera();
        assert!(matches!(
            cam.generate_ray(Vec2::new(64.0, 3.0)),
            Err(Error::PixelOutOfBounds { .. })
        ));
        assert!(cam.generate_ray(Vec2::new(-0.1, 3.0)).is_err());
    }

    #[test]
    fn unproject_then_project_round_trips() {
        let cam = Camera::<f32>::from_json(&test_camera().to_json()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let px = Vec2::new(rng.random_range(0.0..64.0f32), rng.random_range(0.0..48.0f32));
            let ray = cam.generate_ray(px).unwrap();
            let back = cam.project(ray.at(2.5)).unwrap();
            assert!((back.x - px.x).abs() < 1e-4 && (back.y - px.y).abs() < 1e-4);
            assert!((ray.dir.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn pixel_directions_are_distinct_and_unit() {
        let cam = test_camera();
        let rays: Vec<_> = (0..cam.pixel_count() as u32).map(|i| cam.pixel_ray(i)).collect();
        for r in &rays {
            assert!((r.dir.norm() - 1.0).abs() < 1e-12);
        }
        let mut keys: Vec<_> = rays
            .iter()
            .map(|r| (r.dir.x.to_bits(), r.dir.y.to_bits(), r.dir.z.to_bits()))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), rays.len());
    }

    #[test]
    fn look_at_centers_the_target() {
        let cam =
            Camera::<f64>::look_at(Vec3::new(2.0, 0.5, -1.0), Vec3::zero(), Vec3::new(0.0, -1.0, 0.0), 80.0, 32, 32)
                .unwrap();
        let p = cam.project(Vec3::zero()).unwrap();
        assert!((p.x - 16.0).abs() < 1e-9 && (p.y - 16.0).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let cam = test_camera();
        let text = serde_json::to_string(&vec![cam.to_json()]).unwrap();
        assert!(text.contains("\"K\"") && text.contains("\"R_axis_angle\""));
        let back: Vec<CameraJson> = serde_json::from_str(&text).unwrap();
        let cam2 = Camera::<f64>::from_json(&back[0]).unwrap();
        assert!(cam2.rotation().matrix().max_abs_diff(cam.rotation().matrix()) < 1e-12);
    }
}
