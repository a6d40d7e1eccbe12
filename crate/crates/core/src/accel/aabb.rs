use crate::geometry::Vec3;
use crate::primitive::WorldTransform;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<T: Real> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    /// The empty box; the identity for [`Aabb::union`].
    pub fn empty() -> Self {
        Self {
            min: Vec3::splat(T::infinity()),
            max: Vec3::splat(T::neg_infinity()),
        }
    }

    pub fn from_points(points: impl IntoIterator<Item = Vec3<T>>) -> Self {
        points.into_iter().fold(Self::empty(), |b, p| b.grow(p))
    }

    pub fn is_empty(&self) -> bool {
        !(self.min.x <= self.max.x && self.min.y <= self.max.y && self.min.z <= self.max.z)
    }

    pub fn grow(&self, p: Vec3<T>) -> Self {
        Self {
            min: self.min.min(p),
            max: self.max.max(p),
        }
    }

    pub fn union(&self, o: &Self) -> Self {
        Self {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn centroid(&self) -> Vec3<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, o: &Self) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    /// Box grown by a relative and absolute margin on every side.
    pub fn inflated(&self, rel: T, abs: T) -> Self {
        let pad = self.extent().map(|e| e * rel + abs);
        Self {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    /// Slab test against `[0, t_max]`. `inv_dir` may contain infinities.
    #[inline(always)]
    pub fn hit(&self, origin: Vec3<T>, inv_dir: Vec3<T>, t_max: T) -> bool {
        let mut t0 = T::zero();
        let mut t1 = t_max;
        for a in 0..3 {
            if inv_dir[a].is_infinite() {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return false;
                }
                continue;
            }
            let lo = (self.min[a] - origin[a]) * inv_dir[a];
            let hi = (self.max[a] - origin[a]) * inv_dir[a];
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// World-space bounds of a primitive: the box around its eight transformed
/// cube corners.
pub fn primitive_aabb<T: Real>(w: &WorldTransform<T>) -> Aabb<T> {
    let one = T::one();
    Aabb::from_points((0..8).map(|c| {
        let s = |bit: usize| if c & bit != 0 { one } else { -one };
        w.to_world(Vec3::new(s(1), s(2), s(4)))
    }))
}

/// Spreads the low 10 bits of `v` so that two zero bits separate each one.
#[inline]
fn expand_bits(v: u32) -> u32 {
    let mut x = v & 0x3ff;
    x = (x | (x << 16)) & 0x0300_00ff;
    x = (x | (x << 8)) & 0x0300_f00f;
    x = (x | (x << 4)) & 0x030c_30c3;
    x = (x | (x << 2)) & 0x0924_9249;
    x
}

/// 30-bit Morton code of a point in the unit cube, x in the lowest bit.
pub fn morton_code<T: Real>(p: Vec3<T>) -> u32 {
    let q = |x: T| (x.as_f64() * 1024.0).clamp(0.0, 1023.0) as u32;
    expand_bits(q(p.x)) | (expand_bits(q(p.y)) << 1) | (expand_bits(q(p.z)) << 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;
    use crate::geometry::Rotation;

    fn morton_reference(x: u32, y: u32, z: u32) -> u32 {
        let mut code = 0;
        for bit in 0..10 {
            code |= ((x >> bit) & 1) << (3 * bit);
            code |= ((y >> bit) & 1) << (3 * bit + 1);
            code |= ((z >> bit) & 1) << (3 * bit + 2);
        }
        code
    }

    #[test]
    fn morton_matches_bitwise_reference() {
        for &(x, y, z) in &[(0, 0, 0), (1023, 1023, 1023), (1, 0, 0), (0, 1, 0), (0, 0, 1), (513, 77, 900), (341, 682, 5)] {
            let p = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * (1.0 / 1024.0);
            assert_eq!(morton_code(p), morton_reference(x, y, z));
        }
        assert_eq!(morton_code(Vec3::new(1.0f32, 1.0, 1.0)), (1 << 30) - 1);
    }

    #[test]
    fn aabb_of_rotated_cube() {
        let r = Rotation::from_axis_angle(Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_4));
        let w = WorldTransform::new(Vec3::new(1.0, 2.0, 3.0), *r.matrix(), Vec3::new(1.0, 1.0, 0.5));
        let b = primitive_aabb(&w);
        let h = 2f64.sqrt();
        assert!((b.min - Vec3::new(1.0 - h, 2.0 - h, 2.5)).max_abs() < 1e-12);
        assert!((b.max - Vec3::new(1.0 + h, 2.0 + h, 3.5)).max_abs() < 1e-12);
    }

    #[test]
    fn slab_hit_cases() {
        let b = Aabb {
            min: Vec3::splat(-1.0f64),
            max: Vec3::splat(1.0),
        };
        let inv = |d: Vec3<f64>| d.map(|x| 1.0 / x);
        assert!(b.hit(Vec3::new(-5.0, 0.0, 0.0), inv(Vec3::new(1.0, 0.0, 0.0)), f64::INFINITY));
        assert!(!b.hit(Vec3::new(-5.0, 2.0, 0.0), inv(Vec3::new(1.0, 0.0, 0.0)), f64::INFINITY));
        assert!(!b.hit(Vec3::new(5.0, 0.0, 0.0), inv(Vec3::new(1.0, 0.0, 0.0)), f64::INFINITY));
        assert!(!b.hit(Vec3::new(-5.0, 0.0, 0.0), inv(Vec3::new(1.0, 0.0, 0.0)), 3.0));
        // Origin on the slab plane of a parallel ray.
        assert!(b.hit(Vec3::new(-5.0, 1.0, 0.0), inv(Vec3::new(1.0, 0.0, 0.0)), f64::INFINITY));
        assert!(b.hit(Vec3::zero(), inv(Vec3::new(0.3, -0.2, 0.9)), f64::INFINITY));
    }

    #[test]
    fn identity_transform_box() {
        let w = WorldTransform::new(Vec3::zero(), Mat3::identity(), Vec3::splat(1.0f32));
        let b = primitive_aabb(&w);
        assert_eq!(b.min, Vec3::splat(-1.0));
        assert_eq!(b.max, Vec3::splat(1.0));
    }
}
