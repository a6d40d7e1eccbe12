use rayon::prelude::*;

use super::aabb::{morton_code, primitive_aabb, Aabb};
use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::primitive::WorldTransform;
use crate::real::Real;

/// Capacity of the fixed traversal stack.
pub const MAX_DEPTH: usize = 64;

const LEAF: u32 = 1 << 31;

/// One primitive's overlap with a ray: `t ∈ [t_enter, t_exit)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<T: Real> {
    pub prim: u32,
    pub t_enter: T,
    pub t_exit: T,
}

/// Linear BVH over primitive boxes, built from sorted Morton codes.
/// Internal node `i` has children `children[i]`; a child with the high bit
/// set refers to a sorted leaf slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Lbvh<T: Real> {
    children: Vec<[u32; 2]>,
    node_bounds: Vec<Aabb<T>>,
    leaf_bounds: Vec<Aabb<T>>,
    /// Primitive index of each sorted leaf slot.
    leaf_prims: Vec<u32>,
    depth: usize,
    scene_bounds: Aabb<T>,
}

/// Length of the common prefix of two 64-bit keys, or -1 when `j` is out
/// of range.
#[inline]
fn delta(keys: &[u64], i: usize, j: isize) -> i32 {
    if j < 0 || j as usize >= keys.len() {
        return -1;
    }
    (keys[i] ^ keys[j as usize]).leading_zeros() as i32
}

/// Child pair and covered leaf range of internal node `i`.
fn build_node(keys: &[u64], i: usize) -> ([u32; 2], (usize, usize)) {
    let ii = i as isize;
    let d: isize = if delta(keys, i, ii + 1) > delta(keys, i, ii - 1) { 1 } else { -1 };
    let delta_min = delta(keys, i, ii - d);
    let mut l_max: isize = 2;
    while delta(keys, i, ii + l_max * d) > delta_min {
        l_max *= 2;
    }
    let mut l: isize = 0;
    let mut t = l_max / 2;
    while t >= 1 {
        if delta(keys, i, ii + (l + t) * d) > delta_min {
            l += t;
        }
        t /= 2;
    }
    let j = ii + l * d;
    let delta_node = delta(keys, i, j);
    let mut s: isize = 0;
    let mut t = l;
    loop {
        t = (t + 1) / 2;
        if delta(keys, i, ii + (s + t) * d) > delta_node {
            s += t;
        }
        if t <= 1 {
            break;
        }
    }
    let gamma = ii + s * d + d.min(0);
    let (first, last) = (ii.min(j) as usize, ii.max(j) as usize);
    let gamma = gamma as usize;
    let left = if first == gamma { gamma as u32 | LEAF } else { gamma as u32 };
    let right = if last == gamma + 1 { (gamma + 1) as u32 | LEAF } else { (gamma + 1) as u32 };
    ([left, right], (first, last))
}

impl<T: Real> Lbvh<T> {
    pub fn build(transforms: &[WorldTransform<T>]) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::Empty("primitive set"));
        }
        let boxes: Vec<Aabb<T>> = transforms.par_iter().map(primitive_aabb).collect();
        let scene_bounds = boxes
            .par_iter()
            .copied()
            .reduce(Aabb::empty, |a, b| a.union(&b));
        let lo = scene_bounds.min;
        let ext = scene_bounds.extent();
        let inv_ext = ext.map(|e| if e > T::zero() { T::one() / e } else { T::zero() });
        let mut keys: Vec<u64> = boxes
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let c = (b.centroid() - lo).mul_elem(inv_ext);
                ((morton_code(c) as u64) << 32) | i as u64
            })
            .collect();
        keys.par_sort_unstable();

        let leaf_prims: Vec<u32> = keys.iter().map(|k| *k as u32).collect();
        // Slightly inflated so the conservative traversal never culls a
        // primitive that the exact leaf test would accept.
        let (rel, abs) = (T::lit(1e-5), T::lit(1e-6));
        let leaf_bounds: Vec<Aabb<T>> = leaf_prims
            .iter()
            .map(|&p| boxes[p as usize].inflated(rel, abs))
            .collect();

        let n = keys.len();
        let (children, node_bounds): (Vec<[u32; 2]>, Vec<Aabb<T>>) = (0..n.saturating_sub(1))
            .into_par_iter()
            .map(|i| {
                let (ch, (first, last)) = build_node(&keys, i);
                let b = leaf_bounds[first..=last]
                    .iter()
                    .fold(Aabb::empty(), |acc, b| acc.union(b));
                (ch, b)
            })
            .unzip();

        let mut bvh = Self {
            children,
            node_bounds,
            leaf_bounds,
            leaf_prims,
            depth: 0,
            scene_bounds,
        };
        bvh.depth = bvh.measure_depth();
        if bvh.depth > MAX_DEPTH {
            return Err(Error::TooDeep(bvh.depth));
        }
        Ok(bvh)
    }

    fn measure_depth(&self) -> usize {
        if self.children.is_empty() {
            return 1;
        }
        let mut max = 0;
        let mut stack = vec![(0u32, 1usize)];
        while let Some((node, d)) = stack.pop() {
            for &c in &self.children[node as usize] {
                if c & LEAF != 0 {
                    max = max.max(d + 1);
                } else {
                    stack.push((c, d + 1));
                }
            }
        }
        max
    }

    pub fn len(&self) -> usize {
        self.leaf_prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaf_prims.is_empty()
    }

    /// Number of levels including the leaves.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn scene_bounds(&self) -> &Aabb<T> {
        &self.scene_bounds
    }

    pub fn leaf_order(&self) -> &[u32] {
        &self.leaf_prims
    }

    /// Structural check: every node box contains its children and every
    /// leaf is reachable exactly once.
    pub fn validate(&self) -> bool {
        let n = self.len();
        if self.children.is_empty() {
            return n == 1;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        while let Some(node) = stack.pop() {
            let b = &self.node_bounds[node as usize];
            for &c in &self.children[node as usize] {
                if c & LEAF != 0 {
                    let leaf = (c & !LEAF) as usize;
                    if seen[leaf] || !b.contains_box(&self.leaf_bounds[leaf]) {
                        return false;
                    }
                    seen[leaf] = true;
                } else {
                    if !b.contains_box(&self.node_bounds[c as usize]) {
                        return false;
                    }
                    stack.push(c);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// All primitives whose oriented box overlaps the ray, sorted by
    /// `(t_enter, prim)`. `out` is cleared first.
    pub fn intersect(&self, ray: &Ray<T>, transforms: &[WorldTransform<T>], out: &mut Vec<Segment<T>>) {
        out.clear();
        let inv_dir = ray.dir.map(|d| T::one() / d);
        let t_max = T::infinity();
        let visit_leaf = |slot: usize, out: &mut Vec<Segment<T>>| {
            if !self.leaf_bounds[slot].hit(ray.origin, inv_dir, t_max) {
                return;
            }
            let prim = self.leaf_prims[slot];
            if let Some((t_enter, t_exit)) = ray_box_model(ray, &transforms[prim as usize]) {
                out.push(Segment { prim, t_enter, t_exit });
            }
        };
        if self.children.is_empty() {
            visit_leaf(0, out);
        } else {
            let mut stack = [0u32; MAX_DEPTH];
            let mut top = 0;
            if self.node_bounds[0].hit(ray.origin, inv_dir, t_max) {
                stack[0] = 0;
                top = 1;
            }
            while top > 0 {
                top -= 1;
                let node = stack[top] as usize;
                for &c in &self.children[node] {
                    if c & LEAF != 0 {
                        visit_leaf((c & !LEAF) as usize, out);
                    } else if self.node_bounds[c as usize].hit(ray.origin, inv_dir, t_max) {
                        stack[top] = c;
                        top += 1;
                    }
                }
            }
        }
        sort_segments(out);
    }
}

fn sort_segments<T: Real>(segs: &mut [Segment<T>]) {
    segs.sort_unstable_by(|a, b| {
        a.t_enter
            .partial_cmp(&b.t_enter)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.prim.cmp(&b.prim))
    });
}

/// Exact ray interval inside the primitive's `[-1, 1]³` model cube, clipped
/// to `t ≥ 0`. The model map is affine, so the ray parameter carries over.
#[inline]
pub fn ray_box_model<T: Real>(ray: &Ray<T>, w: &WorldTransform<T>) -> Option<(T, T)> {
    let o = w.to_model(ray.origin);
    let d = w.dir_to_model(ray.dir);
    let one = T::one();
    let mut t0 = T::zero();
    let mut t1 = T::infinity();
    for a in 0..3 {
        if d[a] == T::zero() {
            if o[a] < -one || o[a] > one {
                return None;
            }
            continue;
        }
        let inv = one / d[a];
        let (lo, hi) = {
            let x = (-one - o[a]) * inv;
            let y = (one - o[a]) * inv;
            if x <= y { (x, y) } else { (y, x) }
        };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    (t0 < t1).then_some((t0, t1))
}

/// Reference intersection that tests every primitive.
pub fn intersect_brute_force<T: Real>(ray: &Ray<T>, transforms: &[WorldTransform<T>]) -> Vec<Segment<T>> {
    let mut out: Vec<Segment<T>> = transforms
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            ray_box_model(ray, w).map(|(t_enter, t_exit)| Segment {
                prim: i as u32,
                t_enter,
                t_exit,
            })
        })
        .collect();
    sort_segments(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mat3, Rotation, Vec3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(n: usize, seed: u64) -> Vec<WorldTransform<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r = Rotation::from_axis_angle(Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ));
                WorldTransform::new(
                    Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                    *r.matrix(),
                    Vec3::new(rng.random_range(0.02..0.4), rng.random_range(0.02..0.4), rng.random_range(0.02..0.4)),
                )
            })
            .collect()
    }

    fn random_ray(rng: &mut ChaCha8Rng) -> Ray<f32> {
        let o = Vec3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let target = Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        Ray {
            origin: o,
            dir: (target - o).normalized(),
            pixel: 0,
        }
    }

    #[test]
    fn matches_brute_force_on_random_scenes() {
        for (n, seed) in [(1, 1), (2, 2), (3, 3), (17, 4), (256, 5), (1000, 6)] {
            let scene = random_scene(n, seed);
            let bvh = Lbvh::build(&scene).unwrap();
            assert!(bvh.validate());
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut segs = Vec::new();
            for _ in 0..200 {
                let ray = random_ray(&mut rng);
                bvh.intersect(&ray, &scene, &mut segs);
                assert_eq!(segs, intersect_brute_force(&ray, &scene));
            }
        }
    }

    #[test]
    fn coincident_primitives_stay_shallow() {
        let w = WorldTransform::new(Vec3::zero(), Mat3::identity(), Vec3::splat(0.1f32));
        let scene = vec![w; 4096];
        let bvh = Lbvh::build(&scene).unwrap();
        assert!(bvh.validate());
        assert!(bvh.depth() <= 14, "depth {}", bvh.depth());
        let ray = Ray { origin: Vec3::new(0.0, 0.0, -5.0), dir: Vec3::new(0.0, 0.0, 1.0), pixel: 0 };
        let mut segs = Vec::new();
        bvh.intersect(&ray, &scene, &mut segs);
        assert_eq!(segs.len(), 4096);
        assert!(segs.windows(2).all(|p| p[0].prim < p[1].prim));
    }

    #[test]
    fn axis_aligned_ray_through_unit_cube() {
        let scene = vec![WorldTransform::new(Vec3::zero(), Mat3::identity(), Vec3::splat(1.0f64))];
        let ray = Ray { origin: Vec3::new(0.2, -0.3, -3.0), dir: Vec3::new(0.0, 0.0, 1.0), pixel: 0 };
        let segs = intersect_brute_force(&ray, &scene);
        assert_eq!(segs, vec![Segment { prim: 0, t_enter: 2.0, t_exit: 4.0 }]);
        // Origin inside: entry clipped to zero.
        let inside = Ray { origin: Vec3::zero(), ..ray };
        assert_eq!(intersect_brute_force(&inside, &scene)[0].t_enter, 0.0);
        // Parallel ray outside one slab.
        let miss = Ray { origin: Vec3::new(1.5, 0.0, -3.0), ..ray };
        assert!(intersect_brute_force(&miss, &scene).is_empty());
    }

    #[test]
    fn empty_scene_is_an_error() {
        assert!(matches!(Lbvh::<f32>::build(&[]), Err(Error::Empty(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bvh_equals_brute_force(n in 1usize..300, seed in any::<u64>()) {
            let scene = random_scene(n, seed);
            let bvh = Lbvh::build(&scene).unwrap();
            prop_assert!(bvh.validate());
            prop_assert!(bvh.depth() <= MAX_DEPTH);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let mut segs = Vec::new();
            for _ in 0..20 {
                let ray = random_ray(&mut rng);
                bvh.intersect(&ray, &scene, &mut segs);
                let reference = intersect_brute_force(&ray, &scene);
                prop_assert_eq!(&segs, &reference);
                prop_assert!(segs.windows(2).all(|p| p[0].t_enter <= p[1].t_enter));
            }
        }
    }
}
