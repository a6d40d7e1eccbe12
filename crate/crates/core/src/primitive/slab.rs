use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::real::Real;

pub const CHANNELS: usize = 4;
pub const SIGMA: usize = 3;

/// Opacity fade `W(q) = exp(-α Σ qᵢ^β)`. `α = 0` disables the fade.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub alpha: f64,
    pub beta: u32,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self { alpha: 8.0, beta: 8 }
    }
}

impl WindowParams {
    pub fn new(alpha: f64, beta: u32) -> Result<Self> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn disabled() -> Self {
        Self { alpha: 0.0, beta: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("window alpha {} must be >= 0", self.alpha)));
        }
        if self.beta == 0 || !self.beta.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "window beta {} must be a positive even integer",
                self.beta
            )));
        }
        Ok(())
    }

    #[inline(always)]
    pub fn eval<T: Real>(&self, q: Vec3<T>) -> T {
        if self.alpha == 0.0 {
            return T::one();
        }
        let b = self.beta as i32;
        (-T::lit(self.alpha) * (q.x.powi(b) + q.y.powi(b) + q.z.powi(b))).exp()
    }

    /// Window value and its gradient with respect to `q`.
    #[inline(always)]
    pub fn eval_grad<T: Real>(&self, q: Vec3<T>) -> (T, Vec3<T>) {
        if self.alpha == 0.0 {
            return (T::one(), Vec3::zero());
        }
        let b = self.beta as i32;
        let w = self.eval(q);
        let k = -T::lit(self.alpha * self.beta as f64) * w;
        (w, q.map(|x| k * x.powi(b - 1)))
    }
}

pub fn window<T: Real>(q: Vec3<T>, params: &WindowParams) -> T {
    params.eval(q)
}

/// Per-axis trilinear stencil over voxel centers at `-1 + (2i + 1)/M`.
/// Queries beyond the outermost centers hold the edge value.
#[derive(Clone, Copy, Debug)]
pub struct Stencil<T: Real> {
    /// Offset of the low corner inside one channel block.
    pub base: usize,
    /// Index step to the high neighbour along x, y, z (0 when `M == 1`).
    pub step: [usize; 3],
    pub frac: [T; 3],
    /// `∂frac/∂q` per axis; zero where the query is clamped.
    pub dfrac: [T; 3],
}

impl<T: Real> Stencil<T> {
    #[inline(always)]
    pub fn new(m: usize, q: Vec3<T>) -> Self {
        let strides = [1, m, m * m];
        let mut base = 0;
        let mut step = [0; 3];
        let mut frac = [T::zero(); 3];
        let mut dfrac = [T::zero(); 3];
        if m > 1 {
            let half_m = T::lit(m as f64 * 0.5);
            let hi = T::lit((m - 1) as f64);
            for a in 0..3 {
                let f = (q[a] + T::one()) * half_m - T::lit(0.5);
                let (i0, w, d) = if f <= T::zero() {
                    (0, T::zero(), T::zero())
                } else if f >= hi {
                    (m - 2, T::one(), T::zero())
                } else {
                    let i = f.floor();
                    (i.as_f64() as usize, f - i, half_m)
                };
                base += i0 * strides[a];
                step[a] = strides[a];
                frac[a] = w;
                dfrac[a] = d;
            }
        }
        Self {
            base,
            step,
            frac,
            dfrac,
        }
    }

    /// The eight corners as (offset, weight), x fastest.
    #[inline(always)]
    pub fn corners(&self) -> [(usize, T); 8] {
        let one = T::one();
        let wx = [one - self.frac[0], self.frac[0]];
        let wy = [one - self.frac[1], self.frac[1]];
        let wz = [one - self.frac[2], self.frac[2]];
        std::array::from_fn(|c| {
            let (ix, iy, iz) = (c & 1, (c >> 1) & 1, c >> 2);
            (
                self.base + ix * self.step[0] + iy * self.step[1] + iz * self.step[2],
                wx[ix] * wy[iy] * wz[iz],
            )
        })
    }

    /// Derivatives of each corner weight with respect to `q`.
    #[inline(always)]
    pub fn corner_weight_grads(&self) -> [Vec3<T>; 8] {
        let one = T::one();
        let wx = [one - self.frac[0], self.frac[0]];
        let wy = [one - self.frac[1], self.frac[1]];
        let wz = [one - self.frac[2], self.frac[2]];
        let sgn = [-one, one];
        std::array::from_fn(|c| {
            let (ix, iy, iz) = (c & 1, (c >> 1) & 1, c >> 2);
            Vec3::new(
                sgn[ix] * self.dfrac[0] * wy[iy] * wz[iz],
                wx[ix] * sgn[iy] * self.dfrac[1] * wz[iz],
                wx[ix] * wy[iy] * sgn[iz] * self.dfrac[2],
            )
        })
    }
}

/// Concatenated RGBA payload of all primitives. Layout is primitive-major,
/// then channel (r, g, b, σ), then z, y, x with x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveSlab<T: Real> {
    n_prim: usize,
    m: usize,
    data: Vec<T>,
}

impl<T: Real> PrimitiveSlab<T> {
    pub fn new(n_prim: usize, m: usize, data: Vec<T>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("voxel resolution must be >= 1".into()));
        }
        let expected = n_prim * CHANNELS * m * m * m;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "payload has {} values, expected {expected}",
                data.len()
            )));
        }
        Ok(Self { n_prim, m, data })
    }

    pub fn constant(n_prim: usize, m: usize, rgb: Vec3<T>, sigma: T) -> Self {
        let mut slab = Self {
            n_prim,
            m,
            data: vec![T::zero(); n_prim * CHANNELS * m * m * m],
        };
        for k in 0..n_prim {
            for (c, v) in [rgb.x, rgb.y, rgb.z, sigma].into_iter().enumerate() {
                slab.channel_mut(k, c).fill(v);
            }
        }
        slab
    }

    pub fn n_prim(&self) -> usize {
        self.n_prim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline(always)]
    pub fn voxels_per_channel(&self) -> usize {
        self.m * self.m * self.m
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline(always)]
    pub fn channel_offset(&self, k: usize, c: usize) -> usize {
        (k * CHANNELS + c) * self.voxels_per_channel()
    }

    pub fn channel(&self, k: usize, c: usize) -> &[T] {
        let o = self.channel_offset(k, c);
        &self.data[o..o + self.voxels_per_channel()]
    }

    pub fn channel_mut(&mut self, k: usize, c: usize) -> &mut [T] {
        let o = self.channel_offset(k, c);
        let n = self.voxels_per_channel();
        &mut self.data[o..o + n]
    }

    #[inline(always)]
    pub fn voxel_index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.m + y) * self.m + x
    }

    /// Model-space center of voxel `i` along one axis.
    pub fn voxel_center(&self, i: usize) -> T {
        T::lit(-1.0 + (2 * i + 1) as f64 / self.m as f64)
    }

    /// Raw (unwindowed) trilinear RGBA at an in-cube point.
    #[inline(always)]
    pub fn interpolate(&self, k: usize, stencil: &Stencil<T>) -> [T; 4] {
        let corners = stencil.corners();
        let block = self.voxels_per_channel();
        let base = k * CHANNELS * block;
        let mut out = [T::zero(); 4];
        for (c, o) in out.iter_mut().enumerate() {
            let ch = &self.data[base + c * block..base + (c + 1) * block];
            let mut acc = T::zero();
            for &(i, w) in &corners {
                acc += ch[i] * w;
            }
            *o = acc;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> PrimitiveSlab<U> {
        PrimitiveSlab {
            n_prim: self.n_prim,
            m: self.m,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Trilinear color and windowed opacity of primitive `k` at `q`.
pub fn sample<T: Real>(
    slab: &PrimitiveSlab<T>,
    k: usize,
    q: Vec3<T>,
    window: &WindowParams,
) -> Result<(Vec3<T>, T)> {
    if k >= slab.n_prim() {
        return Err(Error::InvalidInput(format!("primitive {k} out of range")));
    }
    if !(q.max_abs() <= T::one()) {
        return Err(Error::OutsideCube(q.cast::<f64>().into()));
    }
    let v = slab.interpolate(k, &Stencil::new(slab.m(), q));
    Ok((Vec3::new(v[0], v[1], v[2]), v[3] * window.eval(q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_slab(n: usize, m: usize, seed: u64) -> PrimitiveSlab<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 4 * m * m * m).map(|_| rng.random_range(0.0..2.0)).collect();
        PrimitiveSlab::new(n, m, data).unwrap()
    }

    /// Reference trilinear interpolation written from the voxel-center
    /// definition: weight of voxel (i, j, k) is the product of 1-D hat
    /// functions of width 2/M around its center.
    fn reference(slab: &PrimitiveSlab<f64>, k: usize, c: usize, q: Vec3<f64>) -> f64 {
        let m = slab.m();
        let h = 2.0 / m as f64;
        let lim = 1.0 - h / 2.0;
        let qc = q.map(|x| x.clamp(-lim, lim));
        let hat = |x: f64, i: usize| (1.0 - (x - slab.voxel_center(i)).abs() / h).max(0.0);
        let mut acc = 0.0;
        for z in 0..m {
            for y in 0..m {
                for x in 0..m {
                    let w = hat(qc.x, x) * hat(qc.y, y) * hat(qc.z, z);
                    acc += w * slab.channel(k, c)[slab.voxel_index(x, y, z)];
                }
            }
        }
        acc
    }

    #[test]
    fn window_values() {
        let w = WindowParams::default();
        assert_eq!(w.eval(Vec3::<f64>::zero()), 1.0);
        assert!((w.eval(Vec3::new(1.0f64, 0.0, 0.0)) - (-8.0f64).exp()).abs() < 1e-15);
        assert!((w.eval(Vec3::new(1.0f64, 1.0, 1.0)) - (-24.0f64).exp()).abs() < 1e-20);
        assert!((w.eval(Vec3::new(1.0f64, 0.0, 0.0)) - 3.3546e-4).abs() < 1e-8);
    }

    #[test]
    fn window_is_even_and_monotone() {
        let w = WindowParams::default();
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            let a = w.eval(Vec3::new(x, 0.3, -0.2));
            assert_eq!(a, w.eval(Vec3::new(-x, 0.3, -0.2)));
            assert!(a <= prev);
            prev = a;
        }
    }

    #[test]
    fn window_gradient_matches_finite_differences() {
        let w = WindowParams::default();
        let q = Vec3::new(0.7f64, -0.4, 0.85);
        let (_, g) = w.eval_grad(q);
        for a in 0..3 {
            let mut qp = q;
            qp[a] += 1e-6;
            let mut qm = q;
            qm[a] -= 1e-6;
            let fd = (w.eval(qp) - w.eval(qm)) / 2e-6;
            assert!((fd - g[a]).abs() < 1e-8);
        }
    }

    #[test]
    fn invalid_window_rejected() {
        assert!(WindowParams::new(8.0, 3).is_err());
        assert!(WindowParams::new(-1.0, 8).is_err());
        assert!(WindowParams::new(8.0, 0).is_err());
    }

    #[test]
    fn constant_payload_reproduced() {
        let slab = PrimitiveSlab::constant(2, 5, Vec3::new(0.2f64, 0.4, 0.6), 3.0);
        let w = WindowParams::default();
        let q = Vec3::new(0.31, -0.77, 0.05);
        let (rgb, s) = sample(&slab, 1, q, &w).unwrap();
        assert!((rgb - Vec3::new(0.2, 0.4, 0.6)).max_abs() < 1e-15);
        assert!((s - 3.0 * w.eval(q)).abs() < 1e-15);
    }

    #[test]
    fn voxel_center_returns_stored_value() {
        let slab = random_slab(1, 4, 1);
        let (x, y, z) = (2, 1, 3);
        let q = Vec3::new(slab.voxel_center(x), slab.voxel_center(y), slab.voxel_center(z));
        let (rgb, _) = sample(&slab, 0, q, &WindowParams::disabled()).unwrap();
        let idx = slab.voxel_index(x, y, z);
        assert!((rgb.y - slab.channel(0, 1)[idx]).abs() < 1e-14);
    }

    #[test]
    fn matches_hat_function_reference() {
        let slab = random_slab(3, 6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let q = Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            let k = rng.random_range(0..3);
            let v = slab.interpolate(k, &Stencil::new(6, q));
            for c in 0..4 {
                assert!((v[c] - reference(&slab, k, c, q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn continuous_across_cell_faces() {
        let slab = random_slab(1, 8, 3).cast::<f32>();
        // Face between voxel centers 3 and 4 along x sits at q = 0.
        for &y in &[-0.9f32, -0.3, 0.2, 0.8] {
            let lo = slab.interpolate(0, &Stencil::new(8, Vec3::new(-1e-7, y, 0.1)));
            let hi = slab.interpolate(0, &Stencil::new(8, Vec3::new(1e-7, y, 0.1)));
            // Crossing a center-to-center cell boundary at x = 0.125.
            let a = slab.interpolate(0, &Stencil::new(8, Vec3::new(0.125 - 1e-7, y, 0.1)));
            let b = slab.interpolate(0, &Stencil::new(8, Vec3::new(0.125 + 1e-7, y, 0.1)));
            for c in 0..4 {
                assert!((lo[c] - hi[c]).abs() < 1e-5);
                assert!((a[c] - b[c]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn corner_weight_grads_match_finite_differences() {
        let q = Vec3::new(0.33, -0.61, 0.12);
        let s = Stencil::<f64>::new(7, q);
        let g = s.corner_weight_grads();
        for a in 0..3 {
            let mut qp = q;
            qp[a] += 1e-7;
            let mut qm = q;
            qm[a] -= 1e-7;
            let (cp, cm) = (Stencil::new(7, qp).corners(), Stencil::new(7, qm).corners());
            for c in 0..8 {
                let fd = (cp[c].1 - cm[c].1) / 2e-7;
                assert!((fd - g[c][a]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn outside_cube_is_an_error() {
        let slab = PrimitiveSlab::<f32>::constant(1, 2, Vec3::splat(1.0), 1.0);
        assert!(matches!(
            sample(&slab, 0, Vec3::new(1.01, 0.0, 0.0), &WindowParams::default()),
            Err(Error::OutsideCube(_))
        ));
    }

    #[test]
    fn single_voxel_resolution() {
        let slab = PrimitiveSlab::<f64>::constant(1, 1, Vec3::splat(0.5), 2.0);
        let (rgb, s) = sample(&slab, 0, Vec3::new(0.9, -0.9, 0.0), &WindowParams::disabled()).unwrap();
        assert_eq!(rgb, Vec3::splat(0.5));
        assert_eq!(s, 2.0);
    }
}
