use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accel::{Lbvh, Segment};
use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};
use crate::primitive::{
    PrimitiveSlab, PrimitiveTransform, Stencil, WindowParams, WorldTransform,
};
use crate::real::Real;

/// Accumulation order of the primitives overlapping one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleOrder {
    /// Segment order: ascending `t_enter`, then primitive index.
    #[default]
    Sorted,
    Reversed,
    /// Seeded shuffle per sample.
    Shuffled(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarchConfig {
    /// Sample spacing along the ray, in meters.
    pub step: f64,
    /// Stop once accumulated opacity exceeds `1 - early_eps`; zero disables.
    pub early_eps: f64,
    /// Per-ray random offset of the sample lattice.
    pub jitter: bool,
    pub seed: u64,
    pub order: SampleOrder,
}

impl Default for MarchConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            early_eps: 1e-2,
            jitter: false,
            seed: 0,
            order: SampleOrder::Sorted,
        }
    }
}

impl MarchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!("step {} must be > 0", self.step)));
        }
        if !(0.0..1.0).contains(&self.early_eps) {
            return Err(Error::InvalidInput(format!(
                "early_eps {} must lie in [0, 1)",
                self.early_eps
            )));
        }
        Ok(())
    }

    /// Lattice offset in units of `step`: samples sit at `(j + offset) * step`.
    pub fn offset(&self, key: u64) -> f64 {
        if self.jitter {
            ChaCha8Rng::seed_from_u64(self.seed ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15)).random::<f64>()
        } else {
            0.5
        }
    }
}

/// Per-frame geometry: composed transforms and the hierarchy over them.
#[derive(Clone, Debug)]
pub struct FrameGeometry<T: Real> {
    pub transforms: Vec<WorldTransform<T>>,
    pub bvh: Option<Lbvh<T>>,
}

impl<T: Real> FrameGeometry<T> {
    pub fn build(transforms: &[PrimitiveTransform<T>]) -> Result<Self> {
        let world = transforms
            .iter()
            .map(PrimitiveTransform::compose)
            .collect::<Result<Vec<_>>>()?;
        Self::from_world(world)
    }

    pub fn from_world(transforms: Vec<WorldTransform<T>>) -> Result<Self> {
        let bvh = if transforms.is_empty() {
            None
        } else {
            Some(Lbvh::build(&transforms)?)
        };
        Ok(Self { transforms, bvh })
    }

    pub fn intersect(&self, ray: &Ray<T>, out: &mut Vec<Segment<T>>) {
        match &self.bvh {
            Some(b) => b.intersect(ray, &self.transforms, out),
            None => out.clear(),
        }
    }
}

/// Everything a ray needs to read during one render pass.
#[derive(Clone, Copy, Debug)]
pub struct SceneView<'a, T: Real> {
    pub slab: &'a PrimitiveSlab<T>,
    pub geometry: &'a FrameGeometry<T>,
    pub window: WindowParams,
}

impl<'a, T: Real> SceneView<'a, T> {
    pub fn new(slab: &'a PrimitiveSlab<T>, geometry: &'a FrameGeometry<T>, window: WindowParams) -> Result<Self> {
        if slab.n_prim() != geometry.transforms.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} payloads for {} transforms",
                slab.n_prim(),
                geometry.transforms.len()
            )));
        }
        Ok(Self {
            slab,
            geometry,
            window,
        })
    }
}

/// The sample where accumulated opacity reached one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Saturation<T: Real> {
    pub ordinal: u32,
    /// Opacity accumulated before this sample.
    pub t_prev: T,
    /// Summed windowed opacity at this sample.
    pub sigma: T,
    /// Opacity-weighted mean color at this sample.
    pub mean_rgb: Vec3<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarchResult<T: Real> {
    /// Opacity-weighted (premultiplied) color.
    pub rgb: Vec3<T>,
    pub alpha: T,
    /// Lattice samples that touched at least one primitive.
    pub samples: u32,
    /// Primitive evaluations over all samples.
    pub prim_samples: u32,
    pub saturation: Option<Saturation<T>>,
}

impl<T: Real> MarchResult<T> {
    pub fn empty() -> Self {
        Self {
            rgb: Vec3::zero(),
            alpha: T::zero(),
            samples: 0,
            prim_samples: 0,
            saturation: None,
        }
    }
}

/// Per-ray scratch buffers, reused across rays.
#[derive(Clone, Debug, Default)]
pub struct MarchScratch<T: Real> {
    pub segments: Vec<Segment<T>>,
    pub active: Vec<u32>,
    pub order: Vec<u32>,
}

/// One primitive evaluated at one sample point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PrimEval<T: Real> {
    pub q: Vec3<T>,
    pub stencil: Stencil<T>,
    /// Unwindowed trilinear (r, g, b, σ).
    pub raw: [T; 4],
    pub window: T,
}

impl<T: Real> PrimEval<T> {
    #[inline(always)]
    pub fn sigma(&self) -> T {
        self.raw[3] * self.window
    }

    #[inline(always)]
    pub fn rgb(&self) -> Vec3<T> {
        Vec3::new(self.raw[0], self.raw[1], self.raw[2])
    }
}

#[inline(always)]
pub(crate) fn eval_prim<T: Real>(view: &SceneView<'_, T>, prim: usize, p: Vec3<T>) -> PrimEval<T> {
    let one = T::one();
    // Membership comes from the segment interval; rounding can put q a hair
    // outside the cube.
    let q = view.geometry.transforms[prim]
        .to_model(p)
        .map(|x| x.max(-one).min(one));
    let stencil = Stencil::new(view.slab.m(), q);
    PrimEval {
        q,
        stencil,
        raw: view.slab.interpolate(prim, &stencil),
        window: view.window.eval(q),
    }
}

/// Visits lattice samples `t_j = (j + offset)·step` that fall inside at
/// least one segment, with the indices of the segments covering each one.
/// `visit` returns `false` to stop.
#[inline(always)]
pub(crate) fn walk<T: Real>(
    segs: &[Segment<T>],
    step: f64,
    offset: f64,
    active: &mut Vec<u32>,
    mut visit: impl FnMut(T, &[u32]) -> bool,
) {
    active.clear();
    if segs.is_empty() {
        return;
    }
    let t_of = |j: i64| T::lit((j as f64 + offset) * step);
    let first_at_or_after = |te: T| {
        let mut j = (te.as_f64() / step - offset).ceil() as i64;
        while t_of(j) < te {
            j += 1;
        }
        while t_of(j - 1) >= te {
            j -= 1;
        }
        j
    };
    let n = segs.len();
    let mut next = 0;
    let mut j = first_at_or_after(segs[0].t_enter);
    loop {
        let t = t_of(j);
        while next < n && segs[next].t_enter <= t {
            active.push(next as u32);
            next += 1;
        }
        active.retain(|&i| segs[i as usize].t_exit > t);
        if active.is_empty() {
            if next == n {
                return;
            }
            j = (j + 1).max(first_at_or_after(segs[next].t_enter));
            continue;
        }
        if !visit(t, active) {
            return;
        }
        j += 1;
    }
}

/// Reorders one sample's overlap list according to `order`.
pub(crate) fn apply_order(order: SampleOrder, ordinal: u32, ids: &mut [u32]) {
    match order {
        SampleOrder::Sorted => {}
        SampleOrder::Reversed => ids.reverse(),
        SampleOrder::Shuffled(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((ordinal as u64) << 20));
            for i in (1..ids.len()).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
        }
    }
}

/// Additive raymarch of one ray through its segment list.
///
/// Opacity accumulates as `T += σΔt` and color as `C += Σ rgb·σ·Δt`. The step
/// that would push `T` past one contributes only the fraction `(1 - T)/(σΔt)`
/// of its color. Marching stops once `T > 1 - ε_early`; with `ε_early = 0`
/// it runs to the end of the segment list, and samples past saturation are
/// counted but contribute nothing.
pub fn march<T: Real>(
    ray: &Ray<T>,
    segs: &[Segment<T>],
    view: &SceneView<'_, T>,
    cfg: &MarchConfig,
    offset: f64,
    scratch: &mut MarchScratch<T>,
) -> MarchResult<T> {
    march_observed(ray, segs, view, cfg, offset, &mut scratch.active, &mut scratch.order, |_, _, _| {})
}

/// [`march`] with a hook called for every primitive evaluation with the
/// sample ordinal, primitive index and evaluation.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub(crate) fn march_observed<T: Real>(
    ray: &Ray<T>,
    segs: &[Segment<T>],
    view: &SceneView<'_, T>,
    cfg: &MarchConfig,
    offset: f64,
    active: &mut Vec<u32>,
    order_buf: &mut Vec<u32>,
    mut observe: impl FnMut(u32, u32, &PrimEval<T>),
) -> MarchResult<T> {
    let dt = T::lit(cfg.step);
    let one = T::one();
    let stop_above = (cfg.early_eps > 0.0).then(|| one - T::lit(cfg.early_eps));
    let mut out = MarchResult::empty();
    walk(segs, cfg.step, offset, active, |t, ids| {
        if out.saturation.is_some() {
            out.samples += 1;
            out.prim_samples += ids.len() as u32;
            return true;
        }
        let p = ray.at(t);
        let ordinal = out.samples;
        let ids = if cfg.order == SampleOrder::Sorted {
            ids
        } else {
            order_buf.clear();
            order_buf.extend_from_slice(ids);
            apply_order(cfg.order, ordinal, order_buf);
            &order_buf[..]
        };
        let mut sigma = T::zero();
        let mut c = Vec3::zero();
        for &i in ids {
            let prim = segs[i as usize].prim;
            let e = eval_prim(view, prim as usize, p);
            observe(ordinal, prim, &e);
            let s = e.sigma();
            sigma += s;
            c += e.rgb() * s;
        }
        out.samples += 1;
        out.prim_samples += ids.len() as u32;
        let a = sigma * dt;
        if out.alpha + a >= one && a > T::zero() {
            let frac = (one - out.alpha) / a;
            out.rgb += c * (dt * frac);
            out.saturation = Some(Saturation {
                ordinal,
                t_prev: out.alpha,
                sigma,
                mean_rgb: c * (one / sigma),
            });
            out.alpha = one;
            return stop_above.is_none();
        }
        out.alpha += a;
        out.rgb += c * dt;
        !matches!(stop_above, Some(limit) if out.alpha > limit)
    });
    out
}
