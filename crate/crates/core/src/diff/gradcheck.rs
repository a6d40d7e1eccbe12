use std::hash::{DefaultHasher, Hash, Hasher};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fit::{evaluate, LossWeights, RayBatch};
use crate::geometry::{Camera, GuideMesh, Vec3};
use crate::primitive::{PrimitiveSlab, WindowParams, CHANNELS};
use crate::real::Real;
use crate::renderer::{march_observed, ray_key, FrameGeometry, MarchConfig, MarchScratch};

use super::params::ParamGroup;
use super::scene::{Attachment, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradcheckConfig {
    /// Coordinates to check, spread round-robin over the parameter groups.
    pub n_params: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
    /// Finite-difference step relative to `max(|θ|, 1)`. The estimate is
    /// the Richardson combination of central differences at `h` and `2h`.
    pub rel_step: f64,
    /// When `θ ± 2h` crosses a discrete decision of the march, `h` shrinks
    /// tenfold down to this bound before the coordinate is redrawn.
    pub min_rel_step: f64,
    /// Redraws allowed per checked coordinate.
    pub max_redraws: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            n_params: 200,
            seed: 0,
            tolerance: 1e-5,
            floor: 1e-6,
            rel_step: 1e-4,
            min_rel_step: 1e-7,
            max_redraws: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CheckedParam {
    pub index: usize,
    pub group: ParamGroup,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub group: ParamGroup,
    pub checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GroupReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub params: Vec<CheckedParam>,
    /// Draws rejected because every step tried changed a discrete decision.
    pub redraws: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<14} {:>8} {:>12} {:>10} {}\n", "group", "checked", "max_rel_err", "tolerance", "status");
        for g in &self.groups {
            s += &format!(
                "{:<14} {:>8} {:>12.3e} {:>10.1e} {}\n",
                g.group.name(),
                g.checked,
                g.max_rel_err,
                g.tolerance,
                if g.passed() { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

/// Hash of every discrete choice a batch march makes: samples visited,
/// primitives covering each sample, trilinear cells and clamp states, and
/// where the ray saturated or stopped. Equal signatures mean the loss is
/// smooth between the two parameter settings.
pub fn decision_signature<T: Real>(scene: &Scene<T>, batch: &RayBatch<T>, cfg: &MarchConfig) -> Result<u64> {
    let geometry = scene.geometry()?;
    let view = scene.view(&geometry)?;
    let mut h = DefaultHasher::new();
    let mut scratch = MarchScratch::<T>::default();
    for (ray, &key) in batch.rays.iter().zip(&batch.keys) {
        geometry.intersect(ray, &mut scratch.segments);
        let r = march_observed(
            ray,
            &scratch.segments,
            &view,
            cfg,
            cfg.offset(key),
            &mut scratch.active,
            &mut scratch.order,
            |ordinal, prim, e| {
                (ordinal, prim, e.stencil.base).hash(&mut h);
                e.stencil.dfrac.map(|d| d == T::zero()).hash(&mut h);
            },
        );
        (r.samples, r.saturation.map(|s| s.ordinal)).hash(&mut h);
    }
    Ok(h.finish())
}

/// Compares analytic gradients of the full objective against central
/// differences on randomly drawn coordinates.
pub fn gradcheck(
    scene: &Scene<f64>,
    batch: &RayBatch<f64>,
    weights: &LossWeights,
    cfg: &MarchConfig,
    gc: &GradcheckConfig,
) -> Result<GradcheckReport> {
    let grad = evaluate(scene, batch, weights, cfg, true)?.grad.expect("gradient requested");
    let sig0 = decision_signature(scene, batch, cfg)?;
    let n = scene.params.len();

    let mut pools: Vec<(ParamGroup, Vec<usize>)> = Vec::new();
    for g in ParamGroup::ALL {
        let all: Vec<usize> = (0..n).filter(|&i| scene.params.group(i) == g).collect();
        if all.is_empty() {
            continue;
        }
        let nonzero: Vec<usize> = all.iter().copied().filter(|&i| grad.get(i) != 0.0).collect();
        pools.push((g, if nonzero.is_empty() { all } else { nonzero }));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    for (_, pool) in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; pools.len()];
    let mut params = Vec::with_capacity(gc.n_params);
    let mut redraws = 0;
    let loss_at = |i: usize, v: f64| -> Result<(f64, u64)> {
        let mut s = scene.clone();
        s.params.set(i, v);
        Ok((evaluate(&s, batch, weights, cfg, false)?.total, decision_signature(&s, batch, cfg)?))
    };
    // Richardson estimate at the largest decision-free step, if any.
    let estimate = |i: usize| -> Result<Option<f64>> {
        let theta = scene.params.get(i);
        let mut rel = gc.rel_step;
        while rel >= gc.min_rel_step {
            let h = rel * theta.abs().max(1.0);
            let mut d = [0.0; 2];
            let mut smooth = true;
            for (j, step) in [h, 2.0 * h].into_iter().enumerate() {
                let (lp, sp) = loss_at(i, theta + step)?;
                let (lm, sm) = loss_at(i, theta - step)?;
                smooth &= sp == sig0 && sm == sig0;
                d[j] = (lp - lm) / (2.0 * step);
            }
            if smooth {
                return Ok(Some((4.0 * d[0] - d[1]) / 3.0));
            }
            rel *= 0.1;
        }
        Ok(None)
    };
    for k in 0..gc.n_params.max(pools.len()) {
        if pools.is_empty() {
            break;
        }
        let slot = k % pools.len();
        let (group, pool) = &pools[slot];
        for attempt in 0..=gc.max_redraws {
            // distinct coordinates until the pool is exhausted, then repeats
            let i = pool[cursors[slot] % pool.len()];
            cursors[slot] += 1;
            let numeric = match estimate(i)? {
                Some(n) => n,
                None if attempt < gc.max_redraws => {
                    redraws += 1;
                    continue;
                }
                None => f64::NAN,
            };
            let analytic = grad.get(i);
            let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(gc.floor);
            params.push(CheckedParam {
                index: i,
                group: *group,
                analytic,
                numeric,
                rel_err: if rel_err.is_nan() { f64::INFINITY } else { rel_err },
            });
            break;
        }
    }

    let groups: Vec<GroupReport> = pools
        .iter()
        .map(|(g, _)| {
            let mine = params.iter().filter(|p| p.group == *g);
            GroupReport {
                group: *g,
                checked: mine.clone().count(),
                max_rel_err: mine.map(|p| p.rel_err).fold(0.0, f64::max),
                tolerance: gc.tolerance,
            }
        })
        .collect();
    Ok(GradcheckReport {
        max_rel_err: params.iter().map(|p| p.rel_err).fold(0.0, f64::max),
        groups,
        params,
        redraws,
        tolerance: gc.tolerance,
    })
}

/// Gently domed square patch, `size` meters across, centered at the origin
/// in the z = 0 plane with normals toward −z.
pub fn domed_patch<T: Real>(size: f64, height: f64, res: usize) -> Result<GuideMesh<T>> {
    GuideMesh::parametric(res, res, |u: T, v: T| {
        let x = (u.as_f64() - 0.5) * size;
        let y = (v.as_f64() - 0.5) * size;
        let r2 = (x * x + y * y) / (0.25 * size * size);
        Vec3::new(T::lit(x), T::lit(y), T::lit(-height * (1.0 - 0.5 * r2)))
    })
}

/// Small scene for gradient checks: 8 primitives with an `m³` random
/// payload over a domed patch with learnable vertex offsets, random deltas,
/// and a batch of rays from two cameras against random targets.
pub fn small_scene(m: usize, n_rays: usize, seed: u64) -> Result<(Scene<f64>, RayBatch<f64>, MarchConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = domed_patch::<f64>(1.0, 0.15, 2)?;
    let mut scene = Scene::from_mesh(mesh, 9, m, Vec3::splat(0.5), 1.0, WindowParams::default(), true)?;
    let n = 8;
    if let Attachment::Mesh { anchors, .. } = &mut scene.attachment {
        anchors.truncate(n);
    }
    let block = m * m * m;
    let data: Vec<f64> = (0..n * CHANNELS * block)
        .map(|i| {
            if (i / block) % CHANNELS == 3 {
                rng.random_range(0.5..4.0)
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect();
    scene.params.payload = PrimitiveSlab::new(n, m, data)?;
    scene.params.deltas.truncate(n);
    for d in &mut scene.params.deltas {
        for a in 0..3 {
            d.translation[a] = rng.random_range(-0.03..0.03);
            d.rotation[a] = rng.random_range(-0.1..0.1);
            d.scale[a] = rng.random_range(-0.02..0.02);
        }
    }
    for v in &mut scene.params.vertex_offsets {
        for a in 0..3 {
            v[a] = rng.random_range(-0.01..0.01);
        }
    }
    let scene = Scene::new(scene.attachment, scene.params, scene.window)?;

    let cfg = MarchConfig {
        step: 0.01,
        early_eps: 1e-2,
        jitter: true,
        seed,
        ..Default::default()
    };
    let up = Vec3::new(0.0, -1.0, 0.0);
    let cams = [
        Camera::look_at(Vec3::new(0.4, -0.3, -2.2), Vec3::zero(), up, 40.0, 32, 32)?,
        Camera::look_at(Vec3::new(-0.6, 0.2, -2.0), Vec3::zero(), up, 40.0, 32, 32)?,
    ];
    let geometry: FrameGeometry<f64> = scene.geometry()?;
    let mut batch = RayBatch {
        rays: Vec::new(),
        keys: Vec::new(),
        targets: Vec::new(),
        backgrounds: Vec::new(),
        pixel_weights: None,
    };
    let mut segs = Vec::new();
    let mut tries = 0;
    while batch.rays.len() < n_rays && tries < 100 * n_rays {
        tries += 1;
        let c = rng.random_range(0..cams.len());
        let id = rng.random_range(0..cams[c].pixel_count() as u32);
        let ray = cams[c].pixel_ray(id);
        geometry.intersect(&ray, &mut segs);
        if segs.is_empty() {
            continue;
        }
        batch.rays.push(ray);
        batch.keys.push(ray_key(c as u32, id));
        batch.targets.push(Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)));
        batch.backgrounds.push(Vec3::new(0.2, 0.3, 0.4 + 0.2 * c as f64));
    }
    Ok((scene, batch, cfg))
}
