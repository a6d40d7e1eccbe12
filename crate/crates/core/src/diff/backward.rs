use rayon::prelude::*;

use crate::accel::Segment;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_backward, Mat3, Ray, Rotation, Vec3};
use crate::primitive::{base_from_anchor_backward, PrimitiveTransform, CHANNELS};
use crate::real::Real;
use crate::renderer::{eval_prim, walk, MarchConfig, MarchResult, MarchScratch, PrimEval, SceneView};

use super::params::GradBuffer;
use super::scene::{Attachment, Scene};

/// Rays per accumulation chunk. Chunks are reduced in index order, so the
/// summed gradient does not depend on thread scheduling.
pub const CHUNK: usize = 64;

/// Loss gradient with respect to one ray's premultiplied color and alpha.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayAdjoint<T: Real> {
    pub rgb: Vec3<T>,
    pub alpha: T,
}

/// Gradient with respect to a composed model-to-world map `(t, R, s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldGrad<T: Real> {
    pub translation: Vec3<T>,
    pub rotation: Mat3<T>,
    pub scale: Vec3<T>,
}

impl<T: Real> Default for WorldGrad<T> {
    fn default() -> Self {
        Self {
            translation: Vec3::zero(),
            rotation: Mat3::zero(),
            scale: Vec3::zero(),
        }
    }
}

/// Ray-level gradients before chaining into transform deltas and vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct RayGrads<T: Real> {
    pub payload: Vec<T>,
    pub world: Vec<WorldGrad<T>>,
    pub rays: usize,
}

impl<T: Real> RayGrads<T> {
    pub fn zeros(payload_len: usize, n_prim: usize) -> Self {
        Self {
            payload: vec![T::zero(); payload_len],
            world: vec![WorldGrad::default(); n_prim],
            rays: 0,
        }
    }

    pub fn add(&mut self, o: &Self) {
        for (a, b) in self.payload.iter_mut().zip(&o.payload) {
            *a += *b;
        }
        for (a, b) in self.world.iter_mut().zip(&o.world) {
            a.translation += b.translation;
            a.rotation = a.rotation.add(&b.rotation);
            a.scale += b.scale;
        }
        self.rays += o.rays;
    }
}

/// Accumulates the gradient of one primitive evaluation with upstream
/// `g_sigma` (windowed opacity) and `g_rgb`.
#[inline(always)]
fn accumulate_prim<T: Real>(
    view: &SceneView<'_, T>,
    prim: usize,
    p: Vec3<T>,
    e: &PrimEval<T>,
    g_sigma: T,
    g_rgb: Vec3<T>,
    acc: &mut RayGrads<T>,
) {
    let slab = view.slab;
    let block = slab.voxels_per_channel();
    let base = prim * CHANNELS * block;
    let g_raw = [g_rgb.x, g_rgb.y, g_rgb.z, g_sigma * e.window];
    let mut g_q = if view.window.alpha > 0.0 {
        let (_, dw) = view.window.eval_grad(e.q);
        dw * (g_sigma * e.raw[3])
    } else {
        Vec3::zero()
    };
    let corners = e.stencil.corners();
    let weight_grads = e.stencil.corner_weight_grads();
    let data = slab.data();
    for (c, &g) in g_raw.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let off = base + c * block;
        for (k, &(i, w)) in corners.iter().enumerate() {
            acc.payload[off + i] += g * w;
            g_q += weight_grads[k] * (g * data[off + i]);
        }
    }
    // q = Rᵀ(p − t) ⊘ s
    let xf = &view.geometry.transforms[prim];
    let inv_s = xf.inv_scale();
    let g_y = g_q.mul_elem(inv_s);
    let wg = &mut acc.world[prim];
    wg.scale -= g_q.mul_elem(e.q).mul_elem(inv_s);
    wg.translation -= xf.rotation.mul_vec(g_y);
    wg.rotation = wg.rotation.add(&Mat3::outer(p - xf.translation, g_y));
}

/// Replays the forward march of one ray and accumulates parameter
/// gradients. Nothing per-sample is stored by the forward pass; the
/// saturation record in `fwd` is all the replay needs.
#[allow(clippy::too_many_arguments)]
pub fn backward_ray<T: Real>(
    ray: &Ray<T>,
    segs: &[Segment<T>],
    view: &SceneView<'_, T>,
    cfg: &MarchConfig,
    offset: f64,
    fwd: &MarchResult<T>,
    adjoint: &RayAdjoint<T>,
    acc: &mut RayGrads<T>,
    active: &mut Vec<u32>,
) {
    acc.rays += 1;
    let n = fwd.saturation.map_or(fwd.samples, |s| s.ordinal + 1);
    if n == 0 {
        return;
    }
    let dt = T::lit(cfg.step);
    let one = T::one();
    let g_c = adjoint.rgb;
    let mut ordinal = 0u32;
    walk(segs, cfg.step, offset, active, |t, ids| {
        let p = ray.at(t);
        // Per-sample gradients w.r.t. summed opacity and summed weighted color.
        let (g_sigma_sum, g_color_sum) = match fwd.saturation {
            Some(s) if ordinal == s.ordinal => {
                let k = (one - s.t_prev) / s.sigma;
                (-(k * g_c.dot(s.mean_rgb)), g_c * k)
            }
            Some(s) => (-(dt * g_c.dot(s.mean_rgb)), g_c * dt),
            None => (dt * adjoint.alpha, g_c * dt),
        };
        for &i in ids {
            let prim = segs[i as usize].prim as usize;
            let e = eval_prim(view, prim, p);
            let g_sigma = g_sigma_sum + g_color_sum.dot(e.rgb());
            let g_rgb = g_color_sum * e.sigma();
            accumulate_prim(view, prim, p, &e, g_sigma, g_rgb, acc);
        }
        ordinal += 1;
        ordinal < n
    });
}

/// Backward pass over a ray batch. `forward[i]` must be the march result of
/// `rays[i]` under the same scene and config.
pub fn backward_rays<T: Real>(
    view: &SceneView<'_, T>,
    rays: &[Ray<T>],
    keys: &[u64],
    forward: &[MarchResult<T>],
    adjoints: &[RayAdjoint<T>],
    cfg: &MarchConfig,
) -> Result<RayGrads<T>> {
    if keys.len() != rays.len() || forward.len() != rays.len() || adjoints.len() != rays.len() {
        return Err(Error::ShapeMismatch("ray batch arrays differ in length".into()));
    }
    let n_prim = view.geometry.transforms.len();
    let payload_len = view.slab.data().len();
    let chunks: Vec<RayGrads<T>> = (0..rays.len().div_ceil(CHUNK))
        .into_par_iter()
        .map_init(MarchScratch::<T>::default, |scratch, c| {
            let mut acc = RayGrads::zeros(payload_len, n_prim);
            for i in c * CHUNK..((c + 1) * CHUNK).min(rays.len()) {
                view.geometry.intersect(&rays[i], &mut scratch.segments);
                backward_ray(
                    &rays[i],
                    &scratch.segments,
                    view,
                    cfg,
                    cfg.offset(keys[i]),
                    &forward[i],
                    &adjoints[i],
                    &mut acc,
                    &mut scratch.active,
                );
            }
            acc
        })
        .collect();
    let mut total = RayGrads::zeros(payload_len, n_prim);
    for c in &chunks {
        total.add(c);
    }
    Ok(total)
}

/// Chains world-map gradients through `R = R(δR)·R̂`, `t = t̂ + δt`,
/// `s = ŝ + δs` into the deltas and, for mesh-attached scenes with vertex
/// offsets, through the base frame into the vertices.
pub fn chain<T: Real>(
    scene: &Scene<T>,
    transforms: &[PrimitiveTransform<T>],
    grads: &RayGrads<T>,
) -> Result<GradBuffer<T>> {
    let mut out = scene.params.zero_grad();
    out.payload.copy_from_slice(&grads.payload);
    out.rays = grads.rays;
    let fitted = match &scene.attachment {
        Attachment::Mesh { .. } if !scene.params.vertex_offsets.is_empty() => scene.fitted_mesh(),
        _ => None,
    };
    for (k, (xf, gw)) in transforms.iter().zip(&grads.world).enumerate() {
        let d = &mut out.deltas[k];
        d.translation += gw.translation;
        d.scale += gw.scale;
        let g_delta_rot = gw.rotation.mul_mat(&xf.base.rotation.matrix().transpose());
        d.rotation += axis_angle_backward(xf.delta.rotation, &g_delta_rot);
        if let (Some(mesh), Attachment::Mesh { anchors, spacing, .. }) = (&fitted, &scene.attachment) {
            let r_delta = Rotation::from_axis_angle(xf.delta.rotation);
            let g_base_rot = r_delta.matrix().transpose().mul_mat(&gw.rotation);
            for (v, g) in base_from_anchor_backward(mesh, &anchors[k], *spacing, gw.translation, &g_base_rot, gw.scale)? {
                out.vertex_offsets[v as usize] += g;
            }
        }
    }
    Ok(out)
}
