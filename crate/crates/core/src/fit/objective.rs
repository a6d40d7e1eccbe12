use serde::{Deserialize, Serialize};

use crate::diff::{backward_rays, chain, GradBuffer, RayAdjoint, Scene};
use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};
use crate::real::Real;
use crate::renderer::{composite_value, render_rays, FrameGeometry, MarchConfig, MarchResult};

use super::loss::{loss_del, loss_geo, loss_pho, loss_vol, LossWeights};

/// Rays with their target colors and background colors.
#[derive(Clone, Debug, PartialEq)]
pub struct RayBatch<T: Real> {
    pub rays: Vec<Ray<T>>,
    /// Jitter keys, one per ray.
    pub keys: Vec<u64>,
    pub targets: Vec<Vec3<T>>,
    pub backgrounds: Vec<Vec3<T>>,
    /// Per-pixel loss weights; `None` weighs every pixel by one.
    pub pixel_weights: Option<Vec<T>>,
}

impl<T: Real> RayBatch<T> {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rays.len();
        if self.keys.len() != n
            || self.targets.len() != n
            || self.backgrounds.len() != n
            || self.pixel_weights.as_ref().is_some_and(|w| w.len() != n)
        {
            return Err(Error::ShapeMismatch("ray batch arrays differ in length".into()));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> RayBatch<U> {
        RayBatch {
            rays: self
                .rays
                .iter()
                .map(|r| Ray {
                    origin: r.origin.cast(),
                    dir: r.dir.cast(),
                    pixel: r.pixel,
                })
                .collect(),
            keys: self.keys.clone(),
            targets: self.targets.iter().map(|v| v.cast()).collect(),
            backgrounds: self.backgrounds.iter().map(|v| v.cast()).collect(),
            pixel_weights: self
                .pixel_weights
                .as_ref()
                .map(|w| w.iter().map(|x| U::lit(x.as_f64())).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub pho: f64,
    pub geo: f64,
    pub vol: f64,
    pub del: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.pho + self.geo + self.vol + self.del
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation<T: Real> {
    pub terms: LossTerms,
    /// Exact loss in the scene's scalar type.
    pub total: T,
    pub grad: Option<GradBuffer<T>>,
    pub forward: Vec<MarchResult<T>>,
}

/// Full training objective on one ray batch, optionally with its gradient.
pub fn evaluate<T: Real>(
    scene: &Scene<T>,
    batch: &RayBatch<T>,
    weights: &LossWeights,
    cfg: &MarchConfig,
    with_grad: bool,
) -> Result<Evaluation<T>> {
    batch.validate()?;
    weights.validate()?;
    let transforms = scene.transforms()?;
    let geometry = FrameGeometry::build(&transforms)?;
    let view = scene.view(&geometry)?;
    let forward = render_rays(&view, &batch.rays, &batch.keys, cfg)?;

    let composited: Vec<Vec3<T>> = forward
        .iter()
        .zip(&batch.backgrounds)
        .map(|(f, b)| {
            Vec3::new(
                composite_value(f.alpha, f.rgb.x, b.x),
                composite_value(f.alpha, f.rgb.y, b.y),
                composite_value(f.alpha, f.rgb.z, b.z),
            )
        })
        .collect();
    let (pho, g_pix) = loss_pho(&composited, &batch.targets, batch.pixel_weights.as_deref(), T::lit(weights.pho))?;

    let (geo, g_geo) = match (scene.attachment.mesh(), scene.fitted_mesh()) {
        (Some(tracked), Some(fitted)) if !scene.params.vertex_offsets.is_empty() => {
            loss_geo(fitted.vertices(), tracked.vertices(), T::lit(weights.geo))?
        }
        _ => (T::zero(), Vec::new()),
    };
    let scales: Vec<Vec3<T>> = geometry.transforms.iter().map(|w| w.scale).collect();
    let (vol, g_vol) = loss_vol(&scales, T::lit(weights.vol));
    let (del, g_del) = loss_del(&scene.params.deltas, T::lit(weights.del));

    let terms = LossTerms {
        pho: pho.as_f64(),
        geo: geo.as_f64(),
        vol: vol.as_f64(),
        del: del.as_f64(),
    };
    let total = pho + geo + vol + del;
    if !with_grad {
        return Ok(Evaluation {
            terms,
            total,
            grad: None,
            forward,
        });
    }

    // Ĩ = A·C + (1 − A)·B
    let adjoints: Vec<RayAdjoint<T>> = forward
        .iter()
        .zip(&g_pix)
        .zip(&batch.backgrounds)
        .map(|((f, g), b)| RayAdjoint {
            rgb: *g * f.alpha,
            alpha: g.dot(f.rgb - *b),
        })
        .collect();
    let mut ray_grads = backward_rays(&view, &batch.rays, &batch.keys, &forward, &adjoints, cfg)?;
    for (w, g) in ray_grads.world.iter_mut().zip(&g_vol) {
        w.scale += *g;
    }
    let mut grad = chain(scene, &transforms, &ray_grads)?;
    for (d, g) in grad.deltas.iter_mut().zip(&g_del) {
        d.translation += g.translation;
        d.rotation += g.rotation;
        d.scale += g.scale;
    }
    for (v, g) in grad.vertex_offsets.iter_mut().zip(&g_geo) {
        *v += *g;
    }
    Ok(Evaluation {
        terms,
        total,
        grad: Some(grad),
        forward,
    })
}
