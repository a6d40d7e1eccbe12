use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Rotation, Vec3};
use crate::real::Real;

/// Scales below this are projected back by the optimizer.
pub const MIN_SCALE: f64 = 1e-4;

/// Mesh-derived placement of a primitive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BaseTransform<T: Real> {
    pub translation: Vec3<T>,
    pub rotation: Rotation<T>,
    pub scale: Vec3<T>,
}

impl<T: Real> BaseTransform<T> {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zero(),
            rotation: Rotation::identity(),
            scale: Vec3::splat(T::one()),
        }
    }
}

/// Learned offsets from the base transform. Rotation is axis-angle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TransformDelta<T: Real> {
    pub translation: Vec3<T>,
    pub rotation: Vec3<T>,
    pub scale: Vec3<T>,
}

impl<T: Real> TransformDelta<T> {
    pub fn is_finite(&self) -> bool {
        self.translation.is_finite() && self.rotation.is_finite() && self.scale.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PrimitiveTransform<T: Real> {
    pub base: BaseTransform<T>,
    pub delta: TransformDelta<T>,
}

impl<T: Real> PrimitiveTransform<T> {
    pub fn from_base(base: BaseTransform<T>) -> Self {
        Self {
            base,
            delta: TransformDelta::default(),
        }
    }

    /// Composed `t = t̂ + δt`, `R = R(δR)·R̂`, `s = ŝ + δs`.
    pub fn compose(&self) -> Result<WorldTransform<T>> {
        let scale = self.base.scale + self.delta.scale;
        if !(scale.x > T::zero() && scale.y > T::zero() && scale.z > T::zero()) {
            return Err(Error::NonPositiveScale(scale.cast::<f64>().into()));
        }
        let rotation = Rotation::from_axis_angle(self.delta.rotation).compose(&self.base.rotation);
        Ok(WorldTransform::new(
            self.base.translation + self.delta.translation,
            *rotation.matrix(),
            scale,
        ))
    }
}

pub fn compose<T: Real>(xf: &PrimitiveTransform<T>) -> Result<WorldTransform<T>> {
    xf.compose()
}

/// Model-to-world map `p = t + R (s ⊙ q)` for `q ∈ [-1, 1]³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldTransform<T: Real> {
    pub translation: Vec3<T>,
    pub rotation: Mat3<T>,
    pub scale: Vec3<T>,
    inv_scale: Vec3<T>,
}

impl<T: Real> WorldTransform<T> {
    pub fn new(translation: Vec3<T>, rotation: Mat3<T>, scale: Vec3<T>) -> Self {
        Self {
            translation,
            rotation,
            scale,
            inv_scale: scale.map(|s| T::one() / s),
        }
    }

    #[inline(always)]
    pub fn to_world(&self, q: Vec3<T>) -> Vec3<T> {
        self.translation + self.rotation.mul_vec(q.mul_elem(self.scale))
    }

    #[inline(always)]
    pub fn to_model(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation
            .tr_mul_vec(p - self.translation)
            .mul_elem(self.inv_scale)
    }

    /// Direction into model space (no translation).
    #[inline(always)]
    pub fn dir_to_model(&self, d: Vec3<T>) -> Vec3<T> {
        self.rotation.tr_mul_vec(d).mul_elem(self.inv_scale)
    }

    #[inline(always)]
    pub fn inv_scale(&self) -> Vec3<T> {
        self.inv_scale
    }

    pub fn volume(&self) -> T {
        self.scale.x * self.scale.y * self.scale.z
    }
}
