use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diff::{GradBuffer, ParamGroup, Scene};
use crate::error::{Error, Result};
use crate::primitive::MIN_SCALE;
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate overrides per parameter group; absent groups use `lr`.
    pub group_lr: BTreeMap<ParamGroup, f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            group_lr: BTreeMap::new(),
        }
    }
}

impl AdamConfig {
    pub fn lr_for(&self, g: ParamGroup) -> f64 {
        self.group_lr.get(&g).copied().unwrap_or(self.lr)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = std::iter::once(self.lr).chain(self.group_lr.values().copied());
        for lr in rates {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::InvalidInput(format!("learning rate {lr} must be >= 0")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::InvalidInput("adam needs beta in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

/// Moment buffers shaped like the flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        })
    }

    /// One bias-corrected update of a single scalar. Exposed for reference
    /// tests; `adam_step` applies the same arithmetic to every coordinate.
    pub fn update_scalar(&mut self, i: usize, lr: f64, g: f64) -> f64 {
        let c = &self.config;
        self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
        self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
        let t = self.step as i32;
        let m_hat = self.m[i] / (1.0 - c.beta1.powi(t));
        let v_hat = self.v[i] / (1.0 - c.beta2.powi(t));
        -lr * m_hat / (v_hat.sqrt() + c.eps)
    }
}

/// Applies one Adam update to every scene parameter, then projects payload
/// values to be non-negative and composed scales to stay at or above the
/// minimum scale.
pub fn adam_step<T: Real>(scene: &mut Scene<T>, grads: &GradBuffer<T>, state: &mut AdamState) -> Result<()> {
    grads.check_shape(&scene.params)?;
    if state.m.len() != scene.params.len() {
        return Err(Error::ShapeMismatch(format!(
            "optimizer holds {} moments for {} parameters",
            state.m.len(),
            scene.params.len()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    state.step += 1;
    let rates: Vec<f64> = ParamGroup::ALL.iter().map(|&g| state.config.lr_for(g)).collect();
    scene.params.for_each_mut(|i, group, value| {
        let g = grads.get(i).as_f64();
        let du = state.update_scalar(i, rates[group as usize], g);
        *value = T::lit(value.as_f64() + du);
    });
    project(scene)
}

/// Clamps payload to `>= 0` and each delta scale so that `ŝ + δs >= MIN_SCALE`.
pub fn project<T: Real>(scene: &mut Scene<T>) -> Result<()> {
    for x in scene.params.payload.data_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    let bases = scene.bases()?;
    let floor = T::lit(MIN_SCALE);
    for (d, b) in scene.params.deltas.iter_mut().zip(&bases) {
        for a in 0..3 {
            if b.scale[a] + d.scale[a] < floor {
                d.scale[a] = floor - b.scale[a];
            }
        }
    }
    Ok(())
}
