use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::primitive::TransformDelta;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub pho: f64,
    pub geo: f64,
    pub vol: f64,
    pub del: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pho: 1.0,
            geo: 0.1,
            vol: 0.01,
            del: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("pho", self.pho), ("geo", self.geo), ("vol", self.vol), ("del", self.del)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidInput(format!("loss weight {name} = {w} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// `λ · (1/N) Σ w_p ‖I_p − Ī_p‖²` and its gradient w.r.t. `rendered`.
/// `pixel_weights` defaults to one per pixel.
pub fn loss_pho<T: Real>(
    rendered: &[Vec3<T>],
    target: &[Vec3<T>],
    pixel_weights: Option<&[T]>,
    lambda: T,
) -> Result<(T, Vec<Vec3<T>>)> {
    if rendered.is_empty() {
        return Err(Error::Empty("pixel set"));
    }
    if rendered.len() != target.len() || pixel_weights.is_some_and(|w| w.len() != rendered.len()) {
        return Err(Error::ShapeMismatch(format!(
            "{} rendered pixels, {} targets",
            rendered.len(),
            target.len()
        )));
    }
    let scale = lambda / T::lit(rendered.len() as f64);
    let mut loss = T::zero();
    let grads = rendered
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (r, t))| {
            let w = pixel_weights.map_or(T::one(), |w| w[i]);
            let d = *r - *t;
            loss += w * d.norm_squared();
            d * (T::lit(2.0) * w * scale)
        })
        .collect();
    Ok((loss * scale, grads))
}

/// `λ · (1/N) Σ ‖v_i − v̄_i‖²` and its gradient w.r.t. `fitted`.
pub fn loss_geo<T: Real>(fitted: &[Vec3<T>], tracked: &[Vec3<T>], lambda: T) -> Result<(T, Vec<Vec3<T>>)> {
    if fitted.len() != tracked.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} fitted vertices, {} tracked",
            fitted.len(),
            tracked.len()
        )));
    }
    if fitted.is_empty() {
        return Ok((T::zero(), Vec::new()));
    }
    let scale = lambda / T::lit(fitted.len() as f64);
    let mut loss = T::zero();
    let grads = fitted
        .iter()
        .zip(tracked)
        .map(|(a, b)| {
            let d = *a - *b;
            loss += d.norm_squared();
            d * (T::lit(2.0) * scale)
        })
        .collect();
    Ok((loss * scale, grads))
}

/// `λ · Σ_k s_x s_y s_z` and its gradient w.r.t. each composed scale.
pub fn loss_vol<T: Real>(scales: &[Vec3<T>], lambda: T) -> (T, Vec<Vec3<T>>) {
    let mut loss = T::zero();
    let grads = scales
        .iter()
        .map(|s| {
            loss += s.x * s.y * s.z;
            Vec3::new(s.y * s.z, s.x * s.z, s.x * s.y) * lambda
        })
        .collect();
    (loss * lambda, grads)
}

/// `λ · Σ_k (‖δt‖² + ‖δR‖² + ‖δs‖²)` and its gradient.
pub fn loss_del<T: Real>(deltas: &[TransformDelta<T>], lambda: T) -> (T, Vec<TransformDelta<T>>) {
    let two = T::lit(2.0) * lambda;
    let mut loss = T::zero();
    let grads = deltas
        .iter()
        .map(|d| {
            loss += d.translation.norm_squared() + d.rotation.norm_squared() + d.scale.norm_squared();
            TransformDelta {
                translation: d.translation * two,
                rotation: d.rotation * two,
                scale: d.scale * two,
            }
        })
        .collect();
    (loss * lambda, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vecs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3<f64>> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn pho_known_values() {
        let ones = vec![Vec3::splat(1.0f64); 5];
        let zeros = vec![Vec3::zero(); 5];
        assert_eq!(loss_pho(&ones, &ones, None, 1.0).unwrap().0, 0.0);
        assert_eq!(loss_pho(&ones, &zeros, None, 1.0).unwrap().0, 3.0);
        assert!(matches!(loss_pho::<f64>(&[], &[], None, 1.0), Err(Error::Empty(_))));
    }

    #[test]
    fn pho_matches_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_vecs(&mut rng, 37);
        let b = rand_vecs(&mut rng, 37);
        let mut reference = 0.0;
        for i in 0..37 {
            for c in 0..3 {
                reference += (a[i][c] - b[i][c]).powi(2);
            }
        }
        reference *= 0.7 / 37.0;
        let (l, g) = loss_pho(&a, &b, None, 0.7).unwrap();
        assert!((l - reference).abs() < 1e-12);
        let mut ap = a.clone();
        ap[5].y += 1e-6;
        let mut am = a.clone();
        am[5].y -= 1e-6;
        let fd = (loss_pho(&ap, &b, None, 0.7).unwrap().0 - loss_pho(&am, &b, None, 0.7).unwrap().0) / 2e-6;
        assert!((fd - g[5].y).abs() < 1e-8);
    }

    #[test]
    fn geo_known_values() {
        let v = vec![Vec3::new(0.3, 0.1, -2.0f64); 4];
        let shifted: Vec<_> = v.iter().map(|x| *x + Vec3::new(1.0, 0.0, 0.0)).collect();
        assert_eq!(loss_geo(&v, &v, 0.1).unwrap().0, 0.0);
        assert!((loss_geo(&shifted, &v, 0.1).unwrap().0 - 0.1).abs() < 1e-15);
        assert!(loss_geo(&v[..3], &v, 0.1).is_err());
    }

    #[test]
    fn geo_matches_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_vecs(&mut rng, 20);
        let b = rand_vecs(&mut rng, 20);
        let reference: f64 = a.iter().zip(&b).map(|(x, y)| (*x - *y).norm_squared()).sum::<f64>() * 0.1 / 20.0;
        assert!((loss_geo(&a, &b, 0.1).unwrap().0 - reference).abs() < 1e-12);
    }

    #[test]
    fn vol_known_values_and_gradient() {
        let (l, _) = loss_vol(&[Vec3::new(1.0f64, 2.0, 3.0)], 0.01);
        assert!((l - 0.06).abs() < 1e-15);
        let (l, _) = loss_vol(&[Vec3::splat(1.0f64); 7], 0.01);
        assert!((l - 0.07).abs() < 1e-15);
        let s = vec![Vec3::new(0.3, 1.7, 0.9f64)];
        let (_, g) = loss_vol(&s, 0.01);
        for a in 0..3 {
            let h = 1e-6;
            let mut sp = s.clone();
            sp[0][a] += h;
            let mut sm = s.clone();
            sm[0][a] -= h;
            let fd = (loss_vol(&sp, 0.01).0 - loss_vol(&sm, 0.01).0) / (2.0 * h);
            assert!((fd - g[0][a]).abs() / g[0][a].abs() < 1e-8);
        }
    }

    #[test]
    fn del_known_values_and_gradient() {
        assert_eq!(loss_del(&[TransformDelta::<f64>::default(); 3], 0.01).0, 0.0);
        let d = TransformDelta {
            translation: Vec3::new(1.0f64, 0.0, 0.0),
            ..Default::default()
        };
        assert!((loss_del(&[d], 0.01).0 - 0.01).abs() < 1e-15);
        let d = TransformDelta {
            translation: Vec3::new(0.2f64, -0.1, 0.4),
            rotation: Vec3::new(0.05, 0.3, -0.2),
            scale: Vec3::new(-0.01, 0.02, 0.03),
        };
        let (_, g) = loss_del(&[d], 0.01);
        let mut dp = d;
        dp.rotation.y += 1e-6;
        let mut dm = d;
        dm.rotation.y -= 1e-6;
        let fd = (loss_del(&[dp], 0.01).0 - loss_del(&[dm], 0.01).0) / 2e-6;
        assert!((fd - g[0].rotation.y).abs() < 1e-9);
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(LossWeights { vol: -1.0, ..Default::default() }.validate().is_err());
    }
}
