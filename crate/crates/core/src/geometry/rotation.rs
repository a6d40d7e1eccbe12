use serde::{Deserialize, Serialize};

use super::linalg::{Mat3, Vec3};
use crate::real::Real;

/// Coefficients of the Rodrigues expansion `R = I + a[v]× + b[v]×²` and their
/// radial derivatives `c = a'(θ)/θ`, `d = b'(θ)/θ`, evaluated in f64.
#[derive(Clone, Copy, Debug)]
struct RodriguesCoeffs {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl RodriguesCoeffs {
    fn new(theta_sq: f64) -> Self {
        if theta_sq < 1e-3 {
            let t2 = theta_sq;
            let t4 = t2 * t2;
            let t6 = t4 * t2;
            Self {
                a: 1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0,
                b: 0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
                c: -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0,
                d: -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
            }
        } else {
            let t = theta_sq.sqrt();
            let (s, c) = t.sin_cos();
            Self {
                a: s / t,
                b: (1.0 - c) / theta_sq,
                c: (t * c - s) / (theta_sq * t),
                d: (t * s - 2.0 * (1.0 - c)) / (theta_sq * theta_sq),
            }
        }
    }
}

/// An orthonormal rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Rotation<T: Real> {
    matrix: Mat3<T>,
}

impl<T: Real> Default for Rotation<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self {
            matrix: Mat3::identity(),
        }
    }

    /// Rodrigues' formula. The zero vector maps to the identity exactly.
    pub fn from_axis_angle(v: Vec3<T>) -> Self {
        let k = RodriguesCoeffs::new(v.norm_squared().as_f64());
        let vx = Mat3::skew(v);
        let vx2 = vx.mul_mat(&vx);
        let matrix = Mat3::identity()
            .add(&vx.scale(T::lit(k.a)))
            .add(&vx2.scale(T::lit(k.b)));
        Self { matrix }
    }

    /// Wraps a matrix the caller guarantees to be orthonormal with det +1.
    pub fn from_matrix_unchecked(matrix: Mat3<T>) -> Self {
        Self { matrix }
    }

    /// Rotation whose columns are the given right-handed orthonormal frame.
    pub fn from_frame(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        Self::from_matrix_unchecked(Mat3::from_cols(c0, c1, c2))
    }

    #[inline(always)]
    pub fn matrix(&self) -> &Mat3<T> {
        &self.matrix
    }

    #[inline(always)]
    pub fn apply(&self, v: Vec3<T>) -> Vec3<T> {
        self.matrix.mul_vec(v)
    }

    #[inline(always)]
    pub fn apply_inverse(&self, v: Vec3<T>) -> Vec3<T> {
        self.matrix.tr_mul_vec(v)
    }

    /// `self · other`
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.mul_mat(&other.matrix),
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }

    /// Logarithm map back to an axis-angle vector with angle in `[0, π]`.
    pub fn axis_angle(&self) -> Vec3<T> {
        let m = self.matrix.cast::<f64>();
        let cos = ((m.m[0][0] + m.m[1][1] + m.m[2][2] - 1.0) * 0.5).clamp(-1.0, 1.0);
        let theta = cos.acos();
        let w = Vec3::new(
            m.m[2][1] - m.m[1][2],
            m.m[0][2] - m.m[2][0],
            m.m[1][0] - m.m[0][1],
        );
        let v = if theta < 1e-6 {
            w * 0.5
        } else if std::f64::consts::PI - theta > 1e-4 {
            w * (theta / (2.0 * theta.sin()))
        } else {
            // Near a half turn: the axis comes from the symmetric part.
            let b = m.add(&m.transpose()).scale(0.5).add(&Mat3::identity().scale(-cos));
            let scale = 1.0 - cos;
            let mut axis = Vec3::new(
                (b.m[0][0] / scale).max(0.0).sqrt(),
                (b.m[1][1] / scale).max(0.0).sqrt(),
                (b.m[2][2] / scale).max(0.0).sqrt(),
            );
            let i = (0..3)
                .max_by(|&a, &b| axis[a].partial_cmp(&axis[b]).unwrap())
                .unwrap();
            for j in 0..3 {
                if j != i && b.m[i][j] < 0.0 {
                    axis[j] = -axis[j];
                }
            }
            if w.dot(axis) < 0.0 {
                axis = -axis;
            }
            axis.normalized() * theta
        };
        v.cast()
    }

    pub fn orthonormality_error(&self) -> T {
        self.matrix
            .transpose()
            .mul_mat(&self.matrix)
            .max_abs_diff(&Mat3::identity())
    }
}

/// Rodrigues rotation from an axis-angle vector.
pub fn rotation_from_axis_angle<T: Real>(v: Vec3<T>) -> Rotation<T> {
    Rotation::from_axis_angle(v)
}

/// Partial derivatives `∂R/∂vᵢ` of the Rodrigues map at `v`.
pub fn axis_angle_jacobian<T: Real>(v: Vec3<T>) -> [Mat3<T>; 3] {
    let k = RodriguesCoeffs::new(v.norm_squared().as_f64());
    let (a, b, c, d) = (T::lit(k.a), T::lit(k.b), T::lit(k.c), T::lit(k.d));
    let vx = Mat3::skew(v);
    let vx2 = vx.mul_mat(&vx);
    std::array::from_fn(|i| {
        let ex = Mat3::skew(Vec3::unit(i));
        ex.scale(a)
            .add(&ex.mul_mat(&vx).add(&vx.mul_mat(&ex)).scale(b))
            .add(&vx.scale(c * v[i]))
            .add(&vx2.scale(d * v[i]))
    })
}

/// Chains an upstream gradient `dL/dR` through the Rodrigues map.
pub fn axis_angle_backward<T: Real>(v: Vec3<T>, grad_matrix: &Mat3<T>) -> Vec3<T> {
    let jac = axis_angle_jacobian(v);
    Vec3::new(
        grad_matrix.frob_dot(&jac[0]),
        grad_matrix.frob_dot(&jac[1]),
        grad_matrix.frob_dot(&jac[2]),
    )
}
