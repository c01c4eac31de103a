//! Normal-Wishart conjugate model for a 3D Gaussian with unknown mean and
//! precision, and its multivariate Student-t posterior predictive.
//!
//! `scatter` is the inverse-scale matrix of the Wishart: observations add
//! their scatter to it, and the predictive scale is
//! `scatter·(κ+1) / (κ·(ν-2))` with `ν-2` degrees of freedom.
//!
//! Outer products are accumulated in double-double arithmetic. With the
//! near-singular non-informative scatter, a window of one or two points leaves
//! an eigenvalue of order ε, and rounding each matrix entry to `f64` would
//! perturb it by about `u·‖scatter‖`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use twofloat::TwoFloat;

use crate::error::{KidsError, Result};
use crate::kinematics::Embedding3;

const DIM: f64 = 3.0;

/// Default diagonal used in place of the singular non-informative scatter.
pub const DEFAULT_NONINFORMATIVE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalWishartParams {
    pub mean: Vector3<f64>,
    pub kappa: f64,
    pub dof: f64,
    pub scatter: Matrix3<f64>,
    /// Rounding residual of `scatter`; the exact accumulated scatter is
    /// `scatter + scatter_lo` to about 32 significant digits.
    #[serde(skip)]
    pub scatter_lo: Matrix3<f64>,
}

impl NormalWishartParams {
    pub fn new(mean: Vector3<f64>, kappa: f64, dof: f64, scatter: Matrix3<f64>) -> Result<Self> {
        if !mean.iter().all(|c| c.is_finite()) {
            return Err(KidsError::invalid("prior mean must be finite"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(KidsError::invalid(format!("kappa must be positive, got {kappa}")));
        }
        if !(dof > DIM && dof.is_finite()) {
            return Err(KidsError::invalid(format!(
                "degrees of freedom must exceed 3, got {dof}"
            )));
        }
        if !scatter.iter().all(|c| c.is_finite()) {
            return Err(KidsError::invalid("scatter matrix must be finite"));
        }
        let scale = scatter.amax().max(1.0);
        if (scatter - scatter.transpose()).amax() > 1e-12 * scale {
            return Err(KidsError::invalid("scatter matrix must be symmetric"));
        }
        let min_eig = SymmetricEigen::new(scatter).eigenvalues.min();
        if min_eig < -1e-12 * scale {
            return Err(KidsError::invalid(format!(
                "scatter matrix must be positive semidefinite (min eigenvalue {min_eig})"
            )));
        }
        Ok(Self {
            mean,
            kappa,
            dof,
            scatter,
            scatter_lo: Matrix3::zeros(),
        })
    }

    /// μ = 1e-4·1, κ = 1/20, ν = 4, scatter = 5·I.
    pub fn informative() -> Self {
        Self {
            mean: Vector3::repeat(1e-4),
            kappa: 1.0 / 20.0,
            dof: 4.0,
            scatter: Matrix3::identity() * 5.0,
            scatter_lo: Matrix3::zeros(),
        }
    }

    /// μ = 1e-4·1, κ = 1e-4, ν = 4, scatter = ε·I.
    ///
    /// The flat prior calls for a zero-determinant scatter; `epsilon` keeps
    /// the first predictive proper.
    pub fn non_informative(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(KidsError::invalid(format!(
                "non-informative epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            mean: Vector3::repeat(1e-4),
            kappa: 1e-4,
            dof: 4.0,
            scatter: Matrix3::identity() * epsilon,
            scatter_lo: Matrix3::zeros(),
        })
    }

    /// Posterior after one more observation (rank-one conjugate update).
    pub fn update(&self, x: &Embedding3) -> Self {
        let kappa = self.kappa + 1.0;
        let d = x - self.mean;
        let mut scatter = self.scatter;
        let mut scatter_lo = self.scatter_lo;
        add_outer(&mut scatter, &mut scatter_lo, &d, self.kappa / kappa);
        Self {
            mean: (self.mean * self.kappa + x) / kappa,
            kappa,
            dof: self.dof + 1.0,
            scatter,
            scatter_lo,
        }
    }

    pub fn predictive_dof(&self) -> f64 {
        self.dof - 2.0
    }

    pub fn predictive_scale(&self) -> Matrix3<f64> {
        self.scatter * ((self.kappa + 1.0) / (self.kappa * self.predictive_dof()))
    }

    /// Precompute the Student-t predictive for repeated evaluation.
    pub fn predictive(&self) -> Result<StudentT3> {
        let factor = (self.kappa + 1.0) / (self.kappa * self.predictive_dof());
        StudentT3::from_scaled(
            self.mean,
            &self.scatter,
            &self.scatter_lo,
            factor,
            self.predictive_dof(),
        )
    }
}

/// Batch posterior for a whole window of observations.
///
/// Computes the window mean and centred scatter directly, then applies the
/// conjugate update in closed form. An empty window returns the prior.
pub fn nw_posterior_params(
    prior: &NormalWishartParams,
    window: &[Embedding3],
) -> NormalWishartParams {
    if window.is_empty() {
        return *prior;
    }
    let n = window.len() as f64;
    let mean = window.iter().fold(Vector3::zeros(), |acc, o| acc + o) / n;
    let mut hi = Matrix3::zeros();
    let mut lo = Matrix3::zeros();
    for o in window {
        add_outer(&mut hi, &mut lo, &(o - mean), 1.0);
    }
    from_moments(prior, window.len(), &mean, &hi, &lo)
}

/// Closed-form posterior from a count, sample mean and centred scatter.
pub fn posterior_from_moments(
    prior: &NormalWishartParams,
    count: usize,
    mean: &Vector3<f64>,
    scatter: &Matrix3<f64>,
) -> NormalWishartParams {
    from_moments(prior, count, mean, scatter, &Matrix3::zeros())
}

fn from_moments(
    prior: &NormalWishartParams,
    count: usize,
    mean: &Vector3<f64>,
    scatter_hi: &Matrix3<f64>,
    scatter_lo: &Matrix3<f64>,
) -> NormalWishartParams {
    if count == 0 {
        return *prior;
    }
    let n = count as f64;
    let k0 = prior.kappa;
    let mut hi = prior.scatter;
    let mut lo = prior.scatter_lo;
    for i in 0..3 {
        for j in 0..3 {
            let s = dd(hi[(i, j)], lo[(i, j)]) + dd(scatter_hi[(i, j)], scatter_lo[(i, j)]);
            hi[(i, j)] = s.hi();
            lo[(i, j)] = s.lo();
        }
    }
    add_outer(&mut hi, &mut lo, &(prior.mean - mean), k0 * n / (k0 + n));
    NormalWishartParams {
        mean: (prior.mean * k0 + mean * n) / (k0 + n),
        kappa: k0 + n,
        dof: prior.dof + n,
        scatter: hi,
        scatter_lo: lo,
    }
}

fn dd(hi: f64, lo: f64) -> TwoFloat {
    TwoFloat::new_add(hi, lo)
}

/// Double-double quotient. `TwoFloat`'s own division is only accurate to
/// `f64` precision, so one correction step is applied.
fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = a / b;
    q + (a - q * b) / b
}

/// Adds `w·d·dᵀ` to the compensated matrix `hi + lo`, keeping it symmetric.
fn add_outer(hi: &mut Matrix3<f64>, lo: &mut Matrix3<f64>, d: &Vector3<f64>, w: f64) {
    for i in 0..3 {
        for j in i..3 {
            let s = dd(hi[(i, j)], lo[(i, j)]) + TwoFloat::new_mul(d[i], d[j]) * w;
            hi[(i, j)] = s.hi();
            lo[(i, j)] = s.lo();
            hi[(j, i)] = s.hi();
            lo[(j, i)] = s.lo();
        }
    }
}

/// Multivariate Student-t in three dimensions.
///
/// The scale is held as `factor·A` with the Cholesky factor of `A` computed
/// in double-double arithmetic.
#[derive(Debug, Clone)]
pub struct StudentT3 {
    location: Vector3<f64>,
    /// Lower triangle of the factor of `A`, row-major: l00, l10, l11, l20, l21, l22.
    chol: [TwoFloat; 6],
    factor: f64,
    dof: f64,
    log_norm: f64,
}

impl StudentT3 {
    pub fn new(location: Vector3<f64>, scale: Matrix3<f64>, dof: f64) -> Result<Self> {
        Self::from_scaled(location, &scale, &Matrix3::zeros(), 1.0, dof)
    }

    /// Student-t with scale `factor·(hi + lo)`.
    pub fn from_scaled(
        location: Vector3<f64>,
        hi: &Matrix3<f64>,
        lo: &Matrix3<f64>,
        factor: f64,
        dof: f64,
    ) -> Result<Self> {
        if !(dof > 0.0) {
            return Err(KidsError::numerical(format!("non-positive predictive dof {dof}")));
        }
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(KidsError::numerical(format!("invalid predictive scale factor {factor}")));
        }
        let a = |i: usize, j: usize| dd(hi[(i, j)], lo[(i, j)]);
        let not_pd = || KidsError::numerical("predictive scale matrix is not positive definite");
        let pivot = |v: TwoFloat| -> Result<TwoFloat> {
            if v.hi() > 0.0 && v.hi().is_finite() {
                Ok(v.sqrt())
            } else {
                Err(not_pd())
            }
        };
        let l00 = pivot(a(0, 0))?;
        let l10 = div(a(1, 0), l00);
        let l20 = div(a(2, 0), l00);
        let l11 = pivot(a(1, 1) - l10 * l10)?;
        let l21 = div(a(2, 1) - l20 * l10, l11);
        let l22 = pivot(a(2, 2) - l20 * l20 - l21 * l21)?;
        let half_log_det: f64 = [l00, l11, l22]
            .iter()
            .map(|l| l.hi().ln() + l.lo() / l.hi())
            .sum::<f64>()
            + 0.5 * DIM * factor.ln();
        if !half_log_det.is_finite() {
            return Err(not_pd());
        }
        let log_norm = ln_gamma(0.5 * (dof + DIM))
            - ln_gamma(0.5 * dof)
            - 0.5 * DIM * (dof * PI).ln()
            - half_log_det;
        Ok(Self {
            location,
            chol: [l00, l10, l11, l20, l21, l22],
            factor,
            dof,
            log_norm,
        })
    }

    /// Squared Mahalanobis distance under the scale matrix.
    pub fn mahalanobis_sq(&self, x: &Vector3<f64>) -> f64 {
        let [l00, l10, l11, l20, l21, l22] = self.chol;
        let d = x - self.location;
        let z0 = div(TwoFloat::from(d[0]), l00);
        let z1 = div(TwoFloat::from(d[1]) - l10 * z0, l11);
        let z2 = div(TwoFloat::from(d[2]) - l20 * z0 - l21 * z1, l22);
        f64::from(z0 * z0 + z1 * z1 + z2 * z2) / self.factor
    }

    pub fn ln_pdf(&self, x: &Vector3<f64>) -> f64 {
        self.log_norm - 0.5 * (self.dof + DIM) * (self.mahalanobis_sq(x) / self.dof).ln_1p()
    }

    /// Log density at the location.
    pub fn ln_mode(&self) -> f64 {
        self.log_norm
    }
}

/// Log posterior-predictive density of `o` under `params`.
pub fn log_predictive(o: &Embedding3, params: &NormalWishartParams) -> Result<f64> {
    Ok(params.predictive()?.ln_pdf(o))
}
