//! Kent distribution on the sphere, the radial projection likelihood and
//! their change of variables into hash space.
//!
//! All densities are handled in log space: at the default concentration
//! (`kappa = 500`) the normalizer is of order `e^500`.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UnitVector3;

/// Relative size of a series term below which the normalizer stops.
const SERIES_TOLERANCE: f64 = 1e-12;
/// Maximum number of series terms before giving up.
const SERIES_MAX_TERMS: usize = 200;
/// Smallest `|det B|` accepted for a hash basis.
pub const MIN_BASIS_DET: f64 = 1e-12;

/// `ln(sinh x)` without overflow for large `x`.
fn ln_sinh(x: f64) -> f64 {
    if x < 20.0 {
        x.sinh().ln()
    } else {
        x - LN_2 + (-(-2.0 * x).exp()).ln_1p()
    }
}

/// `ln I_{m + 1/2}(x)` for `m = 0..=max_order`.
///
/// `I_{1/2}` has the closed form `sqrt(2 / (pi x)) sinh x`; higher orders come
/// from the ratios `I_v / I_{v-1}`, which are evaluated by running the
/// three-term recurrence downwards from an order well above both `x` and
/// `max_order` (the upward direction is unstable for modified Bessel
/// functions).
pub fn ln_bessel_i_half_integer(max_order: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0, "argument must be positive");
    let start = max_order.max(x.ceil() as usize) + 64;
    // ratios[m] = I_{m+1/2} / I_{m-1/2}, m >= 1
    let mut ratios = vec![0.0; max_order + 1];
    let mut rho = 0.0;
    for m in (1..=start).rev() {
        // rho = I_{m+1/2} / I_{m-1/2} = 1 / ((2m + 1) / x + I_{m+3/2} / I_{m+1/2})
        rho = 1.0 / ((2 * m + 1) as f64 / x + rho);
        if m <= max_order {
            ratios[m] = rho;
        }
    }
    let mut out = Vec::with_capacity(max_order + 1);
    let mut acc = 0.5 * (2.0 / (PI * x)).ln() + ln_sinh(x);
    out.push(acc);
    for r in ratios.iter().skip(1) {
        acc += r.ln();
        out.push(acc);
    }
    out
}

fn validate_shape(kappa: f64, beta: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParams(format!("kappa must be positive, got {kappa}")));
    }
    if !(beta >= 0.0) || 2.0 * beta >= kappa {
        return Err(Error::InvalidParams(format!(
            "beta must satisfy 0 <= 2 beta < kappa, got beta = {beta}, kappa = {kappa}"
        )));
    }
    Ok(())
}

/// Natural log of the Kent normalizer `c(kappa, beta)`.
pub fn kent_log_normalizer(kappa: f64, beta: f64) -> Result<f64> {
    validate_shape(kappa, beta)?;
    let half = 0.5 * kappa;
    if beta == 0.0 {
        // only the j = 0 term survives: 2 pi sqrt(pi) (kappa/2)^(-1/2) I_{1/2}(kappa)
        let ln_i = ln_bessel_i_half_integer(0, kappa)[0];
        return Ok((2.0 * PI).ln() + 0.5 * PI.ln() - 0.5 * half.ln() + ln_i);
    }
    let ln_i = ln_bessel_i_half_integer(2 * SERIES_MAX_TERMS, kappa);
    let ln_beta = beta.ln();
    let ln_half = half.ln();
    // Gamma(j + 1/2) / Gamma(j + 1), starting at sqrt(pi)
    let mut ln_gamma_ratio = 0.5 * PI.ln();
    let mut total = f64::NEG_INFINITY;
    for j in 0..SERIES_MAX_TERMS {
        let jf = j as f64;
        let term = ln_gamma_ratio + 2.0 * jf * ln_beta - (2.0 * jf + 0.5) * ln_half + ln_i[2 * j];
        total = log_add(total, term);
        if j > 0 && term - total < SERIES_TOLERANCE.ln() {
            return Ok((2.0 * PI).ln() + total);
        }
        ln_gamma_ratio += ((jf + 0.5) / (jf + 1.0)).ln();
    }
    Err(Error::NonConvergence(SERIES_MAX_TERMS))
}

/// The Kent normalizer `c(kappa, beta)` in linear space. Overflows to
/// infinity above `kappa ~ 709`; prefer [`kent_log_normalizer`].
pub fn kent_normalizer(kappa: f64, beta: f64) -> Result<f64> {
    kent_log_normalizer(kappa, beta).map(f64::exp)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Parameters of a Kent distribution; the normalizer is computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct KentParams {
    gamma1: UnitVector3,
    gamma2: UnitVector3,
    gamma3: UnitVector3,
    kappa: f64,
    beta: f64,
    ln_norm: f64,
}

impl KentParams {
    pub fn new(
        gamma1: UnitVector3,
        gamma2: UnitVector3,
        gamma3: UnitVector3,
        kappa: f64,
        beta: f64,
    ) -> Result<Self> {
        let tol = 1e-9;
        if gamma1.dot(&gamma2).abs() > tol
            || gamma1.dot(&gamma3).abs() > tol
            || gamma2.dot(&gamma3).abs() > tol
        {
            return Err(Error::InvalidParams("axes are not orthonormal".into()));
        }
        let ln_norm = kent_log_normalizer(kappa, beta)?;
        Ok(Self {
            gamma1,
            gamma2,
            gamma3,
            kappa,
            beta,
            ln_norm,
        })
    }

    /// Kent distribution with mean `mean` and the deterministic tangent frame
    /// from [`UnitVector3::orthonormal_completion`].
    pub fn centered(mean: UnitVector3, kappa: f64, beta: f64) -> Result<Self> {
        let (g2, g3) = mean.orthonormal_completion();
        Self::new(mean, g2, g3, kappa, beta)
    }

    /// Same shape, new mean direction. Reuses the normalizer.
    pub fn recentered(&self, mean: UnitVector3) -> Self {
        let (g2, g3) = mean.orthonormal_completion();
        Self {
            gamma1: mean,
            gamma2: g2,
            gamma3: g3,
            ..self.clone()
        }
    }

    pub fn gamma1(&self) -> &UnitVector3 {
        &self.gamma1
    }

    pub fn gamma2(&self) -> &UnitVector3 {
        &self.gamma2
    }

    pub fn gamma3(&self) -> &UnitVector3 {
        &self.gamma3
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ln_normalizer(&self) -> f64 {
        self.ln_norm
    }

    /// Log density evaluated at an arbitrary vector, no norm check.
    fn ln_density_at(&self, x: &Vector3<f64>) -> f64 {
        let t = self.gamma1.as_vector().dot(x);
        let mut e = self.kappa * t;
        if self.beta != 0.0 {
            let a = self.gamma2.as_vector().dot(x);
            let b = self.gamma3.as_vector().dot(x);
            e += self.beta * (a * a - b * b);
        }
        e - self.ln_norm
    }
}

pub fn kent_log_pdf(params: &KentParams, x: &Vector3<f64>) -> Result<f64> {
    let n = x.norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParams(format!(
            "Kent density needs a unit vector, got norm {n}"
        )));
    }
    Ok(params.ln_density_at(x))
}

/// Draws `n` samples. `beta = 0` uses the exact von Mises-Fisher inversion;
/// `beta > 0` uses rejection from a von Mises-Fisher envelope with
/// concentration `kappa - 2 beta`.
pub fn kent_sample<R: Rng + ?Sized>(
    params: &KentParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<UnitVector3>> {
    if n == 0 {
        return Err(Error::InvalidParams("sample count must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(n);
    if params.beta == 0.0 {
        for _ in 0..n {
            out.push(sample_vmf(params, params.kappa, rng));
        }
        return Ok(out);
    }
    // f/g = exp(2 beta t + beta (a^2 - b^2)) <= exp(2 beta), attained at t = 1
    let envelope = params.kappa - 2.0 * params.beta;
    while out.len() < n {
        let x = sample_vmf(params, envelope, rng);
        let t = params.gamma1.dot(&x);
        let a = params.gamma2.dot(&x);
        let b = params.gamma3.dot(&x);
        let ln_accept = 2.0 * params.beta * (t - 1.0) + params.beta * (a * a - b * b);
        let u: f64 = rng.random();
        if u.ln() < ln_accept {
            out.push(x);
        }
    }
    Ok(out)
}

fn sample_vmf<R: Rng + ?Sized>(params: &KentParams, kappa: f64, rng: &mut R) -> UnitVector3 {
    // inverse CDF of t = gamma1 . x, density proportional to exp(kappa t) on [-1, 1]
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let t = (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - t * t).max(0.0).sqrt();
    let v = params.gamma1.as_vector() * t
        + (params.gamma2.as_vector() * phi.cos() + params.gamma3.as_vector() * phi.sin()) * s;
    UnitVector3::new_unchecked(v / v.norm())
}

/// Width of the radial "projection" factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    alpha: f64,
}

impl ProjectionParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ln_density(&self, x: &Vector3<f64>) -> f64 {
        let z = (x.norm() - 1.0) / self.alpha;
        -0.5 * z * z - (self.alpha * (2.0 * PI).sqrt()).ln()
    }
}

/// Gaussian likelihood of `x` lying on the unit sphere.
pub fn projection_likelihood(alpha: f64, x: &Vector3<f64>) -> Result<f64> {
    Ok(ProjectionParams::new(alpha)?.ln_density(x).exp())
}

/// `ln p_d(x) = ln n(x) + ln k(x / |x|)`.
///
/// The Kent factor is evaluated at the direction of `x`; combined with the
/// radial Gaussian this is a proper density on R^3 (it integrates to
/// `1 + alpha^2`).
pub fn feature_log_likelihood(
    kent: &KentParams,
    proj: &ProjectionParams,
    x: &Vector3<f64>,
) -> Result<f64> {
    let n = x.norm();
    if !n.is_finite() {
        return Err(Error::InvalidParams("non-finite feature vector".into()));
    }
    if n == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(proj.ln_density(x) + kent.ln_density_at(&(x / n)))
}

/// Basis `B = [d, d', d x d']` spanned by two dots.
#[derive(Debug, Clone, PartialEq)]
pub struct HashBasis {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
    ln_abs_det: f64,
}

impl HashBasis {
    pub fn from_dots(d: &Vector3<f64>, d2: &Vector3<f64>) -> Result<Self> {
        Self::from_matrix(Matrix3::from_columns(&[*d, *d2, d.cross(d2)]))
    }

    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self> {
        let det = matrix.determinant();
        if !(det.abs() > MIN_BASIS_DET) {
            return Err(Error::SingularBasis(det.abs()));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or(Error::SingularBasis(det.abs()))?;
        Ok(Self {
            matrix,
            inverse,
            ln_abs_det: det.abs().ln(),
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn ln_abs_det(&self) -> f64 {
        self.ln_abs_det
    }

    /// Hash-space coordinates `B⁻¹ x`.
    pub fn to_hash(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.inverse * x
    }

    /// Back to feature space, `B h`.
    pub fn from_hash(&self, h: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * h
    }
}

/// `ln p_phi(h) = ln p_d(B h) + ln |det B|`.
pub fn hash_space_log_likelihood(
    kent: &KentParams,
    proj: &ProjectionParams,
    basis: &HashBasis,
    h: &Vector3<f64>,
) -> Result<f64> {
    Ok(feature_log_likelihood(kent, proj, &basis.from_hash(h))? + basis.ln_abs_det)
}

/// Dot position uncertainty model shared by table scoring and recognition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DotModel {
    pub kappa: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl Default for DotModel {
    fn default() -> Self {
        Self {
            kappa: 500.0,
            beta: 0.0,
            alpha: 0.03,
        }
    }
}

impl DotModel {
    /// Kent distribution of this shape centered on `mean`.
    pub fn kent(&self, mean: UnitVector3) -> Result<KentParams> {
        KentParams::centered(mean, self.kappa, self.beta)
    }

    pub fn projection(&self) -> Result<ProjectionParams> {
        ProjectionParams::new(self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        validate_shape(self.kappa, self.beta)?;
        ProjectionParams::new(self.alpha)?;
        Ok(())
    }
}
