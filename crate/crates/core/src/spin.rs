//! Spin regression from orientation sequences, outlier rejection and
//! viscous dampening of the spin rate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Quaternion, UnitQuaternion, Vector3, Vector4};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_angle, Rotation};

/// One orientation measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationSample {
    /// Seconds.
    pub t: f64,
    pub q: Rotation,
    /// Reprojection error of the recognition that produced `q`, radians.
    pub quality: Option<f64>,
}

impl OrientationSample {
    pub fn new(t: f64, q: Rotation) -> Self {
        Self { t, q, quality: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinEstimate {
    /// Angular velocity, rad/s, axis times rate.
    pub omega: [f64; 3],
    /// Indices into the input samples used for the final fit.
    pub inliers: Vec<usize>,
    /// RMS geodesic distance between the fitted trajectory and the
    /// inliers, radians.
    pub residual_rms: f64,
    /// Singular values of the stacked quaternions, descending.
    pub plane_singular_values: [f64; 4],
}

impl SpinEstimate {
    pub fn omega_vector(&self) -> Vector3<f64> {
        Vector3::from(self.omega)
    }

    /// Spin rate in revolutions per second.
    pub fn rps(&self) -> f64 {
        self.omega_vector().norm() / (2.0 * PI)
    }
}

/// Exponential decay fit `|omega(t)| = omega0 * exp(-coefficient * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampeningFit {
    /// 1/s.
    pub coefficient: f64,
    /// rad/s.
    pub omega0: f64,
    pub r2: f64,
    pub n: usize,
}

/// Orientation after spinning at constant `omega` (rad/s) for `dt` seconds.
pub fn propagate_orientation(q0: &Rotation, omega: &Vector3<f64>, dt: f64) -> Rotation {
    Rotation::from_rotation_vector(&(omega * dt)).compose(q0)
}

/// Removes 2π jumps: each successive difference is mapped into (−π, π].
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let prev_raw = angles[i - 1];
            let mut d = a - prev_raw;
            while d > PI {
                d -= 2.0 * PI;
                offset -= 2.0 * PI;
            }
            while d <= -PI {
                d += 2.0 * PI;
                offset += 2.0 * PI;
            }
        }
        out.push(a + offset);
    }
    out
}

/// Rotation axis and in-plane angles of a quaternion sequence.
struct PlaneFit {
    u1: Vector4<f64>,
    u2: Vector4<f64>,
    axis: Vector3<f64>,
    singular_values: [f64; 4],
}

/// Smallest acceptable ratio of the second to third singular value.
pub const PLANE_RATIO_MIN: f64 = 3.0;

fn check_times(samples: &[OrientationSample]) -> Result<()> {
    for (i, w) in samples.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(Error::NonMonotonicTime(i + 1));
        }
    }
    if let Some(i) = samples.iter().position(|s| !s.t.is_finite()) {
        return Err(Error::InvalidParams(format!("sample {i} has a non-finite time")));
    }
    Ok(())
}

fn as_vec4(q: &Rotation) -> Vector4<f64> {
    let [w, x, y, z] = q.wxyz();
    Vector4::new(w, x, y, z)
}

fn quat(v: &Vector4<f64>) -> Quaternion<f64> {
    Quaternion::new(v[0], v[1], v[2], v[3])
}

/// Unwraps sign-free rotation angles `psi` (defined modulo 2π) sampled at
/// times `t`. The rate is first estimated from the most closely spaced
/// pairs; every step is then taken as the predicted advance plus the
/// wrapped deviation from it, so gaps left by dropped samples do not alias
/// as long as the deviations stay below π.
fn track_angles(t: &[f64], psi: &[f64]) -> Vec<f64> {
    let wrap = |d: f64| {
        let r = d.rem_euclid(2.0 * PI);
        if r > PI { r - 2.0 * PI } else { r }
    };
    let gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &g) in gaps.iter().enumerate() {
        if g <= 1.5 * min_gap {
            num += wrap(psi[i + 1] - psi[i]);
            den += g;
        }
    }
    let rate = num / den;
    let mut out = Vec::with_capacity(psi.len());
    out.push(psi[0]);
    for (i, &g) in gaps.iter().enumerate() {
        let step = rate * g + wrap(psi[i + 1] - psi[i] - rate * g);
        out.push(out[i] + step);
    }
    out
}

fn fit_plane(quats: &[Vector4<f64>]) -> Result<PlaneFit> {
    let m = DMatrix::from_fn(quats.len(), 4, |r, c| quats[r][c]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut sv = [0.0; 4];
    for (k, &i) in order.iter().enumerate().take(4) {
        sv[k] = svd.singular_values[i];
    }
    let ratio = if sv[2] > 0.0 { sv[1] / sv[2] } else { f64::INFINITY };
    if !(sv[1] > 1e-12 * sv[0]) || ratio < PLANE_RATIO_MIN {
        return Err(Error::NonUniqueAxis {
            ratio: if sv[1] > 1e-12 * sv[0] { ratio } else { 0.0 },
        });
    }
    let row = |i: usize| Vector4::from_fn(|c, _| v_t[(order[i], c)]);
    let u1 = row(0);
    let u2 = row(1);
    let v = (quat(&u2) * quat(&u1).conjugate()).imag();
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(Error::NonUniqueAxis { ratio });
    }
    Ok(PlaneFit {
        u1,
        u2,
        axis: v / norm,
        singular_values: sv,
    })
}

/// Least-squares line `y = a + b t`; returns `(a, b, r2)` with `r2 = 0`
/// when `y` has no variance.
fn linear_regression(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|x| (x - mt).powi(2)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(x, v)| (x - mt) * (v - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mt;
    let r2 = if syy > 0.0 {
        let ss_res: f64 = t.iter().zip(y).map(|(x, v)| (v - a - b * x).powi(2)).sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a, b, r2)
}

/// Quaternion regression.
///
/// The quaternions of a constant spin lie, up to sign, on a great circle of
/// the unit 3-sphere. The plane of that circle comes from an SVD; its two
/// basis quaternions give the spin axis. Twice the in-plane angle of each
/// sample is its rotation angle, which is unwrapped and regressed against
/// time to give the spin rate.
pub fn quatera_fit(samples: &[OrientationSample]) -> Result<SpinEstimate> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 3,
        });
    }
    check_times(samples)?;
    let quats: Vec<Vector4<f64>> = samples.iter().map(|s| as_vec4(&s.q)).collect();
    let plane = fit_plane(&quats)?;
    let psi: Vec<f64> = quats
        .iter()
        .map(|q| 2.0 * q.dot(&plane.u2).atan2(q.dot(&plane.u1)))
        .collect();
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let (a, b, _) = linear_regression(&t, &track_angles(&t, &psi));
    let omega = plane.axis * b;

    let mut sq = 0.0;
    for (s, q) in samples.iter().zip(&quats) {
        let phase = 0.5 * (a + b * s.t);
        let model = plane.u1 * phase.cos() + plane.u2 * phase.sin();
        let model = UnitQuaternion::from_quaternion(quat(&model));
        let obs = UnitQuaternion::from_quaternion(quat(q));
        sq += model.angle_to(&obs).powi(2);
    }
    Ok(SpinEstimate {
        omega: omega.into(),
        inliers: (0..samples.len()).collect(),
        residual_rms: (sq / samples.len() as f64).sqrt(),
        plane_singular_values: plane.singular_values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Geodesic distance (radians) under which a sample agrees with a model.
    pub inlier_gate: f64,
    /// Consensus needed; `None` means `max(4, n / 2)`.
    pub min_inliers: Option<usize>,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            inlier_gate: 5f64.to_radians(),
            min_inliers: None,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn min_inliers_for(&self, n: usize) -> usize {
        self.min_inliers.unwrap_or_else(|| (n / 2).max(4))
    }
}

/// RANSAC around [`quatera_fit`]: models are fitted to random triples of
/// samples and scored by how many samples the model, propagated from the
/// first sample of the triple, predicts within the inlier gate. The largest
/// consensus set is refitted.
pub fn ransac_spin(samples: &[OrientationSample], cfg: &RansacConfig) -> Result<SpinEstimate> {
    let n = samples.len();
    let need = cfg.min_inliers_for(n).max(3);
    if n < need {
        return Err(Error::TooFewSamples { got: n, need });
    }
    if cfg.iterations == 0 || !(cfg.inlier_gate > 0.0) {
        return Err(Error::InvalidParams(
            "RANSAC needs at least one iteration and a positive gate".into(),
        ));
    }
    check_times(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..cfg.iterations {
        let mut idx = sample(&mut rng, n, 3).into_vec();
        idx.sort_unstable();
        let subset: Vec<OrientationSample> = idx.iter().map(|&i| samples[i]).collect();
        let Ok(model) = quatera_fit(&subset) else {
            continue;
        };
        let omega = model.omega_vector();
        let anchor = &samples[idx[0]];
        let inliers: Vec<usize> = (0..n)
            .filter(|&j| {
                let predicted = propagate_orientation(&anchor.q, &omega, samples[j].t - anchor.t);
                geodesic_angle(&predicted, &samples[j].q) < cfg.inlier_gate
            })
            .collect();
        if inliers.len() > best.len() {
            best = inliers;
            if best.len() == n {
                break;
            }
        }
    }
    if best.len() < need {
        return Err(Error::NoConsensus { min_inliers: need });
    }
    let chosen: Vec<OrientationSample> = best.iter().map(|&i| samples[i]).collect();
    let mut est = quatera_fit(&chosen)?;
    est.inliers = best;
    Ok(est)
}

/// Angular velocity from two orientations: the rotation vector of
/// `q_b ∘ q_a⁻¹` divided by the time between them.
pub fn finite_difference_spin(
    a: &OrientationSample,
    b: &OrientationSample,
) -> Result<Vector3<f64>> {
    let dt = b.t - a.t;
    if !(dt > 0.0) {
        return Err(Error::NonMonotonicTime(1));
    }
    Ok(b.q.compose(&a.q.inverse()).to_rotation_vector() / dt)
}

/// Decay rate `12 π ν r / m` of the spin of a thin-shelled ball in a
/// viscous fluid.
pub fn theoretical_dampening(nu: f64, r: f64, m: f64) -> Result<f64> {
    if !(nu >= 0.0) || !(r > 0.0) || !(m > 0.0) || !(nu.is_finite() && r.is_finite() && m.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "need nu >= 0, r > 0, m > 0 (got {nu}, {r}, {m})"
        )));
    }
    Ok(12.0 * PI * nu * r / m)
}

fn check_series(series: &[(f64, f64)]) -> Result<()> {
    if series.len() < 3 {
        return Err(Error::TooFewSamples {
            got: series.len(),
            need: 3,
        });
    }
    for &(t, w) in series {
        if !(w > 0.0) {
            return Err(Error::NonPositiveNorm { t, value: w });
        }
        if !t.is_finite() || !w.is_finite() {
            return Err(Error::InvalidParams(format!("non-finite point ({t}, {w})")));
        }
    }
    let t0 = series[0].0;
    if series.iter().all(|p| p.0 == t0) {
        return Err(Error::InvalidParams("all times are equal".into()));
    }
    Ok(())
}

/// Least-squares fit of `ln |omega|` against time.
pub fn dampening_fit(series: &[(f64, f64)]) -> Result<DampeningFit> {
    check_series(series)?;
    let t: Vec<f64> = series.iter().map(|p| p.0).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    let (a, b, r2) = linear_regression(&t, &y);
    Ok(DampeningFit {
        coefficient: -b,
        omega0: a.exp(),
        r2,
        n: series.len(),
    })
}

/// First-order version of [`dampening_fit`]: a straight line
/// `|omega| = omega0 (1 - k t)` fitted to the norms directly.
pub fn linear_dampening_fit(series: &[(f64, f64)]) -> Result<DampeningFit> {
    check_series(series)?;
    let t: Vec<f64> = series.iter().map(|p| p.0).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let (a, b, r2) = linear_regression(&t, &y);
    Ok(DampeningFit {
        coefficient: -b / a,
        omega0: a,
        r2,
        n: series.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, random_unit_vector};

    fn sequence(q0: &Rotation, omega: &Vector3<f64>, fps: f64, n: usize, t0: f64) -> Vec<OrientationSample> {
        (0..n)
            .map(|i| {
                let dt = i as f64 / fps;
                OrientationSample::new(t0 + dt, propagate_orientation(q0, omega, dt))
            })
            .collect()
    }

    fn rel(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn propagation_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let q0 = random_rotation(&mut r);
        assert!(geodesic_angle(&propagate_orientation(&q0, &Vector3::zeros(), 0.3), &q0) < 1e-15);
        let full = propagate_orientation(&q0, &Vector3::new(0.0, 0.0, 2.0 * PI), 1.0);
        assert!(geodesic_angle(&full, &q0) < 1e-12);
        let quarter = propagate_orientation(&q0, &Vector3::new(PI, 0.0, 0.0), 0.5);
        let want = Rotation::from_axis_angle(&crate::geometry::UnitVector3::x_axis(), PI / 2.0).compose(&q0);
        assert!(geodesic_angle(&quarter, &want) < 1e-12);
    }

    #[test]
    fn unwrap_examples() {
        let u = unwrap_angles(&[0.0, 3.0, -3.0]);
        assert_eq!(u[..2], [0.0, 3.0]);
        assert!((u[2] - (2.0 * PI - 3.0)).abs() < 1e-15);
        let smooth = [0.1, 0.5, 1.2, 0.7, -0.4];
        assert_eq!(unwrap_angles(&smooth), smooth.to_vec());
        assert!(unwrap_angles(&[]).is_empty());
    }

    #[test]
    fn unwrapped_fast_spin_is_monotone() {
        let omega = Vector3::new(0.0, 0.0, 2.0 * PI * 170.0);
        let s = sequence(&Rotation::identity(), &omega, 350.0, 10, 0.0);
        let q: Vec<Vector4<f64>> = s.iter().map(|x| as_vec4(&x.q)).collect();
        let plane = fit_plane(&q).unwrap();
        let psi: Vec<f64> = q.iter().map(|v| 2.0 * v.dot(&plane.u2).atan2(v.dot(&plane.u1))).collect();
        let t: Vec<f64> = s.iter().map(|x| x.t).collect();
        let u = track_angles(&t, &psi);
        let up = u.windows(2).all(|w| w[1] > w[0]);
        let down = u.windows(2).all(|w| w[1] < w[0]);
        assert!(up || down);
    }

    #[test]
    fn quatera_inverts_propagation() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for rps in [1.0, 20.0, 50.0, 100.0, 150.0, 174.0] {
            for n in [3, 10, 25] {
                let q0 = random_rotation(&mut r);
                let omega = random_unit_vector(&mut r).into_vector() * (2.0 * PI * rps);
                let s = sequence(&q0, &omega, 350.0, n, 0.7);
                let est = quatera_fit(&s).unwrap();
                assert!(rel(&est.omega_vector(), &omega) < 1e-9, "{rps} rps, {n} samples");
                assert!(est.residual_rms < 1e-9);
            }
        }
    }

    #[test]
    fn gaps_from_dropped_samples() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for rps in [60.0, 100.0, 150.0, 170.0] {
            for drop in [[2usize, 3], [4, 7], [0, 9]] {
                let q0 = random_rotation(&mut r);
                let omega = random_unit_vector(&mut r).into_vector() * (2.0 * PI * rps);
                let mut s = sequence(&q0, &omega, 350.0, 10, 0.0);
                s.remove(drop[1]);
                s.remove(drop[0]);
                let est = quatera_fit(&s).unwrap();
                assert!(rel(&est.omega_vector(), &omega) < 1e-9, "{rps} rps without {drop:?}");
            }
        }
    }

    #[test]
    fn spin_past_nyquist_aliases() {
        let axis = Vector3::new(0.0, 0.0, 1.0);
        let est = quatera_fit(&sequence(&Rotation::identity(), &(axis * 2.0 * PI * 176.0), 350.0, 10, 0.0))
            .unwrap();
        // 176 rps looks like 174 rps the other way round
        let alias = axis * (-2.0 * PI * 174.0);
        assert!(rel(&est.omega_vector(), &alias) < 1e-9);
        let ok = quatera_fit(&sequence(&Rotation::identity(), &(axis * 2.0 * PI * 174.9), 350.0, 10, 0.0))
            .unwrap();
        assert!((ok.rps() - 174.9).abs() < 1e-6);
        let wrapped =
            quatera_fit(&sequence(&Rotation::identity(), &(axis * 2.0 * PI * 175.1), 350.0, 10, 0.0))
                .unwrap();
        assert!((wrapped.rps() - 174.9).abs() < 1e-6);
        assert!(wrapped.omega[2] < 0.0);
    }

    #[test]
    fn zero_spin_has_no_axis() {
        let q = random_rotation(&mut ChaCha8Rng::seed_from_u64(3));
        let s: Vec<OrientationSample> = (0..10).map(|i| OrientationSample::new(i as f64, q)).collect();
        assert!(matches!(quatera_fit(&s), Err(Error::NonUniqueAxis { .. })));
    }

    #[test]
    fn quatera_preconditions() {
        let s = sequence(&Rotation::identity(), &Vector3::new(1.0, 0.0, 0.0), 10.0, 2, 0.0);
        assert!(matches!(quatera_fit(&s), Err(Error::TooFewSamples { got: 2, need: 3 })));
        let mut s = sequence(&Rotation::identity(), &Vector3::new(10.0, 0.0, 0.0), 10.0, 5, 0.0);
        s[3].t = s[2].t;
        assert!(matches!(quatera_fit(&s), Err(Error::NonMonotonicTime(3))));
    }

    #[test]
    fn time_shifts_do_not_matter() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let omega = Vector3::new(30.0, -200.0, 90.0);
        let s = sequence(&random_rotation(&mut r), &omega, 350.0, 10, 0.0);
        let shifted: Vec<OrientationSample> =
            s.iter().map(|x| OrientationSample::new(x.t + 1234.5, x.q)).collect();
        let sh = quatera_fit(&shifted).unwrap();
        assert!(rel(&sh.omega_vector(), &omega) < 1e-9);
    }

    #[test]
    fn ransac_on_clean_data_is_quatera() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let omega = random_unit_vector(&mut r).into_vector() * (2.0 * PI * 50.0);
        let s = sequence(&random_rotation(&mut r), &omega, 350.0, 10, 0.0);
        let plain = quatera_fit(&s).unwrap();
        for seed in 0..20 {
            let cfg = RansacConfig {
                seed,
                ..Default::default()
            };
            let est = ransac_spin(&s, &cfg).unwrap();
            assert_eq!(est, plain);
        }
    }

    #[test]
    fn ransac_rejects_outliers() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let omega = random_unit_vector(&mut r).into_vector() * (2.0 * PI * 50.0);
        let mut s = sequence(&random_rotation(&mut r), &omega, 350.0, 10, 0.0);
        s[2].q = random_rotation(&mut r);
        s[7].q = random_rotation(&mut r);
        let est = ransac_spin(&s, &RansacConfig::default()).unwrap();
        assert_eq!(est.inliers, vec![0, 1, 3, 4, 5, 6, 8, 9]);
        assert!(rel(&est.omega_vector(), &omega) < 1e-9);
    }

    #[test]
    fn ransac_finds_no_consensus_in_noise() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let s: Vec<OrientationSample> = (0..10)
            .map(|i| OrientationSample::new(i as f64 / 350.0, random_rotation(&mut r)))
            .collect();
        assert!(matches!(
            ransac_spin(&s, &RansacConfig::default()),
            Err(Error::NoConsensus { min_inliers: 5 })
        ));
        assert!(matches!(
            ransac_spin(&s[..3], &RansacConfig::default()),
            Err(Error::TooFewSamples { got: 3, need: 4 })
        ));
    }

    #[test]
    fn finite_difference_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let q0 = random_rotation(&mut r);
        let a = OrientationSample::new(0.1, q0);
        let omega = random_unit_vector(&mut r).into_vector() * (2.0 * PI * 150.0);
        let b = OrientationSample::new(0.1 + 1.0 / 350.0, propagate_orientation(&q0, &omega, 1.0 / 350.0));
        assert!(rel(&finite_difference_spin(&a, &b).unwrap(), &omega) < 1e-9);
        let same = OrientationSample::new(0.2, q0);
        assert_eq!(finite_difference_spin(&a, &same).unwrap(), Vector3::zeros());
        assert!(finite_difference_spin(&same, &a).is_err());
    }

    #[test]
    fn theoretical_dampening_examples() {
        let k = theoretical_dampening(1.81e-5, 0.02, 0.0027).unwrap();
        assert!((k - 0.00505).abs() < 1e-5);
        let half = theoretical_dampening(1.81e-5, 0.02, 0.0054).unwrap();
        assert!((half - k / 2.0).abs() < 1e-15);
        assert_eq!(theoretical_dampening(0.0, 0.02, 0.0027).unwrap(), 0.0);
        assert!(theoretical_dampening(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn dampening_examples() {
        let series: Vec<(f64, f64)> = (0..=145)
            .map(|i| {
                let t = i as f64 / 145.0;
                (t, 300.0 * (-0.091 * t).exp())
            })
            .collect();
        let fit = dampening_fit(&series).unwrap();
        assert!((fit.coefficient - 0.091).abs() < 1e-6);
        assert!((fit.omega0 - 300.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 5.0)).collect();
        let f = dampening_fit(&flat).unwrap();
        assert_eq!(f.coefficient, 0.0);
        assert_eq!(f.r2, 0.0);

        // 0.5 s of flight at the theoretical rate barely changes the spin
        let drop = 1.0 - (-0.005f64 * 0.5).exp();
        assert!((drop - 0.0025).abs() < 1e-5);

        assert!(matches!(
            dampening_fit(&[(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]),
            Err(Error::NonPositiveNorm { .. })
        ));
    }

    #[test]
    fn linear_fit_and_its_validity() {
        let k = 0.091;
        let span = 0.02 / k;
        let series: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let t = span * i as f64 / 100.0;
                (t, 50.0 * (1.0 - k * t))
            })
            .collect();
        let lin = linear_dampening_fit(&series).unwrap();
        assert!((lin.coefficient - k).abs() < 1e-12);
        // the log fit is biased by about k * span / 2
        let log = dampening_fit(&series).unwrap();
        assert!((log.coefficient / k - 1.0).abs() < 0.011);
    }
}
