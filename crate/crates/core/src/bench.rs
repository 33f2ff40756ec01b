//! Monte Carlo suites behind the `bench` command.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{random_rotation, random_unit_vector};
use crate::hashing::HashTable;
use crate::pattern::{evaluate_pattern, run_trial, trial_rng, EvalConfig, TrialOutcome};
use crate::spin::{propagate_orientation, ransac_spin, OrientationSample, RansacConfig};
use crate::synth::perturb_rotation;

/// One point of the success-rate versus dot-noise curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub sigma_deg: f64,
    pub trials: usize,
    pub requested_trials: usize,
    pub insufficient_dots: usize,
    pub success_rate: f64,
    pub mean_error_deg: f64,
}

/// Success rate at each dot noise level. Every level reuses the same trial
/// seeds, so the levels differ only in the noise.
pub fn sensitivity(
    table: &HashTable,
    sigmas_deg: &[f64],
    trials: usize,
    cfg: &EvalConfig,
) -> Result<Vec<SensitivityRow>> {
    sigmas_deg
        .iter()
        .map(|&s| {
            let rep = evaluate_pattern(table, trials, s.to_radians(), cfg)?;
            Ok(SensitivityRow {
                sigma_deg: s,
                trials: rep.trials,
                requested_trials: rep.requested_trials,
                insufficient_dots: rep.insufficient_dots,
                success_rate: rep.success_rate,
                mean_error_deg: rep.mean_orientation_error.to_degrees(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub sigma_deg: f64,
    pub bin_lo: f64,
    /// Infinite for the overflow bin.
    pub bin_hi: f64,
    pub count: usize,
}

/// Counts of `values` in bins of `width` starting at 0, plus one overflow
/// bin from `max` up. Non-finite values land in the overflow bin.
pub fn histogram(sigma_deg: f64, values: &[f64], width: f64, max: f64) -> Vec<HistogramRow> {
    let bins = (max / width).round() as usize;
    let mut counts = vec![0usize; bins + 1];
    for &v in values {
        let i = if v.is_finite() && v >= 0.0 {
            ((v / width).floor() as usize).min(bins)
        } else {
            bins
        };
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramRow {
            sigma_deg,
            bin_lo: i as f64 * width,
            bin_hi: if i == bins { f64::INFINITY } else { (i + 1) as f64 * width },
            count,
        })
        .collect()
}

/// Orientation error in degrees of every scored trial; unrecognized
/// frames are infinite.
pub fn orientation_errors(table: &HashTable, sigma: f64, trials: usize, cfg: &EvalConfig) -> Vec<f64> {
    (0..trials as u64)
        .into_par_iter()
        .filter_map(|t| match run_trial(table, sigma, cfg, t) {
            TrialOutcome::Success { error } | TrialOutcome::WrongOrientation { error } => {
                Some(error.to_degrees())
            }
            TrialOutcome::NotRecognized => Some(f64::INFINITY),
            TrialOutcome::InsufficientDots => None,
        })
        .collect()
}

/// Synthetic spin trials: a random start orientation and spin axis, a
/// fixed spin rate, and noisy orientations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpinBenchConfig {
    pub rps: f64,
    pub fps: f64,
    pub frames: usize,
    /// Scale of the half-normal orientation noise, radians.
    pub orientation_noise: f64,
    pub ransac: RansacConfig,
    pub seed: u64,
}

impl Default for SpinBenchConfig {
    fn default() -> Self {
        Self {
            rps: 50.0,
            fps: 350.0,
            frames: 10,
            orientation_noise: 0.0,
            ransac: RansacConfig::default(),
            seed: 0,
        }
    }
}

/// Relative error `|omega_hat - omega| / |omega|` of each trial; trials
/// where the fit fails are infinite.
pub fn spin_relative_errors(cfg: &SpinBenchConfig, trials: usize) -> Result<Vec<f64>> {
    if !(cfg.fps > 0.0) || !(cfg.rps > 0.0) || cfg.frames < 3 {
        return Err(Error::InvalidParams(
            "spin bench needs fps > 0, rps > 0 and at least 3 frames".into(),
        ));
    }
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let q0 = random_rotation(&mut rng);
            let omega: Vector3<f64> = random_unit_vector(&mut rng).into_vector() * (2.0 * PI * cfg.rps);
            let samples: Vec<OrientationSample> = (0..cfg.frames)
                .map(|i| {
                    let t = i as f64 / cfg.fps;
                    let q = propagate_orientation(&q0, &omega, t);
                    OrientationSample::new(t, perturb_rotation(&q, cfg.orientation_noise, &mut rng))
                })
                .collect();
            let ransac = RansacConfig {
                seed: cfg.ransac.seed ^ trial,
                ..cfg.ransac.clone()
            };
            match ransac_spin(&samples, &ransac) {
                Ok(est) => (est.omega_vector() - omega).norm() / omega.norm(),
                Err(_) => f64::INFINITY,
            }
        })
        .collect())
}

/// Linear-interpolated quantile. Infinite values sort last and absorb any
/// quantile that would interpolate towards them.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi || !v[hi].is_finite() {
        return v[hi];
    }
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
