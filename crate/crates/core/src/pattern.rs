//! Dot pattern generation, Monte Carlo robustness evaluation and
//! hash-space spreading optimization.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_angle, random_rotation, random_unit_vector, Rotation, UnitVector3};
use crate::hashing::{
    recognize, DotPattern, HashTable, ObservedDotSet, RecognitionConfig,
};

/// Draws per point before [`random_pattern`] gives up.
pub const MAX_RESAMPLES: usize = 10_000;

/// Polar/azimuth coordinates of a dot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoords {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoords {
    pub fn from_unit(v: &UnitVector3) -> Self {
        let theta = v.z().clamp(-1.0, 1.0).acos();
        let phi = v.y().atan2(v.x()).rem_euclid(2.0 * PI);
        Self { theta, phi }
    }

    pub fn to_unit(self) -> UnitVector3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        UnitVector3::from_vector(Vector3::new(st * cp, st * sp, ct))
            .expect("spherical coordinates give a unit vector")
    }
}

/// `n` uniform points on the sphere, each resampled until it is at least
/// `min_separation` radians from the ones already placed.
pub fn random_pattern<R: Rng + ?Sized>(
    n: usize,
    min_separation: f64,
    rng: &mut R,
) -> Result<DotPattern> {
    if n < 3 {
        return Err(Error::TooFewDots { got: n, need: 3 });
    }
    if !(min_separation >= 0.0) || min_separation > PI {
        return Err(Error::InvalidParams(format!(
            "min_separation must be in [0, pi], got {min_separation}"
        )));
    }
    let mut dots: Vec<UnitVector3> = Vec::with_capacity(n);
    while dots.len() < n {
        let mut placed = false;
        for _ in 0..MAX_RESAMPLES {
            let d = random_unit_vector(rng);
            let sep = min_separation.max(crate::hashing::MIN_DOT_SEPARATION);
            if dots.iter().all(|e| e.angle_to(&d) >= sep) {
                dots.push(d);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasibleSeparation {
                n,
                min_separation,
                attempts: MAX_RESAMPLES,
            });
        }
    }
    DotPattern::new(dots)
}

/// Rotates `d` about a uniformly random axis orthogonal to it by an angle
/// drawn from `|N(0, sigma)|`.
pub fn perturb_dot<R: Rng + ?Sized>(d: &UnitVector3, sigma: f64, rng: &mut R) -> UnitVector3 {
    if sigma <= 0.0 {
        return *d;
    }
    let (a, b) = d.orthonormal_completion();
    let psi = rng.random_range(0.0..2.0 * PI);
    let axis = a.as_vector() * psi.cos() + b.as_vector() * psi.sin();
    let angle = Normal::new(0.0, sigma)
        .expect("sigma is positive")
        .sample(rng)
        .abs();
    let out = d.as_vector() * angle.cos() + axis.cross(d.as_vector()) * angle.sin();
    UnitVector3::from_vector(out).expect("rotation keeps unit norm")
}

/// Rotated dots with `z > threshold`, paired with their pattern index.
pub fn visible_dots(
    pattern: &DotPattern,
    rotation: &Rotation,
    threshold: f64,
) -> Vec<(usize, UnitVector3)> {
    pattern
        .dots()
        .iter()
        .enumerate()
        .map(|(i, d)| (i, rotation.rotate(d)))
        .filter(|(_, v)| v.z() > threshold)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub recognition: RecognitionConfig,
    /// Orientation errors below this (radians) count as a success.
    pub success_gate: f64,
    /// A dot is visible when its rotated z exceeds this.
    pub visibility_threshold: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            recognition: RecognitionConfig::default(),
            success_gate: 20f64.to_radians(),
            visibility_threshold: 0.0,
            seed: 0,
        }
    }
}

/// Aggregates of a Monte Carlo run. Trials with fewer than three visible
/// dots are reported in `insufficient_dots` and left out of `trials`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEvalReport {
    pub success_rate: f64,
    /// Scored trials (requested minus insufficient).
    pub trials: usize,
    pub requested_trials: usize,
    pub insufficient_dots: usize,
    /// Degrees.
    pub noise_sigma: f64,
    /// Mean geodesic error of the successful trials, radians.
    pub mean_orientation_error: f64,
    pub failure_count_by_cause: BTreeMap<String, usize>,
}

/// Outcome of one Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialOutcome {
    Success { error: f64 },
    WrongOrientation { error: f64 },
    NotRecognized,
    InsufficientDots,
}

/// Runs trial number `trial` of a Monte Carlo evaluation. The RNG stream is
/// derived from `cfg.seed` and the trial index only.
pub fn run_trial(table: &HashTable, sigma: f64, cfg: &EvalConfig, trial: u64) -> TrialOutcome {
    let mut rng = trial_rng(cfg.seed, trial);
    let q = random_rotation(&mut rng);
    let visible = visible_dots(table.pattern(), &q, cfg.visibility_threshold);
    if visible.len() < 3 {
        return TrialOutcome::InsufficientDots;
    }
    let dots: Vec<UnitVector3> = visible
        .iter()
        .map(|(_, d)| onto_visible_side(perturb_dot(d, sigma, &mut rng)))
        .collect();
    let observed = ObservedDotSet::new(dots, 0.0).expect("dots are on the visible side");
    match recognize(table, &observed, &cfg.recognition) {
        Ok(res) => {
            let error = geodesic_angle(&res.orientation, &q);
            if error < cfg.success_gate {
                TrialOutcome::Success { error }
            } else {
                TrialOutcome::WrongOrientation { error }
            }
        }
        Err(_) => TrialOutcome::NotRecognized,
    }
}

/// RNG of one Monte Carlo trial: stream `trial` of the generator seeded
/// with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Noise can push a limb dot slightly behind the ball; a detector would see
/// it on the limb.
pub(crate) fn onto_visible_side(d: UnitVector3) -> UnitVector3 {
    if d.z() >= 0.0 {
        return d;
    }
    let v = d.as_vector();
    UnitVector3::from_vector(Vector3::new(v.x, v.y, 0.0)).unwrap_or(d)
}

/// Random rotation, visibility cull, per-dot noise and recognition,
/// repeated `trials` times.
pub fn evaluate_pattern(
    table: &HashTable,
    trials: usize,
    sigma: f64,
    cfg: &EvalConfig,
) -> Result<PatternEvalReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParams(format!("sigma must be >= 0, got {sigma}")));
    }
    cfg.recognition.validate()?;
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(table, sigma, cfg, t))
        .collect();
    Ok(summarize(&outcomes, sigma))
}

pub(crate) fn summarize(outcomes: &[TrialOutcome], sigma: f64) -> PatternEvalReport {
    let mut causes: BTreeMap<String, usize> = BTreeMap::new();
    let mut successes = 0usize;
    let mut error_sum = 0.0;
    let mut insufficient = 0usize;
    for o in outcomes {
        match *o {
            TrialOutcome::Success { error } => {
                successes += 1;
                error_sum += error;
            }
            TrialOutcome::WrongOrientation { .. } => {
                *causes.entry("wrong_orientation".into()).or_default() += 1
            }
            TrialOutcome::NotRecognized => *causes.entry("no_basis".into()).or_default() += 1,
            TrialOutcome::InsufficientDots => insufficient += 1,
        }
    }
    let scored = outcomes.len() - insufficient;
    PatternEvalReport {
        success_rate: if scored == 0 { 0.0 } else { successes as f64 / scored as f64 },
        trials: scored,
        requested_trials: outcomes.len(),
        insufficient_dots: insufficient,
        noise_sigma: sigma.to_degrees(),
        mean_orientation_error: if successes == 0 { f64::NAN } else { error_sum / successes as f64 },
        failure_count_by_cause: causes,
    }
}

/// Hash values of every entry, with the dot and basis matrix each was
/// computed from.
struct HashCloud {
    points: Vec<Vector3<f64>>,
    dots: Vec<Vector3<f64>>,
    bases: Vec<Matrix3<f64>>,
    basis_of: Vec<usize>,
}

impl HashCloud {
    fn new(dots: &[UnitVector3]) -> Result<Self> {
        let pattern = DotPattern::new(dots.to_vec())?;
        let (entries, _) = crate::hashing::hash_entries(&pattern)?;
        let mut bases: Vec<Matrix3<f64>> = Vec::new();
        let mut basis_of = Vec::with_capacity(entries.len());
        let mut last = None;
        for e in &entries {
            if last != Some(e.basis_id) {
                let (i, j) = e.basis_id;
                let (d, d2) = (dots[i].as_vector(), dots[j].as_vector());
                bases.push(Matrix3::from_columns(&[*d, *d2, d.cross(d2)]));
                last = Some(e.basis_id);
            }
            basis_of.push(bases.len() - 1);
        }
        Ok(Self {
            points: entries.iter().map(|e| e.hash_vector()).collect(),
            dots: entries.iter().map(|e| *dots[e.dot_id].as_vector()).collect(),
            bases,
            basis_of,
        })
    }

    /// The [`OBJECTIVE_NEIGHBORS`] nearest hash-space neighbors of every
    /// entry.
    fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let coords: Vec<[f64; 3]> = self.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&coords);
        let want = NonZero::new(OBJECTIVE_NEIGHBORS + 1).expect("nonzero");
        coords
            .iter()
            .enumerate()
            .map(|(i, c)| {
                tree.nearest_n::<SquaredEuclidean>(c, want)
                    .iter()
                    .map(|n| n.item as usize)
                    .filter(|&j| j != i)
                    .take(OBJECTIVE_NEIGHBORS)
                    .collect()
            })
            .collect()
    }

    /// Mean over entries of `f` applied to the ascending distances from the
    /// entry to its listed neighbors, each measured on the sphere through
    /// the basis of the entry.
    fn mean_with(&self, lists: &[Vec<usize>], f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut buf = Vec::with_capacity(OBJECTIVE_NEIGHBORS);
        let mut total = 0.0;
        for (i, list) in lists.iter().enumerate() {
            let b = &self.bases[self.basis_of[i]];
            buf.clear();
            buf.extend(list.iter().map(|&j| (self.dots[i] - b * self.points[j]).norm()));
            buf.sort_by(f64::total_cmp);
            total += f(&buf);
        }
        total / lists.len() as f64
    }

    fn mean_over_entries(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.mean_with(&self.neighbor_lists(), f)
    }
}

fn soft_min(d: &[f64], temperature: f64) -> f64 {
    let Some(&d0) = d.first() else {
        return 0.0;
    };
    let s: f64 = d.iter().map(|x| (-temperature * (x - d0)).exp()).sum();
    d0 - s.ln() / temperature
}

/// Hash-space neighbors examined per entry by the spreading objectives, the
/// same neighborhood recognition votes over.
pub const OBJECTIVE_NEIGHBORS: usize = 8;

/// Mean over hash entries of the distance to the nearest other entry.
///
/// Neighbors are the [`OBJECTIVE_NEIGHBORS`] closest entries in hash space;
/// the distance to each is `|B h - B h'|`, with `B` the basis of the entry,
/// i.e. how far apart the two dots would appear on the ball if the observed
/// basis were `B`. Raw hash-space distances grow without bound as a basis
/// pair approaches parallel, which would reward collapsing dots together.
pub fn hash_space_nn_objective(pattern: &DotPattern) -> Result<f64> {
    let cloud = HashCloud::new(pattern.dots())?;
    Ok(cloud.mean_over_entries(|d| d.first().copied().unwrap_or(0.0)))
}

/// Smooth stand-in for [`hash_space_nn_objective`]: the nearest distance
/// of each entry is replaced by `-ln(sum exp(-T d)) / T` over its
/// neighbors.
pub fn soft_nn_objective(pattern: &DotPattern, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParams(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    soft_objective(pattern.dots(), temperature)
}

fn soft_objective(dots: &[UnitVector3], temperature: f64) -> Result<f64> {
    let cloud = HashCloud::new(dots)?;
    Ok(cloud.mean_over_entries(|d| soft_min(d, temperature)))
}

/// Step-size control of [`optimize_pattern`]. Steps are in radians along
/// the normalized gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSchedule {
    pub initial_step: f64,
    pub min_step: f64,
    pub growth: f64,
    pub shrink: f64,
    /// Soft-min temperature of the ascended objective.
    pub temperature: f64,
    /// Angular jitter (radians) applied to the best pattern when an ascent
    /// stalls, before ascending again.
    pub jitter: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            min_step: 1e-4,
            growth: 1.5,
            shrink: 0.5,
            temperature: 50.0,
            jitter: 0.15,
        }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_step > 0.0
            && self.min_step > 0.0
            && self.growth >= 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.temperature > 0.0
            && self.jitter >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid step schedule {self:?}")))
        }
    }
}

/// Central-difference step for the gradient, radians.
pub const GRADIENT_STEP: f64 = 1e-5;

/// Gradient ascent of the soft hash-space spreading objective over the
/// spherical coordinates of the dots, starting from a uniform random
/// pattern. When the line search stalls, the best pattern so far is
/// jittered and re-centered by a random rotation and the ascent restarts.
/// Returns the best pattern seen under the hard objective.
pub fn optimize_pattern<R: Rng + ?Sized>(
    n: usize,
    iterations: usize,
    schedule: &StepSchedule,
    rng: &mut R,
) -> Result<DotPattern> {
    if n < 4 {
        return Err(Error::TooFewDots { got: n, need: 4 });
    }
    schedule.validate()?;
    let start = random_pattern(n, 0.0, rng)?;
    optimize_from(start, iterations, schedule, rng)
}

/// [`optimize_pattern`] from a given starting pattern.
pub fn optimize_from<R: Rng + ?Sized>(
    start: DotPattern,
    iterations: usize,
    schedule: &StepSchedule,
    rng: &mut R,
) -> Result<DotPattern> {
    schedule.validate()?;
    let mut best_hard = hash_space_nn_objective(&start)?;
    let mut best = start;
    let mut done = 0;
    let mut first = true;
    while done < iterations {
        // fresh poles for the parameterization; after the first ascent,
        // also shake the best pattern out of its basin
        let spin = random_rotation(rng);
        let dots: Vec<UnitVector3> = best
            .dots()
            .iter()
            .map(|d| {
                let d = spin.rotate(d);
                if first {
                    d
                } else {
                    perturb_dot(&d, schedule.jitter, rng)
                }
            })
            .collect();
        first = false;
        let mut params: Vec<f64> = dots
            .iter()
            .flat_map(|d| {
                let s = SphericalCoords::from_unit(d);
                [s.theta, s.phi]
            })
            .collect();
        let mut value = soft_value(&params, schedule.temperature);
        let mut step = schedule.initial_step;
        while done < iterations {
            done += 1;
            let grad = gradient(&params, schedule.temperature);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                break;
            }
            while step >= schedule.min_step {
                let trial: Vec<f64> = params
                    .iter()
                    .zip(&grad)
                    .map(|(p, g)| p + step * g / norm)
                    .collect();
                let v = soft_value(&trial, schedule.temperature);
                if v > value {
                    params = trial;
                    value = v;
                    step *= schedule.growth;
                    break;
                }
                step *= schedule.shrink;
            }
            if step < schedule.min_step {
                break;
            }
            if let Ok(p) = DotPattern::new(to_dots(&params)) {
                if let Ok(h) = hash_space_nn_objective(&p) {
                    if h > best_hard {
                        best_hard = h;
                        best = p;
                    }
                }
            }
        }
    }
    Ok(best)
}

fn to_dots(params: &[f64]) -> Vec<UnitVector3> {
    params
        .chunks_exact(2)
        .map(|c| SphericalCoords { theta: c[0], phi: c[1] }.to_unit())
        .collect()
}

fn soft_value(params: &[f64], temperature: f64) -> f64 {
    soft_objective(&to_dots(params), temperature).unwrap_or(f64::NEG_INFINITY)
}

/// Central differences of the soft objective with every entry's neighbor
/// list frozen at `params`, so that no probe straddles a neighbor switch.
fn gradient(params: &[f64], temperature: f64) -> Vec<f64> {
    let Ok(base) = HashCloud::new(&to_dots(params)) else {
        return vec![0.0; params.len()];
    };
    let lists = base.neighbor_lists();
    let frozen = |p: &[f64]| match HashCloud::new(&to_dots(p)) {
        Ok(c) if c.points.len() == lists.len() => {
            c.mean_with(&lists, |d| soft_min(d, temperature))
        }
        _ => f64::NAN,
    };
    (0..params.len())
        .into_par_iter()
        .map(|i| {
            let mut plus = params.to_vec();
            let mut minus = params.to_vec();
            plus[i] += GRADIENT_STEP;
            minus[i] -= GRADIENT_STEP;
            let g = (frozen(&plus) - frozen(&minus)) / (2.0 * GRADIENT_STEP);
            if g.is_finite() {
                g
            } else {
                0.0
            }
        })
        .collect()
}
