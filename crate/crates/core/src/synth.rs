//! Synthetic dot observations and orientation sequences with known ground
//! truth.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{random_rotation, random_unit_vector, Rotation, UnitVector3};
use crate::hashing::{DotPattern, ObservedDotSet};
use crate::pattern::{onto_visible_side, perturb_dot, trial_rng, visible_dots};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-dot angular displacement scale, radians.
    pub sigma: f64,
    pub dropout_prob: f64,
    /// Expected number of spurious dots per frame.
    pub spurious_rate: f64,
    pub seed: u64,
    /// A dot is visible when its rotated z exceeds this.
    pub visibility_threshold: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 3f64.to_radians(),
            dropout_prob: 0.05,
            spurious_rate: 0.3,
            seed: 0,
            visibility_threshold: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn clean() -> Self {
        Self {
            sigma: 0.0,
            dropout_prob: 0.0,
            spurious_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidParams(format!(
                "dropout_prob must be in [0, 1], got {}",
                self.dropout_prob
            )));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "spurious_rate must be >= 0, got {}",
                self.spurious_rate
            )));
        }
        if !(-1.0..1.0).contains(&self.visibility_threshold) {
            return Err(Error::InvalidParams("visibility threshold must be in [-1, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub t: f64,
    pub q_true: Rotation,
    /// Pattern indices of the dots in front of the camera, before dropout.
    pub visible_ids: Vec<usize>,
    pub observed: ObservedDotSet,
    /// Source of each observed dot: a pattern index, or `None` if spurious.
    pub sources: Vec<Option<usize>>,
}

/// Rotates the pattern, keeps the visible dots, perturbs and drops them,
/// adds spurious detections and shuffles the result.
pub fn generate_observation<R: Rng + ?Sized>(
    pattern: &DotPattern,
    q: &Rotation,
    t: f64,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<GroundTruthFrame> {
    noise.validate()?;
    let visible = visible_dots(pattern, q, noise.visibility_threshold);
    let mut tagged: Vec<(Option<usize>, UnitVector3)> = Vec::with_capacity(visible.len() + 2);
    for (id, d) in &visible {
        let moved = onto_visible_side(perturb_dot(d, noise.sigma, rng));
        if noise.dropout_prob > 0.0 && rng.random_bool(noise.dropout_prob) {
            continue;
        }
        tagged.push((Some(*id), moved));
    }
    if noise.spurious_rate > 0.0 {
        let count = Poisson::new(noise.spurious_rate)
            .expect("rate is positive")
            .sample(rng) as usize;
        for _ in 0..count {
            let v = random_unit_vector(rng).into_vector();
            let v = Vector3::new(v.x, v.y, v.z.abs());
            tagged.push((None, UnitVector3::from_vector(v).expect("unit norm")));
        }
    }
    tagged.shuffle(rng);
    let (sources, dots): (Vec<_>, Vec<_>) = tagged.into_iter().unzip();
    Ok(GroundTruthFrame {
        t,
        q_true: *q,
        visible_ids: visible.into_iter().map(|(i, _)| i).collect(),
        observed: ObservedDotSet::new(dots, t)?,
        sources,
    })
}

/// Composes `q` with a rotation about a uniformly random axis by an angle
/// drawn from `|N(0, sigma)|`.
pub fn perturb_rotation<R: Rng + ?Sized>(q: &Rotation, sigma: f64, rng: &mut R) -> Rotation {
    if sigma <= 0.0 {
        return *q;
    }
    let axis = random_unit_vector(rng);
    let angle = Normal::new(0.0, sigma).expect("sigma is positive").sample(rng).abs();
    Rotation::from_axis_angle(&axis, angle).compose(q)
}

/// Rotation angle after `t` seconds of spin starting at rate `w0` and
/// decaying as `exp(-k t)`.
pub fn spun_angle(w0: f64, dampening: Option<f64>, t: f64) -> f64 {
    match dampening {
        Some(k) if k != 0.0 => w0 / k * (1.0 - (-k * t).exp()),
        _ => w0 * t,
    }
}

/// Frames at `t = i / fps` of a ball spinning about a fixed axis.
/// Frame `i` draws its noise from its own RNG stream, so the output does
/// not depend on thread scheduling.
pub fn generate_sequence(
    pattern: &DotPattern,
    q0: &Rotation,
    omega: &Vector3<f64>,
    fps: f64,
    n_frames: usize,
    noise: &NoiseConfig,
    dampening: Option<f64>,
) -> Result<Vec<GroundTruthFrame>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidParams(format!("fps must be positive, got {fps}")));
    }
    if n_frames == 0 {
        return Err(Error::InvalidParams("need at least one frame".into()));
    }
    if let Some(k) = dampening {
        if !k.is_finite() {
            return Err(Error::InvalidParams(format!("dampening must be finite, got {k}")));
        }
    }
    noise.validate()?;
    let w0 = omega.norm();
    let axis = if w0 > 0.0 { omega / w0 } else { Vector3::zeros() };
    (0..n_frames)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / fps;
            let q = Rotation::from_rotation_vector(&(axis * spun_angle(w0, dampening, t))).compose(q0);
            let mut rng = trial_rng(noise.seed, i as u64);
            generate_observation(pattern, &q, t, noise, &mut rng)
        })
        .collect()
}

/// Frames at `t = i / fps`, each at an independent uniformly random
/// orientation.
pub fn generate_random_frames(
    pattern: &DotPattern,
    n_frames: usize,
    fps: f64,
    noise: &NoiseConfig,
) -> Result<Vec<GroundTruthFrame>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidParams(format!("fps must be positive, got {fps}")));
    }
    noise.validate()?;
    (0..n_frames)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(noise.seed, i as u64);
            let q = random_rotation(&mut rng);
            generate_observation(pattern, &q, i as f64 / fps, noise, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geodesic_angle;
    use crate::pattern::random_pattern;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pattern() -> DotPattern {
        random_pattern(20, 0.2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    #[test]
    fn clean_observation_is_the_rotated_visible_dots() {
        let p = pattern();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let q = random_rotation(&mut r);
            let f = generate_observation(&p, &q, 0.0, &NoiseConfig::clean(), &mut r).unwrap();
            assert_eq!(f.observed.len(), f.visible_ids.len());
            for (d, s) in f.observed.dots().iter().zip(&f.sources) {
                let want = q.rotate(&p.dots()[s.unwrap()]);
                assert_eq!(*d, want);
            }
        }
    }

    #[test]
    fn full_dropout_leaves_only_spurious_dots() {
        let p = pattern();
        let noise = NoiseConfig {
            dropout_prob: 1.0,
            spurious_rate: 2.0,
            ..NoiseConfig::clean()
        };
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut spurious = 0;
        for _ in 0..200 {
            let f = generate_observation(&p, &random_rotation(&mut r), 0.0, &noise, &mut r).unwrap();
            assert!(f.sources.iter().all(Option::is_none));
            assert!(f.observed.dots().iter().all(|d| d.z() >= 0.0));
            spurious += f.observed.len();
        }
        // Poisson mean 2: 400 expected, sd 20
        assert!((spurious as f64 - 400.0).abs() < 80.0);
    }

    #[test]
    fn displacement_is_half_normal() {
        let p = pattern();
        let sigma = 3f64.to_radians();
        let noise = NoiseConfig {
            sigma,
            visibility_threshold: 0.2,
            ..NoiseConfig::clean()
        };
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let (mut sum, mut n) = (0.0, 0usize);
        for _ in 0..10_000 {
            let q = random_rotation(&mut r);
            let f = generate_observation(&p, &q, 0.0, &noise, &mut r).unwrap();
            for (d, s) in f.observed.dots().iter().zip(&f.sources) {
                sum += d.angle_to(&q.rotate(&p.dots()[s.unwrap()]));
                n += 1;
            }
        }
        let want = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!((sum / n as f64 / want - 1.0).abs() < 0.01);
    }

    #[test]
    fn dropout_fraction_matches() {
        let p = pattern();
        let noise = NoiseConfig {
            dropout_prob: 0.05,
            ..NoiseConfig::clean()
        };
        let frames = generate_sequence(&p, &Rotation::identity(), &Vector3::new(3.0, 1.0, 2.0), 350.0, 10_000, &noise, None)
            .unwrap();
        let visible: usize = frames.iter().map(|f| f.visible_ids.len()).sum();
        let kept: usize = frames.iter().map(|f| f.observed.len()).sum();
        let frac = 1.0 - kept as f64 / visible as f64;
        let se = (0.05 * 0.95 / visible as f64).sqrt();
        assert!((frac - 0.05).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn sequences_are_deterministic_and_start_at_q0() {
        let p = pattern();
        let q0 = random_rotation(&mut ChaCha8Rng::seed_from_u64(4));
        let omega = Vector3::new(0.0, 2.0 * std::f64::consts::PI * 50.0, 0.0);
        let noise = NoiseConfig::default();
        let a = generate_sequence(&p, &q0, &omega, 350.0, 20, &noise, Some(0.091)).unwrap();
        let b = generate_sequence(&p, &q0, &omega, 350.0, 20, &noise, Some(0.091)).unwrap();
        assert_eq!(a, b);
        let one = generate_sequence(&p, &q0, &omega, 350.0, 1, &noise, None).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].t, 0.0);
        assert_eq!(one[0].q_true, q0);
        assert!(generate_sequence(&p, &q0, &omega, 0.0, 1, &noise, None).is_err());
        assert!(generate_sequence(&p, &q0, &omega, 350.0, 0, &noise, None).is_err());
    }

    #[test]
    fn rotation_noise_is_half_normal() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let q = random_rotation(&mut r);
        let sigma = 2f64.to_radians();
        let n = 20_000;
        let mean = (0..n)
            .map(|_| geodesic_angle(&perturb_rotation(&q, sigma, &mut r), &q))
            .sum::<f64>()
            / n as f64;
        assert!((mean / (sigma * (2.0 / std::f64::consts::PI).sqrt()) - 1.0).abs() < 0.02);
        assert_eq!(perturb_rotation(&q, 0.0, &mut r), q);
    }

    #[test]
    fn dampened_angle_matches_integrated_rate() {
        let (w0, k) = (300.0, 0.091);
        let t = 2.0;
        let steps = 200_000;
        let h = t / steps as f64;
        let integral: f64 = (0..steps).map(|i| w0 * (-k * (i as f64 + 0.5) * h).exp() * h).sum();
        assert!((spun_angle(w0, Some(k), t) - integral).abs() < 1e-6);
        assert_eq!(spun_angle(w0, Some(0.0), t), w0 * t);
    }

    #[test]
    fn clean_sequence_frames_follow_the_spin() {
        let p = pattern();
        let omega = Vector3::new(100.0, 0.0, 0.0);
        let frames = generate_sequence(&p, &Rotation::identity(), &omega, 350.0, 5, &NoiseConfig::clean(), None).unwrap();
        for f in &frames {
            let want = Rotation::from_rotation_vector(&(omega * f.t));
            assert!(geodesic_angle(&f.q_true, &want) < 1e-12);
        }
    }
}
