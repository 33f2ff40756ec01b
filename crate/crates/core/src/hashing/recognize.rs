use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{nearest_hash_values, HashTable};
use super::DotPattern;
use crate::error::{Error, Result};
use crate::geometry::{kabsch_vectors, Rotation, UnitVector3};
use crate::kent::{hash_space_log_likelihood, HashBasis, KentParams};

/// Dots detected on one frame, lifted onto the viewer-side hemisphere.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDotSet {
    dots: Vec<UnitVector3>,
    timestamp: f64,
}

impl ObservedDotSet {
    pub fn new(dots: Vec<UnitVector3>, timestamp: f64) -> Result<Self> {
        if let Some(i) = dots.iter().position(|d| d.z() < -1e-12) {
            return Err(Error::InvalidParams(format!(
                "observed dot {i} is on the far hemisphere (z = {})",
                dots[i].z()
            )));
        }
        Ok(Self { dots, timestamp })
    }

    pub fn dots(&self) -> &[UnitVector3] {
        &self.dots
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn len(&self) -> usize {
        self.dots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dots.is_empty()
    }
}

/// Lifts an image-plane point (ball centered at the origin, radius `r`) onto
/// the visible hemisphere: `z = sqrt(1 - (x/r)^2 - (y/r)^2)`.
pub fn lift_to_sphere(x: f64, y: f64, r: f64) -> Result<UnitVector3> {
    if !(r > 0.0) {
        return Err(Error::InvalidParams(format!("ball radius must be positive, got {r}")));
    }
    let (u, v) = (x / r, y / r);
    let rho2 = u * u + v * v;
    if !rho2.is_finite() || rho2 > 1.0 + 1e-12 {
        return Err(Error::OutsideDisk { x, y, r });
    }
    let z = (1.0 - rho2).max(0.0).sqrt();
    UnitVector3::new(u, v, z)
}

/// Knobs of the recognition step. The dot model (kappa, beta, alpha) lives
/// in the [`HashTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognitionConfig {
    /// Hash entries each transformed dot votes for.
    pub k_nearest: usize,
    /// Candidates within this likelihood ratio of the best are shortlisted.
    pub likelihood_ratio: f64,
    /// Voting dots a basis needs (capped by the dots available to vote).
    pub min_voters: usize,
    /// Largest angle (radians) at which an observed dot is matched to a
    /// rotated reference dot.
    pub match_gate: f64,
    /// Cap on shortlisted bases refined per observed basis pair.
    pub max_candidates: usize,
    /// Observed basis pairs that may produce a valid candidate before the
    /// best one so far is returned. A candidate matching every observed
    /// dot ends the search at once.
    pub pair_budget: usize,
    /// Shuffle observed basis pairs with this seed instead of trying the
    /// best-conditioned pairs first.
    pub randomize_seed: Option<u64>,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            k_nearest: 8,
            likelihood_ratio: 100.0,
            min_voters: 2,
            match_gate: 10f64.to_radians(),
            max_candidates: 32,
            pair_budget: 1,
            randomize_seed: None,
        }
    }
}

impl RecognitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_nearest == 0 {
            return Err(Error::InvalidParams("k_nearest must be at least 1".into()));
        }
        if !(self.likelihood_ratio >= 1.0) {
            return Err(Error::InvalidParams("likelihood_ratio must be >= 1".into()));
        }
        if !(self.match_gate > 0.0) {
            return Err(Error::InvalidParams("match_gate must be positive".into()));
        }
        if self.pair_budget == 0 {
            return Err(Error::InvalidParams("pair_budget must be at least 1".into()));
        }
        if self.max_candidates == 0 {
            return Err(Error::InvalidParams("max_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionResult {
    /// Rotation taking reference dots onto observed dots.
    pub orientation: Rotation,
    /// `(observed index, reference dot index)`, sorted by observed index.
    pub correspondences: Vec<(usize, usize)>,
    /// Root-mean-square angle over the correspondences, radians.
    pub rmse: f64,
    /// Summed log-likelihood of the winning basis.
    pub score: f64,
    /// Observed basis pairs examined.
    pub basis_tried: usize,
}

/// RMS angle between rotated reference dots and their observed partners.
pub fn reprojection_rmse(
    rotation: &Rotation,
    pattern: &DotPattern,
    observed: &ObservedDotSet,
    correspondences: &[(usize, usize)],
) -> Result<f64> {
    if correspondences.is_empty() {
        return Err(Error::EmptyCorrespondences);
    }
    let mut sum = 0.0;
    for &(o, r) in correspondences {
        let (Some(obs), Some(refd)) = (observed.dots().get(o), pattern.dots().get(r)) else {
            return Err(Error::InvalidParams(format!(
                "correspondence ({o}, {r}) is out of range"
            )));
        };
        let a = rotation.rotate(refd).angle_to(obs);
        sum += a * a;
    }
    Ok((sum / correspondences.len() as f64).sqrt())
}

#[derive(Debug, Default)]
struct Candidate {
    // (observed index, reference dot, log-likelihood), one per voting dot
    votes: Vec<(usize, usize, f64)>,
}

impl Candidate {
    fn score(&self) -> f64 {
        self.votes.iter().map(|v| v.2).sum()
    }

    fn add(&mut self, obs: usize, dot: usize, ll: f64) {
        match self.votes.iter_mut().find(|v| v.0 == obs) {
            Some(v) if ll > v.2 => *v = (obs, dot, ll),
            Some(_) => {}
            None => self.votes.push((obs, dot, ll)),
        }
    }
}

struct Refined {
    rotation: Rotation,
    matches: Vec<(usize, usize)>,
    cost: f64,
}

/// Bayesian geometric hashing.
///
/// For each observed basis pair (best conditioned first), the remaining dots
/// are mapped into hash space and vote for nearby table entries with their
/// hash-space log-likelihood. Bases whose summed score is within
/// `likelihood_ratio` of the best are refined with Kabsch and gated
/// nearest-dot matching. The candidate with the smallest reprojection error,
/// counting unmatched dots at the match gate, wins. The search moves on to
/// further pairs until some candidate explains every observed dot or
/// `pair_budget` pairs have produced candidates.
pub fn recognize(
    table: &HashTable,
    observed: &ObservedDotSet,
    cfg: &RecognitionConfig,
) -> Result<RecognitionResult> {
    cfg.validate()?;
    let obs = observed.dots();
    let n = obs.len();
    if n < 3 {
        return Err(Error::TooFewDots { got: n, need: 3 });
    }
    let model = table.model();
    let proj = model.projection()?;
    let shape = model.kent(UnitVector3::z_axis())?;
    let kents: Vec<KentParams> = obs.iter().map(|o| shape.recentered(*o)).collect();
    let min_voters = cfg.min_voters.clamp(1, n - 2);
    let ln_ratio = cfg.likelihood_ratio.ln();
    let mut winner: Option<(Refined, f64)> = None;
    let mut productive = 0;
    let mut examined = 0;

    for (tried, (a, b)) in basis_pairs(obs, cfg.randomize_seed).into_iter().enumerate() {
        examined = tried + 1;
        let Ok(basis) = HashBasis::from_dots(obs[a].as_vector(), obs[b].as_vector()) else {
            continue;
        };
        let mut candidates: BTreeMap<(usize, usize), Candidate> = BTreeMap::new();
        for k in (0..n).filter(|&k| k != a && k != b) {
            let phi = basis.to_hash(obs[k].as_vector());
            for entry in nearest_hash_values(table, &phi, cfg.k_nearest) {
                let ll = hash_space_log_likelihood(&kents[k], &proj, &basis, &entry.hash_vector())?;
                candidates
                    .entry(entry.basis_id)
                    .or_default()
                    .add(k, entry.dot_id, ll);
            }
        }
        let mut shortlist: Vec<((usize, usize), f64, &Candidate)> = candidates
            .iter()
            .filter(|(_, c)| c.votes.len() >= min_voters)
            .map(|(id, c)| (*id, c.score(), c))
            .collect();
        let Some(best) = shortlist.iter().map(|c| c.1).reduce(f64::max) else {
            continue;
        };
        shortlist.retain(|c| c.1 >= best - ln_ratio);
        shortlist.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        shortlist.truncate(cfg.max_candidates);

        let mut found = false;
        for (basis_id, score, cand) in shortlist {
            let Some(refined) = refine(table.pattern(), obs, (a, b), basis_id, cand, cfg) else {
                continue;
            };
            found = true;
            let better = match &winner {
                None => true,
                Some((w, _)) => {
                    refined.cost < w.cost
                        || (refined.cost == w.cost && refined.matches.len() > w.matches.len())
                }
            };
            if better {
                winner = Some((refined, score));
            }
        }
        if found {
            productive += 1;
        }
        let complete = winner.as_ref().is_some_and(|w| w.0.matches.len() == n);
        if complete || productive >= cfg.pair_budget {
            break;
        }
    }
    if let Some((w, score)) = winner {
        let rmse = reprojection_rmse(&w.rotation, table.pattern(), observed, &w.matches)?;
        return Ok(RecognitionResult {
            orientation: w.rotation,
            correspondences: w.matches,
            rmse,
            score,
            basis_tried: examined,
        });
    }
    Err(Error::NoBasisAboveThreshold)
}

/// Unordered observed pairs, largest `|d x d'|` (best conditioned) first.
fn basis_pairs(obs: &[UnitVector3], seed: Option<u64>) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..obs.len() {
        for j in (i + 1)..obs.len() {
            let s = obs[i].as_vector().cross(obs[j].as_vector()).norm();
            pairs.push((i, j, s));
        }
    }
    match seed {
        Some(seed) => {
            pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        None => pairs.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1)))),
    }
    pairs.into_iter().map(|(i, j, _)| (i, j)).collect()
}

/// Kabsch on the hypothesized correspondences, then two rounds of gated
/// nearest-dot matching and refitting. Returns `None` when fewer than three
/// dots end up matched.
fn refine(
    pattern: &DotPattern,
    obs: &[UnitVector3],
    pair: (usize, usize),
    basis_id: (usize, usize),
    cand: &Candidate,
    cfg: &RecognitionConfig,
) -> Option<Refined> {
    let refs = pattern.dots();
    let mut corr = vec![(pair.0, basis_id.0), (pair.1, basis_id.1)];
    let mut votes = cand.votes.clone();
    votes.sort_by(|x, y| y.2.total_cmp(&x.2));
    for (o, d, _) in votes {
        if corr.iter().all(|&(_, r)| r != d) {
            corr.push((o, d));
        }
    }
    let mut rotation = fit(refs, obs, &corr)?;
    for _ in 0..2 {
        let matches = gated_matches(&rotation, refs, obs, cfg.match_gate);
        if matches.len() < 2 {
            return None;
        }
        rotation = fit(refs, obs, &matches).unwrap_or(rotation);
    }
    let matches = gated_matches(&rotation, refs, obs, cfg.match_gate);
    if matches.len() < 3.min(obs.len()) {
        return None;
    }
    let gate2 = cfg.match_gate * cfg.match_gate;
    let matched: f64 = matches
        .iter()
        .map(|&(o, r)| rotation.rotate(&refs[r]).angle_to(&obs[o]).powi(2))
        .sum();
    let unmatched = (obs.len() - matches.len()) as f64 * gate2;
    let cost = ((matched + unmatched) / obs.len() as f64).sqrt();
    Some(Refined {
        rotation,
        matches,
        cost,
    })
}

fn fit(refs: &[UnitVector3], obs: &[UnitVector3], corr: &[(usize, usize)]) -> Option<Rotation> {
    kabsch_vectors(
        corr.iter().map(|&(_, r)| *refs[r].as_vector()),
        corr.iter().map(|&(o, _)| *obs[o].as_vector()),
    )
    .ok()
}

/// One-to-one matching of observed to rotated reference dots, greedily by
/// increasing angle, ignoring pairs farther apart than `gate`.
fn gated_matches(
    rotation: &Rotation,
    refs: &[UnitVector3],
    obs: &[UnitVector3],
    gate: f64,
) -> Vec<(usize, usize)> {
    let rotated: Vec<UnitVector3> = refs.iter().map(|r| rotation.rotate(r)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (o, ov) in obs.iter().enumerate() {
        for (r, rv) in rotated.iter().enumerate() {
            let a = rv.angle_to(ov);
            if a < gate {
                pairs.push((a, o, r));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut used_obs = vec![false; obs.len()];
    let mut used_ref = vec![false; refs.len()];
    let mut out = Vec::new();
    for (_, o, r) in pairs {
        if !used_obs[o] && !used_ref[r] {
            used_obs[o] = true;
            used_ref[r] = true;
            out.push((o, r));
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geodesic_angle, random_rotation, random_unit_vector};
    use crate::hashing::build_hash_table;
    use rand::Rng;
    use std::f64::consts::PI;

    fn spread_pattern(n: usize, seed: u64) -> DotPattern {
        // rejection-sampled with a generous minimum separation
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut dots: Vec<UnitVector3> = Vec::new();
        while dots.len() < n {
            let d = random_unit_vector(&mut r);
            if dots.iter().all(|e| e.angle_to(&d) > 0.5) {
                dots.push(d);
            }
        }
        DotPattern::new(dots).unwrap()
    }

    fn visible(p: &DotPattern, q: &Rotation) -> (Vec<UnitVector3>, Vec<usize>) {
        let mut dots = Vec::new();
        let mut ids = Vec::new();
        for (i, d) in p.dots().iter().enumerate() {
            let v = q.rotate(d);
            if v.z() > 0.0 {
                dots.push(v);
                ids.push(i);
            }
        }
        (dots, ids)
    }

    #[test]
    fn lift_examples() {
        let c = lift_to_sphere(0.0, 0.0, 1.0).unwrap();
        assert_eq!(c.to_array(), [0.0, 0.0, 1.0]);
        let l = lift_to_sphere(1.0, 0.0, 1.0).unwrap();
        assert_eq!(l.to_array(), [1.0, 0.0, 0.0]);
        let m = lift_to_sphere(0.6, 0.0, 1.0).unwrap();
        assert!((m.z() - 0.8).abs() < 1e-15 && (m.x() - 0.6).abs() < 1e-15);
        let s = lift_to_sphere(12.0, 0.0, 20.0).unwrap();
        assert!((s.z() - 0.8).abs() < 1e-15);
        assert!(matches!(lift_to_sphere(0.8, 0.7, 1.0), Err(Error::OutsideDisk { .. })));
    }

    #[test]
    fn rmse_examples() {
        let p = spread_pattern(5, 1);
        let q = random_rotation(&mut ChaCha8Rng::seed_from_u64(2));
        let obs: Vec<UnitVector3> = p.dots().iter().map(|d| q.rotate(d)).collect();
        // the observed set is not culled here, so skip the hemisphere check
        let set = ObservedDotSet {
            dots: obs.clone(),
            timestamp: 0.0,
        };
        let corr: Vec<(usize, usize)> = (0..5).map(|i| (i, i)).collect();
        assert!(reprojection_rmse(&q, &p, &set, &corr).unwrap() < 1e-9);

        let off = Rotation::from_axis_angle(&UnitVector3::z_axis(), 0.1);
        let single = ObservedDotSet::new(vec![off.rotate(&UnitVector3::x_axis())], 0.0).unwrap();
        let px = DotPattern::new(vec![UnitVector3::x_axis()]).unwrap();
        let e = reprojection_rmse(&Rotation::identity(), &px, &single, &[(0, 0)]).unwrap();
        assert!((e - 0.1).abs() < 1e-12);
        assert!(matches!(
            reprojection_rmse(&q, &p, &set, &[]),
            Err(Error::EmptyCorrespondences)
        ));
    }

    #[test]
    fn two_dots_are_too_few() {
        let t = build_hash_table(&spread_pattern(10, 3)).unwrap();
        let set = ObservedDotSet::new(vec![UnitVector3::z_axis(), UnitVector3::x_axis()], 0.0)
            .unwrap();
        assert!(matches!(
            recognize(&t, &set, &RecognitionConfig::default()),
            Err(Error::TooFewDots { got: 2, need: 3 })
        ));
    }

    #[test]
    fn clean_observations_are_recovered_exactly() {
        let p = spread_pattern(20, 4);
        let t = build_hash_table(&p).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let cfg = RecognitionConfig::default();
        for _ in 0..200 {
            let q = random_rotation(&mut r);
            let (dots, ids) = visible(&p, &q);
            if dots.len() < 3 {
                continue;
            }
            let set = ObservedDotSet::new(dots, 0.0).unwrap();
            let res = recognize(&t, &set, &cfg).unwrap();
            assert!(geodesic_angle(&res.orientation, &q) < 1e-6);
            for &(o, rid) in &res.correspondences {
                assert_eq!(ids[o], rid);
            }
            let again =
                reprojection_rmse(&res.orientation, &p, &set, &res.correspondences).unwrap();
            assert!((again - res.rmse).abs() < 1e-12);
        }
    }

    #[test]
    fn recognition_is_equivariant_about_the_view_axis() {
        let p = spread_pattern(20, 6);
        let t = build_hash_table(&p).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let cfg = RecognitionConfig::default();
        for _ in 0..50 {
            let q = random_rotation(&mut r);
            let spin = Rotation::from_axis_angle(&UnitVector3::z_axis(), r.random_range(0.0..2.0 * PI));
            let (dots, _) = visible(&p, &q);
            if dots.len() < 3 {
                continue;
            }
            let a = recognize(&t, &ObservedDotSet::new(dots.clone(), 0.0).unwrap(), &cfg).unwrap();
            let turned: Vec<UnitVector3> = dots.iter().map(|d| spin.rotate(d)).collect();
            let b = recognize(&t, &ObservedDotSet::new(turned, 0.0).unwrap(), &cfg).unwrap();
            assert!(geodesic_angle(&spin.compose(&a.orientation), &b.orientation) < 1e-9);
        }
    }

    #[test]
    fn randomized_pair_order_still_recovers() {
        let p = spread_pattern(20, 8);
        let t = build_hash_table(&p).unwrap();
        let q = random_rotation(&mut ChaCha8Rng::seed_from_u64(9));
        let (dots, _) = visible(&p, &q);
        let cfg = RecognitionConfig {
            randomize_seed: Some(3),
            ..Default::default()
        };
        let res = recognize(&t, &ObservedDotSet::new(dots, 0.0).unwrap(), &cfg).unwrap();
        assert!(geodesic_angle(&res.orientation, &q) < 1e-6);
    }

    #[test]
    fn observed_set_rejects_far_side() {
        let d = UnitVector3::new(0.0, 0.0, -1.0).unwrap();
        assert!(ObservedDotSet::new(vec![d], 0.0).is_err());
    }

}
