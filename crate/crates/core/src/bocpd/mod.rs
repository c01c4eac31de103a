//! Bayesian online inference of the current-segment run length.
//!
//! Every hypothesis `R_k = ζ` carries a Normal-Wishart posterior fitted to the
//! last `ζ` embeddings. At each step the hypotheses either grow by one with
//! probability `1 - p` or collapse into a fresh `ζ = 0` hypothesis with
//! probability `p`; both transitions are weighted by the Student-t predictive
//! of the new embedding under the predecessor's posterior. All probabilities
//! are kept in natural-log space.

mod export;
mod normal_wishart;
mod oracle;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use normal_wishart::{
    log_predictive, nw_posterior_params, posterior_from_moments, NormalWishartParams, StudentT3,
    DEFAULT_NONINFORMATIVE_EPSILON,
};
pub use oracle::{brute_force_posterior, BRUTE_FORCE_MAX_STEPS};

use crate::error::{KidsError, Result};
use crate::kinematics::Embedding3;
use crate::logspace::log_sum_exp;

/// Pruning threshold used when pruning is switched on without a value.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Informative,
    NonInformative,
}

impl PriorKind {
    pub fn params(self, epsilon: f64) -> Result<NormalWishartParams> {
        match self {
            PriorKind::Informative => Ok(NormalWishartParams::informative()),
            PriorKind::NonInformative => NormalWishartParams::non_informative(epsilon),
        }
    }
}

/// Geometric changepoint prior: reset with probability `p` at every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardConfig {
    p: f64,
}

impl HazardConfig {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(KidsError::Config(format!(
                "changepoint probability must lie in (0, 1), got {p}"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn ln_reset(&self) -> f64 {
        self.p.ln()
    }

    fn ln_grow(&self) -> f64 {
        (-self.p).ln_1p()
    }
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self { p: 0.01 }
    }
}

/// Raw sums over a hypothesis' window.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub count: usize,
    pub sum: Vector3<f64>,
    pub sum_outer: Matrix3<f64>,
}

impl SufficientStats {
    pub fn empty() -> Self {
        Self {
            count: 0,
            sum: Vector3::zeros(),
            sum_outer: Matrix3::zeros(),
        }
    }

    pub fn push(&mut self, x: &Embedding3) {
        self.count += 1;
        self.sum += x;
        self.sum_outer += x * x.transpose();
    }

    /// Posterior recomputed in one shot from the sums.
    pub fn batch_params(&self, prior: &NormalWishartParams) -> NormalWishartParams {
        if self.count == 0 {
            return *prior;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let scatter = self.sum_outer - mean * mean.transpose() * n;
        posterior_from_moments(prior, self.count, &mean, &scatter)
    }
}

/// One run-length hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisState {
    pub run_length: usize,
    /// Log posterior mass, i.e. the log joint less the running log evidence.
    pub log_prob: f64,
    pub stats: SufficientStats,
    /// Posterior parameters maintained by rank-one updates.
    pub params: NormalWishartParams,
}

impl HypothesisState {
    /// `P(R₀ = 0) = 1` before any observation.
    pub fn initial(prior: &NormalWishartParams) -> Self {
        Self {
            run_length: 0,
            log_prob: 0.0,
            stats: SufficientStats::empty(),
            params: *prior,
        }
    }
}

/// Sparse column of `P(R_k | o_{1:k})`: `(ζ, probability)` in ascending `ζ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLengthColumn {
    pub entries: Vec<(usize, f64)>,
}

impl RunLengthColumn {
    pub fn get(&self, zeta: usize) -> f64 {
        self.entries
            .binary_search_by_key(&zeta, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(z, p)| z as f64 * p).sum()
    }

    pub fn argmax(&self) -> usize {
        self.entries
            .iter()
            .fold((0, f64::NEG_INFINITY), |best, &(z, p)| if p > best.1 { (z, p) } else { best })
            .0
    }

    fn from_states(states: &[HypothesisState]) -> Self {
        let mut entries: Vec<_> = states.iter().map(|s| (s.run_length, s.log_prob.exp())).collect();
        entries.sort_by_key(|e| e.0);
        Self { entries }
    }
}

/// Run-length posterior for steps `k = 0..=T`. Column `k` has support `ζ ≤ k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthPosterior {
    columns: Vec<RunLengthColumn>,
    /// `ln P(o_k | o_{1:k-1})` for `k = 1..=T`.
    log_evidence: Vec<f64>,
}

impl RunLengthPosterior {
    pub(crate) fn new(columns: Vec<RunLengthColumn>, log_evidence: Vec<f64>) -> Self {
        Self {
            columns,
            log_evidence,
        }
    }

    /// Number of observations `T`.
    pub fn steps(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn columns(&self) -> &[RunLengthColumn] {
        &self.columns
    }

    pub fn column(&self, k: usize) -> &RunLengthColumn {
        &self.columns[k]
    }

    pub fn prob(&self, zeta: usize, k: usize) -> f64 {
        self.columns.get(k).map_or(0.0, |c| c.get(zeta))
    }

    pub fn log_evidence(&self) -> &[f64] {
        &self.log_evidence
    }

    /// Total number of stored (nonzero-support) entries.
    pub fn stored_entries(&self) -> usize {
        self.columns.iter().map(|c| c.entries.len()).sum()
    }

    /// Check column normalisation and the `ζ ≤ k` support constraint.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for (k, col) in self.columns.iter().enumerate() {
            let s = col.sum();
            if (s - 1.0).abs() > tol {
                return Err(KidsError::numerical(format!("column {k} sums to {s}")));
            }
            if let Some(&(z, _)) = col.entries.iter().find(|e| e.0 > k) {
                return Err(KidsError::numerical(format!(
                    "column {k} has mass at run length {z}"
                )));
            }
            if col.entries.iter().any(|e| !(e.1 >= 0.0)) {
                return Err(KidsError::numerical(format!("column {k} has a negative entry")));
            }
        }
        Ok(())
    }
}

/// Output of one recursion step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub states: Vec<HypothesisState>,
    pub column: RunLengthColumn,
    pub log_evidence: f64,
}

/// Advance the hypothesis set by one observation.
///
/// Returns `k + 1` hypotheses for `k` inputs: the fresh `ζ = 0` hypothesis
/// first, then each input grown by one, all normalised.
pub fn step(
    states: &[HypothesisState],
    o: &Embedding3,
    prior: &NormalWishartParams,
    hazard: &HazardConfig,
) -> Result<StepOutput> {
    if states.is_empty() {
        return Err(KidsError::invalid("hypothesis set is empty"));
    }
    let weighted: Vec<f64> = states
        .iter()
        .map(|s| Ok(s.log_prob + log_predictive(o, &s.params)?))
        .collect::<Result<_>>()?;

    let mut next = Vec::with_capacity(states.len() + 1);
    next.push(HypothesisState {
        run_length: 0,
        log_prob: hazard.ln_reset() + log_sum_exp(&weighted),
        stats: SufficientStats::empty(),
        params: *prior,
    });
    let ln_grow = hazard.ln_grow();
    for (s, w) in states.iter().zip(&weighted) {
        let mut stats = s.stats.clone();
        stats.push(o);
        next.push(HypothesisState {
            run_length: s.run_length + 1,
            log_prob: w + ln_grow,
            stats,
            params: s.params.update(o),
        });
    }

    let logs: Vec<f64> = next.iter().map(|s| s.log_prob).collect();
    let evidence = log_sum_exp(&logs);
    if !evidence.is_finite() {
        return Err(KidsError::numerical(
            "every run-length hypothesis underflowed to zero probability",
        ));
    }
    for s in &mut next {
        s.log_prob -= evidence;
    }
    let column = RunLengthColumn::from_states(&next);
    Ok(StepOutput {
        states: next,
        column,
        log_evidence: evidence,
    })
}

/// Drop hypotheses below `threshold` posterior mass and renormalise. The most
/// probable hypothesis always survives.
pub fn prune(states: &mut Vec<HypothesisState>, threshold: f64) {
    let ln_thr = threshold.ln();
    let best = states
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.log_prob.total_cmp(&b.1.log_prob))
        .map(|(i, _)| i);
    let mut i = 0;
    states.retain(|s| {
        let keep = s.log_prob >= ln_thr || Some(i) == best;
        i += 1;
        keep
    });
    let logs: Vec<f64> = states.iter().map(|s| s.log_prob).collect();
    let z = log_sum_exp(&logs);
    for s in states.iter_mut() {
        s.log_prob -= z;
    }
}

/// Run the recursion over a whole series.
///
/// With `prune_threshold = None` every hypothesis is kept, so column `k`
/// holds exactly `k + 1` entries.
pub fn run_inference(
    points: &[Embedding3],
    prior: &NormalWishartParams,
    hazard: &HazardConfig,
    prune_threshold: Option<f64>,
) -> Result<RunLengthPosterior> {
    if points.is_empty() {
        return Err(KidsError::invalid("cannot run inference on an empty series"));
    }
    if let Some(t) = prune_threshold {
        if !(t > 0.0 && t < 1.0) {
            return Err(KidsError::Config(format!(
                "prune threshold must lie in (0, 1), got {t}"
            )));
        }
    }
    let mut states = vec![HypothesisState::initial(prior)];
    let mut columns = Vec::with_capacity(points.len() + 1);
    let mut evidence = Vec::with_capacity(points.len());
    columns.push(RunLengthColumn::from_states(&states));
    for (n, o) in points.iter().enumerate() {
        let out = step(&states, o, prior, hazard).map_err(|e| e.at_step(n + 1))?;
        states = out.states;
        evidence.push(out.log_evidence);
        match prune_threshold {
            Some(t) => {
                prune(&mut states, t);
                columns.push(RunLengthColumn::from_states(&states));
            }
            None => columns.push(out.column),
        }
    }
    Ok(RunLengthPosterior::new(columns, evidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noisy(rng: &mut impl Rng, mean: Vector3<f64>, sigma: f64) -> Embedding3 {
        let n: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        mean + Vector3::from(n) * sigma
    }

    #[test]
    fn hazard_validation() {
        assert!(HazardConfig::new(0.0).is_err());
        assert!(HazardConfig::new(1.0).is_err());
        assert!(HazardConfig::new(0.3).is_ok());
        assert_eq!(HazardConfig::default().p(), 0.01);
    }

    #[test]
    fn first_step_ratio() {
        let prior = NormalWishartParams::informative();
        for p in [0.01, 0.1, 0.5] {
            let h = HazardConfig::new(p).unwrap();
            let out = step(&[HypothesisState::initial(&prior)], &Vector3::new(1.2, 0.3, -0.4), &prior, &h).unwrap();
            assert_eq!(out.states.len(), 2);
            let (p0, p1) = (out.column.get(0), out.column.get(1));
            assert!((p0 + p1 - 1.0).abs() < 1e-15);
            assert!((p0 / p1 - p / (1.0 - p)).abs() < 1e-12);
            let lp = log_predictive(&Vector3::new(1.2, 0.3, -0.4), &prior).unwrap();
            assert!((out.log_evidence - lp).abs() < 1e-12);
        }
    }

    #[test]
    fn hypothesis_counts_without_pruning() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..30).map(|_| noisy(&mut rng, Vector3::new(1.5, 0.0, 0.0), 0.1)).collect();
        let post = run_inference(&pts, &NormalWishartParams::informative(), &HazardConfig::default(), None).unwrap();
        assert_eq!(post.steps(), 30);
        for k in 0..=30 {
            assert_eq!(post.column(k).entries.len(), k + 1);
        }
        post.check_invariants(1e-12).unwrap();
    }

    #[test]
    fn cached_params_match_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..60).map(|_| noisy(&mut rng, Vector3::new(0.0, 1.4, 0.2), 0.2)).collect();
        for prior in [NormalWishartParams::informative(), NormalWishartParams::non_informative(1e-8).unwrap()] {
            let h = HazardConfig::default();
            let mut states = vec![HypothesisState::initial(&prior)];
            for (n, o) in pts.iter().enumerate() {
                states = step(&states, o, &prior, &h).unwrap().states;
                let k = n + 1;
                for s in &states {
                    assert_eq!(s.stats.count, s.run_length);
                    let window = &pts[k - s.run_length..k];
                    let batch = nw_posterior_params(&prior, window);
                    let from_stats = s.stats.batch_params(&prior);
                    for other in [batch, from_stats] {
                        assert!((s.params.mean - other.mean).amax() < 1e-9);
                        assert!((s.params.kappa - other.kappa).abs() < 1e-9);
                        assert!((s.params.dof - other.dof).abs() < 1e-9);
                        assert!((s.params.scatter - other.scatter).amax() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_hazard_keeps_full_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..40).map(|_| noisy(&mut rng, Vector3::new(1.0, 1.0, 0.0), 0.1)).collect();
        let h = HazardConfig::new(1e-12).unwrap();
        let post = run_inference(&pts, &NormalWishartParams::informative(), &h, None).unwrap();
        for k in 1..=40 {
            assert_eq!(post.column(k).argmax(), k);
            assert!(post.prob(k, k) > 0.999);
        }
    }

    #[test]
    fn constant_series_concentrates_on_full_run() {
        let pts = vec![Vector3::new(1.2, -0.5, 0.7); 50];
        let h = HazardConfig::new(0.01).unwrap();
        let post = run_inference(&pts, &NormalWishartParams::informative(), &h, None).unwrap();
        assert_eq!(post.column(50).argmax(), 50);
    }

    #[test]
    fn mean_shift_resets_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sigma = 0.1;
        let mut pts: Vec<_> = (0..25).map(|_| noisy(&mut rng, Vector3::new(1.5, 0.0, 0.0), sigma)).collect();
        pts.extend((0..25).map(|_| noisy(&mut rng, Vector3::new(0.0, 1.5, 0.0), sigma)));
        let prior = NormalWishartParams::non_informative(1e-8).unwrap();
        let post = run_inference(&pts, &prior, &HazardConfig::default(), None).unwrap();
        // observation 26 is the first of the new segment
        let hit = (26..=27).any(|k| post.column(k).argmax() <= 2);
        assert!(hit, "no reset near the shift");
    }

    #[test]
    fn informative_prior_absorbs_moderate_shift() {
        // the broad 5·I scatter lets the long run explain a 2.1 jump for a while
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts: Vec<_> = (0..25).map(|_| noisy(&mut rng, Vector3::new(1.5, 0.0, 0.0), 0.1)).collect();
        pts.extend((0..25).map(|_| noisy(&mut rng, Vector3::new(0.0, 1.5, 0.0), 0.1)));
        let post = run_inference(&pts, &NormalWishartParams::informative(), &HazardConfig::default(), None).unwrap();
        assert!(post.column(26).argmax() > 2);
        assert!(post.column(50).argmax() < 50);
    }

    #[test]
    fn windowing_ignores_older_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let tail: Vec<_> = (0..15).map(|_| noisy(&mut rng, Vector3::new(0.0, 0.0, 1.5), 0.2)).collect();
        let prefix: Vec<_> = (0..10).map(|_| noisy(&mut rng, Vector3::new(5.0, 1.0, -3.0), 1.0)).collect();
        let prior = NormalWishartParams::informative();
        let zeta = 6;
        let o = Vector3::new(0.1, -0.1, 1.4);
        let a = nw_posterior_params(&prior, &tail[tail.len() - zeta..]);
        let mut longer = prefix.clone();
        longer.extend_from_slice(&tail);
        let b = nw_posterior_params(&prior, &longer[longer.len() - zeta..]);
        assert_eq!(log_predictive(&o, &a).unwrap(), log_predictive(&o, &b).unwrap());
    }

    #[test]
    fn larger_hazard_raises_reset_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<_> = (0..40)
            .map(|i| noisy(&mut rng, Vector3::new(if i < 20 { 1.5 } else { -1.5 }, 0.0, 0.0), 0.2))
            .collect();
        let prior = NormalWishartParams::informative();
        let mut prev: Option<RunLengthPosterior> = None;
        for p in [0.001, 0.01, 0.05, 0.2, 0.5] {
            let post = run_inference(&pts, &prior, &HazardConfig::new(p).unwrap(), None).unwrap();
            if let Some(prev) = &prev {
                for k in 1..=40 {
                    assert!(post.prob(0, k) >= prev.prob(0, k) - 1e-15);
                }
            }
            prev = Some(post);
        }
    }

    #[test]
    fn pruning_bounds_hypotheses() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pts: Vec<_> = (0..300).map(|_| noisy(&mut rng, Vector3::new(1.5, 0.0, 0.0), 0.1)).collect();
        let prior = NormalWishartParams::informative();
        let full = run_inference(&pts, &prior, &HazardConfig::default(), None).unwrap();
        let pruned = run_inference(&pts, &prior, &HazardConfig::default(), Some(1e-12)).unwrap();
        pruned.check_invariants(1e-9).unwrap();
        assert!(pruned.stored_entries() < full.stored_entries());
        for k in 0..=300 {
            assert!((full.column(k).mean() - pruned.column(k).mean()).abs() < 1e-6);
        }
        assert!(run_inference(&pts, &prior, &HazardConfig::default(), Some(0.0)).is_err());
    }

    #[test]
    fn empty_series_rejected() {
        let prior = NormalWishartParams::informative();
        assert!(run_inference(&[], &prior, &HazardConfig::default(), None).is_err());
    }

    #[test]
    fn every_epsilon_sees_the_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut pts: Vec<_> = (0..30).map(|_| noisy(&mut rng, Vector3::new(1.5, 0.0, 0.0), 0.05)).collect();
        pts.extend((0..30).map(|_| noisy(&mut rng, Vector3::new(0.0, 1.5, 0.0), 0.05)));
        let h = HazardConfig::default();
        for eps in [1e-10, 1e-9, 1e-8, 1e-7, 1e-6] {
            let post = run_inference(&pts, &NormalWishartParams::non_informative(eps).unwrap(), &h, None).unwrap();
            assert!(post.column(31).argmax() <= 1, "eps = {eps}");
            // well after the shift the run is tracked regardless of eps
            assert_eq!(post.column(60).argmax(), 30, "eps = {eps}");
        }
    }
}
