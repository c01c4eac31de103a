//! Exhaustive enumeration of changepoint configurations, used to check the
//! recursion on short series.

use super::{
    log_predictive, nw_posterior_params, HazardConfig, NormalWishartParams, RunLengthColumn,
    RunLengthPosterior,
};
use crate::error::{KidsError, Result};
use crate::kinematics::Embedding3;
use crate::logspace::{log_add_exp, log_sum_exp};

/// Largest series length accepted by [`brute_force_posterior`].
pub const BRUTE_FORCE_MAX_STEPS: usize = 12;

/// Run-length posterior by enumerating all `2^k` reset patterns for every
/// prefix `o_{1:k}`.
///
/// A pattern's probability is the product over steps of the predictive of
/// `o_j` given the current segment's window (fitted from the prior in one
/// shot), times `p` per reset and `1 - p` per growth.
pub fn brute_force_posterior(
    points: &[Embedding3],
    prior: &NormalWishartParams,
    hazard: &HazardConfig,
) -> Result<RunLengthPosterior> {
    let t = points.len();
    if t > BRUTE_FORCE_MAX_STEPS {
        return Err(KidsError::invalid(format!(
            "brute-force enumeration is limited to {BRUTE_FORCE_MAX_STEPS} steps, got {t}"
        )));
    }
    let (ln_p, ln_q) = (hazard.p().ln(), (1.0 - hazard.p()).ln());
    let mut columns = vec![RunLengthColumn {
        entries: vec![(0, 1.0)],
    }];
    let mut evidence = Vec::with_capacity(t);
    let mut prev_total = 0.0;
    for k in 1..=t {
        let mut acc = vec![f64::NEG_INFINITY; k + 1];
        for mask in 0u32..(1u32 << k) {
            let mut run = 0usize;
            let mut logp = 0.0;
            for j in 1..=k {
                let window = &points[j - 1 - run..j - 1];
                let params = nw_posterior_params(prior, window);
                logp += log_predictive(&points[j - 1], &params)?;
                if mask & (1 << (j - 1)) != 0 {
                    logp += ln_p;
                    run = 0;
                } else {
                    logp += ln_q;
                    run += 1;
                }
            }
            acc[run] = log_add_exp(acc[run], logp);
        }
        let total = log_sum_exp(&acc);
        if !total.is_finite() {
            return Err(KidsError::numerical("all configurations underflowed").at_step(k));
        }
        evidence.push(total - prev_total);
        prev_total = total;
        columns.push(RunLengthColumn {
            entries: acc
                .iter()
                .enumerate()
                .map(|(z, l)| (z, (l - total).exp()))
                .collect(),
        });
    }
    Ok(RunLengthPosterior::new(columns, evidence))
}
