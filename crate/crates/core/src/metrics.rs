//! Changepoint detection scores (PPV, Se, F1) and segmentation correlation.

use serde::{Deserialize, Serialize};

use crate::error::{KidsError, Result};
use crate::segmentation::Segment;

pub const DEFAULT_TOLERANCE: usize = 3;

/// Ground-truth inactive interval `[start, end)` in downsampled steps. The
/// changepoint closing it is `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSegment {
    pub start: usize,
    pub end: usize,
}

impl GroundTruthSegment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end <= start {
            return Err(KidsError::invalid(format!(
                "ground-truth segment [{start}, {end}) is empty"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn duration(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    /// `(prediction position, ground-truth position)` pairs, by GT position.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truth: Vec<usize>,
}

impl MatchSet {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn false_positives(&self) -> usize {
        self.unmatched_predictions.len()
    }

    pub fn false_negatives(&self) -> usize {
        self.unmatched_ground_truth.len()
    }
}

/// One-to-one greedy matching of predicted changepoints to GT segment ends.
///
/// Candidate pairs within `tolerance` are taken closest first; ties go to the
/// earlier prediction, then the earlier GT segment.
pub fn match_changepoints(
    predicted: &[usize],
    gt: &[GroundTruthSegment],
    tolerance: usize,
) -> MatchSet {
    let mut candidates = Vec::new();
    for (pi, &p) in predicted.iter().enumerate() {
        for (gi, g) in gt.iter().enumerate() {
            let d = p.abs_diff(g.end);
            if d <= tolerance {
                candidates.push((d, p, g.end, pi, gi));
            }
        }
    }
    candidates.sort_unstable();
    let mut pred_used = vec![false; predicted.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, _, _, pi, gi) in candidates {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            pairs.push((pi, gi));
        }
    }
    pairs.sort_by_key(|p| p.1);
    MatchSet {
        pairs,
        unmatched_predictions: (0..predicted.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_ground_truth: (0..gt.len()).filter(|&i| !gt_used[i]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ppv: f64,
    pub se: f64,
    pub f1: f64,
}

/// PPV, sensitivity and F1. A ratio with a zero denominator is reported as 0.
pub fn detection_metrics(matches: &MatchSet) -> Result<DetectionMetrics> {
    let (tp, fp, fn_) = (
        matches.true_positives(),
        matches.false_positives(),
        matches.false_negatives(),
    );
    if tp + fp == 0 && tp + fn_ == 0 {
        return Err(KidsError::invalid(
            "nothing to evaluate: no predictions and no ground truth",
        ));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let ppv = ratio(tp, tp + fp);
    let se = ratio(tp, tp + fn_);
    let f1 = if ppv + se > 0.0 {
        2.0 * ppv * se / (ppv + se)
    } else {
        0.0
    };
    Ok(DetectionMetrics {
        tp,
        fp,
        fn_,
        ppv,
        se,
        f1,
    })
}

/// Pearson correlation with `n - 1` denominators throughout.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(KidsError::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(KidsError::invalid("need at least two pairs for a correlation"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(KidsError::invalid("correlation undefined for a constant sample"));
    }
    let cov = sxy / (n - 1.0);
    let r = cov / ((sxx / (n - 1.0)).sqrt() * (syy / (n - 1.0)).sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub detection: DetectionMetrics,
    /// `None` when fewer than two matched pairs exist or one side is constant.
    pub pearson_r: Option<f64>,
    /// `(predicted duration, GT duration)` for every true positive.
    pub matched_durations: Vec<(f64, f64)>,
    pub tolerance: usize,
}

/// Score predicted segments against ground truth.
pub fn evaluate(
    segments: &[Segment],
    gt: &[GroundTruthSegment],
    tolerance: usize,
) -> Result<EvaluationReport> {
    let predicted: Vec<usize> = segments.iter().map(|s| s.changepoint).collect();
    let matches = match_changepoints(&predicted, gt, tolerance);
    let detection = detection_metrics(&matches)?;
    let matched_durations: Vec<(f64, f64)> = matches
        .pairs
        .iter()
        .map(|&(pi, gi)| (segments[pi].duration, gt[gi].duration() as f64))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = matched_durations.iter().copied().unzip();
    Ok(EvaluationReport {
        detection,
        pearson_r: pearson_r(&xs, &ys).ok(),
        matched_durations,
        tolerance,
    })
}
