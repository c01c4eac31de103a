//! From run-length posterior to inactivity segments.
//!
//! The posterior is reduced to its mean per step, optionally cleaned of
//! two-step declines, then scanned for multiplicative drops on a log10 scale.
//! Drops that end short runs are discarded; every remaining drop closes one
//! inactivity segment whose length is read off the estimate just before it.

use serde::{Deserialize, Serialize};

use crate::bocpd::RunLengthPosterior;
use crate::error::{KidsError, Result};

pub const DEFAULT_LOG_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MIN_RUN: f64 = 20.0;

/// Posterior-mean run length per step, `k = 0..=T`.
pub fn lms_estimate(posterior: &RunLengthPosterior) -> Vec<f64> {
    posterior.columns().iter().map(|c| c.mean()).collect()
}

/// Three-sample filter: a sample in the middle of a strict double descent
/// takes its predecessor's value. Reads only the input, never its own output.
pub fn postprocess_runlength(trace: &[f64]) -> Vec<f64> {
    let mut out = trace.to_vec();
    for k in 1..trace.len().saturating_sub(1) {
        if trace[k - 1] > trace[k] && trace[k] > trace[k + 1] {
            out[k] = trace[k - 1];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangepointEvent {
    pub index: usize,
    /// Trace value at `index - 1`.
    pub pre_reset_run_length: f64,
    /// `log10` drop from `index - 1` to `index`.
    pub log_drop: f64,
}

fn log_level(v: f64) -> f64 {
    v.max(1.0).log10()
}

/// Flag every step whose clamped log10 value falls by more than
/// `log_threshold`. After a reset, further drops are ignored until the trace
/// rises again, so a staircase decline counts once.
pub fn detect_resets(trace: &[f64], log_threshold: f64) -> Vec<ChangepointEvent> {
    let mut events = Vec::new();
    let mut armed = true;
    for k in 1..trace.len() {
        if trace[k] > trace[k - 1] {
            armed = true;
        }
        let drop = log_level(trace[k - 1]) - log_level(trace[k]);
        if armed && drop > log_threshold {
            events.push(ChangepointEvent {
                index: k,
                pre_reset_run_length: trace[k - 1],
                log_drop: drop,
            });
            armed = false;
        }
    }
    events
}

/// Keep only resets that end a run of at least `min_run` samples.
pub fn filter_repetitive_resets(events: &[ChangepointEvent], min_run: f64) -> Vec<ChangepointEvent> {
    events
        .iter()
        .filter(|e| e.pre_reset_run_length >= min_run)
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub changepoint: usize,
    pub duration: f64,
    pub start: f64,
}

/// One segment per event. The duration is the trace value just before the
/// reset, capped by the time elapsed since the previous event.
pub fn build_segments(events: &[ChangepointEvent], trace: &[f64]) -> Result<Vec<Segment>> {
    let mut prev = 0usize;
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        if e.index == 0 || e.index >= trace.len() || e.index <= prev {
            return Err(KidsError::invalid(format!(
                "event index {} out of order or outside the trace",
                e.index
            )));
        }
        let estimate = trace[e.index - 1];
        let duration = estimate.min((e.index - prev) as f64);
        out.push(Segment {
            changepoint: e.index,
            duration,
            start: e.index as f64 - duration,
        });
        prev = e.index;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub postprocess: bool,
    pub log_threshold: f64,
    pub min_run: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            postprocess: true,
            log_threshold: DEFAULT_LOG_THRESHOLD,
            min_run: DEFAULT_MIN_RUN,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.log_threshold > 0.0 && self.log_threshold.is_finite()) {
            return Err(KidsError::Config(format!(
                "log threshold must be positive, got {}",
                self.log_threshold
            )));
        }
        if !(self.min_run > 0.0 && self.min_run.is_finite()) {
            return Err(KidsError::Config(format!(
                "minimum run length must be positive, got {}",
                self.min_run
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub raw_trace: Vec<f64>,
    /// The trace the detector actually ran on (postprocessed or raw).
    pub trace: Vec<f64>,
    pub raw_events: Vec<ChangepointEvent>,
    pub events: Vec<ChangepointEvent>,
    pub segments: Vec<Segment>,
}

pub fn segment_trace(raw_trace: Vec<f64>, config: &SegmentationConfig) -> Result<SegmentationResult> {
    config.validate()?;
    let trace = if config.postprocess {
        postprocess_runlength(&raw_trace)
    } else {
        raw_trace.clone()
    };
    let raw_events = detect_resets(&trace, config.log_threshold);
    let events = filter_repetitive_resets(&raw_events, config.min_run);
    let segments = build_segments(&events, &trace)?;
    Ok(SegmentationResult {
        raw_trace,
        trace,
        raw_events,
        events,
        segments,
    })
}

pub fn segment_posterior(
    posterior: &RunLengthPosterior,
    config: &SegmentationConfig,
) -> Result<SegmentationResult> {
    segment_trace(lms_estimate(posterior), config)
}
