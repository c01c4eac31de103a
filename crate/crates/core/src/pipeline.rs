//! End-to-end runs: ingest, embed, decimate, infer, segment, score, write.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bocpd::{
    run_inference, HazardConfig, NormalWishartParams, PriorKind, RunLengthPosterior,
    DEFAULT_NONINFORMATIVE_EPSILON,
};
use crate::error::{KidsError, Result};
use crate::io::{
    read_labels_csv, read_orientation_csv, render_segments_csv, render_trace_csv,
    write_all_atomic, InputLayout,
};
use crate::kinematics::{decimate, Embedding3, EmbeddingSource};
use crate::metrics::{evaluate, DetectionMetrics, EvaluationReport, GroundTruthSegment, DEFAULT_TOLERANCE};
use crate::segmentation::{
    segment_posterior, Segment, SegmentationConfig, SegmentationResult, DEFAULT_LOG_THRESHOLD,
    DEFAULT_MIN_RUN,
};
use crate::simharness::{generate_session, SessionConfig};

pub const DEFAULT_DECIMATION: usize = 100;
pub const DEFAULT_HAZARD: f64 = 0.01;
/// Column sums and support are checked to this tolerance on every run.
pub const POSTERIOR_TOLERANCE: f64 = 1e-9;

/// Replacements for individual prior fields; unset fields keep the kind's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorOverrides {
    pub mean: Option<[f64; 3]>,
    pub kappa: Option<f64>,
    pub dof: Option<f64>,
    /// Scatter matrix becomes `scatter_scale · I`.
    pub scatter_scale: Option<f64>,
}

impl PriorOverrides {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }

    pub fn apply(&self, base: NormalWishartParams) -> Result<NormalWishartParams> {
        if self.is_empty() {
            return Ok(base);
        }
        NormalWishartParams::new(
            self.mean.map_or(base.mean, Vector3::from),
            self.kappa.unwrap_or(base.kappa),
            self.dof.unwrap_or(base.dof),
            self.scatter_scale.map_or(base.scatter, |s| Matrix3::identity() * s),
        )
        .map_err(|e| KidsError::Config(format!("prior override rejected: {e}")))
    }
}

/// Everything downstream of the embedding series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub prior: PriorKind,
    pub prior_overrides: PriorOverrides,
    pub epsilon: f64,
    pub hazard: f64,
    pub postprocess: bool,
    pub log_threshold: f64,
    pub min_run: f64,
    pub tolerance: usize,
    pub prune_threshold: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            prior: PriorKind::Informative,
            prior_overrides: PriorOverrides::default(),
            epsilon: DEFAULT_NONINFORMATIVE_EPSILON,
            hazard: DEFAULT_HAZARD,
            postprocess: true,
            log_threshold: DEFAULT_LOG_THRESHOLD,
            min_run: DEFAULT_MIN_RUN,
            tolerance: DEFAULT_TOLERANCE,
            prune_threshold: None,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior_params()?;
        HazardConfig::new(self.hazard)?;
        self.segmentation().validate()?;
        if let Some(t) = self.prune_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(KidsError::Config(format!(
                    "prune threshold must lie in (0, 1), got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn prior_params(&self) -> Result<NormalWishartParams> {
        let base = self
            .prior
            .params(self.epsilon)
            .map_err(|e| KidsError::Config(e.to_string()))?;
        self.prior_overrides.apply(base)
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            postprocess: self.postprocess,
            log_threshold: self.log_threshold,
            min_run: self.min_run,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub posterior: RunLengthPosterior,
    pub segmentation: SegmentationResult,
    pub evaluation: Option<EvaluationReport>,
}

/// Inference, segmentation and (with labels) scoring of one downsampled series.
pub fn analyze(
    points: &[Embedding3],
    config: &AnalysisConfig,
    ground_truth: Option<&[GroundTruthSegment]>,
) -> Result<Analysis> {
    config.validate()?;
    let prior = config.prior_params()?;
    let hazard = HazardConfig::new(config.hazard)?;
    let posterior = run_inference(points, &prior, &hazard, config.prune_threshold)?;
    posterior.check_invariants(POSTERIOR_TOLERANCE)?;
    let segmentation = segment_posterior(&posterior, &config.segmentation())?;
    let evaluation = ground_truth
        .map(|gt| evaluate(&segmentation.segments, gt, config.tolerance))
        .transpose()?;
    Ok(Analysis {
        posterior,
        segmentation,
        evaluation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub labels: Option<PathBuf>,
    /// `None`: ADR for orientation inputs, external for embedding files.
    pub embedding_source: Option<EmbeddingSource>,
    pub decimation: usize,
    /// `None`: informative for ADR, non-informative for external embeddings.
    pub prior: Option<PriorKind>,
    pub prior_overrides: PriorOverrides,
    pub epsilon: f64,
    pub hazard: f64,
    pub postprocess: bool,
    pub log_threshold: f64,
    pub min_run: f64,
    pub tolerance: usize,
    pub prune_threshold: Option<f64>,
    pub output_dir: PathBuf,
    /// Also write the dense posterior matrix as CSV.
    pub dense_posterior: bool,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let a = AnalysisConfig::default();
        Self {
            input: input.into(),
            labels: None,
            embedding_source: None,
            decimation: DEFAULT_DECIMATION,
            prior: None,
            prior_overrides: a.prior_overrides,
            epsilon: a.epsilon,
            hazard: a.hazard,
            postprocess: a.postprocess,
            log_threshold: a.log_threshold,
            min_run: a.min_run,
            tolerance: a.tolerance,
            prune_threshold: a.prune_threshold,
            output_dir: output_dir.into(),
            dense_posterior: false,
        }
    }

    fn analysis(&self, source: EmbeddingSource) -> AnalysisConfig {
        AnalysisConfig {
            prior: self.prior.unwrap_or_else(|| default_prior(source)),
            prior_overrides: self.prior_overrides.clone(),
            epsilon: self.epsilon,
            hazard: self.hazard,
            postprocess: self.postprocess,
            log_threshold: self.log_threshold,
            min_run: self.min_run,
            tolerance: self.tolerance,
            prune_threshold: self.prune_threshold,
        }
    }
}

pub fn default_prior(source: EmbeddingSource) -> PriorKind {
    match source {
        EmbeddingSource::Adr => PriorKind::Informative,
        EmbeddingSource::External => PriorKind::NonInformative,
    }
}

/// The configuration actually used, with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub input: PathBuf,
    pub input_layout: InputLayout,
    pub labels: Option<PathBuf>,
    pub embedding_source: EmbeddingSource,
    pub decimation: usize,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
    pub dense_posterior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    /// Number of downsampled observations `T`; the trace has `T + 1` entries.
    pub steps: usize,
    pub raw_max: f64,
    pub raw_mean: f64,
    pub max: f64,
    pub mean: f64,
    pub resets_detected: usize,
    pub resets_kept: usize,
    pub stored_hypotheses: usize,
}

impl TraceStats {
    fn new(a: &Analysis) -> Self {
        let s = &a.segmentation;
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Self {
            steps: a.posterior.steps(),
            raw_max: max(&s.raw_trace),
            raw_mean: mean(&s.raw_trace),
            max: max(&s.trace),
            mean: mean(&s.trace),
            resets_detected: s.raw_events.len(),
            resets_kept: s.events.len(),
            stored_hypotheses: a.posterior.stored_entries(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ResolvedConfig,
    pub raw_samples: usize,
    pub sample_rate_hz: Option<f64>,
    pub trace: TraceStats,
    pub segments: Vec<Segment>,
    pub evaluation: Option<EvaluationReport>,
}

pub const SEGMENTS_FILE: &str = "segments.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const POSTERIOR_PGM_FILE: &str = "posterior.pgm";
pub const POSTERIOR_CSV_FILE: &str = "posterior.csv";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";

/// Run one input file through the full pipeline and write its artifacts.
///
/// Inputs and labels are read and the analysis finished before anything is
/// written, so a failing run leaves the output directory untouched.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    if config.decimation == 0 {
        return Err(KidsError::Config("decimation factor must be at least 1".into()));
    }
    let peek_source = config.embedding_source.unwrap_or(EmbeddingSource::External);
    let input = read_orientation_csv(&config.input, peek_source)?;
    let source = match (input.layout, config.embedding_source) {
        (InputLayout::Embedding, s) => s.unwrap_or(EmbeddingSource::External),
        (_, None | Some(EmbeddingSource::Adr)) => EmbeddingSource::Adr,
        (_, Some(EmbeddingSource::External)) => {
            return Err(KidsError::Config(
                "orientation inputs are always ADR-embedded; external source needs a t,o1,o2,o3 file"
                    .into(),
            ))
        }
    };
    let analysis_config = config.analysis(source);
    analysis_config.validate()?;
    let labels = config.labels.as_deref().map(read_labels_csv).transpose()?;

    let series = decimate(&input.series, config.decimation)?;
    let analysis = analyze(&series.points, &analysis_config, labels.as_deref())?;

    let report = RunReport {
        config: ResolvedConfig {
            input: config.input.clone(),
            input_layout: input.layout,
            labels: config.labels.clone(),
            embedding_source: source,
            decimation: config.decimation,
            analysis: analysis_config,
            output_dir: config.output_dir.clone(),
            dense_posterior: config.dense_posterior,
        },
        raw_samples: input.series.len(),
        sample_rate_hz: input.series.sample_rate_hz,
        trace: TraceStats::new(&analysis),
        segments: analysis.segmentation.segments.clone(),
        evaluation: analysis.evaluation.clone(),
    };
    write_run_outputs(&config.output_dir, &analysis, &report)?;
    Ok(report)
}

fn write_run_outputs(dir: &Path, analysis: &Analysis, report: &RunReport) -> Result<()> {
    let seg = &analysis.segmentation;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (SEGMENTS_FILE, render_segments_csv(&seg.segments).into_bytes()),
        (TRACE_FILE, render_trace_csv(&seg.raw_trace, &seg.trace).into_bytes()),
        (POSTERIOR_PGM_FILE, analysis.posterior.graymap()),
        (REPORT_FILE, to_json(report)?.into_bytes()),
    ];
    if report.config.dense_posterior {
        files.push((POSTERIOR_CSV_FILE, analysis.posterior.render_csv().into_bytes()));
    }
    if let Some(ev) = &report.evaluation {
        files.push((METRICS_FILE, render_metrics_csv(&[("run".to_string(), ev)]).into_bytes()));
    }
    write_all_atomic(dir, &files)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| KidsError::Config(format!("cannot serialise report: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One flat row per evaluation: `label,tp,fp,fn,ppv,se,f1,r,matched`.
pub fn render_metrics_csv(rows: &[(String, &EvaluationReport)]) -> String {
    let mut out = String::from("label,tp,fp,fn,ppv,se,f1,r,matched\n");
    for (label, ev) in rows {
        let d = &ev.detection;
        writeln!(
            out,
            "{label},{},{},{},{},{},{},{},{}",
            d.tp,
            d.fp,
            d.fn_,
            d.ppv,
            d.se,
            d.f1,
            opt(ev.pearson_r),
            ev.matched_durations.len()
        )
        .expect("writing to a String");
    }
    out
}

/// One of the four pipeline variants: embedding family × postprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub embedding: EmbeddingSource,
    pub postprocess: bool,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant { embedding: EmbeddingSource::Adr, postprocess: true },
        Variant { embedding: EmbeddingSource::Adr, postprocess: false },
        Variant { embedding: EmbeddingSource::External, postprocess: true },
        Variant { embedding: EmbeddingSource::External, postprocess: false },
    ];

    pub fn name(&self) -> &'static str {
        match (self.embedding, self.postprocess) {
            (EmbeddingSource::Adr, true) => "adr-pp",
            (EmbeddingSource::Adr, false) => "adr-raw",
            (EmbeddingSource::External, true) => "external-pp",
            (EmbeddingSource::External, false) => "external-raw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                KidsError::Config(format!(
                    "unknown variant `{s}`; expected one of adr-pp, adr-raw, external-pp, external-raw"
                ))
            })
    }

    pub fn prior(&self) -> PriorKind {
        default_prior(self.embedding)
    }

    fn apply(&self, base: &AnalysisConfig) -> AnalysisConfig {
        AnalysisConfig {
            prior: self.prior(),
            postprocess: self.postprocess,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sessions: usize,
    /// Session `i` is generated with seed `base_seed + i`.
    pub base_seed: u64,
    pub session: SessionConfig,
    pub variants: Vec<Variant>,
    /// Prior kind and postprocessing are taken from each variant.
    pub analysis: AnalysisConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sessions: 20,
            base_seed: 0,
            session: SessionConfig::default(),
            variants: Variant::ALL.to_vec(),
            analysis: AnalysisConfig {
                prune_threshold: Some(crate::bocpd::DEFAULT_PRUNE_THRESHOLD),
                ..AnalysisConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub seed: u64,
    pub variant: String,
    pub detection: DetectionMetrics,
    pub pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub embedding: EmbeddingSource,
    pub prior: PriorKind,
    pub postprocess: bool,
    pub sessions: usize,
    pub mean_ppv: f64,
    pub mean_se: f64,
    pub mean_f1: f64,
    /// Mean over the sessions where R is defined.
    pub mean_r: Option<f64>,
    pub r_sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub summaries: Vec<VariantSummary>,
    pub sessions: Vec<SessionScore>,
}

impl SweepReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant.name())
    }
}

/// Score every variant on the same seeded sessions. Sessions run in parallel;
/// results keep session-then-variant order.
pub fn run_variant_sweep(config: &SweepConfig) -> Result<SweepReport> {
    if config.sessions == 0 {
        return Err(KidsError::Config("a sweep needs at least one session".into()));
    }
    if config.variants.is_empty() {
        return Err(KidsError::Config("a sweep needs at least one variant".into()));
    }
    config.session.validate()?;
    for v in &config.variants {
        v.apply(&config.analysis).validate()?;
    }
    let per_session: Vec<Vec<SessionScore>> = (0..config.sessions)
        .into_par_iter()
        .map(|i| {
            let seed = config.base_seed.wrapping_add(i as u64);
            let session = generate_session(&config.session.with_seed(seed))?;
            config
                .variants
                .iter()
                .map(|v| {
                    let a = analyze(&session.series.points, &v.apply(&config.analysis), Some(&session.ground_truth))?;
                    let ev = a.evaluation.expect("labels supplied");
                    Ok(SessionScore {
                        seed,
                        variant: v.name().to_string(),
                        detection: ev.detection,
                        pearson_r: ev.pearson_r,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let sessions: Vec<SessionScore> = per_session.into_iter().flatten().collect();

    let summaries = config
        .variants
        .iter()
        .map(|v| {
            let rows: Vec<&SessionScore> = sessions.iter().filter(|s| s.variant == v.name()).collect();
            let n = rows.len() as f64;
            let mean = |f: fn(&SessionScore) -> f64| rows.iter().map(|s| f(s)).sum::<f64>() / n;
            let rs: Vec<f64> = rows.iter().filter_map(|s| s.pearson_r).collect();
            VariantSummary {
                variant: v.name().to_string(),
                embedding: v.embedding,
                prior: v.prior(),
                postprocess: v.postprocess,
                sessions: rows.len(),
                mean_ppv: mean(|s| s.detection.ppv),
                mean_se: mean(|s| s.detection.se),
                mean_f1: mean(|s| s.detection.f1),
                mean_r: (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64),
                r_sessions: rs.len(),
            }
        })
        .collect();
    Ok(SweepReport {
        config: config.clone(),
        summaries,
        sessions,
    })
}

pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";
pub const SWEEP_SESSIONS_FILE: &str = "sweep_sessions.csv";
pub const SWEEP_REPORT_FILE: &str = "sweep_report.json";

pub fn render_sweep_summary_csv(report: &SweepReport) -> String {
    let mut out = String::from("variant,prior,postprocess,sessions,mean_ppv,mean_se,mean_f1,mean_r,r_sessions\n");
    for s in &report.summaries {
        let prior = match s.prior {
            PriorKind::Informative => "informative",
            PriorKind::NonInformative => "non-informative",
        };
        writeln!(
            out,
            "{},{prior},{},{},{},{},{},{},{}",
            s.variant,
            s.postprocess,
            s.sessions,
            s.mean_ppv,
            s.mean_se,
            s.mean_f1,
            opt(s.mean_r),
            s.r_sessions
        )
        .expect("writing to a String");
    }
    out
}

pub fn render_sweep_sessions_csv(report: &SweepReport) -> String {
    let mut out = String::from("seed,variant,tp,fp,fn,ppv,se,f1,r\n");
    for s in &report.sessions {
        let d = &s.detection;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.seed,
            s.variant,
            d.tp,
            d.fp,
            d.fn_,
            d.ppv,
            d.se,
            d.f1,
            opt(s.pearson_r)
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_sweep_outputs(dir: &Path, report: &SweepReport) -> Result<()> {
    write_all_atomic(
        dir,
        &[
            (SWEEP_SUMMARY_FILE, render_sweep_summary_csv(report).into_bytes()),
            (SWEEP_SESSIONS_FILE, render_sweep_sessions_csv(report).into_bytes()),
            (SWEEP_REPORT_FILE, to_json(report)?.into_bytes()),
        ],
    )
}
