//! `kids`: command-line front end for inactivity detection and segmentation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kids_core::bocpd::{PriorKind, DEFAULT_NONINFORMATIVE_EPSILON, DEFAULT_PRUNE_THRESHOLD};
use kids_core::io::{
    read_labels_csv, read_segments_csv, render_axis_angle_csv, render_embedding_csv,
    render_labels_csv, write_all_atomic,
};
use kids_core::kinematics::EmbeddingSource;
use kids_core::metrics::{evaluate, DEFAULT_TOLERANCE};
use kids_core::pipeline::{
    render_metrics_csv, render_sweep_summary_csv, run_pipeline, run_variant_sweep, to_json,
    write_sweep_outputs, AnalysisConfig, PipelineConfig, PriorOverrides, SweepConfig, Variant,
    DEFAULT_DECIMATION, DEFAULT_HAZARD, METRICS_FILE,
};
use kids_core::segmentation::{DEFAULT_LOG_THRESHOLD, DEFAULT_MIN_RUN};
use kids_core::simharness::{generate_session, generate_session_axis_angle, SessionConfig};
use kids_core::synthgen::{
    build_cube_mesh, export_axes_csv, export_dataset_csv, generate_angle_set,
    generate_synthetic_dataset, project_vertices, Projection,
};
use kids_core::{KidsError, Result};

const OUT_ENV: &str = "KIDS_OUT_DIR";

#[derive(Parser)]
#[command(name = "kids", version, about = "Inactivity detection and segmentation from orientation data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic axis-angle dataset from a projected cube mesh.
    Synthgen(SynthgenArgs),
    /// Write one seeded synthetic session with ground-truth labels.
    Simulate(SimulateArgs),
    /// Run the pipeline on one orientation or embedding file.
    Run(RunArgs),
    /// Compare pipeline variants over seeded synthetic sessions.
    Sweep(SweepArgs),
    /// Score a segments file against a labels file.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthgenArgs {
    /// Vertices per cube-face edge.
    #[arg(long, default_value_t = 15)]
    resolution: usize,
    /// Number of rotation angles per axis.
    #[arg(long, default_value_t = 36)]
    angles: usize,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Ellipsoidal)]
    projection: ProjectionArg,
    /// Dataset CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of the projected axes alone.
    #[arg(long)]
    axes_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Euclidean,
    Ellipsoidal,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, default_value_t = 12)]
    postures: usize,
    #[arg(long, default_value_t = 2)]
    replications: usize,
    #[arg(long, default_value_t = 20)]
    duration_min: usize,
    #[arg(long, default_value_t = 60)]
    duration_max: usize,
    #[arg(long, default_value_t = 1)]
    transition_min: usize,
    #[arg(long, default_value_t = 3)]
    transition_max: usize,
    /// Within-posture embedding noise.
    #[arg(long, default_value_t = SessionConfig::default().noise_sigma)]
    sigma: f64,
    /// Minimum distance between posture means, in units of sigma.
    #[arg(long, default_value_t = SessionConfig::default().min_separation)]
    separation: f64,
    #[arg(long, default_value_t = 5)]
    tail: usize,
}

impl SessionArgs {
    fn config(&self, seed: u64, decimation: usize) -> SessionConfig {
        SessionConfig {
            postures: self.postures,
            replications: self.replications,
            duration_min: self.duration_min,
            duration_max: self.duration_max,
            transition_min: self.transition_min,
            transition_max: self.transition_max,
            noise_sigma: self.sigma,
            min_separation: self.separation,
            tail: self.tail,
            decimation,
            seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    session: SessionArgs,
    /// Raw samples per downsampled sample in the axis-angle rendering.
    #[arg(long, default_value_t = DEFAULT_DECIMATION)]
    decimation: usize,
    /// Skip the raw 30 Hz axis-angle file.
    #[arg(long)]
    embedding_only: bool,
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Adr,
    External,
}

impl From<SourceArg> for EmbeddingSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Adr => EmbeddingSource::Adr,
            SourceArg::External => EmbeddingSource::External,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Informative,
    NonInformative,
}

impl From<PriorArg> for PriorKind {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::Informative => PriorKind::Informative,
            PriorArg::NonInformative => PriorKind::NonInformative,
        }
    }
}

#[derive(Args)]
struct AnalysisArgs {
    /// Changepoint probability per step.
    #[arg(long, default_value_t = DEFAULT_HAZARD)]
    hazard: f64,
    /// Regularisation of the non-informative prior scatter.
    #[arg(long, default_value_t = DEFAULT_NONINFORMATIVE_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_LOG_THRESHOLD)]
    log_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_RUN)]
    min_run: f64,
    /// Matching tolerance in downsampled samples.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: usize,
    /// Drop hypotheses below this posterior mass (bare flag: 1e-12).
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-12")]
    prune: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    prior_mean: Option<Vec<f64>>,
    #[arg(long)]
    prior_kappa: Option<f64>,
    #[arg(long)]
    prior_dof: Option<f64>,
    /// Prior scatter becomes this multiple of the identity.
    #[arg(long)]
    prior_scatter: Option<f64>,
}

impl AnalysisArgs {
    fn overrides(&self) -> PriorOverrides {
        PriorOverrides {
            mean: self.prior_mean.as_ref().map(|m| [m[0], m[1], m[2]]),
            kappa: self.prior_kappa,
            dof: self.prior_dof,
            scatter_scale: self.prior_scatter,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Input CSV: t,qw,qx,qy,qz | t,x1,x2,x3,x4 | t,o1,o2,o3.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth labels CSV (segment_start,segment_end).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Treat an embedding file as ADR (shell-checked) or external.
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    #[arg(long, default_value_t = DEFAULT_DECIMATION)]
    decimation: usize,
    #[arg(long, value_enum)]
    prior: Option<PriorArg>,
    #[arg(long)]
    no_postprocess: bool,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Also write the dense posterior matrix as CSV.
    #[arg(long)]
    dense_posterior: bool,
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 20)]
    sessions: usize,
    /// Seed of the first session; session i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of adr-pp, adr-raw, external-pp, external-raw.
    #[arg(long, value_delimiter = ',', default_value = "adr-pp,adr-raw,external-pp,external-raw")]
    variants: Vec<String>,
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Keep every hypothesis instead of pruning at 1e-12.
    #[arg(long)]
    no_prune: bool,
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    segments: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: usize,
    /// Also write evaluation.json and metrics.csv here.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

fn synthgen(a: &SynthgenArgs) -> Result<()> {
    let projection = match a.projection {
        ProjectionArg::Euclidean => Projection::Euclidean,
        ProjectionArg::Ellipsoidal => Projection::Ellipsoidal,
    };
    let mesh = build_cube_mesh(a.resolution).map_err(into_config)?;
    let axes = project_vertices(&mesh, projection)?;
    let angles = generate_angle_set(a.angles).map_err(into_config)?;
    let dataset = generate_synthetic_dataset(&axes, &angles)?;
    if let Some(parent) = nonempty_parent(&a.out) {
        std::fs::create_dir_all(parent).map_err(|e| KidsError::Io { path: parent.into(), source: e })?;
    }
    export_dataset_csv(&dataset, &a.out)?;
    if let Some(p) = &a.axes_out {
        export_axes_csv(&axes, p)?;
    }
    println!("axes={} orientations={}", dataset.axis_count, dataset.len());
    Ok(())
}

fn nonempty_parent(p: &Path) -> Option<&Path> {
    p.parent().filter(|d| !d.as_os_str().is_empty())
}

fn into_config(e: KidsError) -> KidsError {
    match e {
        KidsError::InvalidInput(m) => KidsError::Config(m),
        other => other,
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = a.session.config(a.seed, a.decimation);
    let session = if a.embedding_only {
        generate_session(&cfg)?
    } else {
        generate_session_axis_angle(&cfg)?
    };
    let mut files = vec![
        ("embedding.csv", render_embedding_csv(&session.series).into_bytes()),
        ("labels.csv", render_labels_csv(&session.ground_truth).into_bytes()),
        ("session.json", to_json(&cfg)?.into_bytes()),
    ];
    if let Some(raw) = &session.raw {
        files.push(("axis_angle.csv", render_axis_angle_csv(&raw.samples, &raw.timestamps).into_bytes()));
    }
    write_all_atomic(&a.out, &files)?;
    println!(
        "segments={} samples={} raw_samples={}",
        session.ground_truth.len(),
        session.series.len(),
        session.raw.as_ref().map_or(0, |r| r.samples.len())
    );
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let mut cfg = PipelineConfig::new(&a.input, &a.out);
    cfg.labels = a.labels.clone();
    cfg.embedding_source = a.source.map(Into::into);
    cfg.decimation = a.decimation;
    cfg.prior = a.prior.map(Into::into);
    cfg.prior_overrides = a.analysis.overrides();
    cfg.epsilon = a.analysis.epsilon;
    cfg.hazard = a.analysis.hazard;
    cfg.postprocess = !a.no_postprocess;
    cfg.log_threshold = a.analysis.log_threshold;
    cfg.min_run = a.analysis.min_run;
    cfg.tolerance = a.analysis.tolerance;
    cfg.prune_threshold = a.analysis.prune;
    cfg.dense_posterior = a.dense_posterior;
    let report = run_pipeline(&cfg)?;
    print!("steps={} segments={}", report.trace.steps, report.segments.len());
    if let Some(ev) = &report.evaluation {
        let d = &ev.detection;
        print!(" ppv={:.4} se={:.4} f1={:.4}", d.ppv, d.se, d.f1);
        match ev.pearson_r {
            Some(r) => print!(" r={r:.4}"),
            None => print!(" r=undefined"),
        }
    }
    println!();
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let variants = a.variants.iter().map(|v| Variant::parse(v.trim())).collect::<Result<Vec<_>>>()?;
    let cfg = SweepConfig {
        sessions: a.sessions,
        base_seed: a.seed,
        session: a.session.config(a.seed, DEFAULT_DECIMATION),
        variants,
        analysis: AnalysisConfig {
            prior_overrides: a.analysis.overrides(),
            epsilon: a.analysis.epsilon,
            hazard: a.analysis.hazard,
            log_threshold: a.analysis.log_threshold,
            min_run: a.analysis.min_run,
            tolerance: a.analysis.tolerance,
            prune_threshold: if a.no_prune {
                None
            } else {
                Some(a.analysis.prune.unwrap_or(DEFAULT_PRUNE_THRESHOLD))
            },
            ..AnalysisConfig::default()
        },
    };
    let report = run_variant_sweep(&cfg)?;
    write_sweep_outputs(&a.out, &report)?;
    print!("{}", render_sweep_summary_csv(&report));
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let segments = read_segments_csv(&a.segments)?;
    let labels = read_labels_csv(&a.labels)?;
    let report = evaluate(&segments, &labels, a.tolerance).map_err(into_config)?;
    let json = to_json(&report)?;
    if let Some(dir) = &a.out {
        write_all_atomic(
            dir,
            &[
                ("evaluation.json", json.clone().into_bytes()),
                (METRICS_FILE, render_metrics_csv(&[("eval".to_string(), &report)]).into_bytes()),
            ],
        )?;
    }
    print!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Synthgen(a) => synthgen(a),
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
