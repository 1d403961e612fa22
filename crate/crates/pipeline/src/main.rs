//! `vad`: batch CLI for the anomaly-detection pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 provider
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vad_pipeline::config::PipelineConfig;
use vad_pipeline::error::Result;
use vad_pipeline::pipeline::{
    run_compress, run_detect, run_eval, run_sampler, run_synth, Provenance,
};

#[derive(Parser)]
#[command(
    name = "vad",
    version,
    about = "Zero-shot video anomaly detection pipeline: pseudo-anomaly sampling, \
             token compression, semantic projection, and frame/pixel scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Relabel a segmentation-style source manifest into pseudo-anomaly
    /// samples.
    Sample(SampleArgs),
    /// Compress a binary token dump with density-guided reverse attention.
    Compress(CompressArgs),
    /// Generate synthetic scenes with planted anomalies and ground truth.
    Synth(SynthArgs),
    /// Score a manifest: encode, compress, extract semantics, project,
    /// decode, and evaluate.
    Detect(DetectArgs),
    /// Recompute metrics from written score bundles and a ground-truth
    /// manifest.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source manifest (JSON-lines).
    #[arg(long)]
    input: PathBuf,
    /// Output exposure manifest (JSON-lines).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Binary token dump: [rows][cols] little-endian u64, then row-major f64.
    #[arg(long)]
    input: PathBuf,
    /// Compressed tokens, same binary convention.
    #[arg(long)]
    output: PathBuf,
    /// JSON sidecar (indices, assignment, densities).
    #[arg(long)]
    sidecar: PathBuf,
    /// Neighbor count override.
    #[arg(long)]
    k: Option<usize>,
    /// Kept-fraction override, in (0, 1].
    #[arg(long)]
    ratio: Option<f64>,
    /// Zero-distance guard override.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving clips/ and manifest.jsonl.
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    scenes: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest of samples to score (JSON-lines with categories).
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving bundles/, pixels/, metrics.json, scores.csv.
    #[arg(long)]
    output_dir: PathBuf,
    /// Score synthetic scenes against their known clean background instead
    /// of running the decoder; refuses manifests without scene provenance.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory previously written by `detect`.
    #[arg(long)]
    scores: PathBuf,
    /// Ground-truth manifest (JSON-lines).
    #[arg(long)]
    truth: PathBuf,
    /// Metrics JSON output path.
    #[arg(long)]
    output: PathBuf,
    /// Optional per-frame score curve CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        CliCommand::Sample(args) => {
            let config = load_config(&args.config)?;
            let n = run_sampler(&config, &args.input, &args.output)?;
            println!("wrote {n} exposure samples to {}", args.output.display());
        }
        CliCommand::Compress(args) => {
            let config = load_config(&args.config)?;
            let mut comp = config.compression_config();
            if let Some(k) = args.k {
                comp.k = k;
            }
            if let Some(ratio) = args.ratio {
                comp.ratio = ratio;
            }
            if let Some(epsilon) = args.epsilon {
                comp.epsilon = epsilon;
            }
            let provenance = Provenance::new("compress", config.hash(), config.run.seed);
            let sidecar =
                run_compress(&args.input, &args.output, &args.sidecar, &comp, provenance)?;
            println!(
                "compressed {} tokens to {} ({}), sidecar {}",
                sidecar.tokens_total,
                sidecar.tokens_forwarded,
                args.output.display(),
                args.sidecar.display()
            );
        }
        CliCommand::Synth(args) => {
            let config = load_config(&args.config)?;
            let manifest = run_synth(
                &config,
                &args.output_dir,
                args.scenes,
                args.frames,
                args.height,
                args.width,
            )?;
            println!(
                "wrote {} scenes, manifest {}",
                args.scenes,
                manifest.display()
            );
        }
        CliCommand::Detect(args) => {
            let config = load_config(&args.config)?;
            let report = run_detect(&config, &args.input, &args.output_dir, args.oracle)?;
            println!(
                "scored {} videos ({} frames): frame_auc={} frame_ap={} pixel_auc={}",
                report.n_videos,
                report.n_frames,
                fmt_metric(report.frame_auc),
                fmt_metric(report.frame_ap),
                fmt_metric(report.pixel_auc),
            );
        }
        CliCommand::Eval(args) => {
            let report = run_eval(&args.scores, &args.truth, &args.output, args.csv.as_deref())?;
            println!(
                "evaluated {} videos: frame_auc={} frame_ap={} pixel_auc={}",
                report.n_videos,
                fmt_metric(report.frame_auc),
                fmt_metric(report.frame_ap),
                fmt_metric(report.pixel_auc),
            );
        }
    }
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}"))
        .unwrap_or_else(|| "n/a".to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
