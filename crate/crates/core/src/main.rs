//! Command-line entry point. Diagnostics go to stderr; data goes to files or
//! stdout in machine-readable form; exit code 0 iff no errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use promptense::config::RunConfig;
use promptense::pipeline;

#[derive(Parser)]
#[command(
    name = "promptense",
    version,
    about = "Uncertainty-aware binary extraction from free-text reports via prompt ensembles"
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true, default_value = "promptense.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// Restrict to one aggregation method.
    #[arg(long)]
    method: Option<String>,
    /// Uncertainty threshold override (cases with uncertainty >= threshold
    /// are excluded).
    #[arg(long)]
    threshold: Option<f64>,
    /// Exclusion cap fraction override.
    #[arg(long)]
    cap: Option<f64>,
    /// Histogram bin count override.
    #[arg(long)]
    bins: Option<usize>,
    /// Run seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and binarize the dataset, select labels, write the manifest.
    Ingest,
    /// Query the full ensemble through the response cache (resumable).
    Run {
        /// Print how many requests would be sent, without sending any.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Tune per-label linear prompt weights on the held-out subset.
    Optimize {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the cross-label weight MLP and write the model file.
    TrainMlp {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compute metrics tables, median-uncertainty summary and histograms.
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate a synthetic corpus file for offline experiments.
    GenCorpus {
        /// Output path for the line-delimited JSON corpus.
        #[arg(long, default_value = "corpus.jsonl")]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        reports: usize,
        #[arg(long, default_value_t = 20250)]
        seed: u64,
    },
}

fn apply_overrides(config: &mut RunConfig, o: &Overrides) -> promptense::Result<()> {
    if let Some(method) = &o.method {
        promptense::aggregator::Method::parse(method)?;
        config.run.methods = vec![method.clone()];
    }
    if let Some(t) = o.threshold {
        config.run.threshold = t;
    }
    if let Some(c) = o.cap {
        config.run.cap = c;
    }
    if let Some(b) = o.bins {
        config.run.bins = b;
    }
    if let Some(s) = o.seed {
        config.run.seed = s;
    }
    config.validate()
}

fn run(cli: Cli) -> promptense::Result<()> {
    match cli.command {
        Command::Ingest => {
            let config = RunConfig::load(&cli.config)?;
            let manifest = pipeline::cmd_ingest(&config)?;
            eprintln!(
                "ingested {} reports, {} labels; manifest at {}",
                manifest.report_count,
                manifest.labels.len(),
                config.output.manifest_path().display()
            );
            println!("{}", serde_json::to_string(&manifest)?);
        }
        Command::Run { dry_run, overrides } => {
            let mut config = RunConfig::load(&cli.config)?;
            apply_overrides(&mut config, &overrides)?;
            let summary = pipeline::cmd_run(&config, dry_run)?;
            if dry_run {
                eprintln!(
                    "dry run: {} total requests, {} already cached, {} would be sent",
                    summary.total_requests, summary.cached_before, summary.sent
                );
            } else {
                eprintln!(
                    "run complete: {} reports x {} labels x {} templates; {} newly cached",
                    summary.reports, summary.labels, summary.templates, summary.sent
                );
            }
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Optimize { overrides } => {
            let mut config = RunConfig::load(&cli.config)?;
            apply_overrides(&mut config, &overrides)?;
            let weights = pipeline::cmd_optimize(&config)?;
            eprintln!(
                "optimized linear weights for {} labels; written to {}",
                weights.len(),
                config.output.linear_weights_path().display()
            );
        }
        Command::TrainMlp { overrides } => {
            let mut config = RunConfig::load(&cli.config)?;
            apply_overrides(&mut config, &overrides)?;
            let path = pipeline::cmd_train_mlp(&config)?;
            eprintln!("model written to {}", path.display());
        }
        Command::Evaluate { overrides } => {
            let mut config = RunConfig::load(&cli.config)?;
            apply_overrides(&mut config, &overrides)?;
            let outputs = pipeline::cmd_evaluate(&config)?;
            if outputs.degenerate_flags > 0 {
                eprintln!(
                    "warning: {} (method, label, table) cells flagged degenerate and excluded from macro averages",
                    outputs.degenerate_flags
                );
            }
            for file in &outputs.files {
                eprintln!("wrote {}", file.display());
            }
        }
        Command::GenCorpus { out, reports, seed } => {
            let dataset = promptense::corpus::synth::generate_corpus(
                seed,
                reports,
                &promptense::corpus::synth::DEFAULT_LABELS,
                &promptense::corpus::synth::DEFAULT_PREVALENCE,
            );
            let text = promptense::corpus::synth::to_jsonl(&dataset);
            std::fs::write(&out, text)
                .map_err(|e| promptense::Error::io(&out, e))?;
            eprintln!("wrote {} reports to {}", reports, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
