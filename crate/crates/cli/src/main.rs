use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use defectsynth::evaluate::{evaluate, EvalConfig, EvalError};
use defectsynth::export::StatsConfig;
use defectsynth::pipeline::{inspect_record, render_one, run_generate, run_stats, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "defectsynth", version, about = "Synthesize and score lithographic defect datasets")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a dataset.
    Generate {
        /// TOML config; defaults apply to anything left out.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute density and size-histogram CSVs of a dataset.
    Stats {
        dataset: PathBuf,
        /// Output directory (default: <dataset>/stats).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config whose [stats] section to use (default: <dataset>/config.toml).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a prediction file against one exported split.
    Evaluate {
        gt: PathBuf,
        predictions: PathBuf,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, default_value_t = 0.0)]
        score_threshold: f64,
        /// Row label in the text table.
        #[arg(long, default_value = "predictions")]
        label: String,
    },
    /// Render a single layout file (PGM or PBM).
    RenderOne {
        layout: PathBuf,
        /// Output path; `.pbm` (and `.pgm` with --gray) is appended.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        gray: bool,
    },
    /// Re-verify a stored defect record against its base layout.
    InspectRecord { dataset: PathBuf, id: String },
}

enum Failure {
    Config(String),
    Pipeline(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Pipeline(e.to_string())
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidConfig(_) => Failure::Config(format!("[evaluate] {e}")),
            _ => Failure::Pipeline(format!("[evaluate] {e}")),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| Failure::Config("[config] no output directory: pass --out or set out_dir".into()))?;
            let summary = run_generate(&cfg, &out, cli.workers)?;
            print!("{}", summary.table());
            println!("dataset written to {}", out.display());
        }
        Command::Stats { dataset, out, config } => {
            let cfg_path = config.unwrap_or_else(|| dataset.join("config.toml"));
            let stats = if cfg_path.exists() {
                PipelineConfig::load(&cfg_path)?.stats
            } else {
                StatsConfig::default()
            };
            let out = out.unwrap_or_else(|| dataset.join("stats"));
            let report = run_stats(&dataset, &stats, &out)?;
            println!(
                "{} instances, {} mask pixels (density total {}), {} below / {} above histogram range",
                report.instances,
                report.instance_pixels,
                report.density_total(),
                report.underflow,
                report.overflow
            );
            println!("stats written to {}", out.display());
        }
        Command::Evaluate {
            gt,
            predictions,
            out,
            iou,
            score_threshold,
            label,
        } => {
            let cfg = EvalConfig {
                iou_threshold: iou,
                score_threshold,
            };
            let report = evaluate(&gt, &predictions, &cfg)?;
            print!("{}", report.table(&label));
            if let Some(dir) = out {
                report.write(&dir.join("report.json"), &dir.join("report.txt"), &label)?;
            }
        }
        Command::RenderOne {
            layout,
            out,
            config,
            seed,
            gray,
        } => {
            let cfg = load_config(config.as_deref())?;
            let img = render_one(&layout, &cfg.render, seed, &out, gray)?;
            println!(
                "rendered {} to {}x{} ({} foreground pixels)",
                layout.display(),
                img.width,
                img.height,
                img.binary.area()
            );
        }
        Command::InspectRecord { dataset, id } => {
            let report = inspect_record(&dataset, &id)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if !report.verified {
                return Err(Failure::Pipeline(format!("[injection] record `{id}` does not re-verify")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("defectsynth: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(m)) => {
            eprintln!("defectsynth: {m}");
            ExitCode::from(3)
        }
    }
}
