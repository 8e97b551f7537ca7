use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sigg_core::app::{self, SignGridSpec, TrainOptions};
use sigg_core::data::download_instructions;
use sigg_core::game::EpochMetrics;

#[derive(Parser)]
#[command(name = "sigg", version, about = "Signification-game simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a population and write metrics and checkpoints to a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record that the run was requested in deterministic mode.
        #[arg(long)]
        deterministic: bool,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Suppress per-epoch progress lines.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Train only the iconicity probe and report its held-out accuracy.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tile mean-parameter signals from checkpoints into a PNG grid.
    ExportSigns {
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated checkpoint epochs (grid columns).
        #[arg(long, value_delimiter = ',', required = true)]
        epochs: Vec<usize>,
        /// Comma-separated referent indices (grid rows).
        #[arg(long, value_delimiter = ',', required = true)]
        referents: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long, default_value_t = 0)]
        agent: usize,
    },
    /// Draw success, probe-entropy and sensitivity curves from metrics.csv.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        /// Output path ending in .svg or .png.
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain where datasets must be placed.
    DataHelp,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn progress(total: usize) -> impl FnMut(&EpochMetrics) {
    move |m| {
        eprintln!(
            "epoch {}/{} env_acc {} comm {} ({} rounds) probe_H {}",
            m.epoch,
            total,
            fmt_opt(m.env_accuracy),
            fmt_opt(m.comm_success),
            m.comm_rounds,
            fmt_opt(m.probe_entropy_mean)
        )
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, deterministic, resume, quiet } => {
            let cfg = app::parse_config(&config)?;
            let dataset =
                app::run::load_dataset(&cfg).map_err(|e| anyhow::anyhow!("{e}\n\n{}", download_instructions()))?;
            let opts = TrainOptions { deterministic, resume };
            let mut report = progress(cfg.epochs);
            let summary = app::train_on(&cfg, dataset, &out, &opts, |m| {
                if !quiet {
                    report(m)
                }
            })
            .with_context(|| format!("training into {}", out.display()))?;
            if let Some(acc) = summary.probe_accuracy {
                println!("probe held-out accuracy {acc:.4}");
            }
            println!("{} epochs written to {}", summary.metrics.len(), out.join(app::run::METRICS_FILE).display());
        }
        Command::Probe { config, out } => {
            let cfg = app::parse_config(&config)?;
            let s = app::probe(&cfg, &out)?;
            println!(
                "probe held-out accuracy {:.4} (threshold {:.2}) after {} steps",
                s.heldout_accuracy, s.threshold, s.steps
            );
        }
        Command::ExportSigns { run, epochs, referents, out, scale, agent } => {
            let spec = SignGridSpec { referents, epochs, scale, agent };
            let img = app::export_sign_grid(&run, &spec, &out)?;
            println!("wrote {}x{} grid to {}", img.width, img.height, out.display());
        }
        Command::Plot { metrics, out } => {
            app::plot(&metrics, &out)?;
            println!("wrote {}", out.display());
        }
        Command::DataHelp => print!("{}", download_instructions()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
