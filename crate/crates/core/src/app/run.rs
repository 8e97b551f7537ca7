//! Run directories: config copy, manifest, metrics and checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::metrics::{truncate_after, MetricsWriter, METRICS_SCHEMA_VERSION};
use super::AppError;
use crate::agents::ClassifierNet;
use crate::data::{Dataset, DATA_DIR_ENV};
use crate::game::{EpochMetrics, Game, Records, RunConfig};
use crate::numerics::Tensor;
use crate::probe::{default_threshold, train_probe};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(format!("epoch_{epoch:05}.ckpt"))
}

/// `dataset.root`, else `$SIGG_DATA_DIR`, else `./data`.
pub fn data_root(cfg: &RunConfig) -> PathBuf {
    cfg.dataset
        .root
        .clone()
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, AppError> {
    let spec = cfg.dataset.spec().map_err(AppError::Usage)?;
    Ok(Dataset::load(&spec, &data_root(cfg))?)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io { path: path.to_path_buf(), source }
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    metrics_schema: u32,
    checkpoint_format: u16,
    seed: u64,
    regime: &'a str,
    deterministic: bool,
    epochs: usize,
}

fn prepare_dir(cfg: &RunConfig, out: &Path, deterministic: bool) -> Result<(), AppError> {
    fs::create_dir_all(out.join(CHECKPOINT_DIR)).map_err(io_err(out))?;
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.to_toml()).map_err(io_err(&cfg_path))?;
    let manifest = Manifest {
        program: "sigg",
        version: env!("CARGO_PKG_VERSION"),
        metrics_schema: METRICS_SCHEMA_VERSION,
        checkpoint_format: super::checkpoint::FORMAT_VERSION,
        seed: cfg.seed,
        regime: cfg.regime().as_str(),
        deterministic,
        epochs: cfg.epochs,
    };
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Probe trained on its own random stream so the game stream is unaffected.
pub fn fit_probe(cfg: &RunConfig, dataset: &Dataset) -> Result<Option<crate::probe::Probe>, AppError> {
    if !cfg.probe_enabled {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    Ok(Some(train_probe(dataset, &cfg.probe, &mut rng)?))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Recorded in the manifest; runs are always single-threaded and seeded.
    pub deterministic: bool,
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub metrics: Vec<EpochMetrics>,
    pub checkpoints: Vec<PathBuf>,
    pub probe_accuracy: Option<f64>,
}

pub fn train(cfg: &RunConfig, out: &Path, opts: &TrainOptions) -> Result<TrainSummary, AppError> {
    let dataset = load_dataset(cfg)?;
    train_on(cfg, dataset, out, opts, |_| {})
}

/// Trains on an already loaded dataset, calling `on_epoch` after each
/// metrics row is flushed.
pub fn train_on(
    cfg: &RunConfig,
    dataset: Dataset,
    out: &Path,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainSummary, AppError> {
    let cfg = cfg.clone().validate().map_err(AppError::Usage)?;
    prepare_dir(&cfg, out, opts.deterministic)?;
    let metrics_path = out.join(METRICS_FILE);
    let mut probe_accuracy = None;
    let mut game = match &opts.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.seed != cfg.seed {
                return Err(AppError::Usage(format!(
                    "checkpoint was written with seed {}, config has seed {}",
                    ckpt.seed, cfg.seed
                )));
            }
            let game = Game::from_records(cfg.clone(), dataset, &ckpt.records)?;
            if metrics_path.exists() {
                truncate_after(&metrics_path, game.epoch()).map_err(io_err(&metrics_path))?;
            }
            game
        }
        None => {
            if metrics_path.exists() {
                fs::remove_file(&metrics_path).map_err(io_err(&metrics_path))?;
            }
            let probe = fit_probe(&cfg, &dataset)?;
            probe_accuracy = probe.as_ref().map(|p| p.heldout_accuracy);
            Game::new(cfg.clone(), dataset, probe.map(|p| p.net))?
        }
    };
    let mut writer = MetricsWriter::open(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut summary = TrainSummary { metrics: Vec::new(), checkpoints: Vec::new(), probe_accuracy };
    while game.epoch() < cfg.epochs {
        let m = game.run_epoch()?;
        writer.append(&m).map_err(io_err(&metrics_path))?;
        on_epoch(&m);
        let e = game.epoch();
        if e == cfg.epochs || (cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0) {
            let path = checkpoint_path(out, e);
            let ckpt = Checkpoint { seed: cfg.seed, epoch: e as u64, records: game.to_records() };
            save_checkpoint(&ckpt, &path)?;
            summary.checkpoints.push(path);
        }
        summary.metrics.push(m);
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeSummary {
    pub heldout_accuracy: f64,
    pub threshold: f64,
    pub steps: usize,
    pub classes: Vec<u32>,
}

pub const PROBE_REPORT: &str = "probe.json";
pub const PROBE_WEIGHTS: &str = "probe.ckpt";

pub fn probe(cfg: &RunConfig, out: &Path) -> Result<ProbeSummary, AppError> {
    let dataset = load_dataset(cfg)?;
    probe_on(cfg, &dataset, out)
}

/// Trains the iconicity probe alone and stores its weights and report.
pub fn probe_on(cfg: &RunConfig, dataset: &Dataset, out: &Path) -> Result<ProbeSummary, AppError> {
    let cfg = RunConfig { probe_enabled: true, ..cfg.clone() }.validate().map_err(AppError::Usage)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let p = fit_probe(&cfg, dataset)?.expect("probe enabled");
    let summary = ProbeSummary {
        heldout_accuracy: p.heldout_accuracy,
        threshold: cfg.probe.threshold.unwrap_or_else(|| default_threshold(dataset.source())),
        steps: p.steps,
        classes: dataset.classes().to_vec(),
    };
    let report = out.join(PROBE_REPORT);
    let text = serde_json::to_string_pretty(&summary).expect("report serializes");
    fs::write(&report, text + "\n").map_err(io_err(&report))?;
    let weights = out.join(PROBE_WEIGHTS);
    save_checkpoint(&Checkpoint { seed: cfg.seed, epoch: 0, records: probe_records(&p.net) }, &weights)?;
    Ok(summary)
}

pub fn probe_records(net: &ClassifierNet) -> Records {
    let mut r = Records::new();
    let a = net.arch();
    r.push("meta/probe_arch", Tensor::from_vec(vec![a.conv1 as f64, a.conv2 as f64, a.hidden as f64]));
    for (name, p) in net.params().iter() {
        r.push(format!("probe/{name}"), p.value.clone());
    }
    r
}
