//! Iconicity probe: a classifier trained once on true environment images,
//! then frozen and used to score how much agent signals resemble them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ClassifierNet, ConvArch};
use crate::data::{Dataset, Source, Split};
use crate::image::Image;
use crate::numerics::{categorical_entropy_of, Adam, AdamConfig, NumericsError, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Held-out accuracy to reach; defaults per dataset source when absent.
    pub threshold: Option<f64>,
    /// Steps trained before the threshold may stop training.
    pub min_steps: usize,
    pub max_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub eval_every: usize,
    pub arch: ConvArch,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            min_steps: 1000,
            max_steps: 3000,
            batch: 64,
            lr: 1e-3,
            eval_every: 100,
            arch: ConvArch::default(),
        }
    }
}

pub fn default_threshold(source: Source) -> f64 {
    match source {
        Source::Mnist => 0.95,
        Source::Cifar100 => 0.45,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("probe reached held-out accuracy {achieved:.4} after {steps} steps, below the required {threshold}")]
    BelowThreshold { achieved: f64, threshold: f64, steps: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub net: ClassifierNet,
    pub heldout_accuracy: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IconicityReport {
    pub mean_entropy: f64,
    /// Fraction of signals whose probe argmax equals the sender's target.
    pub top1_match: f64,
    /// Per-referent top-1 match rate; `None` where no signal targeted it.
    pub per_class_match: Vec<Option<f64>>,
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i)
}

const EVAL_CHUNK: usize = 256;

/// Top-1 accuracy of `net` on `split`.
pub fn split_accuracy(net: &ClassifierNet, dataset: &Dataset, split: Split) -> Result<f64, NumericsError> {
    let items: Vec<_> = dataset.split_items(split).collect();
    if items.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in items.chunks(EVAL_CHUNK) {
        let imgs: Vec<&Image> = chunk.iter().map(|it| &it.image).collect();
        let probs = net.probs(&imgs)?;
        correct += chunk.iter().enumerate().filter(|(i, it)| argmax(probs.row(*i)) == it.label as usize).count();
    }
    Ok(correct as f64 / items.len() as f64)
}

/// Minibatch cross-entropy training on the training split until, after at
/// least `min_steps`, the held-out accuracy reaches the threshold; fails once
/// `max_steps` is spent.
pub fn train_probe<R: Rng + ?Sized>(dataset: &Dataset, cfg: &ProbeConfig, rng: &mut R) -> Result<Probe, ProbeError> {
    let threshold = cfg.threshold.unwrap_or_else(|| default_threshold(dataset.source()));
    let mut net = ClassifierNet::new(dataset.num_classes(), dataset.dims(), cfg.arch, rng);
    let mut opt = Adam::new(net.params(), AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let pool: Vec<usize> = dataset.split_indices(Split::Train).iter().flatten().copied().collect();
    let mut achieved = 0.0;
    for step in 1..=cfg.max_steps {
        let batch: Vec<usize> = (0..cfg.batch).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let grads = {
            let imgs: Vec<&Image> = batch.iter().map(|&i| &dataset.item(i).image).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| dataset.item(i).label as usize).collect();
            let mut tape = Tape::new(net.params());
            let logits = net.logits_tape(&mut tape, &imgs)?;
            let logp = tape.log_softmax(logits)?;
            let picked = tape.gather(logp, &labels)?;
            let nll = tape.mean(picked)?;
            let loss = tape.scale(nll, -1.0)?;
            tape.backward(loss)?
        };
        net.params_mut().accumulate(&grads);
        opt.step(net.params_mut());
        if step >= cfg.min_steps && (step % cfg.eval_every == 0 || step == cfg.max_steps) {
            achieved = split_accuracy(&net, dataset, Split::Heldout)?;
            if achieved >= threshold {
                return Ok(Probe { net, heldout_accuracy: achieved, steps: step });
            }
        }
    }
    Err(ProbeError::BelowThreshold { achieved, threshold, steps: cfg.max_steps })
}

/// Mean entropy of the probe's predictive distribution over `signals`.
pub fn probe_entropy(probe: &ClassifierNet, signals: &[&Image]) -> Result<f64, NumericsError> {
    if signals.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for chunk in signals.chunks(EVAL_CHUNK) {
        let probs = probe.probs(chunk)?;
        total += (0..chunk.len()).map(|i| categorical_entropy_of(probs.row(i))).sum::<f64>();
    }
    Ok(total / signals.len() as f64)
}

/// Entropy plus target agreement for signals drawn toward `targets`.
pub fn iconicity_report(
    probe: &ClassifierNet,
    signals: &[&Image],
    targets: &[usize],
) -> Result<IconicityReport, NumericsError> {
    assert_eq!(signals.len(), targets.len());
    let k = probe.classes();
    let (mut ent, mut hits) = (0.0, 0usize);
    let mut per = vec![(0usize, 0usize); k];
    for (chunk, tchunk) in signals.chunks(EVAL_CHUNK).zip(targets.chunks(EVAL_CHUNK)) {
        let probs = probe.probs(chunk)?;
        for (i, &t) in tchunk.iter().enumerate() {
            ent += categorical_entropy_of(probs.row(i));
            let hit = argmax(probs.row(i)) == t;
            hits += usize::from(hit);
            per[t].0 += usize::from(hit);
            per[t].1 += 1;
        }
    }
    let n = signals.len().max(1) as f64;
    Ok(IconicityReport {
        mean_entropy: ent / n,
        top1_match: hits as f64 / n,
        per_class_match: per.into_iter().map(|(h, c)| (c > 0).then(|| h as f64 / c as f64)).collect(),
    })
}
