//! Pictographic inference: the sender scores candidate pictographs against its
//! own classifier, the receiver inverts that score with Bayes' rule, and each
//! agent tracks how recognisable its own pictographs are per referent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{sender_emit, Emission, ReceiverNet, SenderNet};
use crate::image::Image;
use crate::numerics::{categorical_sample, NumericsError};
use crate::render::CanvasSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    #[default]
    Uniform,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub k_candidates: usize,
    pub m_samples: usize,
    pub select_temperature: f64,
    pub denom_floor: f64,
    pub prior: Prior,
    pub ablate_pref: bool,
    pub ema_decay: f64,
    /// Keep PPO updates on the sender alongside pictograph selection.
    pub sender_ppo: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            k_candidates: 8,
            m_samples: 64,
            select_temperature: 0.1,
            denom_floor: 1e-6,
            prior: Prior::Uniform,
            ablate_pref: false,
            ema_decay: 0.99,
            sender_ppo: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k_candidates == 0 {
            return Err("inference.k_candidates must be >= 1".into());
        }
        if self.m_samples == 0 {
            return Err("inference.m_samples must be >= 1".into());
        }
        if !(self.select_temperature > 0.0) {
            return Err(format!("inference.select_temperature must be > 0, got {}", self.select_temperature));
        }
        if !(self.denom_floor > 0.0) {
            return Err("inference.denom_floor must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err("inference.ema_decay must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Class probabilities over referents only (abstain removed, renormalized).
pub trait ClassifierView {
    fn referents(&self) -> usize;
    fn class_probs(&self, signals: &[&Image]) -> Result<Vec<Vec<f64>>, NumericsError>;
}

/// An agent's own receiver, read as if every input were a world image.
pub struct ReceiverView<'a>(pub &'a ReceiverNet);

impl ClassifierView for ReceiverView<'_> {
    fn referents(&self) -> usize {
        self.0.actions().classes
    }

    fn class_probs(&self, signals: &[&Image]) -> Result<Vec<Vec<f64>>, NumericsError> {
        let k = self.referents();
        Ok(self
            .0
            .forward_batch(signals, &vec![0.0; signals.len()])?
            .into_iter()
            .map(|out| {
                let mass: f64 = out.probs[..k].iter().sum();
                out.probs[..k].iter().map(|p| p / mass).collect()
            })
            .collect())
    }
}

/// `f_i / (sum_{j != i} f_j + eps)`.
pub fn p_send_from_probs(f: &[f64], target: usize, eps: f64) -> Result<f64, NumericsError> {
    if target >= f.len() {
        return Err(NumericsError::Usage(format!("referent {target} unknown (view covers {})", f.len())));
    }
    let others: f64 = f.iter().enumerate().filter(|&(j, _)| j != target).map(|(_, p)| p).sum();
    Ok(f[target] / (others + eps))
}

pub fn p_send_score(signal: &Image, target: usize, view: &dyn ClassifierView, eps: f64) -> Result<f64, NumericsError> {
    let f = view.class_probs(&[signal])?.remove(0);
    p_send_from_probs(&f, target, eps)
}

/// Softmax of `scores / temperature`.
pub fn selection_probs(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub emission: Emission,
    pub index: usize,
    pub scores: Vec<f64>,
}

/// Draws `k_candidates` pictographs and keeps one with probability
/// `softmax(score / temperature)`.
#[allow(clippy::too_many_arguments)]
pub fn choose_pictograph<R: Rng + ?Sized>(
    sender: &SenderNet,
    target: usize,
    view: &dyn ClassifierView,
    canvas: &CanvasSpec,
    noise: f64,
    cfg: &InferenceConfig,
    rng: &mut R,
) -> Result<Choice, NumericsError> {
    let mut candidates = (0..cfg.k_candidates)
        .map(|_| sender_emit(sender, target, canvas, noise, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let images: Vec<&Image> = candidates.iter().map(|c| &c.signal.image).collect();
    let scores = view
        .class_probs(&images)?
        .iter()
        .map(|f| p_send_from_probs(f, target, cfg.denom_floor))
        .collect::<Result<Vec<_>, _>>()?;
    let index = if candidates.len() == 1 {
        0
    } else {
        categorical_sample(&selection_probs(&scores, cfg.select_temperature), rng)?.action
    };
    Ok(Choice { emission: candidates.swap_remove(index), index, scores })
}

/// Per-referent sensitivity estimates, maintained by exponential averaging.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityTable {
    values: Vec<f64>,
    counts: Vec<u64>,
    decay: f64,
}

impl SensitivityTable {
    pub fn new(referents: usize, decay: f64) -> Self {
        Self { values: vec![1.0; referents], counts: vec![0; referents], decay }
    }

    pub fn from_parts(values: Vec<f64>, counts: Vec<u64>, decay: f64) -> Self {
        assert_eq!(values.len(), counts.len());
        Self { values, counts, decay }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn get(&self, r: usize) -> f64 {
        self.values[r]
    }
}

/// `entry <- decay * entry + (1 - decay) * fresh`.
pub fn update_sensitivity(table: &mut SensitivityTable, referent: usize, fresh: f64) -> Result<(), NumericsError> {
    if !(fresh > 0.0 && fresh.is_finite()) {
        return Err(NumericsError::Contract(format!("sensitivity estimate must be positive and finite, got {fresh}")));
    }
    let old = table.values[referent];
    table.values[referent] = table.decay * old + (1.0 - table.decay) * fresh;
    table.counts[referent] += 1;
    Ok(())
}

/// Mean recognition probability of each referent over `signals`.
pub fn recognition_integrals(view: &dyn ClassifierView, signals: &[&Image]) -> Result<Vec<f64>, NumericsError> {
    let probs = view.class_probs(signals)?;
    let mut acc = vec![0.0; view.referents()];
    for f in &probs {
        for (a, p) in acc.iter_mut().zip(f) {
            *a += p;
        }
    }
    Ok(acc.into_iter().map(|a| a / probs.len().max(1) as f64).collect())
}

/// Samples the agent's own pictographs (uniform targets), estimates each
/// referent's recognition integral and folds `1 / max(I, eps)` into `table`.
/// Returns the fresh estimates.
pub fn estimate_p_ref<R: Rng + ?Sized>(
    sender: &SenderNet,
    view: &dyn ClassifierView,
    canvas: &CanvasSpec,
    noise: f64,
    cfg: &InferenceConfig,
    table: &mut SensitivityTable,
    rng: &mut R,
) -> Result<Vec<f64>, NumericsError> {
    let k = view.referents();
    let samples = (0..cfg.m_samples)
        .map(|_| {
            let target = rng.random_range(0..k);
            sender_emit(sender, target, canvas, noise, rng).map(|e| e.signal.image)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let integrals = recognition_integrals(view, &samples.iter().collect::<Vec<_>>())?;
    let fresh: Vec<f64> = integrals.iter().map(|i| 1.0 / i.max(cfg.denom_floor)).collect();
    for (r, &v) in fresh.iter().enumerate() {
        update_sensitivity(table, r, v)?;
    }
    Ok(fresh)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub probs: Vec<f64>,
    /// All weights vanished and the prior was returned instead.
    pub fell_back: bool,
}

/// `P(r | s) ∝ P_send(s | r) P(r) P_ref(r)` over referents.
pub fn infer_referent(
    f: &[f64],
    prior: &[f64],
    table: &SensitivityTable,
    cfg: &InferenceConfig,
) -> Result<Posterior, NumericsError> {
    let k = f.len();
    if prior.len() != k || table.values.len() != k {
        return Err(NumericsError::Usage(format!(
            "view covers {k} referents, prior {}, table {}",
            prior.len(),
            table.values.len()
        )));
    }
    let mut w = Vec::with_capacity(k);
    for r in 0..k {
        let pref = if cfg.ablate_pref { 1.0 } else { table.values[r] };
        w.push(p_send_from_probs(f, r, cfg.denom_floor)? * prior[r] * pref);
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        log::warn!("inference weights vanished; falling back to the prior");
        let pt: f64 = prior.iter().sum();
        return Ok(Posterior { probs: prior.iter().map(|p| p / pt).collect(), fell_back: true });
    }
    Ok(Posterior { probs: w.into_iter().map(|x| x / total).collect(), fell_back: false })
}

/// Normalized prior over referents from observed class counts.
pub fn prior_from(kind: Prior, counts: &[u64]) -> Vec<f64> {
    let k = counts.len();
    match kind {
        Prior::Uniform => vec![1.0 / k as f64; k],
        Prior::Empirical => {
            let total = counts.iter().sum::<u64>() as f64 + k as f64;
            counts.iter().map(|&c| (c as f64 + 1.0) / total).collect()
        }
    }
}
