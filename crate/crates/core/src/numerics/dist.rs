use rand::Rng;

use super::{softmax_row, NumericsError, Tape, Tensor, Var};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row-wise softmax of a `[B, K]` tensor (a rank-1 tensor is treated as one row).
pub fn softmax(logits: &Tensor) -> Tensor {
    let cols = *logits.shape().last().unwrap_or(&0);
    let mut out = logits.clone();
    if cols == 0 {
        return out;
    }
    for (src, dst) in logits.data().chunks(cols).zip(out.data_mut().chunks_mut(cols)) {
        softmax_row(src, dst);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoricalSample {
    pub action: usize,
    pub logprob: f64,
    pub entropy: f64,
}

pub fn categorical_entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Draws one index from `probs` by inverse-CDF sampling.
pub fn categorical_sample<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<CategoricalSample, NumericsError> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || (total - 1.0).abs() > 1e-6 || probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(NumericsError::Contract(format!("categorical probabilities must form a simplex (sum {total})")));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut action = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc && p > 0.0 {
            action = i;
            break;
        }
    }
    // floating-point slack can leave us past the last positive entry
    while probs[action] == 0.0 && action > 0 {
        action -= 1;
    }
    Ok(CategoricalSample { action, logprob: probs[action].ln(), entropy: categorical_entropy_of(probs) })
}

/// Diagonal-Gaussian log-density and entropy.
pub fn gaussian_logprob_entropy(mean: &[f64], logstd: &[f64], sample: &[f64]) -> (f64, f64) {
    assert!(mean.len() == logstd.len() && mean.len() == sample.len());
    let mut logp = 0.0;
    let mut ent = 0.0;
    for ((&m, &ls), &x) in mean.iter().zip(logstd).zip(sample) {
        let z = (x - m) * (-ls).exp();
        logp += -0.5 * z * z - ls - 0.5 * LN_2PI;
        ent += ls + 0.5 * (LN_2PI + 1.0);
    }
    (logp, ent)
}

/// Row-wise entropy `-sum p log p` from `[B, K]` log-probabilities.
pub fn categorical_entropy(tape: &mut Tape<'_>, logp: Var) -> Result<Var, NumericsError> {
    let p = tape.exp(logp)?;
    let plogp = tape.mul(p, logp)?;
    let s = tape.sum_rows(plogp)?;
    tape.scale(s, -1.0)
}

/// Per-row diagonal-Gaussian log-density of `sample: [B, P]` under
/// `mean: [B, P]` and a shared `logstd: [P]`.
pub fn gaussian_logprob(tape: &mut Tape<'_>, mean: Var, logstd: Var, sample: &Tensor) -> Result<Var, NumericsError> {
    let rows = tape.value(mean).shape()[0];
    let x = tape.input(sample.clone());
    let ls = tape.broadcast_rows(logstd, rows)?;
    let diff = tape.sub(x, mean)?;
    let neg_ls = tape.scale(ls, -1.0)?;
    let inv_std = tape.exp(neg_ls)?;
    let z = tape.mul(diff, inv_std)?;
    let z2 = tape.square(z)?;
    let half = tape.scale(z2, -0.5)?;
    let t = tape.sub(half, ls)?;
    let t = tape.add_scalar(t, -0.5 * LN_2PI)?;
    tape.sum_rows(t)
}

/// Entropy of the shared-logstd Gaussian, repeated for `rows` rows.
pub fn gaussian_entropy(tape: &mut Tape<'_>, logstd: Var, rows: usize) -> Result<Var, NumericsError> {
    let ls = tape.broadcast_rows(logstd, rows)?;
    let t = tape.add_scalar(ls, 0.5 * (LN_2PI + 1.0))?;
    tape.sum_rows(t)
}
