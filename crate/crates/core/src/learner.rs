//! Single-step PPO over per-role rollout buffers.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ReceiverNet, SenderNet};
use crate::image::Image;
use crate::numerics::{
    categorical_entropy, gaussian_entropy, gaussian_logprob, Adam, NumericsError, ParamSet, Tape, Tensor, Var,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Sender,
    Receiver,
}

/// Role-specific observation and action of a transition.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Receiver { image: Image, source_flag: f64, action: usize },
    Sender { state: usize, raw: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub payload: Payload,
    pub logprob_old: f64,
    pub value_old: f64,
    pub reward: f64,
}

impl Transition {
    pub fn role(&self) -> Role {
        match self.payload {
            Payload::Receiver { .. } => Role::Receiver,
            Payload::Sender { .. } => Role::Sender,
        }
    }
}

/// Transitions of a single role awaiting an update.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    role: Role,
    items: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn new(role: Role) -> Self {
        Self { role, items: Vec::new() }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn push(&mut self, t: Transition) -> Result<(), NumericsError> {
        if t.role() != self.role {
            return Err(NumericsError::Contract(format!(
                "{:?} transition pushed into {:?} buffer",
                t.role(),
                self.role
            )));
        }
        self.items.push(t);
        Ok(())
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub lr: f64,
    pub update_epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub advantage_norm: bool,
    /// Unused by single-step bandits.
    pub gamma: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            lr: 3e-4,
            update_epochs: 4,
            minibatch: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            advantage_norm: true,
            gamma: 1.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(format!("ppo.clip_eps must be in (0, 1), got {}", self.clip_eps));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("ppo.lr must be positive, got {}", self.lr));
        }
        if self.update_epochs == 0 {
            return Err("ppo.update_epochs must be >= 1".into());
        }
        if self.minibatch == 0 {
            return Err("ppo.minibatch must be >= 1".into());
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err("ppo.entropy_coef and ppo.value_coef must be >= 0".into());
        }
        Ok(())
    }
}

/// `reward - value_old`, optionally standardized (std floored at 1e-8).
pub fn compute_advantages(batch: &[Transition], normalize: bool) -> Result<Vec<f64>, NumericsError> {
    if batch.is_empty() {
        return Err(NumericsError::Usage("advantages of an empty batch".into()));
    }
    let mut adv: Vec<f64> = batch.iter().map(|t| t.reward - t.value_old).collect();
    if normalize {
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-8);
        adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
    Ok(adv)
}

/// Per-sample tape outputs of a policy on a batch, each `[B]`.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    pub logprob: Var,
    pub value: Var,
    pub entropy: Var,
}

/// A network trainable by [`ppo_update`].
pub trait Policy {
    fn role(&self) -> Role;
    fn param_set(&self) -> &ParamSet;
    fn param_set_mut(&mut self) -> &mut ParamSet;
    fn evaluate(&self, tape: &mut Tape<'_>, batch: &[&Transition]) -> Result<Evaluation, NumericsError>;
    /// Runs after every optimizer step.
    fn after_step(&mut self) {}
}

fn role_error(expected: Role) -> NumericsError {
    NumericsError::Contract(format!("batch contains a transition of the wrong role (expected {expected:?})"))
}

impl Policy for ReceiverNet {
    fn role(&self) -> Role {
        Role::Receiver
    }

    fn param_set(&self) -> &ParamSet {
        self.params()
    }

    fn param_set_mut(&mut self) -> &mut ParamSet {
        self.params_mut()
    }

    fn evaluate(&self, tape: &mut Tape<'_>, batch: &[&Transition]) -> Result<Evaluation, NumericsError> {
        let mut images = Vec::with_capacity(batch.len());
        let mut flags = Vec::with_capacity(batch.len());
        let mut actions = Vec::with_capacity(batch.len());
        for t in batch {
            match &t.payload {
                Payload::Receiver { image, source_flag, action } => {
                    images.push(image);
                    flags.push(*source_flag);
                    actions.push(*action);
                }
                Payload::Sender { .. } => return Err(role_error(Role::Receiver)),
            }
        }
        let (logits, value) = self.forward_tape(tape, &images, &flags)?;
        let logp = tape.log_softmax(logits)?;
        let logprob = tape.gather(logp, &actions)?;
        let entropy = categorical_entropy(tape, logp)?;
        Ok(Evaluation { logprob, value, entropy })
    }
}

impl Policy for SenderNet {
    fn role(&self) -> Role {
        Role::Sender
    }

    fn param_set(&self) -> &ParamSet {
        self.params()
    }

    fn param_set_mut(&mut self) -> &mut ParamSet {
        self.params_mut()
    }

    fn evaluate(&self, tape: &mut Tape<'_>, batch: &[&Transition]) -> Result<Evaluation, NumericsError> {
        let mut states = Vec::with_capacity(batch.len());
        let mut raws = Vec::with_capacity(batch.len());
        for t in batch {
            match &t.payload {
                Payload::Sender { state, raw } => {
                    states.push(*state);
                    raws.push(raw.clone());
                }
                Payload::Receiver { .. } => return Err(role_error(Role::Sender)),
            }
        }
        let (mean, logstd, value) = self.forward_tape(tape, &states)?;
        let sample = Tensor::from_rows(&raws);
        let logprob = gaussian_logprob(tape, mean, logstd, &sample)?;
        let entropy = gaussian_entropy(tape, logstd, batch.len())?;
        Ok(Evaluation { logprob, value, entropy })
    }

    fn after_step(&mut self) {
        self.clamp_logstd();
    }
}

/// `min(r A, clip(r, 1-eps, 1+eps) A)` for one sample.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Clipped-surrogate PPO loss with value and entropy terms, recorded on `tape`.
pub fn ppo_loss(
    tape: &mut Tape<'_>,
    eval: Evaluation,
    logprob_old: &[f64],
    advantages: &[f64],
    rewards: &[f64],
    cfg: &PpoConfig,
) -> Result<Var, NumericsError> {
    let old = tape.input(Tensor::from_vec(logprob_old.to_vec()));
    let adv = tape.input(Tensor::from_vec(advantages.to_vec()));
    let ret = tape.input(Tensor::from_vec(rewards.to_vec()));

    let log_ratio = tape.sub(eval.logprob, old)?;
    let ratio = tape.exp(log_ratio)?;
    let unclipped = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)?;
    let clipped = tape.mul(clipped, adv)?;
    let surrogate = tape.minimum(unclipped, clipped)?;
    let policy_loss = tape.mean(surrogate)?;
    let policy_loss = tape.scale(policy_loss, -1.0)?;

    let err = tape.sub(eval.value, ret)?;
    let err = tape.square(err)?;
    let value_loss = tape.mean(err)?;
    let value_loss = tape.scale(value_loss, cfg.value_coef)?;

    let entropy = tape.mean(eval.entropy)?;
    let entropy = tape.scale(entropy, -cfg.entropy_coef)?;

    let loss = tape.add(policy_loss, value_loss)?;
    tape.add(loss, entropy)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateMetrics {
    /// Buffer held fewer than one minibatch; nothing changed.
    pub skipped: bool,
    pub samples: usize,
    pub loss: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    /// Largest `|ratio - 1|` over the buffer before the first optimizer step.
    pub initial_ratio_max_dev: f64,
}

/// Runs `update_epochs` passes of shuffled minibatches and clears the buffer.
/// An underfull buffer is left untouched and reported as skipped.
pub fn ppo_update<P: Policy, R: Rng + ?Sized>(
    policy: &mut P,
    optimizer: &mut Adam,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateMetrics, NumericsError> {
    if buffer.role() != policy.role() {
        return Err(role_error(policy.role()));
    }
    let n = buffer.len();
    if n < cfg.minibatch || n == 0 {
        return Ok(UpdateMetrics { skipped: true, samples: n, ..UpdateMetrics::default() });
    }
    let items = buffer.items();
    let adv = compute_advantages(items, cfg.advantage_norm)?;

    let mut ratio_dev: f64 = 0.0;
    let mut entropy_sum = 0.0;
    for chunk in (0..n).collect::<Vec<_>>().chunks(cfg.minibatch) {
        let batch: Vec<&Transition> = chunk.iter().map(|&i| &items[i]).collect();
        let mut tape = Tape::new(policy.param_set());
        let eval = policy.evaluate(&mut tape, &batch)?;
        for (lp, t) in tape.value(eval.logprob).data().iter().zip(&batch) {
            ratio_dev = ratio_dev.max(((lp - t.logprob_old).exp() - 1.0).abs());
        }
        entropy_sum += tape.value(eval.entropy).data().iter().sum::<f64>();
    }

    let mut order: Vec<usize> = (0..n).collect();
    let (mut loss_sum, mut steps, mut clipped, mut seen) = (0.0, 0usize, 0usize, 0usize);
    for _ in 0..cfg.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| &items[i]).collect();
            let old: Vec<f64> = batch.iter().map(|t| t.logprob_old).collect();
            let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
            let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            let grads = {
                let mut tape = Tape::new(policy.param_set());
                let eval = policy.evaluate(&mut tape, &batch)?;
                for (lp, o) in tape.value(eval.logprob).data().iter().zip(&old) {
                    if ((lp - o).exp() - 1.0).abs() > cfg.clip_eps {
                        clipped += 1;
                    }
                }
                seen += batch.len();
                let loss = ppo_loss(&mut tape, eval, &old, &a, &rewards, cfg)?;
                loss_sum += tape.value(loss).item();
                tape.backward(loss)?
            };
            policy.param_set_mut().accumulate(&grads);
            optimizer.step(policy.param_set_mut());
            policy.after_step();
            steps += 1;
        }
    }
    buffer.clear();
    Ok(UpdateMetrics {
        skipped: false,
        samples: n,
        loss: loss_sum / steps as f64,
        clip_fraction: clipped as f64 / seen as f64,
        entropy: entropy_sum / n as f64,
        initial_ratio_max_dev: ratio_dev,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::agents::{receiver_act, ConvArch, SenderArch};
    use crate::numerics::{gradcheck, AdamConfig};

    fn rt(reward: f64, value: f64) -> Transition {
        Transition {
            payload: Payload::Sender { state: 0, raw: vec![0.0; 10] },
            logprob_old: 0.0,
            value_old: value,
            reward,
        }
    }

    #[test]
    fn advantage_cases() {
        assert_eq!(compute_advantages(&[rt(1.0, 0.0)], false).unwrap(), vec![1.0]);
        let same = compute_advantages(&[rt(0.5, 0.0), rt(0.5, 0.0), rt(0.5, 0.0)], true).unwrap();
        assert!(same.iter().all(|&a| a == 0.0));
        let batch: Vec<Transition> = (0..17).map(|i| rt((i * i) as f64 * 0.1, i as f64 * 0.3)).collect();
        let adv = compute_advantages(&batch, true).unwrap();
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-6);
        assert!(matches!(compute_advantages(&[], true), Err(NumericsError::Usage(_))));
    }

    #[test]
    fn surrogate_arithmetic() {
        assert_eq!(clipped_surrogate(2.0, 1.0, 0.2), 1.2);
        assert_eq!(-clipped_surrogate(2.0, 1.0, 0.2), -1.2);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
    }

    #[test]
    fn ppo_loss_at_unit_ratio_is_negative_mean_advantage() {
        let params = ParamSet::new();
        let mut tape = Tape::new(&params);
        let lp = tape.input(Tensor::from_vec(vec![-0.3, -1.2, -2.0]));
        let value = tape.input(Tensor::from_vec(vec![0.0; 3]));
        let entropy = tape.input(Tensor::from_vec(vec![0.0; 3]));
        let cfg = PpoConfig { value_coef: 0.0, entropy_coef: 0.0, ..PpoConfig::default() };
        let adv = [0.5, -1.0, 2.0];
        let loss =
            ppo_loss(&mut tape, Evaluation { logprob: lp, value, entropy }, &[-0.3, -1.2, -2.0], &adv, &[0.0; 3], &cfg)
                .unwrap();
        assert!((tape.value(loss).item() + 0.5).abs() < 1e-12);

        let mut tape = Tape::new(&params);
        let lp = tape.input(Tensor::from_vec(vec![2f64.ln()]));
        let z = tape.input(Tensor::from_vec(vec![0.0]));
        let loss = ppo_loss(&mut tape, Evaluation { logprob: lp, value: z, entropy: z }, &[0.0], &[1.0], &[0.0], &cfg)
            .unwrap();
        assert!((tape.value(loss).item() + 1.2).abs() < 1e-12);
    }

    fn toy_images(rng: &mut impl Rng, n: usize) -> Vec<(Image, usize)> {
        (0..n)
            .map(|i| {
                let class = i % 2;
                let px = (0..64)
                    .map(|p| {
                        let left = p % 8 < 4;
                        let on = if class == 0 { left } else { !left };
                        (if on { 0.9 } else { 0.1 }) + rng.random_range(-0.05..0.05)
                    })
                    .collect();
                (Image::new(8, 8, px).unwrap(), class)
            })
            .collect()
    }

    const TINY: ConvArch = ConvArch { conv1: 3, conv2: 4, hidden: 8 };

    #[test]
    fn ppo_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = ReceiverNet::new(2, (8, 8), TINY, &mut rng);
        let data: Vec<(Image, usize)> = (0..6)
            .map(|i| (Image::new(8, 8, (0..64).map(|_| rng.random::<f64>()).collect()).unwrap(), i % 2))
            .collect();
        let outs = net.forward_batch(&data.iter().map(|(im, _)| im).collect::<Vec<_>>(), &[0.0; 6]).unwrap();
        let batch: Vec<Transition> = data
            .iter()
            .zip(&outs)
            .enumerate()
            .map(|(i, ((im, c), o))| Transition {
                payload: Payload::Receiver { image: im.clone(), source_flag: 0.0, action: (c + i) % 3 },
                logprob_old: o.probs[(c + i) % 3].ln() + 0.03 * (i as f64 - 2.5),
                value_old: o.value,
                reward: if i % 3 == 0 { 1.0 } else { -0.1 },
            })
            .collect();
        let adv = compute_advantages(&batch, true).unwrap();
        let refs: Vec<&Transition> = batch.iter().collect();
        let old: Vec<f64> = batch.iter().map(|t| t.logprob_old).collect();
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let cfg = PpoConfig::default();
        let err = gradcheck(net.params(), 1e-5, |tape| {
            let eval = net.evaluate(tape, &refs)?;
            ppo_loss(tape, eval, &old, &adv, &rewards, &cfg)
        })
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn sender_ppo_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = SenderNet::new(3, 1, SenderArch { hidden: 5 }, &mut rng);
        let batch: Vec<Transition> = (0..5)
            .map(|i| {
                let pol = net.policy(i % 3).unwrap();
                let raw: Vec<f64> = pol.mean.iter().map(|m| m + 0.3 * (i as f64 - 2.0)).collect();
                let (lp, _) = crate::numerics::gaussian_logprob_entropy(&pol.mean, &pol.logstd, &raw);
                Transition {
                    payload: Payload::Sender { state: i % 3, raw },
                    logprob_old: lp + 0.02,
                    value_old: pol.value,
                    reward: i as f64 * 0.25,
                }
            })
            .collect();
        let adv = compute_advantages(&batch, true).unwrap();
        let refs: Vec<&Transition> = batch.iter().collect();
        let old: Vec<f64> = batch.iter().map(|t| t.logprob_old).collect();
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let err = gradcheck(net.params(), 1e-5, |tape| {
            let eval = net.evaluate(tape, &refs)?;
            ppo_loss(tape, eval, &old, &adv, &rewards, &PpoConfig::default())
        })
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn buffers_never_mix_roles() {
        let mut buf = RolloutBuffer::new(Role::Receiver);
        assert!(matches!(buf.push(rt(0.0, 0.0)), Err(NumericsError::Contract(_))));
        assert!(buf.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut net = SenderNet::new(2, 1, SenderArch { hidden: 4 }, &mut rng);
        let mut opt = Adam::new(net.params(), AdamConfig::default());
        assert!(ppo_update(&mut net, &mut opt, &mut buf, &PpoConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn underfull_buffer_is_skipped_and_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = SenderNet::new(1, 1, SenderArch { hidden: 4 }, &mut rng);
        let before = net.params().clone();
        let mut opt = Adam::new(net.params(), AdamConfig::default());
        let mut buf = RolloutBuffer::new(Role::Sender);
        for _ in 0..10 {
            buf.push(rt(1.0, 0.0)).unwrap();
        }
        let m = ppo_update(&mut net, &mut opt, &mut buf, &PpoConfig::default(), &mut rng).unwrap();
        assert!(m.skipped);
        assert_eq!(buf.len(), 10);
        assert_eq!(format!("{:?}", net.params()), format!("{before:?}"));
    }

    fn collect(net: &ReceiverNet, data: &[(Image, usize)], rng: &mut ChaCha8Rng) -> RolloutBuffer {
        let imgs: Vec<&Image> = data.iter().map(|(im, _)| im).collect();
        let outs = net.forward_batch(&imgs, &vec![0.0; imgs.len()]).unwrap();
        let mut buf = RolloutBuffer::new(Role::Receiver);
        for ((im, c), o) in data.iter().zip(outs) {
            let s = receiver_act(&o.probs, rng).unwrap();
            let reward = if s.action == *c {
                1.0
            } else if s.action == 2 {
                0.0
            } else {
                -0.1
            };
            buf.push(Transition {
                payload: Payload::Receiver { image: im.clone(), source_flag: 0.0, action: s.action },
                logprob_old: s.logprob,
                value_old: o.value,
                reward,
            })
            .unwrap();
        }
        buf
    }

    fn expected_reward(net: &ReceiverNet, data: &[(Image, usize)]) -> f64 {
        let imgs: Vec<&Image> = data.iter().map(|(im, _)| im).collect();
        let outs = net.forward_batch(&imgs, &vec![0.0; imgs.len()]).unwrap();
        data.iter().zip(outs).map(|((_, c), o)| o.probs[*c] - 0.1 * o.probs[1 - *c]).sum::<f64>() / data.len() as f64
    }

    #[test]
    fn first_inner_epoch_ratio_is_one_and_metrics_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut net = ReceiverNet::new(2, (8, 8), TINY, &mut rng);
        let data = toy_images(&mut rng, 64);
        let mut buf = collect(&net, &data, &mut rng);
        let mut opt = Adam::new(net.params(), AdamConfig::default());
        let cfg = PpoConfig { minibatch: 16, ..PpoConfig::default() };
        let m = ppo_update(&mut net, &mut opt, &mut buf, &cfg, &mut rng).unwrap();
        assert!(!m.skipped);
        assert!(m.initial_ratio_max_dev < 1e-9, "{}", m.initial_ratio_max_dev);
        assert!((0.0..=1.0).contains(&m.clip_fraction));
        assert!(buf.is_empty());
    }

    #[test]
    fn zero_advantage_leaves_parameters_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut net = ReceiverNet::new(2, (8, 8), TINY, &mut rng);
        let data = toy_images(&mut rng, 32);
        let mut buf = collect(&net, &data, &mut rng);
        for t in &mut buf.items {
            t.reward = t.value_old;
        }
        let before = net.params().clone();
        let mut opt = Adam::new(net.params(), AdamConfig::default());
        let cfg = PpoConfig { minibatch: 8, entropy_coef: 0.0, value_coef: 0.0, ..PpoConfig::default() };
        ppo_update(&mut net, &mut opt, &mut buf, &cfg, &mut rng).unwrap();
        for ((_, a), (_, b)) in before.iter().zip(net.params().iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn toy_bandit_reward_rises_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut net = ReceiverNet::new(2, (8, 8), TINY, &mut rng);
        let train = toy_images(&mut rng, 128);
        let eval = toy_images(&mut rng, 64);
        let mut opt = Adam::new(net.params(), AdamConfig { lr: 5e-4, ..AdamConfig::default() });
        let cfg = PpoConfig { lr: 5e-4, minibatch: 32, ..PpoConfig::default() };
        let mut curve = vec![expected_reward(&net, &eval)];
        for _ in 0..20 {
            let mut buf = collect(&net, &train, &mut rng);
            ppo_update(&mut net, &mut opt, &mut buf, &cfg, &mut rng).unwrap();
            curve.push(expected_reward(&net, &eval));
        }
        assert!(curve.windows(2).all(|w| w[1] >= w[0]), "{curve:?}");
        assert!(curve[20] > curve[0] + 0.3, "{curve:?}");
    }
}
