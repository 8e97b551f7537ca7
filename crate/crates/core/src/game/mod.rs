//! The signification game: a population of sender/receiver agents playing
//! environment bandit rounds and, once competent, communication rounds.

mod config;
mod state;

pub use config::{ClassRef, DatasetConfig, Regime, RunConfig, ScheduleConfig};
pub use state::{rng_from_bytes, rng_to_bytes, sender_from_records, Records};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agents::{
    receiver_act, receiver_forward, sender_emit, ActionSpace, ClassifierNet, Emission, ReceiverNet, SenderNet,
};
use crate::data::{BanditRound, DataError, Dataset, SourceKind};
use crate::inference::{
    choose_pictograph, estimate_p_ref, infer_referent, prior_from, ClassifierView, ReceiverView, SensitivityTable,
};
use crate::learner::{ppo_update, Payload, Role, RolloutBuffer, Transition, UpdateMetrics};
use crate::numerics::{categorical_entropy_of, categorical_sample, Adam, AdamConfig, NumericsError};
use crate::probe::iconicity_report;
use crate::render::{curvature_penalty, size_penalty, CanvasSpec, SplineParams};

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("state record {0} missing")]
    MissingRecord(String),
    #[error("state record {name} has shape {found:?}, expected {expected:?}")]
    RecordShape { name: String, expected: Vec<usize>, found: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Solipsistic,
    Ramp,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Payoff {
    Manipulation,
    Cooperation,
}

/// Communication begins the epoch after the rolling env accuracy first
/// reaches the plateau, or at `max_solipsistic_epochs`, whichever is sooner.
pub fn communication_start(history: &[f64], schedule: &ScheduleConfig) -> Option<usize> {
    let w = schedule.plateau_window;
    let plateau =
        (w..=history.len()).find(|&end| history[end - w..end].iter().sum::<f64>() / w as f64 >= schedule.plateau_acc);
    match (plateau, schedule.max_solipsistic_epochs) {
        (Some(p), Some(m)) => Some(p.min(m)),
        (p, m) => p.or(m),
    }
}

/// Phase and communication probability of 0-based `epoch`, given the env
/// accuracy of every earlier epoch.
pub fn phase(epoch: usize, history: &[f64], schedule: &ScheduleConfig) -> (Phase, f64) {
    let known = &history[..epoch.min(history.len())];
    let start = match communication_start(known, schedule) {
        Some(s) if s <= epoch => s,
        _ => return (Phase::Solipsistic, 0.0),
    };
    let t = epoch - start;
    if t >= schedule.ramp_epochs {
        (Phase::Full, schedule.comm_fraction_max)
    } else {
        (Phase::Ramp, schedule.comm_fraction_max * t as f64 / schedule.ramp_epochs as f64)
    }
}

/// Receiver reward for an environment round.
pub fn env_reward(action: usize, winning_arm: usize, actions: ActionSpace, wrong: f64) -> f64 {
    if actions.is_abstain(action) {
        0.0
    } else if action == winning_arm {
        1.0
    } else {
        wrong
    }
}

/// `(sender, receiver)` base rewards of a communication round.
pub fn comm_payoffs(payoff: Payoff, action: usize, target: usize, actions: ActionSpace, coop_wrong: f64) -> (f64, f64) {
    if actions.is_abstain(action) {
        return (0.0, 0.0);
    }
    let hit = action == target;
    match payoff {
        Payoff::Manipulation => (if hit { 1.0 } else { 0.0 }, -1.0),
        Payoff::Cooperation if hit => (1.0, 1.0),
        Payoff::Cooperation => (0.0, coop_wrong),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shaping {
    pub entropy_bonus: f64,
    pub lambda_curve: f64,
    pub lambda_size: f64,
}

/// Entropy is normalized by the log of the listener's action count.
pub fn reward_shaping(base: f64, success: bool, listener_probs: &[f64], params: &SplineParams, cfg: &Shaping) -> f64 {
    let bonus = if success && listener_probs.len() > 1 {
        let h = categorical_entropy_of(listener_probs);
        cfg.entropy_bonus * (1.0 - h / (listener_probs.len() as f64).ln())
    } else {
        0.0
    };
    base + bonus - cfg.lambda_curve * curvature_penalty(params) - cfg.lambda_size * size_penalty(params)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundOutcome {
    pub sender: Option<usize>,
    pub receiver: usize,
    pub target: usize,
    pub action: usize,
    /// Shaped.
    pub sender_reward: Option<f64>,
    pub receiver_reward: f64,
    pub source_kind: SourceKind,
}

impl RoundOutcome {
    pub fn success(&self) -> bool {
        self.action == self.target
    }
}

/// One member of the population. Nothing here is read by other agents.
#[derive(Clone, Debug)]
pub struct Agent {
    pub receiver: ReceiverNet,
    pub sender: SenderNet,
    pub receiver_opt: Adam,
    pub sender_opt: Adam,
    pub receiver_buffer: RolloutBuffer,
    pub sender_buffer: RolloutBuffer,
    pub sensitivity: SensitivityTable,
    /// Winning arms seen in environment rounds.
    pub label_counts: Vec<u64>,
}

impl Agent {
    pub fn new(classes: usize, dims: (usize, usize), cfg: &RunConfig, rng: &mut (impl Rng + ?Sized)) -> Self {
        let receiver = ReceiverNet::new(classes, dims, cfg.receiver_arch, rng);
        let sender = SenderNet::new(classes, cfg.curves(), cfg.sender_arch, rng);
        let adam = AdamConfig { lr: cfg.ppo.lr, ..AdamConfig::default() };
        Self {
            receiver_opt: Adam::new(receiver.params(), adam),
            sender_opt: Adam::new(sender.params(), adam),
            receiver,
            sender,
            receiver_buffer: RolloutBuffer::new(Role::Receiver),
            sender_buffer: RolloutBuffer::new(Role::Sender),
            sensitivity: SensitivityTable::new(classes, cfg.inference.ema_decay),
            label_counts: vec![0; classes],
        }
    }
}

/// Read-only settings shared by every round of an epoch.
#[derive(Clone, Copy, Debug)]
pub struct RoundContext<'a> {
    pub cfg: &'a RunConfig,
    pub canvas: &'a CanvasSpec,
    pub payoff: Payoff,
}

impl RoundContext<'_> {
    fn source_flag(&self, kind: SourceKind) -> f64 {
        match kind {
            SourceKind::Agent if self.cfg.regime().is_part2() => 1.0,
            _ => 0.0,
        }
    }

    pub fn shaping(&self) -> Shaping {
        Shaping {
            entropy_bonus: self.cfg.entropy_bonus,
            lambda_curve: self.cfg.lambda_curve,
            lambda_size: self.cfg.lambda_size,
        }
    }
}

pub fn play_env_round<R: Rng + ?Sized>(
    agent: &mut Agent,
    id: usize,
    round: &BanditRound,
    ctx: &RoundContext<'_>,
    rng: &mut R,
) -> Result<RoundOutcome, GameError> {
    let flag = ctx.source_flag(SourceKind::Environment);
    let out = receiver_forward(&agent.receiver, &round.context, flag)?;
    let pick = receiver_act(&out.probs, rng)?;
    let actions = agent.receiver.actions();
    let reward = env_reward(pick.action, round.winning_arm, actions, ctx.cfg.env_wrong_reward);
    agent.label_counts[round.winning_arm] += 1;
    agent.receiver_buffer.push(Transition {
        payload: Payload::Receiver { image: round.context.clone(), source_flag: flag, action: pick.action },
        logprob_old: pick.logprob,
        value_old: out.value,
        reward,
    })?;
    Ok(RoundOutcome {
        sender: None,
        receiver: id,
        target: round.winning_arm,
        action: pick.action,
        sender_reward: None,
        receiver_reward: reward,
        source_kind: SourceKind::Environment,
    })
}

/// Produces the signal for `target`. Inferential senders rank candidates with
/// their own receiver.
pub fn compose_signal<R: Rng + ?Sized>(
    sender: &Agent,
    target: usize,
    ctx: &RoundContext<'_>,
    rng: &mut R,
) -> Result<Emission, GameError> {
    let noise = ctx.cfg.noise_sigma;
    if ctx.cfg.regime().is_inferential() {
        let view = ReceiverView(&sender.receiver);
        let choice = choose_pictograph(&sender.sender, target, &view, ctx.canvas, noise, &ctx.cfg.inference, rng)?;
        Ok(choice.emission)
    } else {
        Ok(sender_emit(&sender.sender, target, ctx.canvas, noise, rng)?)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn play_comm_round<R: Rng + ?Sized>(
    sender: &mut Agent,
    receiver: &mut Agent,
    ids: (usize, usize),
    target: usize,
    ctx: &RoundContext<'_>,
    rng: &mut R,
) -> Result<RoundOutcome, GameError> {
    let cfg = ctx.cfg;
    let emission = compose_signal(sender, target, ctx, rng)?;
    let image = &emission.signal.image;
    let actions = receiver.receiver.actions();
    let flag = ctx.source_flag(SourceKind::Agent);

    let (action, listener_probs, receiver_reward) = if cfg.regime().is_inferential() {
        let f = ReceiverView(&receiver.receiver).class_probs(&[image])?.remove(0);
        let prior = prior_from(cfg.inference.prior, &receiver.label_counts);
        let post = infer_referent(&f, &prior, &receiver.sensitivity, &cfg.inference)?;
        let action = categorical_sample(&post.probs, rng)?.action;
        let (_, r) = comm_payoffs(ctx.payoff, action, target, actions, cfg.coop_wrong_reward);
        (action, post.probs, r)
    } else {
        let out = receiver_forward(&receiver.receiver, image, flag)?;
        let pick = receiver_act(&out.probs, rng)?;
        let (_, r) = comm_payoffs(ctx.payoff, pick.action, target, actions, cfg.coop_wrong_reward);
        receiver.receiver_buffer.push(Transition {
            payload: Payload::Receiver { image: image.clone(), source_flag: flag, action: pick.action },
            logprob_old: pick.logprob,
            value_old: out.value,
            reward: r,
        })?;
        (pick.action, out.probs, r)
    };

    let (base, _) = comm_payoffs(ctx.payoff, action, target, actions, cfg.coop_wrong_reward);
    let shaped = reward_shaping(base, action == target, &listener_probs, &emission.signal.params, &ctx.shaping());
    if !cfg.regime().is_inferential() || cfg.inference.sender_ppo {
        sender.sender_buffer.push(Transition {
            payload: Payload::Sender { state: target, raw: emission.raw },
            logprob_old: emission.logprob,
            value_old: emission.value,
            reward: shaped,
        })?;
    }
    Ok(RoundOutcome {
        sender: Some(ids.0),
        receiver: ids.1,
        target,
        action,
        sender_reward: Some(shaped),
        receiver_reward,
        source_kind: SourceKind::Agent,
    })
}

fn pair_mut<T>(items: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = items.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    /// 1-based count of completed epochs.
    pub epoch: usize,
    pub phase: Phase,
    pub payoff: Payoff,
    pub comm_probability: f64,
    pub env_rounds: usize,
    pub comm_rounds: usize,
    pub env_accuracy: Option<f64>,
    pub comm_success: Option<f64>,
    pub sender_reward_mean: Option<f64>,
    pub probe_entropy_mean: Option<f64>,
    pub probe_top1: Option<f64>,
    pub curvature_mean: f64,
    pub size_fraction_mean: f64,
    /// Agent 0's referent sensitivities; inferential regimes only.
    pub pref: Option<Vec<f64>>,
    pub updates_skipped: usize,
    pub clip_fraction_mean: f64,
}

impl EpochMetrics {
    pub fn agent_fraction(&self) -> f64 {
        self.comm_rounds as f64 / (self.comm_rounds + self.env_rounds).max(1) as f64
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Canvas used by senders: ink on black for Part I, dark ink on the dataset
/// mean for Part II, unless overridden.
pub fn canvas_for(cfg: &RunConfig, dataset: &Dataset) -> CanvasSpec {
    let (h, w) = dataset.dims();
    let part2 = cfg.regime().is_part2();
    let bg = cfg.dataset.background.unwrap_or(if part2 { dataset.mean_pixel() } else { 0.0 });
    let ink = cfg.dataset.ink.unwrap_or(if part2 { 0.0 } else { 1.0 });
    CanvasSpec::new(h, w, bg, ink)
}

/// Whole-population game state. Single-threaded and seeded, so two games
/// built from the same inputs produce identical metrics.
#[derive(Clone, Debug)]
pub struct Game {
    cfg: RunConfig,
    dataset: Dataset,
    canvas: CanvasSpec,
    agents: Vec<Agent>,
    probe: Option<ClassifierNet>,
    rng: ChaCha8Rng,
    epoch: usize,
    comm_epochs: usize,
    accuracy_history: Vec<f64>,
}

impl Game {
    pub fn new(cfg: RunConfig, dataset: Dataset, probe: Option<ClassifierNet>) -> Result<Self, GameError> {
        let cfg = cfg.validate().map_err(GameError::Config)?;
        if dataset.num_classes() != cfg.dataset.class_ids().map_err(GameError::Config)?.len() {
            return Err(GameError::Config("dataset classes differ from dataset.classes".into()));
        }
        if let Some(p) = &probe {
            if p.classes() != dataset.num_classes() || p.dims() != dataset.dims() {
                return Err(GameError::Config("probe does not match the dataset".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let k = dataset.num_classes();
        let agents = (0..cfg.population()).map(|_| Agent::new(k, dataset.dims(), &cfg, &mut rng)).collect();
        let canvas = canvas_for(&cfg, &dataset);
        Ok(Self { cfg, dataset, canvas, agents, probe, rng, epoch: 0, comm_epochs: 0, accuracy_history: Vec::new() })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn canvas(&self) -> &CanvasSpec {
        &self.canvas
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [Agent] {
        &mut self.agents
    }

    pub fn probe(&self) -> Option<&ClassifierNet> {
        self.probe.as_ref()
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn comm_epochs(&self) -> usize {
        self.comm_epochs
    }

    pub fn accuracy_history(&self) -> &[f64] {
        &self.accuracy_history
    }

    /// Part II skips the ramp and fixes the agent-sourced share at one half.
    pub fn schedule(&self) -> ScheduleConfig {
        let mut s = self.cfg.schedule;
        if self.cfg.regime().is_part2() {
            s.ramp_epochs = 0;
            s.comm_fraction_max = 0.5;
        }
        s
    }

    pub fn current_phase(&self) -> (Phase, f64) {
        phase(self.epoch, &self.accuracy_history, &self.schedule())
    }

    pub fn current_payoff(&self) -> Payoff {
        match self.cfg.regime() {
            Regime::Manipulation => Payoff::Manipulation,
            Regime::ManipulationThenCooperation if self.comm_epochs < self.cfg.switch_epoch => Payoff::Manipulation,
            _ => Payoff::Cooperation,
        }
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics, GameError> {
        let (phase, comm_prob) = self.current_phase();
        let payoff = self.current_payoff();
        let Game { cfg, dataset, canvas, agents, probe, rng, .. } = self;
        let ctx = RoundContext { cfg, canvas, payoff };
        let n = agents.len();
        let k = dataset.num_classes();

        let (mut env_hits, mut env_rounds, mut comm_hits, mut comm_rounds) = (0usize, 0usize, 0usize, 0usize);
        let mut sender_rewards = Vec::new();
        for _ in 0..cfg.rounds_per_epoch {
            let comm = phase != Phase::Solipsistic && rng.random::<f64>() < comm_prob;
            if comm {
                let s = rng.random_range(0..n);
                let mut r = rng.random_range(0..n - 1);
                if r >= s {
                    r += 1;
                }
                let target = rng.random_range(0..k);
                let (sa, ra) = pair_mut(agents, s, r);
                let out = play_comm_round(sa, ra, (s, r), target, &ctx, rng)?;
                comm_rounds += 1;
                comm_hits += usize::from(out.success());
                sender_rewards.extend(out.sender_reward);
            } else {
                let i = rng.random_range(0..n);
                let round = dataset.sample_bandit(rng);
                let out = play_env_round(&mut agents[i], i, &round, &ctx, rng)?;
                env_rounds += 1;
                env_hits += usize::from(out.success());
            }
        }

        let mut updates_skipped = 0;
        let mut clips = Vec::new();
        let mut tally = |m: UpdateMetrics| {
            if m.skipped {
                updates_skipped += 1;
            } else {
                clips.push(m.clip_fraction);
            }
        };
        for agent in agents.iter_mut() {
            tally(ppo_update(&mut agent.receiver, &mut agent.receiver_opt, &mut agent.receiver_buffer, &cfg.ppo, rng)?);
            tally(ppo_update(&mut agent.sender, &mut agent.sender_opt, &mut agent.sender_buffer, &cfg.ppo, rng)?);
        }

        let inferential = cfg.regime().is_inferential();
        if inferential && phase != Phase::Solipsistic {
            for agent in agents.iter_mut() {
                let view = ReceiverView(&agent.receiver);
                estimate_p_ref(
                    &agent.sender,
                    &view,
                    canvas,
                    cfg.noise_sigma,
                    &cfg.inference,
                    &mut agent.sensitivity,
                    rng,
                )?;
            }
        }

        // One signal per referent per agent.
        let mut eval = Vec::with_capacity(n * k);
        let mut targets = Vec::with_capacity(n * k);
        for agent in agents.iter() {
            for r in 0..k {
                eval.push(compose_signal(agent, r, &ctx, rng)?.signal);
                targets.push(r);
            }
        }
        let curvature: Vec<f64> = eval.iter().map(|s| curvature_penalty(&s.params)).collect();
        let sizes: Vec<f64> = eval.iter().map(|s| size_penalty(&s.params)).collect();
        let report = match probe {
            Some(p) => {
                let images: Vec<_> = eval.iter().map(|s| &s.image).collect();
                Some(iconicity_report(p, &images, &targets)?)
            }
            None => None,
        };

        let env_accuracy = (env_rounds > 0).then(|| env_hits as f64 / env_rounds as f64);
        let last = self.accuracy_history.last().copied().unwrap_or(0.0);
        self.accuracy_history.push(env_accuracy.unwrap_or(last));
        if phase != Phase::Solipsistic {
            self.comm_epochs += 1;
        }
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: self.epoch,
            phase,
            payoff,
            comm_probability: comm_prob,
            env_rounds,
            comm_rounds,
            env_accuracy,
            comm_success: (comm_rounds > 0).then(|| comm_hits as f64 / comm_rounds as f64),
            sender_reward_mean: mean(&sender_rewards),
            probe_entropy_mean: report.as_ref().map(|r| r.mean_entropy),
            probe_top1: report.as_ref().map(|r| r.top1_match),
            curvature_mean: mean(&curvature).unwrap_or(0.0),
            size_fraction_mean: mean(&sizes).unwrap_or(0.0),
            pref: inferential.then(|| self.agents[0].sensitivity.values().to_vec()),
            updates_skipped,
            clip_fraction_mean: mean(&clips).unwrap_or(0.0),
        })
    }
}
