//! Flattening of game state into named tensors and back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Game, GameError, RunConfig};
use crate::agents::{ClassifierNet, ConvArch, SenderNet};
use crate::data::Dataset;
use crate::image::Image;
use crate::inference::SensitivityTable;
use crate::learner::{Payload, Role, RolloutBuffer, Transition};
use crate::numerics::{Adam, ParamSet, Tensor};
use crate::render::CanvasSpec;

/// Ordered named tensors; order is preserved so serialization is stable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Records {
    items: Vec<(String, Tensor)>,
}

impl Records {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items(items: Vec<(String, Tensor)>) -> Self {
        Self { items }
    }

    pub fn items(&self) -> &[(String, Tensor)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        self.items.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, GameError> {
        self.items
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| GameError::MissingRecord(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.items.iter().any(|(n, _)| n == name)
    }

    fn shaped(&self, name: &str, shape: &[usize]) -> Result<&Tensor, GameError> {
        let t = self.get(name)?;
        if t.shape() != shape {
            return Err(GameError::RecordShape {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        Ok(t)
    }

    fn scalar(&self, name: &str) -> Result<f64, GameError> {
        Ok(self.shaped(name, &[1])?.data()[0])
    }

    fn vector(&self, name: &str) -> Result<&[f64], GameError> {
        let t = self.get(name)?;
        if t.shape().len() != 1 {
            return Err(GameError::RecordShape {
                name: name.into(),
                expected: vec![t.len()],
                found: t.shape().to_vec(),
            });
        }
        Ok(t.data())
    }
}

/// Seed, stream and word position as 56 byte values.
pub fn rng_to_bytes(rng: &ChaCha8Rng) -> Vec<u8> {
    let mut out = rng.get_seed().to_vec();
    out.extend(rng.get_stream().to_le_bytes());
    out.extend(rng.get_word_pos().to_le_bytes());
    out
}

pub fn rng_from_bytes(bytes: &[u8]) -> Option<ChaCha8Rng> {
    if bytes.len() != 56 {
        return None;
    }
    let mut rng = ChaCha8Rng::from_seed(bytes[..32].try_into().ok()?);
    rng.set_stream(u64::from_le_bytes(bytes[32..40].try_into().ok()?));
    rng.set_word_pos(u128::from_le_bytes(bytes[40..56].try_into().ok()?));
    Some(rng)
}

fn push_params(out: &mut Records, prefix: &str, set: &ParamSet) {
    for (name, p) in set.iter() {
        out.push(format!("{prefix}/{name}"), p.value.clone());
    }
}

fn load_params(records: &Records, prefix: &str, set: &mut ParamSet) -> Result<(), GameError> {
    for id in set.ids().collect::<Vec<_>>() {
        let name = format!("{prefix}/{}", set.name(id));
        let t = records.shaped(&name, set.value(id).shape())?.clone();
        set.get_mut(id).value = t;
    }
    Ok(())
}

fn push_adam(out: &mut Records, prefix: &str, adam: &Adam, set: &ParamSet) {
    for (state, (name, _)) in adam.states.iter().zip(set.iter()) {
        out.push(format!("{prefix}/{name}/m"), state.m.clone());
        out.push(format!("{prefix}/{name}/v"), state.v.clone());
    }
    out.push(format!("{prefix}/steps"), Tensor::from_vec(adam.states.iter().map(|s| s.step as f64).collect()));
}

fn load_adam(records: &Records, prefix: &str, adam: &mut Adam, set: &ParamSet) -> Result<(), GameError> {
    let steps = records.shaped(&format!("{prefix}/steps"), &[adam.states.len()])?.data().to_vec();
    for ((state, (name, _)), step) in adam.states.iter_mut().zip(set.iter()).zip(steps) {
        let shape = state.m.shape().to_vec();
        state.m = records.shaped(&format!("{prefix}/{name}/m"), &shape)?.clone();
        state.v = records.shaped(&format!("{prefix}/{name}/v"), &shape)?.clone();
        state.step = step as u64;
    }
    Ok(())
}

fn push_buffer(out: &mut Records, prefix: &str, buf: &RolloutBuffer, width: usize) {
    let n = buf.len();
    let mut obs = Vec::with_capacity(n * width);
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut lp, mut val, mut rew) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for t in buf.items() {
        match &t.payload {
            Payload::Receiver { image, source_flag, action } => {
                obs.extend_from_slice(image.pixels());
                a.push(*source_flag);
                b.push(*action as f64);
            }
            Payload::Sender { state, raw } => {
                obs.extend_from_slice(raw);
                a.push(*state as f64);
            }
        }
        lp.push(t.logprob_old);
        val.push(t.value_old);
        rew.push(t.reward);
    }
    out.push(format!("{prefix}/obs"), Tensor::new(vec![n, width], obs).expect("rows of equal width"));
    out.push(format!("{prefix}/a"), Tensor::from_vec(a));
    if buf.role() == Role::Receiver {
        out.push(format!("{prefix}/b"), Tensor::from_vec(b));
    }
    out.push(format!("{prefix}/logprob"), Tensor::from_vec(lp));
    out.push(format!("{prefix}/value"), Tensor::from_vec(val));
    out.push(format!("{prefix}/reward"), Tensor::from_vec(rew));
}

fn load_buffer(
    records: &Records,
    prefix: &str,
    role: Role,
    width: usize,
    dims: (usize, usize),
) -> Result<RolloutBuffer, GameError> {
    let obs = records.get(&format!("{prefix}/obs"))?;
    let n = obs.shape().first().copied().unwrap_or(0);
    let obs = records.shaped(&format!("{prefix}/obs"), &[n, width])?;
    let a = records.shaped(&format!("{prefix}/a"), &[n])?.data();
    let b = if role == Role::Receiver { Some(records.shaped(&format!("{prefix}/b"), &[n])?.data()) } else { None };
    let lp = records.shaped(&format!("{prefix}/logprob"), &[n])?.data();
    let val = records.shaped(&format!("{prefix}/value"), &[n])?.data();
    let rew = records.shaped(&format!("{prefix}/reward"), &[n])?.data();
    let mut buf = RolloutBuffer::new(role);
    for i in 0..n {
        let row = obs.data()[i * width..(i + 1) * width].to_vec();
        let payload = match b {
            Some(b) => Payload::Receiver {
                image: Image::new(dims.0, dims.1, row).map_err(|e| GameError::Config(e.to_string()))?,
                source_flag: a[i],
                action: b[i] as usize,
            },
            None => Payload::Sender { state: a[i] as usize, raw: row },
        };
        buf.push(Transition { payload, logprob_old: lp[i], value_old: val[i], reward: rew[i] })?;
    }
    Ok(buf)
}

fn canvas_record(c: &CanvasSpec) -> Tensor {
    Tensor::from_vec(vec![c.height as f64, c.width as f64, c.background, c.ink])
}

fn canvas_from(records: &Records) -> Result<CanvasSpec, GameError> {
    let c = records.shaped("meta/canvas", &[4])?.data();
    Ok(CanvasSpec::new(c[0] as usize, c[1] as usize, c[2], c[3]))
}

impl Game {
    /// Everything needed to continue the run bit-for-bit.
    pub fn to_records(&self) -> Records {
        let mut out = Records::new();
        let k = self.dataset.num_classes();
        out.push("meta/shape", Tensor::from_vec(vec![self.agents.len() as f64, k as f64, self.cfg.curves() as f64]));
        out.push("meta/epoch", Tensor::from_vec(vec![self.epoch as f64]));
        out.push("meta/comm_epochs", Tensor::from_vec(vec![self.comm_epochs as f64]));
        out.push("meta/accuracy_history", Tensor::from_vec(self.accuracy_history.clone()));
        out.push("meta/canvas", canvas_record(&self.canvas));
        out.push("rng", Tensor::from_vec(rng_to_bytes(&self.rng).into_iter().map(f64::from).collect()));
        let (h, w) = self.dataset.dims();
        for (i, a) in self.agents.iter().enumerate() {
            let p = format!("agent{i}");
            push_params(&mut out, &format!("{p}/receiver"), a.receiver.params());
            push_params(&mut out, &format!("{p}/sender"), a.sender.params());
            push_adam(&mut out, &format!("{p}/receiver_adam"), &a.receiver_opt, a.receiver.params());
            push_adam(&mut out, &format!("{p}/sender_adam"), &a.sender_opt, a.sender.params());
            push_buffer(&mut out, &format!("{p}/receiver_buffer"), &a.receiver_buffer, h * w);
            push_buffer(&mut out, &format!("{p}/sender_buffer"), &a.sender_buffer, a.sender.dim());
            out.push(format!("{p}/pref/values"), Tensor::from_vec(a.sensitivity.values().to_vec()));
            out.push(
                format!("{p}/pref/counts"),
                Tensor::from_vec(a.sensitivity.counts().iter().map(|&c| c as f64).collect()),
            );
            out.push(format!("{p}/label_counts"), Tensor::from_vec(a.label_counts.iter().map(|&c| c as f64).collect()));
        }
        if let Some(probe) = &self.probe {
            let a = probe.arch();
            out.push("meta/probe_arch", Tensor::from_vec(vec![a.conv1 as f64, a.conv2 as f64, a.hidden as f64]));
            push_params(&mut out, "probe", probe.params());
        }
        out
    }

    /// Rebuilds a game from [`Game::to_records`] output and the same config
    /// and dataset it was created with.
    pub fn from_records(cfg: RunConfig, dataset: Dataset, records: &Records) -> Result<Self, GameError> {
        let mut game = Game::new(cfg, dataset, None)?;
        let k = game.dataset.num_classes();
        let shape = records.shaped("meta/shape", &[3])?.data();
        let expected = [game.agents.len() as f64, k as f64, game.cfg.curves() as f64];
        if shape != expected {
            return Err(GameError::Config(format!(
                "checkpoint holds {} agents, {} referents, {} curves; config expects {}, {}, {}",
                shape[0], shape[1], shape[2], expected[0], expected[1], expected[2]
            )));
        }
        if canvas_from(records)? != game.canvas {
            return Err(GameError::Config("checkpoint canvas differs from the configured canvas".into()));
        }
        game.epoch = records.scalar("meta/epoch")? as usize;
        game.comm_epochs = records.scalar("meta/comm_epochs")? as usize;
        game.accuracy_history = records.vector("meta/accuracy_history")?.to_vec();
        let bytes: Vec<u8> = records.shaped("rng", &[56])?.data().iter().map(|&b| b as u8).collect();
        game.rng = rng_from_bytes(&bytes).ok_or_else(|| GameError::MissingRecord("rng".into()))?;

        let dims = game.dataset.dims();
        let decay = game.cfg.inference.ema_decay;
        for (i, a) in game.agents.iter_mut().enumerate() {
            let p = format!("agent{i}");
            load_params(records, &format!("{p}/receiver"), a.receiver.params_mut())?;
            load_params(records, &format!("{p}/sender"), a.sender.params_mut())?;
            load_adam(records, &format!("{p}/receiver_adam"), &mut a.receiver_opt, a.receiver.params())?;
            load_adam(records, &format!("{p}/sender_adam"), &mut a.sender_opt, a.sender.params())?;
            a.receiver_buffer =
                load_buffer(records, &format!("{p}/receiver_buffer"), Role::Receiver, dims.0 * dims.1, dims)?;
            a.sender_buffer = load_buffer(records, &format!("{p}/sender_buffer"), Role::Sender, a.sender.dim(), dims)?;
            let values = records.shaped(&format!("{p}/pref/values"), &[k])?.data().to_vec();
            let counts = records.shaped(&format!("{p}/pref/counts"), &[k])?.data().iter().map(|&c| c as u64).collect();
            a.sensitivity = SensitivityTable::from_parts(values, counts, decay);
            a.label_counts =
                records.shaped(&format!("{p}/label_counts"), &[k])?.data().iter().map(|&c| c as u64).collect();
        }
        if records.contains("meta/probe_arch") {
            let a = records.shaped("meta/probe_arch", &[3])?.data();
            let arch = ConvArch { conv1: a[0] as usize, conv2: a[1] as usize, hidden: a[2] as usize };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut probe = ClassifierNet::new(k, dims, arch, &mut rng);
            load_params(records, "probe", probe.params_mut())?;
            game.probe = Some(probe);
        }
        Ok(game)
    }
}

/// Sender network of one agent and the canvas it draws on, without needing
/// the dataset.
pub fn sender_from_records(
    cfg: &RunConfig,
    records: &Records,
    agent: usize,
) -> Result<(SenderNet, CanvasSpec), GameError> {
    let shape = records.shaped("meta/shape", &[3])?.data();
    let (agents, k, curves) = (shape[0] as usize, shape[1] as usize, shape[2] as usize);
    if agent >= agents {
        return Err(GameError::Config(format!("agent {agent} outside a population of {agents}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = SenderNet::new(k, curves, cfg.sender_arch, &mut rng);
    load_params(records, &format!("agent{agent}/sender"), net.params_mut())?;
    Ok((net, canvas_from(records)?))
}
