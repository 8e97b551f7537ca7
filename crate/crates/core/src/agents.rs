//! Receiver and sender policies.
//!
//! A receiver maps an image (plus a scalar source flag) to logits over the
//! `K` class actions and one abstain action, and to a value estimate. A
//! sender maps a referent index to a diagonal Gaussian over raw spline
//! parameters, and to a value estimate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::image::{batch_tensor, Image};
use crate::numerics::{
    categorical_sample, gaussian_logprob_entropy, softmax, CategoricalSample, NumericsError, ParamId, ParamSet, Tape,
    Tensor, Var,
};
use crate::render::{add_noise, rasterize, squash_params, CanvasSpec, Signal, VALUES_PER_CURVE};

pub const LOGSTD_INIT: f64 = -0.5;
pub const LOGSTD_RANGE: (f64, f64) = (-4.0, 1.0);

/// Class actions `0..classes`, then abstain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActionSpace {
    pub classes: usize,
}

impl ActionSpace {
    pub fn size(self) -> usize {
        self.classes + 1
    }

    pub fn abstain(self) -> usize {
        self.classes
    }

    pub fn is_abstain(self, action: usize) -> bool {
        action == self.classes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvArch {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
}

impl Default for ConvArch {
    fn default() -> Self {
        Self { conv1: 16, conv2: 32, hidden: 128 }
    }
}

fn conv_out(n: usize) -> usize {
    (n - 3) / 2 + 1
}

fn he(shape: &[usize], fan_in: usize, rng: &mut (impl Rng + ?Sized)) -> Tensor {
    Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

impl Layer {
    fn dense(
        params: &mut ParamSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        scale: Option<f64>,
        rng: &mut (impl Rng + ?Sized),
    ) -> Self {
        let w = match scale {
            Some(s) => Tensor::randn(&[inputs, outputs], s, rng),
            None => he(&[inputs, outputs], inputs, rng),
        };
        Self { w: params.add(format!("{name}.w"), w), b: params.add(format!("{name}.b"), Tensor::zeros(&[outputs])) }
    }

    fn conv(params: &mut ParamSet, name: &str, in_ch: usize, filters: usize, rng: &mut (impl Rng + ?Sized)) -> Self {
        Self {
            w: params.add(format!("{name}.w"), he(&[filters, in_ch, 3, 3], in_ch * 9, rng)),
            b: params.add(format!("{name}.b"), Tensor::zeros(&[filters])),
        }
    }

    fn apply_dense(self, tape: &mut Tape<'_>, x: Var) -> Result<Var, NumericsError> {
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        tape.dense(x, w, Some(b))
    }

    fn apply_conv(self, tape: &mut Tape<'_>, x: Var) -> Result<Var, NumericsError> {
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        let y = tape.conv2d(x, w, Some(b), 2)?;
        tape.relu(y)
    }
}

/// Two stride-2 convolutions and one hidden dense layer, all ReLU.
#[derive(Clone, Debug, PartialEq)]
struct ConvTrunk {
    conv1: Layer,
    conv2: Layer,
    fc: Layer,
    dims: (usize, usize),
    flat: usize,
    extra: usize,
}

impl ConvTrunk {
    fn new(
        params: &mut ParamSet,
        prefix: &str,
        arch: ConvArch,
        dims: (usize, usize),
        extra: usize,
        rng: &mut (impl Rng + ?Sized),
    ) -> Self {
        assert!(dims.0 >= 7 && dims.1 >= 7, "canvas must be at least 7x7");
        let flat = arch.conv2 * conv_out(conv_out(dims.0)) * conv_out(conv_out(dims.1));
        Self {
            conv1: Layer::conv(params, &format!("{prefix}conv1"), 1, arch.conv1, rng),
            conv2: Layer::conv(params, &format!("{prefix}conv2"), arch.conv1, arch.conv2, rng),
            fc: Layer::dense(params, &format!("{prefix}fc"), flat + extra, arch.hidden, None, rng),
            dims,
            flat,
            extra,
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, images: Tensor, extra: Option<Tensor>) -> Result<Var, NumericsError> {
        let s = images.shape();
        if s.len() != 4 || s[1] != 1 || (s[2], s[3]) != self.dims {
            return Err(NumericsError::Shape {
                op: "receiver_forward",
                detail: format!("expected [B, 1, {}, {}], got {s:?}", self.dims.0, self.dims.1),
            });
        }
        let x = tape.input(images);
        let h = self.conv1.apply_conv(tape, x)?;
        let h = self.conv2.apply_conv(tape, h)?;
        let mut h = tape.flatten(h)?;
        if let Some(e) = extra {
            let e = tape.input(e);
            h = tape.concat_cols(h, e)?;
        }
        let h = self.fc.apply_dense(tape, h)?;
        tape.relu(h)
    }
}

fn image_batch(images: &[&Image], dims: (usize, usize)) -> Result<Tensor, NumericsError> {
    if let Some(bad) = images.iter().find(|im| im.dims() != dims) {
        return Err(NumericsError::Shape {
            op: "receiver_forward",
            detail: format!("image {:?} does not match canvas {dims:?}", bad.dims()),
        });
    }
    Ok(batch_tensor(images.iter().copied()))
}

/// Convolutional receiver policy with an abstain action and a value head.
#[derive(Clone, Debug)]
pub struct ReceiverNet {
    params: ParamSet,
    trunk: ConvTrunk,
    policy: Layer,
    value: Layer,
    actions: ActionSpace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverOutput {
    /// Probabilities over the `K + 1` actions.
    pub probs: Vec<f64>,
    pub value: f64,
}

impl ReceiverNet {
    pub fn new(classes: usize, dims: (usize, usize), arch: ConvArch, rng: &mut (impl Rng + ?Sized)) -> Self {
        let mut params = ParamSet::new();
        let trunk = ConvTrunk::new(&mut params, "", arch, dims, 1, rng);
        let policy = Layer::dense(&mut params, "policy", arch.hidden, classes + 1, Some(0.01), rng);
        let value = Layer::dense(&mut params, "value", arch.hidden, 1, Some(0.01), rng);
        Self { params, trunk, policy, value, actions: ActionSpace { classes } }
    }

    pub fn actions(&self) -> ActionSpace {
        self.actions
    }

    pub fn dims(&self) -> (usize, usize) {
        self.trunk.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Records the batched forward pass: `(logits [B, K+1], value [B])`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<'_>,
        images: &[&Image],
        flags: &[f64],
    ) -> Result<(Var, Var), NumericsError> {
        assert_eq!(images.len(), flags.len(), "one source flag per image");
        let x = image_batch(images, self.trunk.dims)?;
        let f = Tensor::new(vec![flags.len(), 1], flags.to_vec())?;
        let h = self.trunk.forward(tape, x, Some(f))?;
        let logits = self.policy.apply_dense(tape, h)?;
        let v = self.value.apply_dense(tape, h)?;
        let v = tape.column(v, 0)?;
        Ok((logits, v))
    }

    pub fn forward_batch(&self, images: &[&Image], flags: &[f64]) -> Result<Vec<ReceiverOutput>, NumericsError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new(&self.params);
        let (logits, v) = self.forward_tape(&mut tape, images, flags)?;
        let probs = softmax(tape.value(logits));
        let values = tape.value(v).data().to_vec();
        Ok((0..images.len()).map(|i| ReceiverOutput { probs: probs.row(i).to_vec(), value: values[i] }).collect())
    }
}

/// Action probabilities and value for one observation.
pub fn receiver_forward(net: &ReceiverNet, image: &Image, source_flag: f64) -> Result<ReceiverOutput, NumericsError> {
    Ok(net.forward_batch(&[image], &[source_flag])?.remove(0))
}

pub fn receiver_act<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<CategoricalSample, NumericsError> {
    categorical_sample(probs, rng)
}

/// Supervised classifier sharing the receiver trunk, with `K` logits only.
#[derive(Clone, Debug)]
pub struct ClassifierNet {
    params: ParamSet,
    trunk: ConvTrunk,
    head: Layer,
    classes: usize,
    arch: ConvArch,
}

impl ClassifierNet {
    pub fn new(classes: usize, dims: (usize, usize), arch: ConvArch, rng: &mut (impl Rng + ?Sized)) -> Self {
        let mut params = ParamSet::new();
        let trunk = ConvTrunk::new(&mut params, "", arch, dims, 0, rng);
        let head = Layer::dense(&mut params, "head", arch.hidden, classes, Some(0.01), rng);
        Self { params, trunk, head, classes, arch }
    }

    pub fn arch(&self) -> ConvArch {
        self.arch
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> (usize, usize) {
        self.trunk.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn logits_tape(&self, tape: &mut Tape<'_>, images: &[&Image]) -> Result<Var, NumericsError> {
        let x = image_batch(images, self.trunk.dims)?;
        let h = self.trunk.forward(tape, x, None)?;
        self.head.apply_dense(tape, h)
    }

    /// Row-wise class probabilities `[B, K]`.
    pub fn probs(&self, images: &[&Image]) -> Result<Tensor, NumericsError> {
        if images.is_empty() {
            return Ok(Tensor::zeros(&[0, self.classes]));
        }
        let mut tape = Tape::new(&self.params);
        let logits = self.logits_tape(&mut tape, images)?;
        Ok(softmax(tape.value(logits)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SenderArch {
    pub hidden: usize,
}

impl Default for SenderArch {
    fn default() -> Self {
        Self { hidden: 128 }
    }
}

/// Referent-conditioned diagonal Gaussian over raw spline parameters.
#[derive(Clone, Debug)]
pub struct SenderNet {
    params: ParamSet,
    l1: Layer,
    l2: Layer,
    mean: Layer,
    value: Layer,
    logstd: ParamId,
    states: usize,
    curves: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Vec<f64>,
    /// Already clamped into `LOGSTD_RANGE`.
    pub logstd: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Emission {
    pub signal: Signal,
    /// Pre-squash Gaussian sample.
    pub raw: Vec<f64>,
    /// Log-density of `raw`.
    pub logprob: f64,
    pub value: f64,
}

impl SenderNet {
    pub fn new(states: usize, curves: usize, arch: SenderArch, rng: &mut (impl Rng + ?Sized)) -> Self {
        let p = curves * VALUES_PER_CURVE;
        let mut params = ParamSet::new();
        let l1 = Layer::dense(&mut params, "l1", states, arch.hidden, None, rng);
        let l2 = Layer::dense(&mut params, "l2", arch.hidden, arch.hidden, None, rng);
        let mean = Layer::dense(&mut params, "mean", arch.hidden, p, Some(0.01), rng);
        let value = Layer::dense(&mut params, "value", arch.hidden, 1, Some(0.01), rng);
        let logstd = params.add("logstd", Tensor::filled(&[p], LOGSTD_INIT));
        Self { params, l1, l2, mean, value, logstd, states, curves }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn curves(&self) -> usize {
        self.curves
    }

    pub fn dim(&self) -> usize {
        self.curves * VALUES_PER_CURVE
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn logstd_id(&self) -> ParamId {
        self.logstd
    }

    /// Pulls the stored log-std back into range after an optimizer step.
    pub fn clamp_logstd(&mut self) {
        let (lo, hi) = LOGSTD_RANGE;
        for v in self.params.get_mut(self.logstd).value.data_mut() {
            *v = v.clamp(lo, hi);
        }
    }

    fn one_hot(&self, states: &[usize]) -> Result<Tensor, NumericsError> {
        let mut data = vec![0.0; states.len() * self.states];
        for (row, &s) in states.iter().enumerate() {
            if s >= self.states {
                return Err(NumericsError::Contract(format!("state {s} outside 0..{}", self.states)));
            }
            data[row * self.states + s] = 1.0;
        }
        Tensor::new(vec![states.len(), self.states], data)
    }

    /// Records `(mean [B, P], clamped logstd [P], value [B])`.
    pub fn forward_tape(&self, tape: &mut Tape<'_>, states: &[usize]) -> Result<(Var, Var, Var), NumericsError> {
        let x = tape.input(self.one_hot(states)?);
        let h = self.l1.apply_dense(tape, x)?;
        let h = tape.relu(h)?;
        let h = self.l2.apply_dense(tape, h)?;
        let h = tape.relu(h)?;
        let mean = self.mean.apply_dense(tape, h)?;
        let v = self.value.apply_dense(tape, h)?;
        let v = tape.column(v, 0)?;
        let ls = tape.param(self.logstd);
        let ls = tape.clamp(ls, LOGSTD_RANGE.0, LOGSTD_RANGE.1)?;
        Ok((mean, ls, v))
    }

    pub fn policy(&self, state: usize) -> Result<GaussianPolicy, NumericsError> {
        let mut tape = Tape::new(&self.params);
        let (mean, ls, v) = self.forward_tape(&mut tape, &[state])?;
        Ok(GaussianPolicy {
            mean: tape.value(mean).data().to_vec(),
            logstd: tape.value(ls).data().to_vec(),
            value: tape.value(v).item(),
        })
    }
}

/// Gaussian over raw parameters for a one-hot state vector.
pub fn sender_forward(net: &SenderNet, state: &[f64]) -> Result<GaussianPolicy, NumericsError> {
    let hot: Vec<usize> = state.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
    let valid = state.len() == net.states && hot.len() == 1 && state[hot[0]] == 1.0;
    if !valid {
        return Err(NumericsError::Contract(format!("sender state must be one-hot of length {}", net.states)));
    }
    net.policy(hot[0])
}

/// Samples raw parameters, renders them and adds channel noise.
pub fn sender_emit<R: Rng + ?Sized>(
    net: &SenderNet,
    state: usize,
    canvas: &CanvasSpec,
    noise: f64,
    rng: &mut R,
) -> Result<Emission, NumericsError> {
    let pol = net.policy(state)?;
    let raw: Vec<f64> = pol
        .mean
        .iter()
        .zip(&pol.logstd)
        .map(|(&m, &ls)| {
            let z: f64 = StandardNormal.sample(rng);
            m + ls.exp() * z
        })
        .collect();
    let (logprob, _) = gaussian_logprob_entropy(&pol.mean, &pol.logstd, &raw);
    let params = squash_params(&raw, net.curves).expect("sender output length");
    let clean = rasterize(&params, canvas);
    let signal = Signal { image: add_noise(&clean.image, noise, rng), params };
    Ok(Emission { signal, raw, logprob, value: pol.value })
}

/// Noise-free rendering of the policy mean.
pub fn sender_mean_signal(net: &SenderNet, state: usize, canvas: &CanvasSpec) -> Result<Signal, NumericsError> {
    let pol = net.policy(state)?;
    let params = squash_params(&pol.mean, net.curves).expect("sender output length");
    Ok(rasterize(&params, canvas))
}
