//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigg_core::agents::{receiver_act, receiver_forward, sender_emit, ConvArch, ReceiverNet, SenderArch, SenderNet};
use sigg_core::data::synthetic::glyph;
use sigg_core::image::Image;
use sigg_core::learner::{Payload, Role, RolloutBuffer, Transition};
use sigg_core::render::{squash_params, CanvasSpec, SplineParams};

pub const SIDE: usize = 28;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn canvas() -> CanvasSpec {
    CanvasSpec::new(SIDE, SIDE, 0.0, 1.0)
}

pub fn spline(curves: usize, seed: u64) -> SplineParams {
    let mut r = rng(seed);
    let raw: Vec<f64> = (0..curves * 10).map(|_| r.random_range(-2.0..2.0)).collect();
    squash_params(&raw, curves).expect("length matches")
}

pub fn images(n: usize, seed: u64) -> Vec<Image> {
    let mut r = rng(seed);
    (0..n).map(|i| glyph(i % 5, SIDE, &mut r)).collect()
}

pub fn receiver(seed: u64) -> ReceiverNet {
    ReceiverNet::new(5, (SIDE, SIDE), ConvArch::default(), &mut rng(seed))
}

pub fn sender(seed: u64) -> SenderNet {
    SenderNet::new(5, 2, SenderArch::default(), &mut rng(seed))
}

/// Receiver transitions collected from the net's own policy.
pub fn receiver_buffer(net: &ReceiverNet, n: usize, seed: u64) -> RolloutBuffer {
    let mut r = rng(seed);
    let mut buf = RolloutBuffer::new(Role::Receiver);
    for (i, image) in images(n, seed).into_iter().enumerate() {
        let out = receiver_forward(net, &image, 0.0).expect("forward");
        let pick = receiver_act(&out.probs, &mut r).expect("sample");
        let reward = if pick.action == i % 5 { 1.0 } else { -0.1 };
        buf.push(Transition {
            payload: Payload::Receiver { image, source_flag: 0.0, action: pick.action },
            logprob_old: pick.logprob,
            value_old: out.value,
            reward,
        })
        .expect("role matches");
    }
    buf
}

pub fn sender_buffer(net: &SenderNet, n: usize, seed: u64) -> RolloutBuffer {
    let mut r = rng(seed);
    let mut buf = RolloutBuffer::new(Role::Sender);
    for i in 0..n {
        let e = sender_emit(net, i % 5, &canvas(), 0.05, &mut r).expect("emit");
        buf.push(Transition {
            payload: Payload::Sender { state: i % 5, raw: e.raw },
            logprob_old: e.logprob,
            value_old: e.value,
            reward: r.random_range(0.0..1.0),
        })
        .expect("role matches");
    }
    buf
}
