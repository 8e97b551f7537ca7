//! Reverse-mode differentiation over an explicit tape of primitive ops.
//!
//! A [`Tape`] borrows the [`ParamSet`] it reads from, records every op in
//! execution order, and produces [`Gradients`] keyed by [`ParamId`]. Nothing
//! is written back into the parameter set; callers accumulate explicitly so
//! that two agents can never share a gradient path.

use std::sync::atomic::{AtomicU64, Ordering};

use super::{NumericsError, ParamId, ParamSet, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    tape: u64,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Dense { x: usize, w: usize, b: Option<usize> },
    Conv2d { x: usize, k: usize, b: Option<usize>, stride: usize },
    Relu(usize),
    Reshape(usize),
    ConcatCols(usize, usize),
    LogSoftmax(usize),
    Softmax(usize),
    Gather { x: usize, idx: Vec<usize> },
    Column { x: usize, col: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    BroadcastRows(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Square(usize),
    Clamp { x: usize, lo: f64, hi: f64 },
    Minimum(usize, usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Per-parameter gradients produced by [`Tape::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

pub struct Tape<'p> {
    id: u64,
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::Shape { op, detail }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Some(value), op, requires_grad });
        Var { idx: self.nodes.len() - 1, tape: self.id }
    }

    fn check(&self, v: Var) -> Result<usize, NumericsError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(NumericsError::Usage("variable was not recorded on this tape".into()));
        }
        Ok(v.idx)
    }

    fn val(&self, idx: usize) -> &Tensor {
        let node = &self.nodes[idx];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn rg(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let idx = self.check(v).expect("foreign variable");
        self.val(idx)
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id), requires_grad: true });
        Var { idx: self.nodes.len() - 1, tape: self.id }
    }

    /// `y = x W + b` with `x: [B, I]`, `W: [I, O]`, `b: [O]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NumericsError> {
        let (xi, wi) = (self.check(x)?, self.check(w)?);
        let bi = b.map(|b| self.check(b)).transpose()?;
        let (xt, wt) = (self.val(xi), self.val(wi));
        let (xs, ws) = (xt.shape(), wt.shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err("dense", format!("x {xs:?} vs W {ws:?}")));
        }
        let (rows, inner, out) = (xs[0], xs[1], ws[1]);
        let mut y = vec![0.0; rows * out];
        if let Some(bi) = bi {
            let bt = self.val(bi);
            if bt.shape() != [out] {
                return Err(shape_err("dense", format!("b {:?} vs output width {out}", bt.shape())));
            }
            for r in 0..rows {
                y[r * out..(r + 1) * out].copy_from_slice(bt.data());
            }
        }
        let (xd, wd) = (xt.data(), wt.data());
        for r in 0..rows {
            let yr = &mut y[r * out..(r + 1) * out];
            for i in 0..inner {
                let xv = xd[r * inner + i];
                if xv == 0.0 {
                    continue;
                }
                let wr = &wd[i * out..(i + 1) * out];
                for (yo, wo) in yr.iter_mut().zip(wr) {
                    *yo += xv * wo;
                }
            }
        }
        let rg = self.rg(xi) || self.rg(wi) || bi.is_some_and(|b| self.rg(b));
        let t = Tensor::new(vec![rows, out], y)?;
        Ok(self.push(t, Op::Dense { x: xi, w: wi, b: bi }, rg))
    }

    /// Valid-padding 2-D cross-correlation with 3x3 kernels.
    ///
    /// `x: [B, C, H, W]`, `k: [F, C, 3, 3]`, optional `b: [F]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize) -> Result<Var, NumericsError> {
        if stride == 0 {
            return Err(NumericsError::Config("conv2d stride must be >= 1".into()));
        }
        let (xi, ki) = (self.check(x)?, self.check(k)?);
        let bi = b.map(|b| self.check(b)).transpose()?;
        let (xt, kt) = (self.val(xi), self.val(ki));
        let (xs, ks) = (xt.shape(), kt.shape());
        if xs.len() != 4 || ks.len() != 4 || ks[1] != xs[1] || ks[2] != 3 || ks[3] != 3 {
            return Err(shape_err("conv2d", format!("x {xs:?} vs kernel {ks:?}")));
        }
        let (batch, chans, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        if h < 3 || w < 3 {
            return Err(shape_err("conv2d", format!("input {h}x{w} smaller than kernel")));
        }
        let filters = ks[0];
        let (oh, ow) = ((h - 3) / stride + 1, (w - 3) / stride + 1);
        let mut y = vec![0.0; batch * filters * oh * ow];
        if let Some(bi) = bi {
            let bt = self.val(bi);
            if bt.shape() != [filters] {
                return Err(shape_err("conv2d", format!("bias {:?} vs {filters} filters", bt.shape())));
            }
            for bf in 0..batch * filters {
                let v = bt.data()[bf % filters];
                y[bf * oh * ow..(bf + 1) * oh * ow].iter_mut().for_each(|o| *o = v);
            }
        }
        let (xd, kd) = (xt.data(), kt.data());
        for bn in 0..batch {
            for f in 0..filters {
                let out = &mut y[(bn * filters + f) * oh * ow..][..oh * ow];
                for c in 0..chans {
                    let plane = &xd[(bn * chans + c) * h * w..][..h * w];
                    let kern = &kd[(f * chans + c) * 9..][..9];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let wv = kern[ky * 3 + kx];
                            for oy in 0..oh {
                                let row = &plane[(oy * stride + ky) * w + kx..];
                                let orow = &mut out[oy * ow..(oy + 1) * ow];
                                for (ox, o) in orow.iter_mut().enumerate() {
                                    *o += wv * row[ox * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(xi) || self.rg(ki) || bi.is_some_and(|b| self.rg(b));
        let t = Tensor::new(vec![batch, filters, oh, ow], y)?;
        Ok(self.push(t, Op::Conv2d { x: xi, k: ki, b: bi, stride }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let t = self.val(xi).map(|v| v.max(0.0));
        let rg = self.rg(xi);
        Ok(self.push(t, Op::Relu(xi), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let t = self.val(xi).clone().reshape(shape)?;
        let rg = self.rg(xi);
        Ok(self.push(t, Op::Reshape(xi), rg))
    }

    /// Flattens `[B, ...]` to `[B, rest]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var, NumericsError> {
        let shape = self.value(x).shape().to_vec();
        let rows = shape.first().copied().unwrap_or(1);
        let rest = shape.iter().skip(1).product();
        self.reshape(x, &[rows, rest])
    }

    /// Column-wise concatenation of two `[B, _]` matrices.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (at, bt) = (self.val(ai), self.val(bi));
        let (as_, bs) = (at.shape(), bt.shape());
        if as_.len() != 2 || bs.len() != 2 || as_[0] != bs[0] {
            return Err(shape_err("concat_cols", format!("{as_:?} vs {bs:?}")));
        }
        let (rows, ca, cb) = (as_[0], as_[1], bs[1]);
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(at.row(r));
            out.extend_from_slice(bt.row(r));
        }
        let rg = self.rg(ai) || self.rg(bi);
        let t = Tensor::new(vec![rows, ca + cb], out)?;
        Ok(self.push(t, Op::ConcatCols(ai, bi), rg))
    }

    fn rank2(&self, op: &'static str, idx: usize) -> Result<(usize, usize), NumericsError> {
        let s = self.val(idx).shape();
        if s.len() != 2 {
            return Err(shape_err(op, format!("expected [B, K], got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    /// Row-wise log-softmax of `[B, K]` logits.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let (rows, cols) = self.rank2("log_softmax", xi)?;
        let xt = self.val(xi);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            log_softmax_row(xt.row(r), &mut out[r * cols..(r + 1) * cols]);
        }
        let rg = self.rg(xi);
        let t = Tensor::new(vec![rows, cols], out)?;
        Ok(self.push(t, Op::LogSoftmax(xi), rg))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let (rows, cols) = self.rank2("softmax", xi)?;
        let xt = self.val(xi);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            softmax_row(xt.row(r), &mut out[r * cols..(r + 1) * cols]);
        }
        let rg = self.rg(xi);
        let t = Tensor::new(vec![rows, cols], out)?;
        Ok(self.push(t, Op::Softmax(xi), rg))
    }

    /// Picks `x[b, idx[b]]` from a `[B, K]` matrix.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let (rows, cols) = self.rank2("gather", xi)?;
        if idx.len() != rows || idx.iter().any(|&i| i >= cols) {
            return Err(shape_err("gather", format!("{} indices into [{rows}, {cols}]", idx.len())));
        }
        let xt = self.val(xi);
        let out = idx.iter().enumerate().map(|(r, &c)| xt.data()[r * cols + c]).collect();
        let rg = self.rg(xi);
        Ok(self.push(Tensor::from_vec(out), Op::Gather { x: xi, idx: idx.to_vec() }, rg))
    }

    /// Column `col` of a `[B, K]` matrix as a `[B]` vector.
    pub fn column(&mut self, x: Var, col: usize) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let (rows, cols) = self.rank2("column", xi)?;
        if col >= cols {
            return Err(shape_err("column", format!("column {col} of [{rows}, {cols}]")));
        }
        let xt = self.val(xi);
        let out = (0..rows).map(|r| xt.data()[r * cols + col]).collect();
        let rg = self.rg(xi);
        Ok(self.push(Tensor::from_vec(out), Op::Column { x: xi, col }, rg))
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (at, bt) = (self.val(ai), self.val(bi));
        if at.shape() != bt.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", at.shape(), bt.shape())));
        }
        let data = at.data().iter().zip(bt.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(at.shape().to_vec(), data)?;
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(t, make(ai, bi), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Element-wise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("minimum", a, b, f64::min, Op::Minimum)
    }

    /// Repeats a `[P]` vector into `[rows, P]`.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let xt = self.val(xi);
        if xt.shape().len() != 1 {
            return Err(shape_err("broadcast_rows", format!("expected [P], got {:?}", xt.shape())));
        }
        let p = xt.len();
        let data = xt.data().iter().copied().cycle().take(rows * p).collect();
        let rg = self.rg(xi);
        let t = Tensor::new(vec![rows, p], data)?;
        Ok(self.push(t, Op::BroadcastRows(xi), rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let t = self.val(xi).map(f);
        let rg = self.rg(xi);
        Ok(self.push(t, op(xi), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, NumericsError> {
        self.unary(x, |v| v * c, |i| Op::Scale(i, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var, NumericsError> {
        self.unary(x, |v| v + c, Op::AddScalar)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(x, f64::exp, Op::Exp)
    }

    pub fn square(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(x, |v| v * v, Op::Square)
    }

    /// Clamps into `[lo, hi]`; gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, NumericsError> {
        self.unary(x, |v| v.clamp(lo, hi), |i| Op::Clamp { x: i, lo, hi })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let s = self.val(xi).data().iter().sum();
        let rg = self.rg(xi);
        Ok(self.push(Tensor::scalar(s), Op::Sum(xi), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let t = self.val(xi);
        if t.is_empty() {
            return Err(shape_err("mean", "empty tensor".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(xi);
        Ok(self.push(Tensor::scalar(m), Op::Mean(xi), rg))
    }

    /// `[B, K] -> [B]` row sums.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xi = self.check(x)?;
        let (rows, _) = self.rank2("sum_rows", xi)?;
        let xt = self.val(xi);
        let out = (0..rows).map(|r| xt.row(r).iter().sum()).collect();
        let rg = self.rg(xi);
        Ok(self.push(Tensor::from_vec(out), Op::SumRows(xi), rg))
    }

    /// Accumulates gradients of the scalar `loss` into every reachable parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let li = self.check(loss)?;
        if self.val(li).len() != 1 {
            return Err(NumericsError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.val(li).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Gradients { grads: (0..self.params.len()).map(|_| None).collect() };
        grads[li] = Some(Tensor::filled(self.val(li).shape(), 1.0));

        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => match &mut out.grads[id.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                op => self.backprop(op, i, &g, &mut grads)?,
            }
        }
        Ok(out)
    }

    fn backprop(&self, op: &Op, node: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<(), NumericsError> {
        let mut send = |idx: usize, t: Tensor| {
            if !self.nodes[idx].requires_grad {
                return;
            }
            match &mut grads[idx] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let gd = g.data();
        match *op {
            Op::Input | Op::Param(_) => unreachable!(),
            Op::Dense { x, w, b } => {
                let (xt, wt) = (self.val(x), self.val(w));
                let (rows, inner, out) = (xt.shape()[0], xt.shape()[1], wt.shape()[1]);
                if self.rg(w) {
                    let mut dw = vec![0.0; inner * out];
                    for r in 0..rows {
                        let gr = &gd[r * out..(r + 1) * out];
                        for i in 0..inner {
                            let xv = xt.data()[r * inner + i];
                            if xv == 0.0 {
                                continue;
                            }
                            for (d, gv) in dw[i * out..(i + 1) * out].iter_mut().zip(gr) {
                                *d += xv * gv;
                            }
                        }
                    }
                    send(w, Tensor::new(vec![inner, out], dw)?);
                }
                if self.rg(x) {
                    let mut dx = vec![0.0; rows * inner];
                    for r in 0..rows {
                        let gr = &gd[r * out..(r + 1) * out];
                        for i in 0..inner {
                            let wr = &wt.data()[i * out..(i + 1) * out];
                            dx[r * inner + i] = wr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        }
                    }
                    send(x, Tensor::new(vec![rows, inner], dx)?);
                }
                if let Some(b) = b {
                    let mut db = vec![0.0; out];
                    for r in 0..rows {
                        for (d, gv) in db.iter_mut().zip(&gd[r * out..(r + 1) * out]) {
                            *d += gv;
                        }
                    }
                    send(b, Tensor::from_vec(db));
                }
            }
            Op::Conv2d { x, k, b, stride } => {
                let (xt, kt) = (self.val(x), self.val(k));
                let (batch, chans, h, w) = (xt.shape()[0], xt.shape()[1], xt.shape()[2], xt.shape()[3]);
                let filters = kt.shape()[0];
                let (oh, ow) = ((h - 3) / stride + 1, (w - 3) / stride + 1);
                let want_dx = self.rg(x);
                let want_dk = self.rg(k);
                let mut dk = vec![0.0; kt.len()];
                let mut dx = if want_dx { vec![0.0; xt.len()] } else { Vec::new() };
                for bn in 0..batch {
                    for f in 0..filters {
                        let go = &gd[(bn * filters + f) * oh * ow..][..oh * ow];
                        for c in 0..chans {
                            let base = (bn * chans + c) * h * w;
                            let kbase = (f * chans + c) * 9;
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let mut acc = 0.0;
                                    let wv = kt.data()[kbase + ky * 3 + kx];
                                    for oy in 0..oh {
                                        let off = base + (oy * stride + ky) * w + kx;
                                        let grow = &go[oy * ow..(oy + 1) * ow];
                                        if want_dk {
                                            let row = &xt.data()[off..];
                                            for (ox, gv) in grow.iter().enumerate() {
                                                acc += gv * row[ox * stride];
                                            }
                                        }
                                        if want_dx {
                                            let drow = &mut dx[off..];
                                            for (ox, gv) in grow.iter().enumerate() {
                                                drow[ox * stride] += wv * gv;
                                            }
                                        }
                                    }
                                    dk[kbase + ky * 3 + kx] += acc;
                                }
                            }
                        }
                    }
                }
                if want_dk {
                    send(k, Tensor::new(kt.shape().to_vec(), dk)?);
                }
                if want_dx {
                    send(x, Tensor::new(xt.shape().to_vec(), dx)?);
                }
                if let Some(b) = b {
                    let mut db = vec![0.0; filters];
                    for bn in 0..batch {
                        for (f, d) in db.iter_mut().enumerate() {
                            *d += gd[(bn * filters + f) * oh * ow..][..oh * ow].iter().sum::<f64>();
                        }
                    }
                    send(b, Tensor::from_vec(db));
                }
            }
            Op::Relu(x) => {
                let xt = self.val(x);
                let d = xt.data().iter().zip(gd).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 }).collect();
                send(x, Tensor::new(xt.shape().to_vec(), d)?);
            }
            Op::Reshape(x) => {
                send(x, g.clone().reshape(self.val(x).shape())?);
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.val(a).shape()[1], self.val(b).shape()[1]);
                let rows = self.val(a).shape()[0];
                let mut da = Vec::with_capacity(rows * ca);
                let mut db = Vec::with_capacity(rows * cb);
                for r in 0..rows {
                    let gr = g.row(r);
                    da.extend_from_slice(&gr[..ca]);
                    db.extend_from_slice(&gr[ca..]);
                }
                send(a, Tensor::new(vec![rows, ca], da)?);
                send(b, Tensor::new(vec![rows, cb], db)?);
            }
            Op::LogSoftmax(x) => {
                // d/dx_j = g_j - softmax_j * sum(g)
                let y = self.nodes[node].value.as_ref().expect("log_softmax value");
                let (rows, cols) = (y.shape()[0], y.shape()[1]);
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let gr = g.row(r);
                    let gs: f64 = gr.iter().sum();
                    for c in 0..cols {
                        d[r * cols + c] = gr[c] - y.row(r)[c].exp() * gs;
                    }
                }
                send(x, Tensor::new(vec![rows, cols], d)?);
            }
            Op::Softmax(x) => {
                let y = self.nodes[node].value.as_ref().expect("softmax value");
                let (rows, cols) = (y.shape()[0], y.shape()[1]);
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        d[r * cols + c] = yr[c] * (gr[c] - dot);
                    }
                }
                send(x, Tensor::new(vec![rows, cols], d)?);
            }
            Op::Gather { x, ref idx } => {
                let xs = self.val(x).shape().to_vec();
                let mut d = Tensor::zeros(&xs);
                for (r, &c) in idx.iter().enumerate() {
                    d.data_mut()[r * xs[1] + c] = gd[r];
                }
                send(x, d);
            }
            Op::Column { x, col } => {
                let xs = self.val(x).shape().to_vec();
                let mut d = Tensor::zeros(&xs);
                for r in 0..xs[0] {
                    d.data_mut()[r * xs[1] + col] = gd[r];
                }
                send(x, d);
            }
            Op::Add(a, b) => {
                send(a, g.clone());
                send(b, g.clone());
            }
            Op::Sub(a, b) => {
                send(a, g.clone());
                send(b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (at, bt) = (self.val(a), self.val(b));
                if self.rg(a) {
                    let d = gd.iter().zip(bt.data()).map(|(g, y)| g * y).collect();
                    send(a, Tensor::new(at.shape().to_vec(), d)?);
                }
                if self.rg(b) {
                    let d = gd.iter().zip(at.data()).map(|(g, x)| g * x).collect();
                    send(b, Tensor::new(bt.shape().to_vec(), d)?);
                }
            }
            Op::Minimum(a, b) => {
                let (at, bt) = (self.val(a), self.val(b));
                let mut da = vec![0.0; at.len()];
                let mut db = vec![0.0; bt.len()];
                for (i, gv) in gd.iter().enumerate() {
                    if at.data()[i] <= bt.data()[i] {
                        da[i] = *gv;
                    } else {
                        db[i] = *gv;
                    }
                }
                send(a, Tensor::new(at.shape().to_vec(), da)?);
                send(b, Tensor::new(bt.shape().to_vec(), db)?);
            }
            Op::BroadcastRows(x) => {
                let p = self.val(x).len();
                let mut d = vec![0.0; p];
                for chunk in gd.chunks(p) {
                    for (a, b) in d.iter_mut().zip(chunk) {
                        *a += b;
                    }
                }
                send(x, Tensor::from_vec(d));
            }
            Op::Scale(x, c) => send(x, g.map(|v| v * c)),
            Op::AddScalar(x) => send(x, g.clone()),
            Op::Exp(_) | Op::Square(_) | Op::Clamp { .. } => {
                let (x, xt) = match *op {
                    Op::Exp(x) | Op::Square(x) | Op::Clamp { x, .. } => (x, self.val(x)),
                    _ => unreachable!(),
                };
                let y = self.nodes[node].value.as_ref().expect("unary value");
                let d: Vec<f64> = match *op {
                    Op::Exp(_) => gd.iter().zip(y.data()).map(|(g, y)| g * y).collect(),
                    Op::Square(_) => gd.iter().zip(xt.data()).map(|(g, x)| 2.0 * g * x).collect(),
                    Op::Clamp { lo, hi, .. } => {
                        gd.iter().zip(xt.data()).map(|(&g, &x)| if x < lo || x > hi { 0.0 } else { g }).collect()
                    }
                    _ => unreachable!(),
                };
                send(x, Tensor::new(xt.shape().to_vec(), d)?);
            }
            Op::Sum(x) => send(x, Tensor::filled(self.val(x).shape(), gd[0])),
            Op::Mean(x) => {
                let xt = self.val(x);
                send(x, Tensor::filled(xt.shape(), gd[0] / xt.len() as f64));
            }
            Op::SumRows(x) => {
                let xs = self.val(x).shape().to_vec();
                let mut d = Tensor::zeros(&xs);
                for r in 0..xs[0] {
                    d.data_mut()[r * xs[1]..(r + 1) * xs[1]].iter_mut().for_each(|v| *v = gd[r]);
                }
                send(x, d);
            }
        }
        Ok(())
    }
}

pub(crate) fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

pub(crate) fn softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}
