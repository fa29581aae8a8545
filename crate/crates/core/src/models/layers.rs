use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

type Result<T> = core::result::Result<T, TensorError>;

pub(crate) const INIT_RANGE: f64 = 0.08;

pub(crate) fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect();
    Tensor::from_vec(&[rows, cols], data).expect("rows * cols elements")
}

fn filled(rows: usize, cols: usize, value: f64) -> Tensor {
    Tensor::from_vec(&[rows, cols], vec![value; rows * cols]).expect("rows * cols elements")
}

/// `x W + b` with `W: in x out` and a `1 x out` bias.
#[derive(Clone, Debug)]
pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, output: usize) -> Self {
        let w = store.add(format!("{name}.w"), uniform(rng, input, output));
        let b = store.add(format!("{name}.b"), filled(1, output, 0.0));
        Linear { w, b }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// One LSTM layer with gates ordered input, forget, candidate, output.
#[derive(Clone, Debug)]
pub(crate) struct LstmLayer {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmLayer {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) -> Self {
        let wx = store.add(format!("{name}.wx"), uniform(rng, input, 4 * hidden));
        let wh = store.add(format!("{name}.wh"), uniform(rng, hidden, 4 * hidden));
        let mut bias = filled(1, 4 * hidden, 0.0);
        // Forget gate starts open.
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = store.add(format!("{name}.b"), bias);
        LstmLayer { wx, wh, b, hidden }
    }

    pub(crate) fn zero_state(&self, tape: &mut Tape) -> LstmState {
        let z = tape.constant(filled(1, self.hidden, 0.0));
        LstmState { h: z, c: z }
    }

    /// Input projection `X Wx + b` for a whole `T x in` sequence.
    pub(crate) fn project(&self, tape: &mut Tape, store: &ParamStore, xs: Var) -> Result<Var> {
        let wx = tape.param(store, self.wx);
        let b = tape.param(store, self.b);
        let p = tape.matmul(xs, wx)?;
        tape.add(p, b)
    }

    /// One step given the already projected input row.
    pub(crate) fn step_projected(&self, tape: &mut Tape, store: &ParamStore, px: Var, s: LstmState) -> Result<LstmState> {
        let wh = tape.param(store, self.wh);
        let ph = tape.matmul(s.h, wh)?;
        let gates = tape.add(px, ph)?;
        let n = self.hidden;
        let i = tape.slice(gates, 1, 0, n)?;
        let f = tape.slice(gates, 1, n, n)?;
        let g = tape.slice(gates, 1, 2 * n, n)?;
        let o = tape.slice(gates, 1, 3 * n, n)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let keep = tape.mul(f, s.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    pub(crate) fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, s: LstmState) -> Result<LstmState> {
        let px = self.project(tape, store, x)?;
        self.step_projected(tape, store, px, s)
    }

    /// Runs over the rows of `xs` (`T x in`); returns every hidden state and
    /// the final state.
    pub(crate) fn run(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        xs: Var,
        init: LstmState,
    ) -> Result<(Vec<Var>, LstmState)> {
        let steps = tape.value(xs).rows();
        let proj = self.project(tape, store, xs)?;
        let mut s = init;
        let mut hs = Vec::with_capacity(steps);
        for t in 0..steps {
            let px = tape.row(proj, t)?;
            s = self.step_projected(tape, store, px, s)?;
            hs.push(s.h);
        }
        Ok((hs, s))
    }
}

/// Stacked LSTM layers; layer `k > 0` reads the hidden states of layer `k - 1`.
#[derive(Clone, Debug)]
pub(crate) struct LstmStack {
    pub layers: Vec<LstmLayer>,
}

impl LstmStack {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: usize,
        hidden: usize,
        depth: usize,
    ) -> Self {
        let layers = (0..depth)
            .map(|k| LstmLayer::new(store, rng, &format!("{name}.l{k}"), if k == 0 { input } else { hidden }, hidden))
            .collect();
        LstmStack { layers }
    }

    /// Top-layer states as a `T x hidden` matrix plus every layer's final state.
    pub(crate) fn run(&self, tape: &mut Tape, store: &ParamStore, xs: Var) -> Result<(Var, Vec<LstmState>)> {
        let mut input = xs;
        let mut finals = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let init = layer.zero_state(tape);
            let (hs, last) = layer.run(tape, store, input, init)?;
            input = tape.concat(&hs, 0)?;
            finals.push(last);
        }
        Ok((input, finals))
    }

    pub(crate) fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        states: &mut [LstmState],
    ) -> Result<Var> {
        let mut input = x;
        for (layer, s) in self.layers.iter().zip(states.iter_mut()) {
            *s = layer.step(tape, store, input, *s)?;
            input = s.h;
        }
        Ok(input)
    }
}

/// Additive attention `v . tanh(H We + s Wd + b)` over encoder states.
#[derive(Clone, Debug)]
pub(crate) struct Additive {
    enc: ParamId,
    dec: Linear,
    v: ParamId,
}

/// Encoder-side projection reused at every decode step.
#[derive(Clone, Copy, Debug)]
pub(crate) struct AttentionMemory {
    pub states: Var,
    pub projected: Var,
}

impl Additive {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, hidden: usize) -> Self {
        let enc = store.add(format!("{name}.enc"), uniform(rng, hidden, hidden));
        let dec = Linear::new(store, rng, &format!("{name}.dec"), hidden, hidden);
        let v = store.add(format!("{name}.v"), uniform(rng, hidden, 1));
        Additive { enc, dec, v }
    }

    pub(crate) fn memory(&self, tape: &mut Tape, store: &ParamStore, states: Var) -> Result<AttentionMemory> {
        let we = tape.param(store, self.enc);
        let projected = tape.matmul(states, we)?;
        Ok(AttentionMemory { states, projected })
    }

    /// Returns the `1 x T` weights and the `1 x hidden` context vector.
    pub(crate) fn attend(&self, tape: &mut Tape, store: &ParamStore, mem: AttentionMemory, query: Var) -> Result<(Var, Var)> {
        let q = self.dec.forward(tape, store, query)?;
        let pre = tape.add(mem.projected, q)?;
        let e = tape.tanh(pre);
        let v = tape.param(store, self.v);
        let scores = tape.matmul(e, v)?;
        let scores = tape.transpose(scores)?;
        let weights = tape.softmax(scores);
        let context = tape.matmul(weights, mem.states)?;
        Ok((weights, context))
    }
}

/// Learned gain and bias for layer normalization.
#[derive(Clone, Debug)]
pub(crate) struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    pub(crate) fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), filled(1, width, 1.0));
        let beta = store.add(format!("{name}.beta"), filled(1, width, 0.0));
        Norm { gamma, beta }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b)
    }
}

/// Scaled dot-product attention split over `heads` column blocks.
#[derive(Clone, Debug)]
pub(crate) struct MultiHead {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    width: usize,
}

impl MultiHead {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, width: usize, heads: usize) -> Self {
        MultiHead {
            q: Linear::new(store, rng, &format!("{name}.q"), width, width),
            k: Linear::new(store, rng, &format!("{name}.k"), width, width),
            v: Linear::new(store, rng, &format!("{name}.v"), width, width),
            o: Linear::new(store, rng, &format!("{name}.o"), width, width),
            heads,
            width,
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, query: Var, memory: Var, mask: Option<Var>) -> Result<Var> {
        let q = self.q.forward(tape, store, query)?;
        let k = self.k.forward(tape, store, memory)?;
        let v = self.v.forward(tape, store, memory)?;
        let dh = self.width / self.heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice(q, 1, h * dh, dh)?;
            let kh = tape.slice(k, 1, h * dh, dh)?;
            let vh = tape.slice(v, 1, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let mut scores = tape.scale(scores, scale);
            if let Some(m) = mask {
                scores = tape.add(scores, m)?;
            }
            let w = tape.softmax(scores);
            outs.push(tape.matmul(w, vh)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { tape.concat(&outs, 1)? };
        self.o.forward(tape, store, joined)
    }
}

/// Post-norm encoder block: self-attention then a ReLU feed-forward.
#[derive(Clone, Debug)]
pub(crate) struct EncoderBlock {
    attn: MultiHead,
    norm1: Norm,
    ff1: Linear,
    ff2: Linear,
    norm2: Norm,
}

impl EncoderBlock {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, width: usize, heads: usize) -> Self {
        EncoderBlock {
            attn: MultiHead::new(store, rng, &format!("{name}.attn"), width, heads),
            norm1: Norm::new(store, &format!("{name}.norm1"), width),
            ff1: Linear::new(store, rng, &format!("{name}.ff1"), width, 4 * width),
            ff2: Linear::new(store, rng, &format!("{name}.ff2"), 4 * width, width),
            norm2: Norm::new(store, &format!("{name}.norm2"), width),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let a = self.attn.forward(tape, store, x, x, None)?;
        let r = tape.add(x, a)?;
        let x = self.norm1.forward(tape, store, r)?;
        let f = feed_forward(tape, store, &self.ff1, &self.ff2, x)?;
        let r = tape.add(x, f)?;
        self.norm2.forward(tape, store, r)
    }
}

fn feed_forward(tape: &mut Tape, store: &ParamStore, ff1: &Linear, ff2: &Linear, x: Var) -> Result<Var> {
    let h = ff1.forward(tape, store, x)?;
    let h = tape.relu(h);
    ff2.forward(tape, store, h)
}

/// Post-norm decoder block: masked self-attention, cross-attention over
/// the encoder output, feed-forward.
#[derive(Clone, Debug)]
pub(crate) struct DecoderBlock {
    self_attn: MultiHead,
    norm1: Norm,
    cross: MultiHead,
    norm2: Norm,
    ff1: Linear,
    ff2: Linear,
    norm3: Norm,
}

impl DecoderBlock {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, width: usize, heads: usize) -> Self {
        DecoderBlock {
            self_attn: MultiHead::new(store, rng, &format!("{name}.self"), width, heads),
            norm1: Norm::new(store, &format!("{name}.norm1"), width),
            cross: MultiHead::new(store, rng, &format!("{name}.cross"), width, heads),
            norm2: Norm::new(store, &format!("{name}.norm2"), width),
            ff1: Linear::new(store, rng, &format!("{name}.ff1"), width, 4 * width),
            ff2: Linear::new(store, rng, &format!("{name}.ff2"), 4 * width, width),
            norm3: Norm::new(store, &format!("{name}.norm3"), width),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, memory: Var, mask: Var) -> Result<Var> {
        let a = self.self_attn.forward(tape, store, x, x, Some(mask))?;
        let r = tape.add(x, a)?;
        let x = self.norm1.forward(tape, store, r)?;
        let c = self.cross.forward(tape, store, x, memory, None)?;
        let r = tape.add(x, c)?;
        let x = self.norm2.forward(tape, store, r)?;
        let f = feed_forward(tape, store, &self.ff1, &self.ff2, x)?;
        let r = tape.add(x, f)?;
        self.norm3.forward(tape, store, r)
    }
}

/// Additive mask blocking attention to later positions.
pub(crate) fn causal_mask(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            data[i * n + j] = -1e9;
        }
    }
    Tensor::from_vec(&[n, n], data).expect("n * n elements")
}

/// Sinusoidal position encodings, `n x width`.
pub(crate) fn positional_encoding(n: usize, width: usize) -> Tensor {
    let mut data = vec![0.0; n * width];
    for pos in 0..n {
        for i in 0..width {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / math::pow(10000.0, 2.0 * pair / width as f64);
            data[pos * width + i] = if i % 2 == 0 { math::sin(angle) } else { math::cos(angle) };
        }
    }
    Tensor::from_vec(&[n, width], data).expect("n * width elements")
}
