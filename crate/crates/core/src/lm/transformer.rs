//! Decoder-only transformer with hand-written backpropagation.
//!
//! Pre-LayerNorm GPT blocks: learned token and position embeddings,
//! causal multi-head self-attention, a 4x GELU MLP, a final LayerNorm and an
//! untied output head. All weights live in one flat `Vec<f64>`; the
//! [`Architecture`] alone fixes the layout, so checkpoints and optimizer
//! state only need the flat buffer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::{add_row_bias, matmul, matmul_a_bt, matmul_at_b_acc, sum_rows_acc};
use super::{LanguageModel, LmError, LossGradSpec, NextTokenDistribution, Result, Sequence, Token, DEFAULT_CONTEXT, VOCAB_SIZE};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub vocab: usize,
    pub context: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { vocab: VOCAB_SIZE, context: DEFAULT_CONTEXT, width: 64, layers: 2, heads: 2 }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let ok = self.vocab > 0
            && self.context >= 2
            && self.width > 0
            && self.layers > 0
            && self.heads > 0
            && self.width % self.heads == 0;
        if ok {
            Ok(())
        } else {
            Err(LmError::Checkpoint(format!("invalid architecture {self:?}")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn mlp_width(&self) -> usize {
        4 * self.width
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        Layout::new(self).tensors.into_iter().map(|t| (t.name, t.shape)).collect()
    }
}

#[derive(Debug, Clone)]
struct TensorSlot {
    name: String,
    offset: usize,
    shape: Vec<usize>,
}

impl TensorSlot {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    qkv_w: usize,
    qkv_b: usize,
    proj_w: usize,
    proj_b: usize,
    ln2_g: usize,
    ln2_b: usize,
    fc_w: usize,
    fc_b: usize,
    out_w: usize,
    out_b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    tensors: Vec<TensorSlot>,
    total: usize,
    tok_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    head_w: usize,
    head_b: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut slot = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSlot { name, offset, shape });
            offset
        };
        let (d, v, h) = (arch.width, arch.vocab, arch.mlp_width());
        let tok_emb = slot("tok_emb".into(), vec![v, d]);
        let pos_emb = slot("pos_emb".into(), vec![arch.context, d]);
        let mut layers = Vec::with_capacity(arch.layers);
        for l in 0..arch.layers {
            layers.push(LayerOffsets {
                ln1_g: slot(format!("h{l}.ln1.g"), vec![d]),
                ln1_b: slot(format!("h{l}.ln1.b"), vec![d]),
                qkv_w: slot(format!("h{l}.attn.qkv.w"), vec![d, 3 * d]),
                qkv_b: slot(format!("h{l}.attn.qkv.b"), vec![3 * d]),
                proj_w: slot(format!("h{l}.attn.proj.w"), vec![d, d]),
                proj_b: slot(format!("h{l}.attn.proj.b"), vec![d]),
                ln2_g: slot(format!("h{l}.ln2.g"), vec![d]),
                ln2_b: slot(format!("h{l}.ln2.b"), vec![d]),
                fc_w: slot(format!("h{l}.mlp.fc.w"), vec![d, h]),
                fc_b: slot(format!("h{l}.mlp.fc.b"), vec![h]),
                out_w: slot(format!("h{l}.mlp.out.w"), vec![h, d]),
                out_b: slot(format!("h{l}.mlp.out.b"), vec![d]),
            });
        }
        let lnf_g = slot("lnf.g".into(), vec![d]);
        let lnf_b = slot("lnf.b".into(), vec![d]);
        let head_w = slot("head.w".into(), vec![d, v]);
        let head_b = slot("head.b".into(), vec![v]);
        Self { tensors, total, tok_emb, pos_emb, layers, lnf_g, lnf_b, head_w, head_b }
    }
}

/// Gradient buffer aligned with [`TransformerLm::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct TransformerLm {
    arch: Architecture,
    params: Vec<f64>,
    layout: Layout,
}

struct NormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    ln1: NormCache,
    ln1_out: Vec<f64>,
    qkv: Vec<f64>,
    att: Vec<f64>,
    att_out: Vec<f64>,
    ln2: NormCache,
    ln2_out: Vec<f64>,
    fc_pre: Vec<f64>,
    fc_act: Vec<f64>,
}

struct ForwardCache {
    inputs: Vec<Token>,
    layers: Vec<LayerCache>,
    lnf: NormCache,
    lnf_out: Vec<f64>,
    log_probs: Vec<f64>,
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], d: usize) -> (Vec<f64>, NormCache) {
    let t = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; t];
    for i in 0..t {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = rs;
        for c in 0..d {
            let xh = (row[c] - mean) * rs;
            xhat[i * d + c] = xh;
            out[i * d + c] = xh * g[c] + b[c];
        }
    }
    (out, NormCache { xhat, rstd })
}

/// Accumulates parameter gradients and adds the input gradient into `dx`.
fn layer_norm_backward(dy: &[f64], cache: &NormCache, g: &[f64], dg: &mut [f64], db: &mut [f64], dx: &mut [f64], d: usize) {
    let t = dy.len() / d;
    let mut dxhat = vec![0.0; d];
    for i in 0..t {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..d {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            dxhat[c] = dyr[c] * g[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xh[c];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let rs = cache.rstd[i];
        for c in 0..d {
            dx[i * d + c] += rs * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
}

const GELU_K: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    let s = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (s * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let s = (2.0 / std::f64::consts::PI).sqrt();
    let t = (s * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * s * (1.0 + 3.0 * GELU_K * x * x)
}

impl TransformerLm {
    /// Random initialization: N(0, 0.02) weights, residual projections
    /// scaled by `1/sqrt(2 * layers)`, unit LayerNorm gains, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid_scale = 1.0 / (2.0 * arch.layers as f64).sqrt();
        for slot in &layout.tensors {
            let range = slot.offset..slot.offset + slot.len();
            let name = slot.name.as_str();
            if name.ends_with(".g") {
                params[range].fill(1.0);
            } else if name.ends_with(".b") {
                // zero
            } else {
                let scale = if name.ends_with("proj.w") || name.ends_with("mlp.out.w") { resid_scale } else { 1.0 };
                for p in &mut params[range] {
                    *p = normal.sample(&mut rng) * scale;
                }
            }
        }
        Ok(Self { arch, params, layout })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if params.len() != layout.total {
            return Err(LmError::Checkpoint(format!(
                "parameter count {} does not match architecture ({})",
                params.len(),
                layout.total
            )));
        }
        Ok(Self { arch, params, layout })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(name, offset, len)` per tensor.
    pub fn tensor_ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        self.layout
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.offset..t.offset + t.len()))
            .collect()
    }

    fn p(&self, offset: usize, len: usize) -> &[f64] {
        &self.params[offset..offset + len]
    }

    fn forward(&self, inputs: &[Token]) -> Result<ForwardCache> {
        let a = &self.arch;
        let (t, d, v, hw) = (inputs.len(), a.width, a.vocab, a.mlp_width());
        if t == 0 {
            return Err(LmError::SequenceTooShort(0));
        }
        if t > a.context {
            return Err(LmError::ContextOverflow { len: t, context: a.context });
        }
        let lay = &self.layout;
        let mut x = vec![0.0; t * d];
        for (i, tok) in inputs.iter().enumerate() {
            if tok.id() >= v {
                return Err(LmError::TokenOutOfRange(tok.0));
            }
            let te = self.p(lay.tok_emb + tok.id() * d, d);
            let pe = self.p(lay.pos_emb + i * d, d);
            for c in 0..d {
                x[i * d + c] = te[c] + pe[c];
            }
        }

        let mut layers = Vec::with_capacity(a.layers);
        for lo in &lay.layers {
            let (ln1_out, ln1) = layer_norm(&x, self.p(lo.ln1_g, d), self.p(lo.ln1_b, d), d);
            let mut qkv = vec![0.0; t * 3 * d];
            matmul(&ln1_out, self.p(lo.qkv_w, d * 3 * d), &mut qkv, t, d, 3 * d, false);
            add_row_bias(&mut qkv, self.p(lo.qkv_b, 3 * d));
            let (att, att_out) = self.attention(&qkv, t);
            matmul(&att_out, self.p(lo.proj_w, d * d), &mut x, t, d, d, true);
            add_row_bias(&mut x, self.p(lo.proj_b, d));

            let (ln2_out, ln2) = layer_norm(&x, self.p(lo.ln2_g, d), self.p(lo.ln2_b, d), d);
            let mut fc_pre = vec![0.0; t * hw];
            matmul(&ln2_out, self.p(lo.fc_w, d * hw), &mut fc_pre, t, d, hw, false);
            add_row_bias(&mut fc_pre, self.p(lo.fc_b, hw));
            let fc_act: Vec<f64> = fc_pre.iter().map(|&z| gelu(z)).collect();
            matmul(&fc_act, self.p(lo.out_w, hw * d), &mut x, t, hw, d, true);
            add_row_bias(&mut x, self.p(lo.out_b, d));

            layers.push(LayerCache { ln1, ln1_out, qkv, att, att_out, ln2, ln2_out, fc_pre, fc_act });
        }

        let (lnf_out, lnf) = layer_norm(&x, self.p(lay.lnf_g, d), self.p(lay.lnf_b, d), d);
        let mut log_probs = vec![0.0; t * v];
        matmul(&lnf_out, self.p(lay.head_w, d * v), &mut log_probs, t, d, v, false);
        add_row_bias(&mut log_probs, self.p(lay.head_b, v));
        for row in log_probs.chunks_exact_mut(v) {
            let lse = super::logsumexp(row);
            for z in row.iter_mut() {
                *z -= lse;
            }
        }
        Ok(ForwardCache { inputs: inputs.to_vec(), layers, lnf, lnf_out, log_probs })
    }

    /// Causal attention over a `[t, 3d]` qkv buffer. Returns the `[heads, t, t]`
    /// probabilities and the `[t, d]` concatenated head outputs.
    fn attention(&self, qkv: &[f64], t: usize) -> (Vec<f64>, Vec<f64>) {
        let (d, nh, hd) = (self.arch.width, self.arch.heads, self.arch.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();
        let mut att = vec![0.0; nh * t * t];
        let mut out = vec![0.0; t * d];
        for h in 0..nh {
            for i in 0..t {
                let q = &qkv[i * 3 * d + h * hd..i * 3 * d + (h + 1) * hd];
                let row = &mut att[h * t * t + i * t..h * t * t + i * t + t];
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    let k = &qkv[j * 3 * d + d + h * hd..j * 3 * d + d + (h + 1) * hd];
                    let s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                    row[j] = s;
                    max = max.max(s);
                }
                let mut sum = 0.0;
                for r in row.iter_mut().take(i + 1) {
                    *r = (*r - max).exp();
                    sum += *r;
                }
                for r in row.iter_mut().take(i + 1) {
                    *r /= sum;
                }
                let o = &mut out[i * d + h * hd..i * d + (h + 1) * hd];
                for j in 0..=i {
                    let p = row[j];
                    let vv = &qkv[j * 3 * d + 2 * d + h * hd..j * 3 * d + 2 * d + (h + 1) * hd];
                    for c in 0..hd {
                        o[c] += p * vv[c];
                    }
                }
            }
        }
        (att, out)
    }

    fn attention_backward(&self, dout: &[f64], qkv: &[f64], att: &[f64], t: usize) -> Vec<f64> {
        let (d, nh, hd) = (self.arch.width, self.arch.heads, self.arch.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();
        let mut dqkv = vec![0.0; t * 3 * d];
        let mut dp = vec![0.0; t];
        for h in 0..nh {
            for i in 0..t {
                let row = &att[h * t * t + i * t..h * t * t + i * t + t];
                let dout_i = &dout[i * d + h * hd..i * d + (h + 1) * hd];
                let mut weighted = 0.0;
                for j in 0..=i {
                    let vo = j * 3 * d + 2 * d + h * hd;
                    let vv = &qkv[vo..vo + hd];
                    dp[j] = dout_i.iter().zip(vv).map(|(a, b)| a * b).sum::<f64>();
                    weighted += row[j] * dp[j];
                    for c in 0..hd {
                        dqkv[vo + c] += row[j] * dout_i[c];
                    }
                }
                let qo = i * 3 * d + h * hd;
                for j in 0..=i {
                    let ds = row[j] * (dp[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let ko = j * 3 * d + d + h * hd;
                    for c in 0..hd {
                        dqkv[qo + c] += ds * qkv[ko + c];
                        dqkv[ko + c] += ds * qkv[qo + c];
                    }
                }
            }
        }
        dqkv
    }

    /// Backpropagates `dlogits` (`[t, vocab]`) through the cached forward pass.
    fn backward_from_logits(&self, cache: &ForwardCache, dlogits: &[f64], grads: &mut [f64]) {
        let a = &self.arch;
        let (t, d, v, hw) = (cache.inputs.len(), a.width, a.vocab, a.mlp_width());
        let lay = &self.layout;

        matmul_at_b_acc(&cache.lnf_out, dlogits, &mut grads[lay.head_w..lay.head_w + d * v], t, d, v);
        sum_rows_acc(dlogits, &mut grads[lay.head_b..lay.head_b + v]);
        let mut dln = vec![0.0; t * d];
        matmul_a_bt(dlogits, self.p(lay.head_w, d * v), &mut dln, t, v, d);
        let mut dx = vec![0.0; t * d];
        {
            let (dg, db) = split_pair(grads, lay.lnf_g, lay.lnf_b, d);
            layer_norm_backward(&dln, &cache.lnf, self.p(lay.lnf_g, d), dg, db, &mut dx, d);
        }

        for (lo, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP branch
            matmul_at_b_acc(&lc.fc_act, &dx, &mut grads[lo.out_w..lo.out_w + hw * d], t, hw, d);
            sum_rows_acc(&dx, &mut grads[lo.out_b..lo.out_b + d]);
            let mut dfc = vec![0.0; t * hw];
            matmul_a_bt(&dx, self.p(lo.out_w, hw * d), &mut dfc, t, d, hw);
            for (g, &z) in dfc.iter_mut().zip(&lc.fc_pre) {
                *g *= gelu_grad(z);
            }
            matmul_at_b_acc(&lc.ln2_out, &dfc, &mut grads[lo.fc_w..lo.fc_w + d * hw], t, d, hw);
            sum_rows_acc(&dfc, &mut grads[lo.fc_b..lo.fc_b + hw]);
            let mut dln2 = vec![0.0; t * d];
            matmul_a_bt(&dfc, self.p(lo.fc_w, d * hw), &mut dln2, t, hw, d);
            {
                let (dg, db) = split_pair(grads, lo.ln2_g, lo.ln2_b, d);
                layer_norm_backward(&dln2, &lc.ln2, self.p(lo.ln2_g, d), dg, db, &mut dx, d);
            }

            // attention branch
            matmul_at_b_acc(&lc.att_out, &dx, &mut grads[lo.proj_w..lo.proj_w + d * d], t, d, d);
            sum_rows_acc(&dx, &mut grads[lo.proj_b..lo.proj_b + d]);
            let mut datt = vec![0.0; t * d];
            matmul_a_bt(&dx, self.p(lo.proj_w, d * d), &mut datt, t, d, d);
            let dqkv = self.attention_backward(&datt, &lc.qkv, &lc.att, t);
            matmul_at_b_acc(&lc.ln1_out, &dqkv, &mut grads[lo.qkv_w..lo.qkv_w + d * 3 * d], t, d, 3 * d);
            sum_rows_acc(&dqkv, &mut grads[lo.qkv_b..lo.qkv_b + 3 * d]);
            let mut dln1 = vec![0.0; t * d];
            matmul_a_bt(&dqkv, self.p(lo.qkv_w, d * 3 * d), &mut dln1, t, 3 * d, d);
            {
                let (dg, db) = split_pair(grads, lo.ln1_g, lo.ln1_b, d);
                layer_norm_backward(&dln1, &lc.ln1, self.p(lo.ln1_g, d), dg, db, &mut dx, d);
            }
        }

        for (i, tok) in cache.inputs.iter().enumerate() {
            let te = lay.tok_emb + tok.id() * d;
            let pe = lay.pos_emb + i * d;
            for c in 0..d {
                grads[te + c] += dx[i * d + c];
                grads[pe + c] += dx[i * d + c];
            }
        }
    }

    /// Forward every sequence once, let `weights` turn the sequence
    /// log-probabilities into loss weights, then backpropagate
    /// `sum_i w_i * log p(seq_i)`. Returns the log-probabilities and the
    /// gradient.
    pub fn value_and_grad<F>(&self, seqs: &[Sequence], weights: F) -> Result<(Vec<f64>, Gradients)>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        let v = self.arch.vocab;
        let mut caches = Vec::with_capacity(seqs.len());
        let mut logps = Vec::with_capacity(seqs.len());
        for seq in seqs {
            seq.validate_scored(self.arch.context)?;
            let toks = seq.tokens();
            let cache = self.forward(&toks[..toks.len() - 1])?;
            logps.push(toks[1..].iter().enumerate().map(|(j, t)| cache.log_probs[j * v + t.id()]).sum());
            caches.push(cache);
        }
        let w = weights(&logps);
        assert_eq!(w.len(), seqs.len(), "one weight per sequence");
        let mut grads = Gradients::zeros(self.params.len());
        for ((seq, cache), &weight) in seqs.iter().zip(&caches).zip(&w) {
            if weight != 0.0 {
                self.accumulate_sequence_grad(seq, cache, weight, &mut grads);
            }
        }
        Ok((logps, grads))
    }

    fn accumulate_sequence_grad(&self, seq: &Sequence, cache: &ForwardCache, weight: f64, grads: &mut Gradients) {
        let v = self.arch.vocab;
        let mut dlogits: Vec<f64> = cache.log_probs.iter().map(|lp| -weight * lp.exp()).collect();
        for (j, target) in seq.tokens()[1..].iter().enumerate() {
            dlogits[j * v + target.id()] += weight;
        }
        self.backward_from_logits(cache, &dlogits, &mut grads.values);
    }

    /// Gradient of `sum_i w_i * log p(seq_i)`.
    pub fn backward(&self, spec: &LossGradSpec) -> Result<Gradients> {
        let mut grads = Gradients::zeros(self.params.len());
        for (seq, weight) in &spec.terms {
            seq.validate_scored(self.arch.context)?;
            if *weight == 0.0 {
                continue;
            }
            let toks = seq.tokens();
            let cache = self.forward(&toks[..toks.len() - 1])?;
            self.accumulate_sequence_grad(seq, &cache, *weight, &mut grads);
        }
        Ok(grads)
    }
}

fn split_pair(grads: &mut [f64], g_off: usize, b_off: usize, d: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(b_off, g_off + d);
    let (g, rest) = grads[g_off..b_off + d].split_at_mut(d);
    (g, rest)
}

impl LanguageModel for TransformerLm {
    fn vocab_size(&self) -> usize {
        self.arch.vocab
    }

    fn context_window(&self) -> usize {
        self.arch.context
    }

    fn predict(&self, inputs: &[Token]) -> Result<Vec<NextTokenDistribution>> {
        let cache = self.forward(inputs)?;
        Ok(cache
            .log_probs
            .chunks_exact(self.arch.vocab)
            .map(|row| NextTokenDistribution::from_normalized(row.to_vec()))
            .collect())
    }

    fn forward_logprobs(&self, x: &Sequence) -> Result<Vec<f64>> {
        x.validate_scored(self.arch.context)?;
        let tokens = x.tokens();
        let cache = self.forward(&tokens[..tokens.len() - 1])?;
        Ok(cache.log_probs.chunks_exact(self.arch.vocab).zip(&tokens[1..]).map(|(row, t)| row[t.id()]).collect())
    }
}
