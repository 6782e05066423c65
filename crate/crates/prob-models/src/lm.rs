//! Decoder-only transformer over byte tokens (vocabulary 256, dedicated
//! start embedding outside the byte table).
//!
//! Two forward paths share one weight store: a tape-based batched path for
//! training, and an incremental KV-cached path used by both the encoder
//! and the decoder of the entropy codec — the coder sides must see
//! bit-identical distributions, so they run the exact same code.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nn_core::{
    attention_seq, dense, gather, layer_norm, normal_init, reshape, softmax_xent_bits, Adam,
    AttentionParams, BiasTable, ParamId, ParamStore, Tape, Tensor,
};

use crate::provider::ProbabilityProvider;
use crate::{Alphabet, ProbError, Result, TokenSequence};

pub const LM_VOCAB: usize = 256;
const DUMMY_TOKEN: usize = LM_VOCAB; // start-of-sequence embedding row
const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmConfig {
    pub embed: usize,
    pub blocks: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_context: usize,
}

impl LmConfig {
    /// Desk-scale default: trains on a toy corpus in minutes.
    pub fn desk(max_context: usize) -> Self {
        Self { embed: 64, blocks: 2, heads: 4, ffn: 256, max_context }
    }

    /// Configuration matching the reported large-scale setup.
    pub fn paper_scale(max_context: usize) -> Self {
        Self { embed: 256, blocks: 4, heads: 8, ffn: 1024, max_context }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.blocks == 0 || self.heads == 0 || self.ffn == 0 || self.max_context == 0 {
            return Err(ProbError::InvalidParameter("lm config fields must be positive".into()));
        }
        if self.embed % self.heads != 0 {
            return Err(ProbError::InvalidParameter(format!(
                "embed {} not divisible by heads {}",
                self.embed, self.heads
            )));
        }
        Ok(())
    }

    /// Longest internal sequence (context plus the start token); sizes the
    /// relative-position bias table.
    pub fn bias_span(&self) -> usize {
        self.max_context + 1
    }
}

struct LmLayout {
    tok_embed: ParamId,
    blocks: Vec<AttentionParams>,
    final_gamma: ParamId,
    final_beta: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

pub struct LmModel {
    pub config: LmConfig,
    pub store: ParamStore,
    layout: LmLayout,
}

impl LmModel {
    pub fn new(config: LmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.embed;
        let layout = LmLayout {
            tok_embed: store.add("lm.tok_embed", normal_init(&[LM_VOCAB + 1, d], 0.02, &mut rng))?,
            blocks: (0..config.blocks)
                .map(|i| {
                    AttentionParams::init(
                        &mut store,
                        &format!("lm.block{i}"),
                        d,
                        config.heads,
                        config.ffn,
                        BiasTable::Seq(config.bias_span()),
                        &mut rng,
                    )
                })
                .collect::<nn_core::Result<Vec<_>>>()?,
            final_gamma: store.add("lm.final_ln.gamma", Tensor::filled(&[d], 1.0))?,
            final_beta: store.add("lm.final_ln.beta", Tensor::zeros(&[d]))?,
            head_w: store.add("lm.head.w", normal_init(&[LM_VOCAB, d], 0.02, &mut rng))?,
            head_b: store.add("lm.head.b", Tensor::zeros(&[LM_VOCAB]))?,
        };
        Ok(Self { config, store, layout })
    }

    pub fn start(&self) -> LmState {
        LmState {
            pos: 0,
            k_cache: vec![Vec::new(); self.config.blocks],
            v_cache: vec![Vec::new(); self.config.blocks],
        }
    }

    /// Advance the state by one token (`None` = the start token) and
    /// return the distribution over the 256-way vocabulary for the next
    /// position.
    pub fn feed(&self, state: &mut LmState, token: Option<u8>) -> Result<Vec<f64>> {
        if state.pos >= self.config.bias_span() {
            return Err(ProbError::InvalidParameter(format!(
                "context length {} exceeded",
                self.config.max_context
            )));
        }
        let cfg = &self.config;
        let d = cfg.embed;
        let heads = cfg.heads;
        let dh = d / heads;
        let span = cfg.bias_span();
        let inv_sqrt_dh = 1.0 / (dh as f64).sqrt();
        let store = &self.store;
        let row = match token {
            Some(t) => t as usize,
            None => DUMMY_TOKEN,
        };
        let mut x = store.value(self.layout.tok_embed).data()[row * d..(row + 1) * d].to_vec();

        let pos = state.pos;
        for (bi, p) in self.layout.blocks.iter().enumerate() {
            let h = ln_vec(&x, store.value(p.ln1_gamma).data(), store.value(p.ln1_beta).data());
            let q = affine(&h, store.value(p.wq).data(), store.value(p.bq).data(), d, d);
            let k = affine(&h, store.value(p.wk).data(), store.value(p.bk).data(), d, d);
            let v = affine(&h, store.value(p.wv).data(), store.value(p.bv).data(), d, d);
            state.k_cache[bi].extend_from_slice(&k);
            state.v_cache[bi].extend_from_slice(&v);

            let bias = store.value(p.rel_bias).data();
            let table = 2 * span - 1;
            let mut ctx = vec![0.0; d];
            for hd in 0..heads {
                let qh = &q[hd * dh..(hd + 1) * dh];
                let mut scores = Vec::with_capacity(pos + 1);
                for j in 0..=pos {
                    let kj = &state.k_cache[bi][j * d + hd * dh..j * d + (hd + 1) * dh];
                    let dot: f64 = qh.iter().zip(kj).map(|(a, b)| a * b).sum();
                    scores.push(dot * inv_sqrt_dh + bias[hd * table + (pos + span - 1 - j)]);
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for s in &mut scores {
                    *s = (*s - max).exp();
                    denom += *s;
                }
                for (j, s) in scores.iter().enumerate() {
                    let a = s / denom;
                    let vj = &state.v_cache[bi][j * d + hd * dh..j * d + (hd + 1) * dh];
                    for (c, vv) in ctx[hd * dh..(hd + 1) * dh].iter_mut().zip(vj) {
                        *c += a * vv;
                    }
                }
            }
            let o = affine(&ctx, store.value(p.wo).data(), store.value(p.bo).data(), d, d);
            for (xv, ov) in x.iter_mut().zip(&o) {
                *xv += ov;
            }
            let h2 = ln_vec(&x, store.value(p.ln2_gamma).data(), store.value(p.ln2_beta).data());
            let f1 = affine(&h2, store.value(p.w_ff1).data(), store.value(p.b_ff1).data(), cfg.ffn, d);
            let f1: Vec<f64> = f1.iter().map(|&u| gelu_scalar(u)).collect();
            let f2 = affine(&f1, store.value(p.w_ff2).data(), store.value(p.b_ff2).data(), d, cfg.ffn);
            for (xv, fv) in x.iter_mut().zip(&f2) {
                *xv += fv;
            }
        }
        state.pos += 1;

        let hf = ln_vec(&x, store.value(self.layout.final_gamma).data(), store.value(self.layout.final_beta).data());
        let logits = affine(&hf, store.value(self.layout.head_w).data(), store.value(self.layout.head_b).data(), LM_VOCAB, d);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut dist: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let denom: f64 = dist.iter().sum();
        for p in &mut dist {
            *p /= denom;
        }
        Ok(dist)
    }

    /// Batched tape forward used for training; `ids` is `[B, T]` of
    /// embedding rows (start token included), output logits are `[B*T, 256]`.
    fn tape_logits(&self, tape: &Tape, store: &ParamStore, ids: &[usize], b: usize, t: usize) -> Result<nn_core::Var> {
        let d = self.config.embed;
        let embed = tape.param(store, self.layout.tok_embed);
        let mut map = Vec::with_capacity(b * t * d);
        for id in ids {
            for j in 0..d {
                map.push(id * d + j);
            }
        }
        let mut x = gather(tape, embed, &[b, t, d], Rc::new(map))?;
        for p in &self.layout.blocks {
            x = attention_seq(tape, x, p, store, self.config.heads, true, self.config.bias_span())?;
        }
        let x = layer_norm(
            tape,
            x,
            tape.param(store, self.layout.final_gamma),
            tape.param(store, self.layout.final_beta),
        )?;
        let logits = dense(tape, x, tape.param(store, self.layout.head_w), tape.param(store, self.layout.head_b))?;
        Ok(reshape(tape, logits, &[b * t, LM_VOCAB])?)
    }
}

/// Incremental decoding state: per-block key/value caches.
pub struct LmState {
    pos: usize,
    k_cache: Vec<Vec<f64>>,
    v_cache: Vec<Vec<f64>>,
}

impl LmState {
    pub fn pos(&self) -> usize {
        self.pos
    }
}

fn ln_vec(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mu = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
    let inv = 1.0 / (var + NORM_EPS).sqrt();
    x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| g * (v - mu) * inv + b)
        .collect()
}

/// `y[o] = W[o] . x + b[o]` with `W: [dout, din]` row-major.
fn affine(x: &[f64], w: &[f64], b: &[f64], dout: usize, din: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for (o, yv) in y.iter_mut().enumerate().take(dout) {
        let row = &w[o * din..(o + 1) * din];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *yv += acc;
    }
    y
}

fn gelu_scalar(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    const A: f64 = 0.044_715;
    0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh())
}

/// One distribution per position: position `k` is conditioned on tokens
/// `< k` (position 0 on the start token alone).
pub fn lm_forward(model: &LmModel, tokens: &[u8]) -> Result<Vec<Vec<f64>>> {
    if tokens.len() > model.config.max_context {
        return Err(ProbError::InvalidParameter(format!(
            "sequence length {} exceeds max context {}",
            tokens.len(),
            model.config.max_context
        )));
    }
    let mut state = model.start();
    let mut dists = Vec::with_capacity(tokens.len());
    if tokens.is_empty() {
        return Ok(dists);
    }
    dists.push(model.feed(&mut state, None)?);
    for &t in &tokens[..tokens.len() - 1] {
        dists.push(model.feed(&mut state, Some(t))?);
    }
    Ok(dists)
}

/// Restrict a 256-way distribution to the alphabet prefix and renormalize.
pub fn restrict_to_alphabet(dist: &[f64], alphabet: Alphabet) -> Vec<f64> {
    let size = alphabet.size();
    let head = &dist[..size];
    let sum: f64 = head.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / size as f64; size];
    }
    head.iter().map(|p| p / sum).collect()
}

/// Sequential provider over a trained LM: prefixes that grow one token at
/// a time advance the cache in O(1) feeds; anything else refeeds from the
/// start.
pub struct LmProvider<'a> {
    model: &'a LmModel,
    alphabet: Alphabet,
    state: LmState,
    fed: Vec<u8>,
    last: Option<Vec<f64>>,
}

impl<'a> LmProvider<'a> {
    pub fn new(model: &'a LmModel, alphabet: Alphabet) -> Self {
        Self { model, alphabet, state: model.start(), fed: Vec::new(), last: None }
    }

    fn reset(&mut self) {
        self.state = self.model.start();
        self.fed.clear();
        self.last = None;
    }
}

impl ProbabilityProvider for LmProvider<'_> {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn next_dist(&mut self, prefix: &[u8]) -> Result<Vec<f64>> {
        if prefix.len() < self.fed.len() || !prefix.starts_with(&self.fed) {
            self.reset();
        }
        if self.last.is_none() {
            self.last = Some(self.model.feed(&mut self.state, None)?);
        }
        for i in self.fed.len()..prefix.len() {
            self.last = Some(self.model.feed(&mut self.state, Some(prefix[i]))?);
            self.fed.push(prefix[i]);
        }
        Ok(restrict_to_alphabet(self.last.as_ref().expect("set above"), self.alphabet))
    }
}

/// Minimize mean next-token cross-entropy (bits) with Adam at a fixed
/// learning rate. All corpus sequences must share one length. Returns the
/// per-iteration loss trace alongside the model.
pub fn train_lm(
    corpus: &[TokenSequence],
    config: LmConfig,
    iters: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<(LmModel, Vec<f64>)> {
    if corpus.is_empty() {
        return Err(ProbError::InvalidParameter("empty corpus".into()));
    }
    let t = corpus[0].tokens.len();
    if t == 0 || corpus.iter().any(|s| s.tokens.len() != t) {
        return Err(ProbError::InvalidParameter(
            "corpus sequences must share one nonzero length".into(),
        ));
    }
    if t > config.max_context {
        return Err(ProbError::InvalidParameter(format!(
            "corpus length {t} exceeds max context {}",
            config.max_context
        )));
    }
    let mut model = LmModel::new(config, seed)?;
    let mut adam = Adam::new(&model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e11);
    let mut trace = Vec::with_capacity(iters);

    for _ in 0..iters {
        let mut ids = Vec::with_capacity(batch * t);
        let mut targets = Vec::with_capacity(batch * t);
        for _ in 0..batch {
            let seq = &corpus[rng.gen_range(0..corpus.len())].tokens;
            ids.push(DUMMY_TOKEN);
            for k in 0..t {
                if k > 0 {
                    ids.push(seq[k - 1] as usize);
                }
                targets.push(seq[k] as usize);
            }
        }
        let tape = Tape::new();
        let logits = model.tape_logits(&tape, &model.store, &ids, batch, t)?;
        let loss = softmax_xent_bits(&tape, logits, Rc::new(targets))?;
        let loss_val = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        model.store.zero_grads();
        tape.accumulate_param_grads(&grads, &mut model.store);
        adam.step(&mut model.store, lr);
        trace.push(loss_val);
    }
    Ok((model, trace))
}

/// Mean next-token cross-entropy of the model on a corpus, in bits.
pub fn lm_cross_entropy_bits(model: &LmModel, corpus: &[TokenSequence]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in corpus {
        let dists = lm_forward(model, &seq.tokens)?;
        for (d, &t) in dists.iter().zip(&seq.tokens) {
            total -= d[t as usize].max(1e-300).log2();
            count += 1;
        }
    }
    if count == 0 {
        return Err(ProbError::InvalidParameter("empty corpus".into()));
    }
    Ok(total / count as f64)
}
