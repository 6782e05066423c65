//! Windowed multi-head self-attention blocks (pre-norm, learned relative
//! position bias), composed from the tape primitives. The 2-D variant
//! partitions a feature map into non-overlapping windows and attends
//! within each; the sequence variant treats the whole sequence as one
//! window and supports causal masking for the token model.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::ops::{add, dense, gather, gelu, layer_norm, matmul_batched, scale, softmax_last};
use crate::params::{normal_init, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::{NnError, Result, Tensor};

const MASK_NEG: f64 = -1e30;
const PROJ_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub window: usize,
    pub heads: usize,
    pub dim: usize,
    pub causal: bool,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.heads == 0 || self.dim == 0 {
            return Err(NnError::InvalidParameter("attention config fields must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(NnError::InvalidParameter(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// What the relative-position bias table indexes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasTable {
    /// 2-D offsets within a `window x window` tile: `(2w-1)^2` entries.
    Window2d(usize),
    /// 1-D offsets up to a maximum sequence length: `2*max_len-1` entries.
    Seq(usize),
}

impl BiasTable {
    fn size(&self) -> usize {
        match self {
            BiasTable::Window2d(w) => (2 * w - 1) * (2 * w - 1),
            BiasTable::Seq(max_len) => 2 * max_len - 1,
        }
    }
}

/// Parameter ids for one attention block.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
    pub w_ff1: ParamId,
    pub b_ff1: ParamId,
    pub w_ff2: ParamId,
    pub b_ff2: ParamId,
    pub rel_bias: ParamId,
    pub table: BiasTable,
}

impl AttentionParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        table: BiasTable,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let proj = |rng: &mut ChaCha8Rng| normal_init(&[dim, dim], PROJ_STD, rng);
        Ok(Self {
            ln1_gamma: store.add(&format!("{prefix}.ln1.gamma"), Tensor::filled(&[dim], 1.0))?,
            ln1_beta: store.add(&format!("{prefix}.ln1.beta"), Tensor::zeros(&[dim]))?,
            wq: store.add(&format!("{prefix}.q.w"), proj(rng))?,
            bq: store.add(&format!("{prefix}.q.b"), Tensor::zeros(&[dim]))?,
            wk: store.add(&format!("{prefix}.k.w"), proj(rng))?,
            bk: store.add(&format!("{prefix}.k.b"), Tensor::zeros(&[dim]))?,
            wv: store.add(&format!("{prefix}.v.w"), proj(rng))?,
            bv: store.add(&format!("{prefix}.v.b"), Tensor::zeros(&[dim]))?,
            wo: store.add(&format!("{prefix}.o.w"), proj(rng))?,
            bo: store.add(&format!("{prefix}.o.b"), Tensor::zeros(&[dim]))?,
            ln2_gamma: store.add(&format!("{prefix}.ln2.gamma"), Tensor::filled(&[dim], 1.0))?,
            ln2_beta: store.add(&format!("{prefix}.ln2.beta"), Tensor::zeros(&[dim]))?,
            w_ff1: store.add(&format!("{prefix}.ffn1.w"), normal_init(&[ffn_dim, dim], PROJ_STD, rng))?,
            b_ff1: store.add(&format!("{prefix}.ffn1.b"), Tensor::zeros(&[ffn_dim]))?,
            w_ff2: store.add(&format!("{prefix}.ffn2.w"), normal_init(&[dim, ffn_dim], PROJ_STD, rng))?,
            b_ff2: store.add(&format!("{prefix}.ffn2.b"), Tensor::zeros(&[dim]))?,
            rel_bias: store.add(
                &format!("{prefix}.rel_bias"),
                Tensor::zeros(&[heads * table.size()]),
            )?,
            table,
        })
    }
}

/// Pre-norm attention + feed-forward on token groups `[G, T, D]`.
/// `bias_idx(i, j)` maps a (query, key) position pair to a table slot.
fn attention_core(
    tape: &Tape,
    x: Var,
    p: &AttentionParams,
    store: &ParamStore,
    heads: usize,
    causal: bool,
    bias_idx: &dyn Fn(usize, usize) -> usize,
) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 3 {
        return Err(NnError::ShapeMismatch(format!("attention expects [G, T, D], got {shape:?}")));
    }
    let (g, t, d) = (shape[0], shape[1], shape[2]);
    if d % heads != 0 {
        return Err(NnError::InvalidParameter(format!("dim {d} not divisible by heads {heads}")));
    }
    let dh = d / heads;
    let table_size = p.table.size();

    let ln1 = layer_norm(tape, x, tape.param(store, p.ln1_gamma), tape.param(store, p.ln1_beta))?;
    let q = dense(tape, ln1, tape.param(store, p.wq), tape.param(store, p.bq))?;
    let k = dense(tape, ln1, tape.param(store, p.wk), tape.param(store, p.bk))?;
    let v = dense(tape, ln1, tape.param(store, p.wv), tape.param(store, p.bv))?;

    // [G, T, D] -> [G*heads, T, dh]
    let mut split_map = Vec::with_capacity(g * heads * t * dh);
    for gi in 0..g {
        for h in 0..heads {
            for ti in 0..t {
                for j in 0..dh {
                    split_map.push(gi * t * d + ti * d + h * dh + j);
                }
            }
        }
    }
    let split_map = Rc::new(split_map);
    let q3 = gather(tape, q, &[g * heads, t, dh], Rc::clone(&split_map))?;
    let v3 = gather(tape, v, &[g * heads, t, dh], Rc::clone(&split_map))?;
    // K transposed: [G*heads, dh, T]
    let mut kt_map = Vec::with_capacity(g * heads * dh * t);
    for gi in 0..g {
        for h in 0..heads {
            for j in 0..dh {
                for ti in 0..t {
                    kt_map.push(gi * t * d + ti * d + h * dh + j);
                }
            }
        }
    }
    let kt = gather(tape, k, &[g * heads, dh, t], Rc::new(kt_map))?;

    let scores = matmul_batched(tape, q3, kt)?;
    let scores = scale(tape, scores, 1.0 / (dh as f64).sqrt());

    // Learned relative position bias, broadcast over groups.
    let bias_param = tape.param(store, p.rel_bias);
    let mut bias_map = Vec::with_capacity(g * heads * t * t);
    for _gi in 0..g {
        for h in 0..heads {
            for i in 0..t {
                for j in 0..t {
                    bias_map.push(h * table_size + bias_idx(i, j));
                }
            }
        }
    }
    let bias = gather(tape, bias_param, &[g * heads, t, t], Rc::new(bias_map))?;
    let mut scores = add(tape, scores, bias)?;
    if causal {
        let mut mask = vec![0.0; g * heads * t * t];
        for row in mask.chunks_mut(t * t) {
            for i in 0..t {
                for j in i + 1..t {
                    row[i * t + j] = MASK_NEG;
                }
            }
        }
        let mask = tape.leaf(Tensor::from_vec(&[g * heads, t, t], mask)?);
        scores = add(tape, scores, mask)?;
    }
    let attn = softmax_last(tape, scores)?;
    let ctx = matmul_batched(tape, attn, v3)?;

    // [G*heads, T, dh] -> [G, T, D]
    let mut merge_map = Vec::with_capacity(g * t * d);
    for gi in 0..g {
        for ti in 0..t {
            for h in 0..heads {
                for j in 0..dh {
                    merge_map.push((gi * heads + h) * t * dh + ti * dh + j);
                }
            }
        }
    }
    let merged = gather(tape, ctx, &[g, t, d], Rc::new(merge_map))?;
    let o = dense(tape, merged, tape.param(store, p.wo), tape.param(store, p.bo))?;
    let x2 = add(tape, x, o)?;

    let ln2 = layer_norm(tape, x2, tape.param(store, p.ln2_gamma), tape.param(store, p.ln2_beta))?;
    let f1 = dense(tape, ln2, tape.param(store, p.w_ff1), tape.param(store, p.b_ff1))?;
    let f1 = gelu(tape, f1);
    let f2 = dense(tape, f1, tape.param(store, p.w_ff2), tape.param(store, p.b_ff2))?;
    add(tape, x2, f2)
}

/// Whole-sequence attention over `[B, T, D]`; one window spans the
/// sequence. `max_len` sizes the relative-bias offsets and must be at
/// least `T`.
pub fn attention_seq(
    tape: &Tape,
    x: Var,
    p: &AttentionParams,
    store: &ParamStore,
    heads: usize,
    causal: bool,
    max_len: usize,
) -> Result<Var> {
    let t = {
        let v = tape.value(x);
        if v.rank() != 3 {
            return Err(NnError::ShapeMismatch(format!("attention_seq expects [B, T, D], got {:?}", v.shape())));
        }
        v.shape()[1]
    };
    if t > max_len {
        return Err(NnError::InvalidParameter(format!("sequence length {t} exceeds max {max_len}")));
    }
    let idx = move |i: usize, j: usize| -> usize {
        // Offset i - j in [-(max_len-1), max_len-1]; future positions are
        // masked but still need a valid slot.
        (i + max_len - 1).saturating_sub(j)
    };
    attention_core(tape, x, p, store, heads, causal, &idx)
}

/// Windowed attention over feature maps `[B, C, H, W]`. H and W are
/// zero-padded up to multiples of `window`, windows attend independently,
/// and the padding is cropped away afterwards.
pub fn attention_2d(
    tape: &Tape,
    x: Var,
    p: &AttentionParams,
    store: &ParamStore,
    window: usize,
    heads: usize,
) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 4 {
        return Err(NnError::ShapeMismatch(format!("attention_2d expects [B, C, H, W], got {shape:?}")));
    }
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let hp = h.div_ceil(window) * window;
    let wp = w.div_ceil(window) * window;
    let (nwh, nww) = (hp / window, wp / window);
    let t = window * window;

    // Pad + partition in one gather: [B*nwh*nww, window^2, C].
    let mut part_map = Vec::with_capacity(b * nwh * nww * t * c);
    for bi in 0..b {
        for wy in 0..nwh {
            for wx in 0..nww {
                for iy in 0..window {
                    for ix in 0..window {
                        let (y, xx) = (wy * window + iy, wx * window + ix);
                        for ci in 0..c {
                            part_map.push(if y < h && xx < w {
                                ((bi * c + ci) * h + y) * w + xx
                            } else {
                                crate::ops::GATHER_ZERO
                            });
                        }
                    }
                }
            }
        }
    }
    let tokens = gather(tape, x, &[b * nwh * nww, t, c], Rc::new(part_map))?;

    let idx = move |i: usize, j: usize| -> usize {
        let (iy, ix) = (i / window, i % window);
        let (jy, jx) = (j / window, j % window);
        (iy + window - 1 - jy) * (2 * window - 1) + (ix + window - 1 - jx)
    };
    let out_tokens = attention_core(tape, tokens, p, store, heads, false, &idx)?;

    // Merge + crop back to [B, C, H, W].
    let mut merge_map = Vec::with_capacity(b * c * h * w);
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let (wy, wx) = (y / window, xx / window);
                    let (iy, ix) = (y % window, xx % window);
                    let group = bi * nwh * nww + wy * nww + wx;
                    merge_map.push((group * t + iy * window + ix) * c + ci);
                }
            }
        }
    }
    gather(tape, out_tokens, &[b, c, h, w], Rc::new(merge_map))
}
