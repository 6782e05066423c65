//! Elementwise and reshuffling primitives.

use std::rc::Rc;

use crate::tape::{Tape, Var};
use crate::{NnError, Result, Tensor};

/// Sentinel index for [`gather`] entries that read a constant zero instead
/// of an input element (used for zero padding).
pub const GATHER_ZERO: usize = usize::MAX;

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn add(tape: &Tape, a: Var, b: Var) -> Result<Var> {
    let (va, vb) = (tape.value_cloned(a), tape.value_cloned(b));
    same_shape(&va, &vb, "add")?;
    let mut out = va;
    out.add_assign(&vb);
    Ok(tape.push(
        out,
        vec![a.0, b.0],
        Some(Box::new(|ctx| vec![ctx.grad.clone(), ctx.grad.clone()])),
    ))
}

pub fn sub(tape: &Tape, a: Var, b: Var) -> Result<Var> {
    let (va, vb) = (tape.value_cloned(a), tape.value_cloned(b));
    same_shape(&va, &vb, "sub")?;
    let mut out = va;
    for (x, y) in out.data_mut().iter_mut().zip(vb.data()) {
        *x -= y;
    }
    Ok(tape.push(
        out,
        vec![a.0, b.0],
        Some(Box::new(|ctx| {
            let mut neg = ctx.grad.clone();
            for v in neg.data_mut() {
                *v = -*v;
            }
            vec![ctx.grad.clone(), neg]
        })),
    ))
}

pub fn mul(tape: &Tape, a: Var, b: Var) -> Result<Var> {
    let (va, vb) = (tape.value_cloned(a), tape.value_cloned(b));
    same_shape(&va, &vb, "mul")?;
    let mut out = va;
    for (x, y) in out.data_mut().iter_mut().zip(vb.data()) {
        *x *= y;
    }
    Ok(tape.push(
        out,
        vec![a.0, b.0],
        Some(Box::new(|ctx| {
            let g = ctx.grad.data();
            let (a, b) = (ctx.inputs[0], ctx.inputs[1]);
            let da = Tensor::from_vec(
                a.shape(),
                g.iter().zip(b.data()).map(|(g, b)| g * b).collect(),
            )
            .expect("shape");
            let db = Tensor::from_vec(
                b.shape(),
                g.iter().zip(a.data()).map(|(g, a)| g * a).collect(),
            )
            .expect("shape");
            vec![da, db]
        })),
    ))
}

pub fn scale(tape: &Tape, a: Var, c: f64) -> Var {
    let mut out = tape.value_cloned(a);
    for v in out.data_mut() {
        *v *= c;
    }
    tape.push(
        out,
        vec![a.0],
        Some(Box::new(move |ctx| {
            let mut g = ctx.grad.clone();
            for v in g.data_mut() {
                *v *= c;
            }
            vec![g]
        })),
    )
}

pub fn sum(tape: &Tape, a: Var) -> Var {
    let total: f64 = tape.value(a).data().iter().sum();
    tape.push(
        Tensor::scalar(total),
        vec![a.0],
        Some(Box::new(|ctx| {
            let g = ctx.grad.item();
            vec![Tensor::filled(ctx.inputs[0].shape(), g)]
        })),
    )
}

pub fn mean(tape: &Tape, a: Var) -> Var {
    let n = tape.value(a).numel() as f64;
    let s = sum(tape, a);
    scale(tape, s, 1.0 / n)
}

/// Mean squared error between two same-shaped tensors.
pub fn mse(tape: &Tape, a: Var, b: Var) -> Result<Var> {
    let d = sub(tape, a, b)?;
    let sq = mul(tape, d, d)?;
    Ok(mean(tape, sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Gelu,
}

pub fn activation(tape: &Tape, x: Var, kind: Activation) -> Var {
    match kind {
        Activation::Relu => relu(tape, x),
        Activation::Sigmoid => sigmoid(tape, x),
        Activation::Gelu => gelu(tape, x),
    }
}

pub fn relu(tape: &Tape, x: Var) -> Var {
    let mut out = tape.value_cloned(x);
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    tape.push(
        out,
        vec![x.0],
        Some(Box::new(|ctx| {
            let data = ctx.inputs[0]
                .data()
                .iter()
                .zip(ctx.grad.data())
                .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            vec![Tensor::from_vec(ctx.inputs[0].shape(), data).expect("shape")]
        })),
    )
}

pub fn sigmoid(tape: &Tape, x: Var) -> Var {
    let mut out = tape.value_cloned(x);
    for v in out.data_mut() {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    tape.push(
        out,
        vec![x.0],
        Some(Box::new(|ctx| {
            let data = ctx
                .output
                .data()
                .iter()
                .zip(ctx.grad.data())
                .map(|(y, g)| g * y * (1.0 - y))
                .collect();
            vec![Tensor::from_vec(ctx.output.shape(), data).expect("shape")]
        })),
    )
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(tape: &Tape, x: Var) -> Var {
    let mut out = tape.value_cloned(x);
    for v in out.data_mut() {
        let u = GELU_C * (*v + GELU_A * *v * *v * *v);
        *v = 0.5 * *v * (1.0 + u.tanh());
    }
    tape.push(
        out,
        vec![x.0],
        Some(Box::new(|ctx| {
            let data = ctx.inputs[0]
                .data()
                .iter()
                .zip(ctx.grad.data())
                .map(|(x, g)| {
                    let u = GELU_C * (x + GELU_A * x * x * x);
                    let t = u.tanh();
                    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                    g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                })
                .collect();
            vec![Tensor::from_vec(ctx.inputs[0].shape(), data).expect("shape")]
        })),
    )
}

pub fn reshape(tape: &Tape, a: Var, shape: &[usize]) -> Result<Var> {
    let out = tape.value(a).reshaped(shape)?;
    Ok(tape.push(
        out,
        vec![a.0],
        Some(Box::new(|ctx| {
            vec![ctx
                .grad
                .reshaped(ctx.inputs[0].shape())
                .expect("same numel")]
        })),
    ))
}

/// Pure index shuffle: `out[i] = in[map[i]]`, with [`GATHER_ZERO`] entries
/// reading 0. Handles transposes, window partitioning, head splits,
/// embedding lookups and zero padding; the backward pass scatter-adds, so
/// repeated indices accumulate.
pub fn gather(tape: &Tape, a: Var, shape: &[usize], map: Rc<Vec<usize>>) -> Result<Var> {
    let input = tape.value(a);
    let n: usize = shape.iter().product();
    if map.len() != n {
        return Err(NnError::ShapeMismatch(format!(
            "gather map length {} does not fit shape {:?}",
            map.len(),
            shape
        )));
    }
    let in_len = input.numel();
    if map.iter().any(|&i| i != GATHER_ZERO && i >= in_len) {
        return Err(NnError::InvalidParameter("gather index out of bounds".into()));
    }
    let src = input.data();
    let data = map
        .iter()
        .map(|&i| if i == GATHER_ZERO { 0.0 } else { src[i] })
        .collect();
    drop(input);
    let out = Tensor::from_vec(shape, data)?;
    let back_map = Rc::clone(&map);
    Ok(tape.push(
        out,
        vec![a.0],
        Some(Box::new(move |ctx| {
            let mut grad = Tensor::zeros(ctx.inputs[0].shape());
            let gd = grad.data_mut();
            for (g, &i) in ctx.grad.data().iter().zip(back_map.iter()) {
                if i != GATHER_ZERO {
                    gd[i] += g;
                }
            }
            vec![grad]
        })),
    ))
}

/// Concatenate along `axis`; all inputs must agree on the other axes.
pub fn concat_axis(tape: &Tape, parts: &[Var], axis: usize) -> Result<Var> {
    if parts.is_empty() {
        return Err(NnError::InvalidParameter("concat of zero tensors".into()));
    }
    let shapes: Vec<Vec<usize>> = parts.iter().map(|p| tape.value(*p).shape().to_vec()).collect();
    let rank = shapes[0].len();
    if axis >= rank {
        return Err(NnError::InvalidParameter(format!("concat axis {axis} out of rank {rank}")));
    }
    for s in &shapes[1..] {
        if s.len() != rank
            || s.iter()
                .zip(&shapes[0])
                .enumerate()
                .any(|(i, (a, b))| i != axis && a != b)
        {
            return Err(NnError::ShapeMismatch(format!("concat shapes {shapes:?}")));
        }
    }
    let mut out_shape = shapes[0].clone();
    out_shape[axis] = shapes.iter().map(|s| s[axis]).sum();

    let outer: usize = shapes[0][..axis].iter().product();
    let inner: usize = shapes[0][axis + 1..].iter().product();
    let mut data = Vec::with_capacity(out_shape.iter().product());
    for o in 0..outer {
        for (p, s) in parts.iter().zip(&shapes) {
            let v = tape.value(*p);
            let chunk = s[axis] * inner;
            data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let out = Tensor::from_vec(&out_shape, data)?;
    let sizes: Vec<usize> = shapes.iter().map(|s| s[axis] * inner).collect();
    Ok(tape.push(
        out,
        parts.iter().map(|p| p.0).collect(),
        Some(Box::new(move |ctx| {
            let total: usize = sizes.iter().sum();
            let mut grads: Vec<Tensor> = ctx
                .inputs
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect();
            let g = ctx.grad.data();
            for o in 0..g.len() / total {
                let mut off = o * total;
                for (gi, &sz) in grads.iter_mut().zip(&sizes) {
                    gi.data_mut()[o * sz..(o + 1) * sz].copy_from_slice(&g[off..off + sz]);
                    off += sz;
                }
            }
            grads
        })),
    ))
}

/// Contiguous slice along `axis`.
pub fn slice_axis(tape: &Tape, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
    let input = tape.value(a);
    let shape = input.shape().to_vec();
    if axis >= shape.len() || start + len > shape[axis] {
        return Err(NnError::InvalidParameter(format!(
            "slice [{start}, {}) on axis {axis} of {:?}",
            start + len,
            shape
        )));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.clone();
    out_shape[axis] = len;
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * shape[axis] + start) * inner;
        data.extend_from_slice(&input.data()[base..base + len * inner]);
    }
    drop(input);
    let out = Tensor::from_vec(&out_shape, data)?;
    let full_axis = shape[axis];
    Ok(tape.push(
        out,
        vec![a.0],
        Some(Box::new(move |ctx| {
            let mut grad = Tensor::zeros(ctx.inputs[0].shape());
            let gd = grad.data_mut();
            let g = ctx.grad.data();
            for o in 0..outer {
                let src = o * len * inner;
                let dst = (o * full_axis + start) * inner;
                gd[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            vec![grad]
        })),
    ))
}

/// Fused softmax + next-token cross-entropy in bits (base-2), averaged over
/// rows. `logits` is `[N, V]`, `targets` holds one class per row.
pub fn softmax_xent_bits(tape: &Tape, logits: Var, targets: Rc<Vec<usize>>) -> Result<Var> {
    let input = tape.value(logits);
    let shape = input.shape().to_vec();
    if shape.len() != 2 {
        return Err(NnError::ShapeMismatch(format!("expected [N, V] logits, got {shape:?}")));
    }
    let (n, v) = (shape[0], shape[1]);
    if targets.len() != n {
        return Err(NnError::ShapeMismatch(format!("{} targets for {} rows", targets.len(), n)));
    }
    if targets.iter().any(|&t| t >= v) {
        return Err(NnError::InvalidParameter("target class out of range".into()));
    }
    let ln2 = std::f64::consts::LN_2;
    let mut loss = 0.0;
    let mut probs = vec![0.0; n * v];
    for r in 0..n {
        let row = &input.data()[r * v..(r + 1) * v];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (j, &x) in row.iter().enumerate() {
            let e = (x - max).exp();
            probs[r * v + j] = e;
            denom += e;
        }
        for p in &mut probs[r * v..(r + 1) * v] {
            *p /= denom;
        }
        loss -= probs[r * v + targets[r]].ln() / ln2;
    }
    loss /= n as f64;
    drop(input);
    let probs = Rc::new(probs);
    let back_probs = Rc::clone(&probs);
    let back_targets = Rc::clone(&targets);
    Ok(tape.push(
        Tensor::scalar(loss),
        vec![logits.0],
        Some(Box::new(move |ctx| {
            let g = ctx.grad.item() / (n as f64 * ln2);
            let mut grad = vec![0.0; n * v];
            for r in 0..n {
                for j in 0..v {
                    grad[r * v + j] = g * back_probs[r * v + j];
                }
                grad[r * v + back_targets[r]] -= g;
            }
            vec![Tensor::from_vec(&[n, v], grad).expect("shape")]
        })),
    ))
}
