//! Batch norm, layer norm and softmax.

use crate::tape::{Tape, Var};
use crate::{NnError, Result, Tensor};

pub const NORM_EPS: f64 = 1e-5;

/// Running statistics for one batch-norm layer (per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels], momentum: 0.1 }
    }

    fn update(&mut self, batch_mean: &[f64], batch_var: &[f64]) {
        for (r, b) in self.mean.iter_mut().zip(batch_mean) {
            *r = (1.0 - self.momentum) * *r + self.momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(batch_var) {
            *r = (1.0 - self.momentum) * *r + self.momentum * b;
        }
    }
}

fn bn_shapes(tape: &Tape, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
    let vx = tape.value(x);
    if vx.rank() != 4 {
        return Err(NnError::ShapeMismatch(format!("batch_norm expects [B,C,H,W], got {:?}", vx.shape())));
    }
    let (b, c) = (vx.shape()[0], vx.shape()[1]);
    let spatial = vx.shape()[2] * vx.shape()[3];
    if tape.value(gamma).shape() != [c] || tape.value(beta).shape() != [c] {
        return Err(NnError::ShapeMismatch("batch_norm gamma/beta must be [C]".into()));
    }
    Ok((b, c, spatial))
}

/// Train-mode batch norm: normalizes by batch statistics and, when
/// `stats` is given, folds them into the running estimates
/// (momentum 0.1). Gradients flow through the batch statistics.
pub fn batch_norm_train(
    tape: &Tape,
    x: Var,
    gamma: Var,
    beta: Var,
    stats: Option<&mut BatchNormStats>,
) -> Result<Var> {
    let (b, c, spatial) = bn_shapes(tape, x, gamma, beta)?;
    let m = (b * spatial) as f64;
    let vx = tape.value_cloned(x);
    let vg = tape.value_cloned(gamma);
    let vbeta = tape.value_cloned(beta);

    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            let plane = &vx.data()[(bi * c + ci) * spatial..(bi * c + ci + 1) * spatial];
            mean[ci] += plane.iter().sum::<f64>();
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    for bi in 0..b {
        for ci in 0..c {
            let plane = &vx.data()[(bi * c + ci) * spatial..(bi * c + ci + 1) * spatial];
            var[ci] += plane.iter().map(|v| (v - mean[ci]) * (v - mean[ci])).sum::<f64>();
        }
    }
    for v in &mut var {
        *v /= m;
    }
    if let Some(stats) = stats {
        stats.update(&mean, &var);
    }

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
    let mut out = vec![0.0; vx.numel()];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * spatial;
            let (g, bt, mu, is) = (vg.data()[ci], vbeta.data()[ci], mean[ci], inv_std[ci]);
            for i in 0..spatial {
                out[base + i] = g * (vx.data()[base + i] - mu) * is + bt;
            }
        }
    }
    let out = Tensor::from_vec(vx.shape(), out)?;
    Ok(tape.push(
        out,
        vec![x.0, gamma.0, beta.0],
        Some(Box::new(move |ctx| {
            let vx = ctx.inputs[0];
            let vg = ctx.inputs[1];
            let g = ctx.grad.data();
            let mut dx = vec![0.0; vx.numel()];
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for ci in 0..c {
                let (mu, is) = (mean[ci], inv_std[ci]);
                // Per-channel reductions over batch and space.
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for bi in 0..b {
                    let base = (bi * c + ci) * spatial;
                    for i in 0..spatial {
                        let xh = (vx.data()[base + i] - mu) * is;
                        sum_g += g[base + i];
                        sum_gx += g[base + i] * xh;
                    }
                }
                dgamma[ci] = sum_gx;
                dbeta[ci] = sum_g;
                let gm = sum_g / m;
                let gxm = sum_gx / m;
                let scale = vg.data()[ci] * is;
                for bi in 0..b {
                    let base = (bi * c + ci) * spatial;
                    for i in 0..spatial {
                        let xh = (vx.data()[base + i] - mu) * is;
                        dx[base + i] = scale * (g[base + i] - gm - xh * gxm);
                    }
                }
            }
            vec![
                Tensor::from_vec(vx.shape(), dx).expect("shape"),
                Tensor::from_vec(&[c], dgamma).expect("shape"),
                Tensor::from_vec(&[c], dbeta).expect("shape"),
            ]
        })),
    ))
}

/// Eval-mode batch norm: fixed affine map from the running statistics.
pub fn batch_norm_eval(
    tape: &Tape,
    x: Var,
    gamma: Var,
    beta: Var,
    stats: &BatchNormStats,
) -> Result<Var> {
    let (b, c, spatial) = bn_shapes(tape, x, gamma, beta)?;
    if stats.mean.len() != c {
        return Err(NnError::ShapeMismatch("batch_norm stats channel count".into()));
    }
    let vx = tape.value_cloned(x);
    let vg = tape.value_cloned(gamma);
    let vbeta = tape.value_cloned(beta);
    let mean = stats.mean.clone();
    let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();

    let mut out = vec![0.0; vx.numel()];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * spatial;
            let (g, bt, mu, is) = (vg.data()[ci], vbeta.data()[ci], mean[ci], inv_std[ci]);
            for i in 0..spatial {
                out[base + i] = g * (vx.data()[base + i] - mu) * is + bt;
            }
        }
    }
    let out = Tensor::from_vec(vx.shape(), out)?;
    Ok(tape.push(
        out,
        vec![x.0, gamma.0, beta.0],
        Some(Box::new(move |ctx| {
            let vx = ctx.inputs[0];
            let vg = ctx.inputs[1];
            let g = ctx.grad.data();
            let mut dx = vec![0.0; vx.numel()];
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * spatial;
                    let (mu, is) = (mean[ci], inv_std[ci]);
                    for i in 0..spatial {
                        let xh = (vx.data()[base + i] - mu) * is;
                        dx[base + i] = g[base + i] * vg.data()[ci] * is;
                        dgamma[ci] += g[base + i] * xh;
                        dbeta[ci] += g[base + i];
                    }
                }
            }
            vec![
                Tensor::from_vec(vx.shape(), dx).expect("shape"),
                Tensor::from_vec(&[c], dgamma).expect("shape"),
                Tensor::from_vec(&[c], dbeta).expect("shape"),
            ]
        })),
    ))
}

/// Layer norm over the trailing axis.
pub fn layer_norm(tape: &Tape, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let vx = tape.value_cloned(x);
    let d = *vx.shape().last().ok_or_else(|| NnError::ShapeMismatch("layer_norm on scalar".into()))?;
    if tape.value(gamma).shape() != [d] || tape.value(beta).shape() != [d] {
        return Err(NnError::ShapeMismatch("layer_norm gamma/beta must match trailing dim".into()));
    }
    let vg = tape.value_cloned(gamma);
    let vbeta = tape.value_cloned(beta);
    let rows = vx.numel() / d;
    let mut out = vec![0.0; vx.numel()];
    let mut means = vec![0.0; rows];
    let mut inv_stds = vec![0.0; rows];
    for r in 0..rows {
        let row = &vx.data()[r * d..(r + 1) * d];
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        means[r] = mu;
        inv_stds[r] = is;
        for i in 0..d {
            out[r * d + i] = vg.data()[i] * (row[i] - mu) * is + vbeta.data()[i];
        }
    }
    let out = Tensor::from_vec(vx.shape(), out)?;
    Ok(tape.push(
        out,
        vec![x.0, gamma.0, beta.0],
        Some(Box::new(move |ctx| {
            let vx = ctx.inputs[0];
            let vg = ctx.inputs[1];
            let g = ctx.grad.data();
            let mut dx = vec![0.0; vx.numel()];
            let mut dgamma = vec![0.0; d];
            let mut dbeta = vec![0.0; d];
            for r in 0..rows {
                let row = &vx.data()[r * d..(r + 1) * d];
                let grow = &g[r * d..(r + 1) * d];
                let (mu, is) = (means[r], inv_stds[r]);
                let mut sum_gh = 0.0;
                let mut sum_ghx = 0.0;
                for i in 0..d {
                    let xh = (row[i] - mu) * is;
                    let gh = grow[i] * vg.data()[i];
                    sum_gh += gh;
                    sum_ghx += gh * xh;
                    dgamma[i] += grow[i] * xh;
                    dbeta[i] += grow[i];
                }
                let (gm, gxm) = (sum_gh / d as f64, sum_ghx / d as f64);
                for i in 0..d {
                    let xh = (row[i] - mu) * is;
                    let gh = grow[i] * vg.data()[i];
                    dx[r * d + i] = is * (gh - gm - xh * gxm);
                }
            }
            vec![
                Tensor::from_vec(vx.shape(), dx).expect("shape"),
                Tensor::from_vec(&[d], dgamma).expect("shape"),
                Tensor::from_vec(&[d], dbeta).expect("shape"),
            ]
        })),
    ))
}

/// Numerically stable softmax over the trailing axis.
pub fn softmax_last(tape: &Tape, x: Var) -> Result<Var> {
    let vx = tape.value_cloned(x);
    let d = *vx.shape().last().ok_or_else(|| NnError::ShapeMismatch("softmax on scalar".into()))?;
    let rows = vx.numel() / d;
    let mut out = vec![0.0; vx.numel()];
    for r in 0..rows {
        let row = &vx.data()[r * d..(r + 1) * d];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
            *o = (v - max).exp();
            denom += *o;
        }
        for o in &mut out[r * d..(r + 1) * d] {
            *o /= denom;
        }
    }
    let out = Tensor::from_vec(vx.shape(), out)?;
    Ok(tape.push(
        out,
        vec![x.0],
        Some(Box::new(move |ctx| {
            let y = ctx.output.data();
            let g = ctx.grad.data();
            let mut dx = vec![0.0; y.len()];
            for r in 0..rows {
                let yr = &y[r * d..(r + 1) * d];
                let gr = &g[r * d..(r + 1) * d];
                let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                for i in 0..d {
                    dx[r * d + i] = yr[i] * (gr[i] - dot);
                }
            }
            vec![Tensor::from_vec(ctx.output.shape(), dx).expect("shape")]
        })),
    ))
}
