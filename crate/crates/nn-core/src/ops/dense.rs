//! Affine map on the trailing axis.

use crate::ops::matmul::{mm, mm_at, mm_bt};
use crate::tape::{Tape, Var};
use crate::{NnError, Result, Tensor};

/// `y[..., o] = sum_i x[..., i] * w[o, i] + b[o]` with `w: [Dout, Din]`.
pub fn dense(tape: &Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let (vx, vw, vb) = (tape.value_cloned(x), tape.value_cloned(w), tape.value_cloned(b));
    if vw.rank() != 2 || vb.rank() != 1 {
        return Err(NnError::ShapeMismatch(format!(
            "dense expects w rank 2 and b rank 1, got {:?} / {:?}",
            vw.shape(),
            vb.shape()
        )));
    }
    let (dout, din) = (vw.shape()[0], vw.shape()[1]);
    if vb.shape()[0] != dout {
        return Err(NnError::ShapeMismatch("dense bias length".into()));
    }
    let xs = vx.shape().to_vec();
    if xs.last().copied() != Some(din) {
        return Err(NnError::ShapeMismatch(format!(
            "dense input trailing dim {:?} does not match Din {din}",
            xs
        )));
    }
    let rows = vx.numel() / din;
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        out[r * dout..(r + 1) * dout].copy_from_slice(vb.data());
    }
    mm_bt(vx.data(), vw.data(), &mut out, rows, din, dout);
    let mut out_shape = xs.clone();
    *out_shape.last_mut().expect("nonempty") = dout;
    let out = Tensor::from_vec(&out_shape, out)?;
    Ok(tape.push(
        out,
        vec![x.0, w.0, b.0],
        Some(Box::new(move |ctx| {
            let g = ctx.grad.data();
            let vx = ctx.inputs[0];
            let vw = ctx.inputs[1];
            // dx = g . w
            let mut dx = vec![0.0; rows * din];
            mm(g, vw.data(), &mut dx, rows, dout, din);
            // dw = g^T . x
            let mut dw = vec![0.0; dout * din];
            mm_at(g, vx.data(), &mut dw, dout, rows, din);
            // db = column sums of g
            let mut db = vec![0.0; dout];
            for r in 0..rows {
                for (dbv, gv) in db.iter_mut().zip(&g[r * dout..(r + 1) * dout]) {
                    *dbv += gv;
                }
            }
            vec![
                Tensor::from_vec(vx.shape(), dx).expect("shape"),
                Tensor::from_vec(&[dout, din], dw).expect("shape"),
                Tensor::from_vec(&[dout], db).expect("shape"),
            ]
        })),
    ))
}
