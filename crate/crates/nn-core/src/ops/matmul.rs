//! Batched matrix multiply plus the raw accumulate kernels shared by the
//! dense layer. Loop order keeps the innermost axis contiguous so the
//! compiler can vectorize.

use crate::tape::{Tape, Var};
use crate::{NnError, Result, Tensor};

/// `c[m][n] += a[m][k] * b[k][n]`
pub fn mm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m][n] += a[m][k] * b[n][k]^T` (dot products of contiguous rows).
pub fn mm_bt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv += acc;
        }
    }
}

/// `c[m][n] += a[k][m]^T * b[k][n]` (rank-1 update per k row).
pub fn mm_at(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Batched matmul: `[G, m, k] x [G, k, n] -> [G, m, n]`.
pub fn matmul_batched(tape: &Tape, a: Var, b: Var) -> Result<Var> {
    let (va, vb) = (tape.value_cloned(a), tape.value_cloned(b));
    let (sa, sb) = (va.shape(), vb.shape());
    if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
        return Err(NnError::ShapeMismatch(format!("matmul {sa:?} x {sb:?}")));
    }
    let (g, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
    let mut out = vec![0.0; g * m * n];
    for i in 0..g {
        mm(
            &va.data()[i * m * k..],
            &vb.data()[i * k * n..(i + 1) * k * n],
            &mut out[i * m * n..(i + 1) * m * n],
            m,
            k,
            n,
        );
    }
    let out = Tensor::from_vec(&[g, m, n], out)?;
    Ok(tape.push(
        out,
        vec![a.0, b.0],
        Some(Box::new(move |ctx| {
            let (va, vb) = (ctx.inputs[0], ctx.inputs[1]);
            let gr = ctx.grad.data();
            let mut da = vec![0.0; g * m * k];
            let mut db = vec![0.0; g * k * n];
            for i in 0..g {
                // dA = dC . B^T ; dB = A^T . dC
                mm_bt(
                    &gr[i * m * n..(i + 1) * m * n],
                    &vb.data()[i * k * n..(i + 1) * k * n],
                    &mut da[i * m * k..(i + 1) * m * k],
                    m,
                    n,
                    k,
                );
                mm_at(
                    &va.data()[i * m * k..(i + 1) * m * k],
                    &gr[i * m * n..(i + 1) * m * n],
                    &mut db[i * k * n..(i + 1) * k * n],
                    k,
                    m,
                    n,
                );
            }
            vec![
                Tensor::from_vec(&[g, m, k], da).expect("shape"),
                Tensor::from_vec(&[g, k, n], db).expect("shape"),
            ]
        })),
    ))
}
