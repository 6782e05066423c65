//! 2-D cross-correlation with zero same-padding, stride 1. Odd kernel
//! dims only, so output spatial size always equals input spatial size
//! (the residual connections in the codec blocks rely on this).

use crate::tape::{Tape, Var};
use crate::{NnError, Result, Tensor};

/// `x: [B, Cin, H, W]`, `w: [Cout, Cin, kh, kw]`, `b: [Cout]` -> `[B, Cout, H, W]`.
pub fn conv2d(tape: &Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let (vx, vw, vb) = (tape.value_cloned(x), tape.value_cloned(w), tape.value_cloned(b));
    if vx.rank() != 4 || vw.rank() != 4 || vb.rank() != 1 {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d expects x rank 4, w rank 4, b rank 1, got {:?}/{:?}/{:?}",
            vx.shape(),
            vw.shape(),
            vb.shape()
        )));
    }
    let (bs, cin, h, wd) = (vx.shape()[0], vx.shape()[1], vx.shape()[2], vx.shape()[3]);
    let (cout, wcin, kh, kw) = (vw.shape()[0], vw.shape()[1], vw.shape()[2], vw.shape()[3]);
    if wcin != cin || vb.shape()[0] != cout {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d channels: x has {cin}, w expects {wcin}, b has {}",
            vb.shape()[0]
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(NnError::InvalidParameter(format!(
            "conv2d kernel dims must be odd, got {kh}x{kw}"
        )));
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let hw = h * wd;

    let mut out = vec![0.0; bs * cout * hw];
    for bi in 0..bs {
        for co in 0..cout {
            let out_plane = &mut out[(bi * cout + co) * hw..(bi * cout + co + 1) * hw];
            out_plane.fill(vb.data()[co]);
            for ci in 0..cin {
                let in_plane = &vx.data()[(bi * cin + ci) * hw..(bi * cin + ci + 1) * hw];
                for ky in 0..kh {
                    let sy = ky as isize - ph as isize;
                    let y0 = (-sy).max(0) as usize;
                    let y1 = ((h as isize - sy).min(h as isize)).max(0) as usize;
                    for kx in 0..kw {
                        let sx = kx as isize - pw as isize;
                        let x0 = (-sx).max(0) as usize;
                        let x1 = ((wd as isize - sx).min(wd as isize)).max(0) as usize;
                        let wv = vw.data()[((co * cin + ci) * kh + ky) * kw + kx];
                        for y in y0..y1 {
                            let iy = (y as isize + sy) as usize;
                            let orow = &mut out_plane[y * wd..(y + 1) * wd];
                            let irow = &in_plane[iy * wd..(iy + 1) * wd];
                            for xx in x0..x1 {
                                orow[xx] += wv * irow[(xx as isize + sx) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::from_vec(&[bs, cout, h, wd], out)?;
    Ok(tape.push(
        out,
        vec![x.0, w.0, b.0],
        Some(Box::new(move |ctx| {
            let g = ctx.grad.data();
            let vx = ctx.inputs[0];
            let vw = ctx.inputs[1];
            let mut dx = vec![0.0; bs * cin * hw];
            let mut dw = vec![0.0; cout * cin * kh * kw];
            let mut db = vec![0.0; cout];
            for bi in 0..bs {
                for co in 0..cout {
                    let g_plane = &g[(bi * cout + co) * hw..(bi * cout + co + 1) * hw];
                    db[co] += g_plane.iter().sum::<f64>();
                    for ci in 0..cin {
                        let in_plane =
                            &vx.data()[(bi * cin + ci) * hw..(bi * cin + ci + 1) * hw];
                        let dx_plane = &mut dx[(bi * cin + ci) * hw..(bi * cin + ci + 1) * hw];
                        for ky in 0..kh {
                            let sy = ky as isize - ph as isize;
                            let y0 = (-sy).max(0) as usize;
                            let y1 = ((h as isize - sy).min(h as isize)).max(0) as usize;
                            for kx in 0..kw {
                                let sx = kx as isize - pw as isize;
                                let x0 = (-sx).max(0) as usize;
                                let x1 = ((wd as isize - sx).min(wd as isize)).max(0) as usize;
                                let widx = ((co * cin + ci) * kh + ky) * kw + kx;
                                let wv = vw.data()[widx];
                                let mut wacc = 0.0;
                                for y in y0..y1 {
                                    let iy = (y as isize + sy) as usize;
                                    let grow = &g_plane[y * wd..(y + 1) * wd];
                                    let irow = &in_plane[iy * wd..(iy + 1) * wd];
                                    let dxrow = &mut dx_plane[iy * wd..(iy + 1) * wd];
                                    for xx in x0..x1 {
                                        let ix = (xx as isize + sx) as usize;
                                        wacc += grow[xx] * irow[ix];
                                        dxrow[ix] += wv * grow[xx];
                                    }
                                }
                                dw[widx] += wacc;
                            }
                        }
                    }
                }
            }
            vec![
                Tensor::from_vec(&[bs, cin, h, wd], dx).expect("shape"),
                Tensor::from_vec(&[cout, cin, kh, kw], dw).expect("shape"),
                Tensor::from_vec(&[cout], db).expect("shape"),
            ]
        })),
    ))
}
