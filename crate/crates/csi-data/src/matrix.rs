//! Complex CSI matrices and the unitary 2-D DFT between the
//! spatial-frequency and angle-delay domains.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{CsiError, Result};

/// Downlink CSI in the spatial-frequency domain: `n_c` subcarriers
/// (rows) by `n_t` transmit antennas (columns), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    data: Vec<Complex64>,
    n_c: usize,
    n_t: usize,
}

/// CSI in the angle-delay domain, truncated to the first `n_a` delay rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDelayCsi {
    data: Vec<Complex64>,
    n_a: usize,
    n_t: usize,
    origin_n_c: usize,
}

impl CsiMatrix {
    pub fn new(n_c: usize, n_t: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_c == 0 || n_t == 0 {
            return Err(CsiError::InvalidParameter("matrix dims must be positive".into()));
        }
        if data.len() != n_c * n_t {
            return Err(CsiError::InvalidParameter(format!(
                "data length {} does not match {}x{}",
                data.len(),
                n_c,
                n_t
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(CsiError::InvalidParameter("non-finite entry".into()));
        }
        Ok(Self { data, n_c, n_t })
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n_t + col]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl AngleDelayCsi {
    pub fn new(n_a: usize, n_t: usize, origin_n_c: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_a == 0 || n_t == 0 {
            return Err(CsiError::InvalidParameter("matrix dims must be positive".into()));
        }
        if n_a > origin_n_c {
            return Err(CsiError::InvalidParameter(format!(
                "n_a {} exceeds origin n_c {}",
                n_a, origin_n_c
            )));
        }
        if data.len() != n_a * n_t {
            return Err(CsiError::InvalidParameter(format!(
                "data length {} does not match {}x{}",
                data.len(),
                n_a,
                n_t
            )));
        }
        Ok(Self { data, n_a, n_t, origin_n_c })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn origin_n_c(&self) -> usize {
        self.origin_n_c
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n_t + col]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Unitary DFT along both axes of a row-major `rows x cols` buffer.
/// Forward transforms both the subcarrier axis (columns of the matrix,
/// i.e. along rows index) and the antenna axis; DFT matrices are
/// symmetric, so the right multiplication is a per-row transform.
fn dft_2d(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let dir_row = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    let dir_col = if inverse {
        planner.plan_fft_inverse(rows)
    } else {
        planner.plan_fft_forward(rows)
    };

    // Per-row transform (antenna axis).
    for r in 0..rows {
        dir_row.process(&mut data[r * cols..(r + 1) * cols]);
    }
    // Per-column transform (subcarrier axis).
    let mut col_buf = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            col_buf[r] = data[r * cols + c];
        }
        dir_col.process(&mut col_buf);
        for r in 0..rows {
            data[r * cols + c] = col_buf[r];
        }
    }
    // Unitary scaling on both axes.
    let scale = 1.0 / ((rows as f64).sqrt() * (cols as f64).sqrt());
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Transform spatial-frequency CSI to the angle-delay domain and keep the
/// first `n_a` delay rows.
pub fn to_angle_delay(h: &CsiMatrix, n_a: usize) -> Result<AngleDelayCsi> {
    if n_a == 0 || n_a > h.n_c {
        return Err(CsiError::InvalidParameter(format!(
            "n_a {} out of range 1..={}",
            n_a, h.n_c
        )));
    }
    let mut buf = h.data.clone();
    dft_2d(&mut buf, h.n_c, h.n_t, false);
    buf.truncate(n_a * h.n_t);
    AngleDelayCsi::new(n_a, h.n_t, h.n_c, buf)
}

/// Zero-pad the truncated delay rows back to `origin_n_c` and invert the
/// unitary 2-D DFT.
pub fn from_angle_delay(h_a: &AngleDelayCsi) -> Result<CsiMatrix> {
    let n_c = h_a.origin_n_c;
    let mut buf = vec![Complex64::default(); n_c * h_a.n_t];
    buf[..h_a.n_a * h_a.n_t].copy_from_slice(&h_a.data);
    dft_2d(&mut buf, n_c, h_a.n_t, true);
    CsiMatrix::new(n_c, h_a.n_t, buf)
}
