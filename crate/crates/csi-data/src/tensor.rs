//! Real two-channel tensor view of angle-delay CSI, normalized to `[0, 1]`
//! by a dataset-wide affine map so the reconstruction can come out of a
//! sigmoid.

use num_complex::Complex64;

use crate::{AngleDelayCsi, CsiError, Result};

/// Dataset-wide normalization range over real and imaginary parts jointly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationMeta {
    pub lo: f64,
    pub hi: f64,
}

impl NormalizationMeta {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(CsiError::InvalidParameter(format!(
                "normalization range must satisfy hi > lo, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Joint min/max of real and imaginary parts over a sample set.
    pub fn fit(samples: &[AngleDelayCsi]) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in samples {
            for c in s.data() {
                lo = lo.min(c.re).min(c.im);
                hi = hi.max(c.re).max(c.im);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(CsiError::InvalidParameter("cannot fit range on empty input".into()));
        }
        if hi <= lo {
            // Constant dataset; widen so the map stays invertible.
            hi = lo + 1.0;
        }
        Self::new(lo, hi)
    }
}

/// 2 x n_a x n_t real tensor (channel 0 = real part, channel 1 = imaginary
/// part), every entry in `[0, 1]`. Stored at 32-bit precision, matching the
/// dataset container.
#[derive(Debug, Clone, PartialEq)]
pub struct RealCsiTensor {
    data: Vec<f32>,
    n_a: usize,
    n_t: usize,
    norm_meta: NormalizationMeta,
}

impl RealCsiTensor {
    pub fn from_raw(n_a: usize, n_t: usize, data: Vec<f32>, norm_meta: NormalizationMeta) -> Result<Self> {
        if data.len() != 2 * n_a * n_t {
            return Err(CsiError::InvalidParameter(format!(
                "data length {} does not match 2x{}x{}",
                data.len(),
                n_a,
                n_t
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CsiError::InvalidParameter("entries must lie in [0, 1]".into()));
        }
        Ok(Self { data, n_a, n_t, norm_meta })
    }

    /// Affine map `x -> (x - lo) / (hi - lo)`, clamped to `[0, 1]` so noisy
    /// out-of-range CSI still produces a valid tensor.
    pub fn normalize(h_a: &AngleDelayCsi, meta: NormalizationMeta) -> Result<Self> {
        let span = meta.hi - meta.lo;
        let n = h_a.n_a() * h_a.n_t();
        let mut data = vec![0f32; 2 * n];
        for (i, c) in h_a.data().iter().enumerate() {
            data[i] = (((c.re - meta.lo) / span).clamp(0.0, 1.0)) as f32;
            data[n + i] = (((c.im - meta.lo) / span).clamp(0.0, 1.0)) as f32;
        }
        Ok(Self { data, n_a: h_a.n_a(), n_t: h_a.n_t(), norm_meta: meta })
    }

    /// Inverse affine map back to a complex angle-delay matrix.
    pub fn denormalize(&self, origin_n_c: usize) -> Result<AngleDelayCsi> {
        let span = self.norm_meta.hi - self.norm_meta.lo;
        let n = self.n_a * self.n_t;
        let data = (0..n)
            .map(|i| {
                Complex64::new(
                    self.data[i] as f64 * span + self.norm_meta.lo,
                    self.data[n + i] as f64 * span + self.norm_meta.lo,
                )
            })
            .collect();
        AngleDelayCsi::new(self.n_a, self.n_t, origin_n_c, data)
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn norm_meta(&self) -> NormalizationMeta {
        self.norm_meta
    }

    /// Channel-major data: real plane then imaginary plane, row-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AngleDelayCsi {
        let data = vec![
            Complex64::new(0.0, -0.5),
            Complex64::new(1.0, 0.25),
            Complex64::new(-1.0, 0.75),
            Complex64::new(0.5, -0.25),
        ];
        AngleDelayCsi::new(2, 2, 2, data).unwrap()
    }

    #[test]
    fn midpoint_maps_to_half() {
        let meta = NormalizationMeta::new(-1.0, 1.0).unwrap();
        let t = RealCsiTensor::normalize(&sample(), meta).unwrap();
        assert_eq!(t.data()[0], 0.5);
    }

    #[test]
    fn round_trip_within_f32_precision() {
        let h = sample();
        let meta = NormalizationMeta::new(-1.0, 1.0).unwrap();
        let back = RealCsiTensor::normalize(&h, meta).unwrap().denormalize(2).unwrap();
        for (a, b) in h.data().iter().zip(back.data()) {
            assert!((a - b).norm() < 1e-7);
        }
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        let data = vec![Complex64::new(-6.0, 0.0)];
        let h = AngleDelayCsi::new(1, 1, 1, data).unwrap();
        let meta = NormalizationMeta::new(-1.0, 1.0).unwrap();
        let t = RealCsiTensor::normalize(&h, meta).unwrap();
        assert_eq!(t.data()[0], 0.0);
    }

    #[test]
    fn degenerate_range_rejected() {
        assert!(matches!(
            NormalizationMeta::new(1.0, 1.0),
            Err(CsiError::InvalidParameter(_))
        ));
    }
}
