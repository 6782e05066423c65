//! Synthetic tapped-delay multipath channels over a uniform linear array,
//! plus AWGN perturbation for robustness studies.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::{CsiError, CsiMatrix, Result};

/// Parameters for the synthetic channel generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub n_c: usize,
    pub n_t: usize,
    pub num_paths: usize,
    /// Paths fall on integer delay taps `0..max_delay_taps`, so the
    /// angle-delay energy sits exactly in the first `max_delay_taps` rows.
    pub max_delay_taps: usize,
    /// Half-width of the uniform angle-of-departure distribution, radians.
    pub angle_spread: f64,
    pub seed: u64,
}

impl ChannelParams {
    fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_t == 0 || self.num_paths == 0 || self.max_delay_taps == 0 {
            return Err(CsiError::InvalidParameter(
                "channel params must be positive".into(),
            ));
        }
        if self.max_delay_taps > self.n_c {
            return Err(CsiError::InvalidParameter(format!(
                "max_delay_taps {} exceeds n_c {}",
                self.max_delay_taps, self.n_c
            )));
        }
        if !self.angle_spread.is_finite() || self.angle_spread < 0.0 {
            return Err(CsiError::InvalidParameter("angle_spread must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Sum of `num_paths` components: complex gain x delay phase ramp across
/// subcarriers x half-wavelength ULA steering vector across antennas.
pub fn synthesize_channel(params: &ChannelParams) -> Result<CsiMatrix> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gain_scale = 1.0 / (2.0 * params.num_paths as f64).sqrt();

    let mut paths = Vec::with_capacity(params.num_paths);
    for _ in 0..params.num_paths {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let gain = Complex64::new(re, im) * gain_scale;
        let tap = rng.gen_range(0..params.max_delay_taps) as f64;
        let angle = if params.angle_spread == 0.0 {
            0.0
        } else {
            rng.gen_range(-params.angle_spread..params.angle_spread)
        };
        paths.push((gain, tap, angle));
    }

    let mut data = vec![Complex64::default(); params.n_c * params.n_t];
    for (gain, tap, angle) in paths {
        let sin_a = angle.sin();
        for k in 0..params.n_c {
            // Sign chosen so integer taps land in the first delay rows of
            // the forward angle-delay transform.
            let delay_phase = Complex64::from_polar(1.0, 2.0 * PI * tap * k as f64 / params.n_c as f64);
            for a in 0..params.n_t {
                let steer = Complex64::from_polar(1.0, PI * a as f64 * sin_a);
                data[k * params.n_t + a] += gain * delay_phase * steer;
            }
        }
    }
    CsiMatrix::new(params.n_c, params.n_t, data)
}

/// Add circularly-symmetric complex Gaussian noise with per-entry variance
/// `mean(|H|^2) / 10^(snr_db/10)`.
pub fn add_awgn(h: &CsiMatrix, snr_db: f64, seed: u64) -> Result<CsiMatrix> {
    if !snr_db.is_finite() {
        return Err(CsiError::InvalidParameter("snr_db must be finite".into()));
    }
    let n = h.data().len() as f64;
    let sig_power = h.data().iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
    let noise_var = sig_power / 10f64.powf(snr_db / 10.0);
    let sigma = (noise_var / 2.0).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = h
        .data()
        .iter()
        .map(|c| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c + Complex64::new(re * sigma, im * sigma)
        })
        .collect();
    CsiMatrix::new(h.n_c(), h.n_t(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::to_angle_delay;

    fn params(seed: u64) -> ChannelParams {
        ChannelParams {
            n_c: 32,
            n_t: 16,
            num_paths: 6,
            max_delay_taps: 4,
            angle_spread: 1.0,
            seed,
        }
    }

    #[test]
    fn single_flat_path_has_constant_magnitude() {
        let p = ChannelParams {
            n_c: 8,
            n_t: 4,
            num_paths: 1,
            max_delay_taps: 1,
            angle_spread: 0.0,
            seed: 3,
        };
        let h = synthesize_channel(&p).unwrap();
        let m0 = h.at(0, 0).norm();
        assert!(m0 > 0.0);
        for v in h.data() {
            assert!((v.norm() - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = synthesize_channel(&params(11)).unwrap();
        let b = synthesize_channel(&params(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_concentrates_in_first_delay_rows() {
        let h = synthesize_channel(&params(7)).unwrap();
        let ha = to_angle_delay(&h, 32).unwrap();
        let total: f64 = ha.data().iter().map(|c| c.norm_sqr()).sum();
        let head: f64 = (0..4)
            .flat_map(|r| (0..16).map(move |c| (r, c)))
            .map(|(r, c)| ha.at(r, c).norm_sqr())
            .sum();
        assert!(head / total >= 0.99, "head ratio {}", head / total);
    }

    #[test]
    fn invalid_delay_budget_rejected() {
        let mut p = params(0);
        p.max_delay_taps = 33;
        assert!(matches!(synthesize_channel(&p), Err(CsiError::InvalidParameter(_))));
    }

    #[test]
    fn huge_snr_leaves_input_unchanged() {
        let h = synthesize_channel(&params(5)).unwrap();
        let noisy = add_awgn(&h, 300.0, 1).unwrap();
        let rel: f64 = h
            .data()
            .iter()
            .zip(noisy.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / h.frobenius_norm();
        assert!(rel < 1e-10);
    }

    #[test]
    fn empirical_snr_close_to_requested() {
        let p = ChannelParams {
            n_c: 350,
            n_t: 300,
            num_paths: 8,
            max_delay_taps: 10,
            angle_spread: 1.2,
            seed: 21,
        };
        let h = synthesize_channel(&p).unwrap();
        let noisy = add_awgn(&h, 5.0, 77).unwrap();
        let sig: f64 = h.data().iter().map(|c| c.norm_sqr()).sum();
        let noise: f64 = h
            .data()
            .iter()
            .zip(noisy.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let snr_db = 10.0 * (sig / noise).log10();
        assert!((snr_db - 5.0).abs() < 0.5, "measured {snr_db} dB");
    }

    #[test]
    fn awgn_same_seed_identical() {
        let h = synthesize_channel(&params(9)).unwrap();
        let a = add_awgn(&h, 5.0, 42).unwrap();
        let b = add_awgn(&h, 5.0, 42).unwrap();
        assert_eq!(a, b);
    }
}
