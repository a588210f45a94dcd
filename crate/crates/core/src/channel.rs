//! AWGN channel and SNR bookkeeping. Constellations have unit average
//! energy, so `Es = 1` throughout.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, invalid};
use crate::rng::standard_normal_pair;

/// Noise variance per real dimension for a unit-energy constellation at the
/// given Es/N0: `N0 / 2`. `complex_dims` does not change the value; real
/// constellations see the same per-dimension variance on their one axis.
pub fn snr_to_sigma2(esn0_db: f64, _complex_dims: u8) -> f64 {
    let n0 = 10f64.powf(-esn0_db / 10.0);
    n0 / 2.0
}

pub fn sigma2_to_esn0(sigma2: f64) -> f64 {
    -10.0 * (2.0 * sigma2).log10()
}

pub fn ebn0_to_esn0(ebn0_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return invalid(format!("rate must be positive, got {rate}"));
    }
    Ok(ebn0_db + 10.0 * rate.log10())
}

pub fn esn0_to_ebn0(esn0_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return invalid(format!("rate must be positive, got {rate}"));
    }
    Ok(esn0_db - 10.0 * rate.log10())
}

/// An operating point. `rate` is information bits per channel symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub esn0_db: f64,
    pub ebn0_db: f64,
    pub rate: f64,
}

impl SnrPoint {
    pub fn from_esn0(esn0_db: f64, rate: f64) -> Result<Self> {
        Ok(Self { esn0_db, ebn0_db: esn0_to_ebn0(esn0_db, rate)?, rate })
    }

    pub fn from_ebn0(ebn0_db: f64, rate: f64) -> Result<Self> {
        Ok(Self { esn0_db: ebn0_to_esn0(ebn0_db, rate)?, ebn0_db, rate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma2: f64,
    complex_dims: u8,
}

impl NoiseModel {
    pub fn new(sigma2: f64, complex_dims: u8) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return invalid(format!("noise variance must be positive, got {sigma2}"));
        }
        if !(1..=2).contains(&complex_dims) {
            return invalid(format!("complex_dims must be 1 or 2, got {complex_dims}"));
        }
        Ok(Self { sigma2, complex_dims })
    }

    pub fn from_esn0(esn0_db: f64, complex_dims: u8) -> Result<Self> {
        Self::new(snr_to_sigma2(esn0_db, complex_dims), complex_dims)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn complex_dims(&self) -> u8 {
        self.complex_dims
    }
}

/// Adds Gaussian noise of variance `sigma2` per real dimension. Two normal
/// draws are consumed per symbol even for real constellations, whose
/// imaginary noise is discarded.
pub fn awgn_apply<R: Rng + ?Sized>(symbols: &[Complex64], noise: &NoiseModel, rng: &mut R) -> Vec<Complex64> {
    let sd = noise.sigma2.sqrt();
    symbols
        .iter()
        .map(|s| {
            let (nr, ni) = standard_normal_pair(rng);
            if noise.complex_dims == 1 {
                Complex64::new(s.re + sd * nr, s.im)
            } else {
                Complex64::new(s.re + sd * nr, s.im + sd * ni)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn sigma2_examples() {
        assert!((snr_to_sigma2(0.0, 2) - 0.5).abs() < 1e-15);
        assert!((snr_to_sigma2(10.0, 2) - 0.05).abs() < 1e-15);
        assert!((snr_to_sigma2(-3.0103, 2) - 1.0).abs() < 1e-4);
        assert!((sigma2_to_esn0(snr_to_sigma2(4.2, 2)) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn ebn0_examples() {
        assert_eq!(ebn0_to_esn0(3.0, 1.0).unwrap(), 3.0);
        assert!((ebn0_to_esn0(0.0, 2.0).unwrap() - 3.0103).abs() < 1e-4);
        assert!((ebn0_to_esn0(5.0, 0.5).unwrap() - 1.9897).abs() < 1e-4);
        assert!(ebn0_to_esn0(0.0, 0.0).is_err());
        assert!(ebn0_to_esn0(0.0, -1.0).is_err());
    }

    #[test]
    fn conversions_are_inverse() {
        for &(e, r) in &[(-3.0, 0.25), (0.0, 1.0), (7.5, 3.0), (12.1, 0.1)] {
            let es = ebn0_to_esn0(e, r).unwrap();
            assert!((esn0_to_ebn0(es, r).unwrap() - e).abs() < 1e-12);
            let p = SnrPoint::from_ebn0(e, r).unwrap();
            assert!((p.esn0_db - p.ebn0_db - 10.0 * r.log10()).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(0.0, 2).is_err());
        assert!(NoiseModel::new(-1.0, 2).is_err());
        assert!(NoiseModel::new(1.0, 3).is_err());
    }

    #[test]
    fn tiny_noise_is_transparent() {
        let s = vec![Complex64::new(0.3, -0.7), Complex64::new(-1.0, 0.0)];
        let out = awgn_apply(&s, &NoiseModel::new(1e-30, 2).unwrap(), &mut stream(3, &[]));
        for (a, b) in s.iter().zip(&out) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn deterministic_for_fixed_stream() {
        let s = vec![Complex64::new(1.0, 0.0); 32];
        let nm = NoiseModel::new(0.5, 2).unwrap();
        assert_eq!(awgn_apply(&s, &nm, &mut stream(9, &[4])), awgn_apply(&s, &nm, &mut stream(9, &[4])));
    }

    #[test]
    fn real_constellations_keep_zero_imaginary_part() {
        let s = vec![Complex64::new(1.0, 0.0); 8];
        let nm = NoiseModel::new(0.5, 1).unwrap();
        assert!(awgn_apply(&s, &nm, &mut stream(2, &[])).iter().all(|y| y.im == 0.0));
        // the same stream drives the real parts regardless of layout
        let c = awgn_apply(&s, &NoiseModel::new(0.5, 2).unwrap(), &mut stream(2, &[]));
        let r = awgn_apply(&s, &nm, &mut stream(2, &[]));
        assert!(c.iter().zip(&r).all(|(a, b)| a.re == b.re));
    }

    #[test]
    fn sample_variance() {
        let n = 1_000_000;
        let s = vec![Complex64::new(0.0, 0.0); n];
        let out = awgn_apply(&s, &NoiseModel::new(0.5, 2).unwrap(), &mut stream(11, &[]));
        let var_re = out.iter().map(|y| y.re * y.re).sum::<f64>() / n as f64;
        let var_im = out.iter().map(|y| y.im * y.im).sum::<f64>() / n as f64;
        let mean_re = out.iter().map(|y| y.re).sum::<f64>() / n as f64;
        assert!((var_re - 0.5).abs() < 0.003, "{var_re}");
        assert!((var_im - 0.5).abs() < 0.003, "{var_im}");
        assert!(mean_re.abs() < 3.0 * (0.5f64 / n as f64).sqrt());
    }
}
