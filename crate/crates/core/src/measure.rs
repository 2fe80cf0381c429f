//! Measurement operators, data vectors and additive noise.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementOperator {
    /// Complex amplitudes `f(u) = u`.
    Field,
    /// Intensities `f(u) = |u|^2`.
    Intensity,
}

impl MeasurementOperator {
    pub fn apply(self, u: Complex64) -> Complex64 {
        match self {
            Self::Field => u,
            Self::Intensity => Complex64::from(u.norm_sqr()),
        }
    }

    /// `f'(u)` in the sense used by the adjoint weights: 1 or `2 conj(u)`.
    pub fn derivative(self, u: Complex64) -> Complex64 {
        match self {
            Self::Field => Complex64::new(1.0, 0.0),
            Self::Intensity => 2.0 * u.conj(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Field => "field",
            Self::Intensity => "intensity",
        }
    }
}

/// Observations at the detectors. Intensity data are stored with zero
/// imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataVector {
    pub values: Vec<Complex64>,
    pub operator: MeasurementOperator,
    pub sigma_noise: f64,
}

impl DataVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entries at the given indices, keeping operator and noise level.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: indices.iter().map(|&i| self.values[i]).collect(),
            operator: self.operator,
            sigma_noise: self.sigma_noise,
        }
    }
}

pub fn measure(u: &[Complex64], operator: MeasurementOperator) -> DataVector {
    DataVector { values: u.iter().map(|&v| operator.apply(v)).collect(), operator, sigma_noise: 0.0 }
}

/// Root mean square of `|d_j|`.
pub fn rms(values: &[Complex64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v.norm_sqr()).sum::<f64>() / values.len() as f64).sqrt()
}

/// Adds white noise of standard deviation `level * rms(|d|)`. Complex data
/// receive independent `N(0, sigma^2 / 2)` real and imaginary parts.
pub fn add_noise(d: &DataVector, level: f64, seed: u64) -> DataVector {
    let sigma = level * rms(&d.values);
    let mut out = d.clone();
    out.sigma_noise = sigma;
    if sigma == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match d.operator {
        MeasurementOperator::Field => {
            let n = Normal::new(0.0, sigma / 2f64.sqrt()).expect("finite sigma");
            for v in &mut out.values {
                *v += Complex64::new(n.sample(&mut rng), n.sample(&mut rng));
            }
        }
        MeasurementOperator::Intensity => {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            for v in &mut out.values {
                v.re += n.sample(&mut rng);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_modulus_intensity() {
        let u = Complex64::from_polar(1.0, 12.56 * 5.0);
        let d = measure(&[u], MeasurementOperator::Intensity);
        assert!((d.values[0].re - 1.0).abs() < 1e-15 && d.values[0].im == 0.0);
        for op in [MeasurementOperator::Field, MeasurementOperator::Intensity] {
            assert_eq!(measure(&[Complex64::new(0.0, 0.0)], op).values[0], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn zero_level_leaves_data_unchanged() {
        let d = measure(&[Complex64::new(1.0, 2.0)], MeasurementOperator::Field);
        let n = add_noise(&d, 0.0, 7);
        assert_eq!(n.values, d.values);
        assert_eq!(n.sigma_noise, 0.0);
    }

    #[test]
    fn noise_standard_deviation_matches_sigma() {
        for op in [MeasurementOperator::Field, MeasurementOperator::Intensity] {
            let base: Vec<Complex64> = (0..50).map(|j| Complex64::from_polar(1.0 + 0.01 * j as f64, 0.3 * j as f64)).collect();
            let d = measure(&base, op);
            let (mut acc, mut count) = (0.0, 0);
            let mut sigma = 0.0;
            for rep in 0..200 {
                let n = add_noise(&d, 0.05, rep);
                sigma = n.sigma_noise;
                for (a, b) in n.values.iter().zip(&d.values) {
                    acc += (a - b).norm_sqr();
                    count += 1;
                }
            }
            let std = (acc / count as f64).sqrt();
            assert!((std - sigma).abs() < 0.02 * sigma, "{op:?}: {std} vs {sigma}");
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let d = measure(&[Complex64::new(1.0, 0.5); 10], MeasurementOperator::Field);
        assert_eq!(add_noise(&d, 0.1, 3), add_noise(&d, 0.1, 3));
        assert_ne!(add_noise(&d, 0.1, 3), add_noise(&d, 0.1, 4));
    }

    proptest! {
        #[test]
        fn intensity_is_squared_modulus(re in proptest::collection::vec(-3.0f64..3.0, 8), im in proptest::collection::vec(-3.0f64..3.0, 8)) {
            let u: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            let d = measure(&u, MeasurementOperator::Intensity);
            for (v, z) in d.values.iter().zip(&u) {
                prop_assert!((v.re - (z.re * z.re + z.im * z.im)).abs() < 1e-12);
            }
        }
    }
}
