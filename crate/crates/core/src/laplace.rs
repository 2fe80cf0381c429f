//! Gaussian approximation of the posterior at the MAP point.

use crate::error::{Error, Result};
use crate::map::CostModel;
use crate::samples::{Layout, Sample, SampleSet};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Relative eigenvalue floor of the Gauss-Newton Hessian.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Discard fractions above this trigger a warning.
pub const DISCARD_WARNING: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacePosterior {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Symmetric square root of `covariance`.
    pub factor: DMatrix<f64>,
    /// Set when some Hessian eigenvalue was raised to the floor.
    pub floored: bool,
}

impl LaplacePosterior {
    /// Inverse and inverse square root of a symmetric Hessian.
    pub fn from_hessian(mean: Vec<f64>, hessian: &DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if hessian.nrows() != n || hessian.ncols() != n {
            return Err(Error::LengthMismatch { expected: n, got: hessian.nrows() });
        }
        let sym = (hessian + hessian.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        if !(top > 0.0) || !top.is_finite() {
            return Err(Error::InvalidInput("Hessian has no positive eigenvalue".into()));
        }
        let floor = EIGEN_FLOOR * top;
        let mut floored = false;
        let vals: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&h| {
                if h < floor {
                    floored = true;
                    floor
                } else {
                    h
                }
            })
            .collect();
        if floored {
            log::warn!("Gauss-Newton Hessian is not positive definite, eigenvalues floored at {floor:e}");
        }
        let v = &eig.eigenvectors;
        let inv = DVector::from_iterator(n, vals.iter().map(|h| 1.0 / h));
        let isq = DVector::from_iterator(n, vals.iter().map(|h| 1.0 / h.sqrt()));
        let covariance = v * DMatrix::from_diagonal(&inv) * v.transpose();
        let factor = v * DMatrix::from_diagonal(&isq) * v.transpose();
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        let factor = (&factor + factor.transpose()) * 0.5;
        Ok(Self { mean, covariance, factor, floored })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw `count` samples `nu_MAP + Gamma^{1/2} n`; `log_posterior` holds the
    /// Gaussian log density up to a constant.
    pub fn sample(&self, model: &CostModel, layout: Layout, count: usize, seed: u64) -> Result<SampleSet> {
        if count == 0 {
            return Err(Error::InvalidInput("sample count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let mean = DVector::from_column_slice(&self.mean);
        let mut set = SampleSet::new(layout);
        set.samples.reserve(count);
        for i in 0..count {
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            let x = &mean + &self.factor * &z;
            let nu: Vec<f64> = x.iter().copied().collect();
            let admissible = model.map.admissible(&nu);
            set.samples.push(Sample { step: i, walker: 0, nu, log_posterior: -0.5 * z.norm_squared(), admissible });
        }
        let frac = set.discard_fraction();
        if frac > DISCARD_WARNING {
            log::warn!("{:.1}% of Laplace samples are inadmissible", 100.0 * frac);
        }
        Ok(set)
    }
}

/// Laplace approximation with covariance equal to the inverse Gauss-Newton Hessian at `nu_map`.
pub fn posterior_covariance(model: &CostModel, nu_map: &[f64]) -> Result<LaplacePosterior> {
    let (jac, u) = model.map.jacobian(nu_map)?;
    if jac.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        // the data carry no information: the posterior is the prior
        let var = DVector::from_column_slice(&model.prior_var);
        return Ok(LaplacePosterior {
            mean: nu_map.to_vec(),
            covariance: DMatrix::from_diagonal(&var),
            factor: DMatrix::from_diagonal(&var.map(f64::sqrt)),
            floored: false,
        });
    }
    let h = model.gn_hessian(&jac, &u, 1.0)?;
    LaplacePosterior::from_hessian(nu_map.to_vec(), &h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::LinearMap;
    use crate::measure::{DataVector, MeasurementOperator};
    use num_complex::Complex64;
    use std::sync::Arc;

    fn linear_model(a: DMatrix<Complex64>, sigma: f64, var: Vec<f64>) -> CostModel {
        let n = a.nrows();
        let map = LinearMap { a, b: DVector::zeros(n) };
        let data = DataVector { values: vec![Complex64::new(0.0, 0.0); n], operator: MeasurementOperator::Field, sigma_noise: sigma };
        let d = var.len();
        CostModel::new(Arc::new(map), data, vec![0.0; d], var).unwrap()
    }

    #[test]
    fn zero_jacobian_returns_prior_covariance() {
        let m = linear_model(DMatrix::zeros(4, 3), 0.1, vec![0.5, 0.25, 2.0]);
        let post = posterior_covariance(&m, &[0.0; 3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { m.prior_var[i] } else { 0.0 };
                assert_eq!(post.covariance[(i, j)], want);
            }
        }
        assert!(!post.floored);
    }

    #[test]
    fn scalar_toy_matches_closed_form() {
        let c = Complex64::new(1.5, -0.5);
        let m = linear_model(DMatrix::from_element(1, 1, c), 0.2, vec![0.3]);
        let post = posterior_covariance(&m, &[0.0]).unwrap();
        let want = 1.0 / (c.norm_sqr() / 0.04 + 1.0 / 0.3);
        assert!((post.covariance[(0, 0)] - want).abs() < 1e-15);
        assert!((post.factor[(0, 0)].powi(2) - want).abs() < 1e-15);
    }

    #[test]
    fn factor_squares_to_covariance_and_prior_dominates() {
        let a = DMatrix::from_fn(6, 4, |j, k| Complex64::new((j as f64 + 1.0) * (k as f64 - 1.5), (j * k) as f64 * 0.1));
        let m = linear_model(a, 0.5, vec![0.2, 0.4, 0.1, 1.0]);
        let post = posterior_covariance(&m, &[0.0; 4]).unwrap();
        let sq = &post.factor * &post.factor;
        assert!((sq - &post.covariance).amax() < 1e-12 * post.covariance.amax());
        let diff = DMatrix::from_diagonal(&DVector::from_vec(m.prior_var.clone())) - &post.covariance;
        assert!(SymmetricEigen::new(diff).eigenvalues.min() > -1e-10);
    }

    #[test]
    fn indefinite_hessian_is_floored() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let post = LaplacePosterior::from_hessian(vec![0.0, 0.0], &h).unwrap();
        assert!(post.floored);
        assert!((post.covariance[(1, 1)] - 1e12).abs() < 1.0);
    }

    #[test]
    fn samples_reproduce_moments_and_are_seeded() {
        let a = DMatrix::from_fn(5, 3, |j, k| Complex64::new(((j + k) % 3) as f64, (j as f64 - k as f64) * 0.3));
        let m = linear_model(a, 0.7, vec![0.3, 0.5, 0.2]);
        let post = posterior_covariance(&m, &[0.1, -0.2, 0.3]).unwrap();
        let layout = Layout { components: 1, modes: 0, has_kappa: false };
        let count = 100_000;
        let s = post.sample(&m, layout, count, 11).unwrap();
        assert_eq!(s.admissible_count(), count);
        let cov = s.covariance();
        let rel = (&cov - &post.covariance).norm() / post.covariance.norm();
        assert!(rel < 0.05, "{rel}");
        let mean = s.mean();
        for k in 0..3 {
            let se = (post.covariance[(k, k)] / count as f64).sqrt();
            assert!((mean[k] - post.mean[k]).abs() < 3.0 * se);
        }
        assert_eq!(post.sample(&m, layout, 50, 11).unwrap().samples, s.samples[..50].to_vec());
    }

    #[test]
    fn vanishing_covariance_returns_the_mean() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1e40, 1e40]));
        let post = LaplacePosterior::from_hessian(vec![0.2, 0.3], &h).unwrap();
        let m = linear_model(DMatrix::zeros(1, 2), 1.0, vec![1.0, 1.0]);
        let s = post.sample(&m, Layout { components: 1, modes: 0, has_kappa: false }, 10, 1).unwrap();
        for x in &s.samples {
            assert!((x.nu[0] - 0.2).abs() < 1e-15 && (x.nu[1] - 0.3).abs() < 1e-15);
        }
    }
}
