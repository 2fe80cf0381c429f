//! Regularized cost, Gauss-Newton model and the Levenberg-Marquardt MAP search.

use crate::derivatives::{assemble_jacobian, measurement_chain};
use crate::error::{Error, Result};
use crate::geometry::{ShapeParams, ADMISSIBILITY_GRID};
use crate::measure::{DataVector, MeasurementOperator};
use crate::model::ForwardModel;
use crate::topo::PriorSpec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A map from a flat parameter vector to the total field at the detectors.
pub trait ObservationMap: Send + Sync {
    fn dim(&self) -> usize;
    /// Support of the truncated prior.
    fn admissible(&self, nu: &[f64]) -> bool;
    fn field(&self, nu: &[f64]) -> Result<Vec<Complex64>>;
    /// Jacobian of the field and the field itself.
    fn jacobian(&self, nu: &[f64]) -> Result<(DMatrix<Complex64>, Vec<Complex64>)>;
}

/// Star-shaped obstacles seen through the transmission solver.
#[derive(Debug, Clone)]
pub struct ShapeMap {
    pub model: ForwardModel,
    pub components: usize,
    pub modes: usize,
    pub has_kappa: bool,
}

impl ShapeMap {
    pub fn new(model: ForwardModel, layout: &ShapeParams) -> Self {
        Self { model, components: layout.components.len(), modes: layout.modes(), has_kappa: layout.kappa_i.is_some() }
    }

    pub fn shape(&self, nu: &[f64]) -> Result<ShapeParams> {
        ShapeParams::unpack(nu, self.components, self.modes, self.has_kappa)
    }
}

impl ObservationMap for ShapeMap {
    fn dim(&self) -> usize {
        crate::geometry::packed_len(self.components, self.modes, self.has_kappa)
    }

    fn admissible(&self, nu: &[f64]) -> bool {
        self.shape(nu).is_ok_and(|s| s.is_admissible(ADMISSIBILITY_GRID))
    }

    fn field(&self, nu: &[f64]) -> Result<Vec<Complex64>> {
        self.model.field(&self.shape(nu)?)
    }

    fn jacobian(&self, nu: &[f64]) -> Result<(DMatrix<Complex64>, Vec<Complex64>)> {
        let j = assemble_jacobian(&self.model, &self.shape(nu)?)?;
        Ok((j.matrix, j.field))
    }
}

/// Affine map `u = A nu + b`, every parameter vector admissible.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub a: DMatrix<Complex64>,
    pub b: DVector<Complex64>,
}

impl ObservationMap for LinearMap {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn admissible(&self, nu: &[f64]) -> bool {
        nu.iter().all(|v| v.is_finite())
    }

    fn field(&self, nu: &[f64]) -> Result<Vec<Complex64>> {
        let x = DVector::from_iterator(nu.len(), nu.iter().map(|&v| Complex64::from(v)));
        Ok((&self.a * x + &self.b).iter().copied().collect())
    }

    fn jacobian(&self, nu: &[f64]) -> Result<(DMatrix<Complex64>, Vec<Complex64>)> {
        Ok((self.a.clone(), self.field(nu)?))
    }
}

/// Misfit plus Gaussian prior, `J = 1/2 |f(nu) - d|^2 / sigma^2 + 1/2 |nu - nu0|^2_{Gamma_pr^-1}`.
#[derive(Clone)]
pub struct CostModel {
    pub map: Arc<dyn ObservationMap>,
    pub data: DataVector,
    pub prior_mean: Vec<f64>,
    pub prior_var: Vec<f64>,
}

impl std::fmt::Debug for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostModel")
            .field("dim", &self.prior_mean.len())
            .field("data", &self.data.len())
            .field("sigma", &self.data.sigma_noise)
            .finish()
    }
}

impl CostModel {
    pub fn new(map: Arc<dyn ObservationMap>, data: DataVector, prior_mean: Vec<f64>, prior_var: Vec<f64>) -> Result<Self> {
        if !(data.sigma_noise > 0.0) {
            return Err(Error::InvalidInput("noise level must be positive to weight the misfit".into()));
        }
        if prior_mean.len() != map.dim() || prior_var.len() != map.dim() {
            return Err(Error::LengthMismatch { expected: map.dim(), got: prior_mean.len().min(prior_var.len()) });
        }
        if prior_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput("prior variances must be positive".into()));
        }
        Ok(Self { map, data, prior_mean, prior_var })
    }

    pub fn for_shapes(model: ForwardModel, data: DataVector, prior: &PriorSpec) -> Result<Self> {
        let map = ShapeMap::new(model, &prior.nu0);
        Self::new(Arc::new(map), data, prior.nu0.pack(), prior.variances.clone())
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn sigma(&self) -> f64 {
        self.data.sigma_noise
    }

    pub fn operator(&self) -> MeasurementOperator {
        self.data.operator
    }

    /// `1/2 |f(u) - d|^2 / sigma^2`.
    pub fn misfit(&self, u: &[Complex64]) -> f64 {
        let s2 = self.sigma() * self.sigma();
        0.5 * u.iter().zip(&self.data.values).map(|(&v, d)| (self.operator().apply(v) - d).norm_sqr()).sum::<f64>() / s2
    }

    /// `1/2 (nu - nu0)^T Gamma_pr^-1 (nu - nu0)`.
    pub fn prior_term(&self, nu: &[f64]) -> f64 {
        0.5 * nu.iter().zip(&self.prior_mean).zip(&self.prior_var).map(|((x, m), v)| (x - m) * (x - m) / v).sum::<f64>()
    }

    /// Cost with the prior weighted by `lambda`; `+inf` outside the admissible set.
    pub fn cost_lambda(&self, nu: &[f64], lambda: f64) -> Result<f64> {
        Ok(self.evaluate(nu)?.map_or(f64::INFINITY, |(_, m)| m + lambda * self.prior_term(nu)))
    }

    pub fn cost(&self, nu: &[f64]) -> Result<f64> {
        self.cost_lambda(nu, 1.0)
    }

    /// Field and misfit, or `None` when `nu` is inadmissible.
    pub fn evaluate(&self, nu: &[f64]) -> Result<Option<(Vec<Complex64>, f64)>> {
        if nu.len() != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), got: nu.len() });
        }
        if !self.map.admissible(nu) {
            return Ok(None);
        }
        let u = self.map.field(nu)?;
        let m = self.misfit(&u);
        Ok(Some((u, m)))
    }

    /// `Re[F^H W (f - d)] / sigma^2 + lambda Gamma_pr^-1 (nu - nu0)` with `W = I`
    /// for field data and `W = M_g` for intensity data.
    pub fn gradient(&self, nu: &[f64], jac: &DMatrix<Complex64>, u: &[Complex64], lambda: f64) -> Result<DVector<f64>> {
        let s2 = self.sigma() * self.sigma();
        let resid: Vec<Complex64> = match self.operator() {
            MeasurementOperator::Field => u.iter().zip(&self.data.values).map(|(v, d)| v - d).collect(),
            MeasurementOperator::Intensity => {
                let (mg, _) = measurement_chain(u, &self.data)?;
                u.iter().zip(&self.data.values).zip(&mg).map(|((v, d), g)| g * (v.norm_sqr() - d.re)).collect()
            }
        };
        let mut g = DVector::zeros(self.dim());
        for k in 0..self.dim() {
            let mut acc = 0.0;
            for (j, r) in resid.iter().enumerate() {
                acc += (jac[(j, k)].conj() * r).re;
            }
            g[k] = acc / s2 + lambda * (nu[k] - self.prior_mean[k]) / self.prior_var[k];
        }
        Ok(g)
    }

    /// `Re[F^H W F] / sigma^2 + lambda Gamma_pr^-1` with `W = I` for field data
    /// and `W = M_h` for intensity data, symmetrized.
    pub fn gn_hessian(&self, jac: &DMatrix<Complex64>, u: &[Complex64], lambda: f64) -> Result<DMatrix<f64>> {
        let s2 = self.sigma() * self.sigma();
        let weights: Vec<f64> = match self.operator() {
            MeasurementOperator::Field => vec![1.0; u.len()],
            MeasurementOperator::Intensity => measurement_chain(u, &self.data)?.1,
        };
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let mut acc = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    acc += w * (jac[(j, a)].conj() * jac[(j, b)]).re;
                }
                h[(a, b)] = acc / s2;
                h[(b, a)] = acc / s2;
            }
            h[(a, a)] += lambda / self.prior_var[a];
        }
        Ok(h)
    }

    /// Truncated Gaussian log prior without normalization.
    pub fn log_prior(&self, nu: &[f64]) -> f64 {
        if !self.map.admissible(nu) {
            return f64::NEG_INFINITY;
        }
        -self.prior_term(nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    /// Stop tolerance `tau`; the threshold is `tau / sigma^2`.
    pub tau: f64,
    pub max_iterations: usize,
    pub mu0: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    /// `lambda_0 = lambda_scale / sigma^2`.
    pub lambda_scale: f64,
    pub lambda_decay: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { tau: 1e-5, max_iterations: 200, mu0: 1e-3, mu_factor: 10.0, mu_max: 1.0, lambda_scale: 0.1, lambda_decay: 2.0 / 3.0 }
    }
}

impl LmOptions {
    pub fn lambda(&self, sigma: f64, k: usize) -> f64 {
        let l0 = self.lambda_scale / (sigma * sigma);
        if l0 > 1.0 {
            (l0 * self.lambda_decay.powi(k as i32)).max(1.0)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmStep {
    pub iteration: usize,
    pub lambda: f64,
    pub mu: f64,
    /// Cost at the start of the iteration under `lambda`.
    pub cost_before: f64,
    /// Cost after the iteration under `lambda`.
    pub cost_after: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmResult {
    pub nu: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<LmStep>,
}

fn trial_field(model: &CostModel, nu: &[f64]) -> Result<Option<Vec<Complex64>>> {
    match model.evaluate(nu) {
        Err(Error::IllConditioned { .. }) => Ok(None),
        other => Ok(other?.map(|(u, _)| u)),
    }
}

impl CostModel {
    /// `J_lambda(new) - J_lambda(old)` written as sums of differences, so that it
    /// stays accurate when both costs agree to many digits.
    pub fn cost_change(&self, old: (&[f64], &[Complex64]), new: (&[f64], &[Complex64]), lambda: f64) -> f64 {
        let s2 = self.sigma() * self.sigma();
        let op = self.operator();
        let mut dm = 0.0;
        for ((uo, un), d) in old.1.iter().zip(new.1).zip(&self.data.values) {
            let (po, pn) = (op.apply(*uo), op.apply(*un));
            dm += ((pn - po) * (pn + po - 2.0 * d).conj()).re;
        }
        let mut dp = 0.0;
        for (((xo, xn), m), v) in old.0.iter().zip(new.0).zip(&self.prior_mean).zip(&self.prior_var) {
            dp += (xn - xo) * (xn + xo - 2.0 * m) / v;
        }
        0.5 * dm / s2 + 0.5 * lambda * dp
    }
}

/// Fletcher-scaled Levenberg-Marquardt with prior-weight continuation.
pub fn lm_solve(model: &CostModel, start: &[f64], options: &LmOptions) -> Result<LmResult> {
    let mut nu = start.to_vec();
    if !model.map.admissible(&nu) {
        return Err(Error::Inadmissible("starting point".into()));
    }
    let sigma = model.sigma();
    let stop = options.tau / (sigma * sigma);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut cached: Option<(DMatrix<Complex64>, Vec<Complex64>)> = None;
    for k in 0..options.max_iterations {
        let lambda = options.lambda(sigma, k);
        let (jac, u) = match cached.take() {
            Some(c) => c,
            None => model.map.jacobian(&nu)?,
        };
        let current = model.misfit(&u) + lambda * model.prior_term(&nu);
        let g = model.gradient(&nu, &jac, &u, lambda)?;
        let h = model.gn_hessian(&jac, &u, lambda)?;
        let mut mu = options.mu0;
        let mut accepted = None;
        loop {
            let mut a = h.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu * h[(i, i)].abs();
            }
            if let Some(step) = a.lu().solve(&(-&g)) {
                let trial: Vec<f64> = nu.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
                if let Some(ut) = trial_field(model, &trial)? {
                    let change = model.cost_change((&nu, &u), (&trial, &ut), lambda);
                    if change < 0.0 {
                        accepted = Some((trial, current + change, step.norm()));
                        break;
                    }
                }
            }
            if mu >= options.mu_max {
                break;
            }
            mu = (mu * options.mu_factor).min(options.mu_max);
        }
        match accepted {
            Some((trial, c, norm)) => {
                trace.push(LmStep {
                    iteration: k,
                    lambda,
                    mu,
                    cost_before: current,
                    cost_after: c,
                    step_norm: norm,
                    accepted: true,
                    nu: trial.clone(),
                });
                nu = trial;
                if lambda == 1.0 && (current - c).abs() < stop {
                    converged = true;
                    break;
                }
            }
            None => {
                trace.push(LmStep {
                    iteration: k,
                    lambda,
                    mu,
                    cost_before: current,
                    cost_after: current,
                    step_norm: 0.0,
                    accepted: false,
                    nu: nu.clone(),
                });
                // no descent direction left at the final weighting
                if lambda == 1.0 {
                    converged = true;
                    break;
                }
                cached = Some((jac, u));
            }
        }
    }
    let cost = model.cost(&nu)?;
    let iterations = trace.len();
    Ok(LmResult { nu, cost, converged, iterations, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_data: usize, dim: usize, sigma: f64) -> (CostModel, DMatrix<Complex64>) {
        let a = DMatrix::from_fn(n_data, dim, |j, k| Complex64::new(((j * 7 + k * 3) % 5) as f64 - 2.0, ((j + 2 * k) % 3) as f64 - 1.0));
        let b = DVector::from_element(n_data, Complex64::new(0.5, 0.0));
        let d: Vec<Complex64> = (0..n_data).map(|j| Complex64::new((j as f64).sin(), (j as f64 * 0.7).cos())).collect();
        let data = DataVector { values: d, operator: MeasurementOperator::Field, sigma_noise: sigma };
        let map = LinearMap { a: a.clone(), b };
        let m = CostModel::new(Arc::new(map), data, vec![0.1; dim], vec![0.5; dim]).unwrap();
        (m, a)
    }

    #[test]
    fn linear_problem_reaches_normal_equations_solution() {
        let (m, a) = toy(12, 4, 0.3);
        let res = lm_solve(&m, &vec![0.0; 4], &LmOptions { tau: 0.0, ..Default::default() }).unwrap();
        // (Re[A^H A]/s2 + G^-1) x = Re[A^H (d - b)]/s2 + G^-1 x0
        let s2 = 0.09;
        let mut lhs = DMatrix::<f64>::zeros(4, 4);
        let mut rhs = DVector::<f64>::zeros(4);
        for p in 0..4 {
            for q in 0..4 {
                lhs[(p, q)] = (0..12).map(|j| (a[(j, p)].conj() * a[(j, q)]).re).sum::<f64>() / s2;
            }
            lhs[(p, p)] += 2.0;
            rhs[p] = (0..12).map(|j| (a[(j, p)].conj() * (m.data.values[j] - 0.5)).re).sum::<f64>() / s2 + 2.0 * 0.1;
        }
        let exact = lhs.lu().solve(&rhs).unwrap();
        for k in 0..4 {
            assert!((res.nu[k] - exact[k]).abs() < 1e-10, "{} vs {}", res.nu[k], exact[k]);
        }
        assert!(res.converged);
    }

    #[test]
    fn accepted_steps_decrease_cost_and_lambda_schedule_holds() {
        let (m, _) = toy(12, 4, 0.05);
        let opts = LmOptions::default();
        let res = lm_solve(&m, &vec![0.0; 4], &opts).unwrap();
        for s in &res.trace {
            assert_eq!(s.lambda, opts.lambda(0.05, s.iteration));
            if s.accepted {
                assert!(s.cost_after < s.cost_before);
            }
        }
        // lambda_0 = 0.1 / 0.0025 = 40 decays to 1
        assert!((res.trace[0].lambda - 40.0).abs() < 1e-12);
        assert_eq!(res.trace.last().unwrap().lambda, 1.0);
    }

    #[test]
    fn perfect_fit_stops_after_one_iteration() {
        let (m, _) = toy(6, 3, 1.0);
        let nu0 = m.prior_mean.clone();
        let u = m.map.field(&nu0).unwrap();
        let data = DataVector { values: u, ..m.data.clone() };
        let m = CostModel { data, ..m };
        assert_eq!(m.cost(&nu0).unwrap(), 0.0);
        let res = lm_solve(&m, &nu0, &LmOptions::default()).unwrap();
        assert!(res.converged && res.iterations == 1);
        assert_eq!(res.nu, nu0);
    }

    #[test]
    fn zero_jacobian_gradient_is_prior_gradient() {
        let map = LinearMap { a: DMatrix::zeros(5, 3), b: DVector::from_element(5, Complex64::new(1.0, 0.0)) };
        let data = DataVector { values: vec![Complex64::new(0.0, 0.0); 5], operator: MeasurementOperator::Field, sigma_noise: 0.1 };
        let m = CostModel::new(Arc::new(map), data, vec![0.0, 1.0, 2.0], vec![0.1, 0.2, 0.4]).unwrap();
        let nu = [1.0, 1.0, 1.0];
        let (j, u) = m.map.jacobian(&nu).unwrap();
        let g = m.gradient(&nu, &j, &u, 1.0).unwrap();
        assert_eq!(g.as_slice(), &[10.0, 0.0, -2.5]);
        let h = m.gn_hessian(&j, &u, 1.0).unwrap();
        assert_eq!(h, DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 5.0, 2.5])));
    }

    #[test]
    fn gradient_matches_cost_differences_for_intensity() {
        let (m, _) = toy(10, 3, 0.2);
        let data = DataVector { values: m.data.values.iter().map(|v| Complex64::from(v.norm_sqr())).collect(), operator: MeasurementOperator::Intensity, ..m.data.clone() };
        let m = CostModel { data, ..m };
        let nu = [0.3, -0.2, 0.1];
        let (j, u) = m.map.jacobian(&nu).unwrap();
        let g = m.gradient(&nu, &j, &u, 1.0).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let (mut p, mut q) = (nu, nu);
            p[k] += h;
            q[k] -= h;
            let fd = (m.cost(&p).unwrap() - m.cost(&q).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * g[k].abs().max(1.0), "{fd} vs {}", g[k]);
        }
    }
}
