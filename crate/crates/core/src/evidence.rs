//! Prior Monte Carlo estimate of the evidence and object-count selection.

use crate::error::{Error, Result};
use crate::map::CostModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub m: usize,
    /// Log of the mean likelihood.
    pub log_estimate: f64,
    /// Standard error divided by the estimate.
    pub relative_error: f64,
    pub samples: usize,
}

impl EvidenceEstimate {
    pub fn estimate(&self) -> f64 {
        self.log_estimate.exp()
    }

    pub fn standard_error(&self) -> f64 {
        self.relative_error * self.estimate()
    }

    /// Standard error of the log estimate to first order.
    pub fn log_standard_error(&self) -> f64 {
        self.relative_error
    }
}

/// `log p(d|nu)` including `(2 pi)^{-N/2} sigma^{-N}`.
pub fn log_likelihood(model: &CostModel, nu: &[f64]) -> f64 {
    let n = model.data.len() as f64;
    let norm = -0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * model.sigma().ln();
    match model.map.field(nu) {
        Ok(u) => norm - model.misfit(&u),
        Err(e) => {
            log::warn!("forward solve failed at a prior draw, likelihood set to zero: {e}");
            f64::NEG_INFINITY
        }
    }
}

/// Mean and relative standard error of `exp(logs)` without leaving log space.
pub fn log_mean_exp(logs: &[f64]) -> (f64, f64) {
    let s = logs.len() as f64;
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, 0.0);
    }
    let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / s;
    let var = if logs.len() > 1 { scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0) } else { 0.0 };
    (top + mean.ln(), var.sqrt() / s.sqrt() / mean)
}

/// Smallest admissible fraction of prior draws tolerated before giving up.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// Average of the normalized likelihood over `count` truncated-prior draws.
pub fn evidence(model: &CostModel, m: usize, count: usize, seed: u64) -> Result<EvidenceEstimate> {
    if count == 0 {
        return Err(Error::InvalidInput("evidence needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd: Vec<f64> = model.prior_var.iter().map(|v| v.sqrt()).collect();
    let mut draws = Vec::with_capacity(count);
    let mut attempts = 0;
    let cap = (count as f64 / MIN_ACCEPTANCE) as usize;
    while draws.len() < count {
        if attempts >= cap.max(crate::mcmc::MAX_INIT_ATTEMPTS) {
            return Err(Error::SamplerInit { attempts });
        }
        attempts += 1;
        let x: Vec<f64> = model
            .prior_mean
            .iter()
            .zip(&sd)
            .map(|(mu, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + s * z
            })
            .collect();
        if model.map.admissible(&x) {
            draws.push(x);
        }
    }
    let logs: Vec<f64> = draws.par_iter().map(|x| log_likelihood(model, x)).collect();
    let (log_estimate, relative_error) = log_mean_exp(&logs);
    Ok(EvidenceEstimate { m, log_estimate, relative_error, samples: count })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub m: usize,
    /// The top two estimates differ by less than two combined standard errors.
    pub unclear: bool,
}

/// Count with the largest evidence; ties go to the smaller count.
pub fn select_model(estimates: &[EvidenceEstimate]) -> Result<Selection> {
    if estimates.len() < 2 {
        return Err(Error::InvalidInput("need at least two evidence estimates".into()));
    }
    let mut order: Vec<&EvidenceEstimate> = estimates.iter().collect();
    order.sort_by(|a, b| b.log_estimate.total_cmp(&a.log_estimate).then(a.m.cmp(&b.m)));
    let (best, second) = (order[0], order[1]);
    // compare on a common scale to avoid underflow
    let scale = best.log_estimate;
    if scale == f64::NEG_INFINITY {
        return Ok(Selection { m: estimates.iter().map(|e| e.m).min().unwrap_or(0), unclear: true });
    }
    let e1 = 1.0;
    let e2 = (second.log_estimate - scale).exp();
    let se = (best.relative_error.powi(2) + (second.relative_error * e2).powi(2)).sqrt();
    Ok(Selection { m: best.m, unclear: e1 - e2 <= 2.0 * se })
}
