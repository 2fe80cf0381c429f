//! Affine-invariant ensemble sampler with the stretch move.

use crate::error::{Error, Result};
use crate::map::CostModel;
use crate::samples::{Layout, Sample, SampleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rejection attempts allowed when drawing initial walkers.
pub const MAX_INIT_ATTEMPTS: usize = 1_000_000;

/// Unnormalized log density; `-inf` outside the support.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

/// Truncated prior plus log-likelihood without normalization constants.
pub fn log_posterior(model: &CostModel, nu: &[f64]) -> f64 {
    let lp = model.log_prior(nu);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    match model.map.field(nu) {
        Ok(u) => lp - model.misfit(&u),
        Err(e) => {
            log::warn!("forward solve failed inside the sampler, state rejected: {e}");
            f64::NEG_INFINITY
        }
    }
}

/// The posterior of a cost model as a sampling target.
pub struct Posterior<'a>(pub &'a CostModel);

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        log_posterior(self.0, x)
    }
}

/// The truncated prior alone, i.e. a posterior with constant likelihood.
pub struct TruncatedPrior<'a>(pub &'a CostModel);

impl LogDensity for TruncatedPrior<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.0.log_prior(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub walkers: usize,
    pub steps: usize,
    /// Flattened ensemble samples discarded from the start.
    pub burn_in: usize,
    pub stretch: f64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.walkers <= 2 * dim {
            return Err(Error::InvalidInput(format!("need more than {} walkers for dimension {dim}", 2 * dim)));
        }
        if !(self.stretch > 1.0) {
            return Err(Error::InvalidInput("stretch parameter must exceed 1".into()));
        }
        if self.burn_in >= self.walkers * (self.steps + 1) {
            return Err(Error::InvalidInput("burn-in discards every sample".into()));
        }
        Ok(())
    }
}

/// `z = ((a - 1) u + 1)^2 / a`, distributed as `1/sqrt(z)` on `[1/a, a]`.
pub fn stretch_factor(a: f64, u: f64) -> f64 {
    let s = (a - 1.0) * u + 1.0;
    s * s / a
}

/// `X^q + z (X^w - X^q)`.
pub fn stretch_proposal(current: &[f64], partner: &[f64], z: f64) -> Vec<f64> {
    current.iter().zip(partner).map(|(x, q)| z * x + (1.0 - z) * q).collect()
}

/// `log s = (d - 1) log z + log pi(prop) - log pi(cur)`.
pub fn log_acceptance(dim: usize, z: f64, lp_prop: f64, lp_cur: f64) -> f64 {
    if lp_prop == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    (dim as f64 - 1.0) * z.ln() + lp_prop - lp_cur
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub walkers: usize,
    pub dim: usize,
    /// States in step-major order, `(steps + 1) * walkers * dim` values.
    pub states: Vec<f64>,
    pub log_density: Vec<f64>,
    pub accepted: usize,
    pub proposed: usize,
}

impl Ensemble {
    pub fn steps(&self) -> usize {
        self.log_density.len() / self.walkers - 1
    }

    pub fn state(&self, step: usize, walker: usize) -> &[f64] {
        let i = (step * self.walkers + walker) * self.dim;
        &self.states[i..i + self.dim]
    }

    pub fn acceptance_fraction(&self) -> f64 {
        if self.proposed == 0 {
            return 0.0;
        }
        self.accepted as f64 / self.proposed as f64
    }

    /// Flattened samples after discarding the first `burn_in`.
    pub fn retained(&self, layout: Layout, burn_in: usize) -> SampleSet {
        let mut set = SampleSet::new(layout);
        for flat in burn_in..self.log_density.len() {
            let (step, walker) = (flat / self.walkers, flat % self.walkers);
            set.samples.push(Sample {
                step,
                walker,
                nu: self.state(step, walker).to_vec(),
                log_posterior: self.log_density[flat],
                admissible: true,
            });
        }
        set
    }

    /// Per-walker chains of the flattened samples at or after `burn_in`.
    pub fn walker_chains(&self, burn_in: usize) -> Vec<Vec<Vec<f64>>> {
        let first = burn_in.div_ceil(self.walkers);
        (0..self.walkers).map(|w| (first..=self.steps()).map(|k| self.state(k, w).to_vec()).collect()).collect()
    }
}

/// Run the ensemble from the given admissible initial walkers.
pub fn run_ensemble<T: LogDensity + ?Sized>(target: &T, initial: Vec<Vec<f64>>, config: &ChainConfig) -> Result<Ensemble> {
    let dim = target.dim();
    config.validate(dim)?;
    if initial.len() != config.walkers {
        return Err(Error::LengthMismatch { expected: config.walkers, got: initial.len() });
    }
    let w_count = config.walkers;
    let mut states = Vec::with_capacity((config.steps + 1) * w_count * dim);
    let mut log_density = Vec::with_capacity((config.steps + 1) * w_count);
    let init_lp: Vec<f64> = initial.par_iter().map(|x| target.log_density(x)).collect();
    for (x, lp) in initial.iter().zip(&init_lp) {
        if x.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, got: x.len() });
        }
        if *lp == f64::NEG_INFINITY {
            return Err(Error::SamplerInit { attempts: 0 });
        }
        states.extend_from_slice(x);
        log_density.push(*lp);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut accepted = 0;
    for k in 0..config.steps {
        let base = k * w_count;
        // partners are pre-sweep states, so all proposals of one sweep are known up front
        let draws: Vec<(usize, f64, f64)> = (0..w_count)
            .map(|w| {
                let mut q = rng.random_range(0..w_count - 1);
                if q >= w {
                    q += 1;
                }
                let z = stretch_factor(config.stretch, rng.random::<f64>());
                let r: f64 = 1.0 - rng.random::<f64>();
                (q, z, r)
            })
            .collect();
        let state = |w: usize| -> &[f64] {
            let i = (base + w) * dim;
            &states[i..i + dim]
        };
        let proposals: Vec<Vec<f64>> = draws.iter().enumerate().map(|(w, &(q, z, _))| stretch_proposal(state(w), state(q), z)).collect();
        let lps: Vec<f64> = proposals.par_iter().map(|x| target.log_density(x)).collect();
        let mut next_states = Vec::with_capacity(w_count * dim);
        let mut next_lp = Vec::with_capacity(w_count);
        for w in 0..w_count {
            let (_, z, r) = draws[w];
            let cur_lp = log_density[base + w];
            if r.ln() <= log_acceptance(dim, z, lps[w], cur_lp) {
                next_states.extend_from_slice(&proposals[w]);
                next_lp.push(lps[w]);
                accepted += 1;
            } else {
                next_states.extend_from_slice(state(w));
                next_lp.push(cur_lp);
            }
        }
        states.extend(next_states);
        log_density.extend(next_lp);
    }
    Ok(Ensemble { walkers: w_count, dim, states, log_density, accepted, proposed: config.steps * w_count })
}

/// Independent draws from the truncated Gaussian prior of `model` that also
/// have a finite target density.
pub fn truncated_prior_draws<T: LogDensity + ?Sized>(model: &CostModel, target: &T, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd: Vec<f64> = model.prior_var.iter().map(|v| v.sqrt()).collect();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        if attempts >= MAX_INIT_ATTEMPTS {
            return Err(Error::SamplerInit { attempts });
        }
        attempts += 1;
        let x: Vec<f64> = model.prior_mean.iter().zip(&sd).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect();
        if model.map.admissible(&x) && target.log_density(&x) > f64::NEG_INFINITY {
            out.push(x);
        }
    }
    Ok(out)
}

/// Walkers initialized from the truncated prior, then `config.steps` sweeps.
pub fn sample_posterior(model: &CostModel, layout: Layout, config: &ChainConfig) -> Result<(Ensemble, SampleSet)> {
    let target = Posterior(model);
    config.validate(target.dim())?;
    let init = truncated_prior_draws(model, &target, config.walkers, config.seed ^ 0x5eed)?;
    let ens = run_ensemble(&target, init, config)?;
    let set = ens.retained(layout, config.burn_in);
    Ok((ens, set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelmanRubin {
    pub rhat: Vec<f64>,
    /// Parameters whose within-chain variance vanishes; their `rhat` is 1.
    pub degenerate: Vec<bool>,
}

/// Potential scale reduction factor per parameter from chains `[chain][step][param]`.
pub fn gelman_rubin(chains: &[Vec<Vec<f64>>]) -> Result<GelmanRubin> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::InvalidInput("need at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 10 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("chains must share a length of at least 10".into()));
    }
    let d = chains[0][0].len();
    let mut rhat = Vec::with_capacity(d);
    let mut degenerate = Vec::with_capacity(d);
    for p in 0..d {
        let means: Vec<f64> = chains.iter().map(|c| c.iter().map(|x| x[p]).sum::<f64>() / n as f64).collect();
        let within = chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| c.iter().map(|x| (x[p] - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
            .sum::<f64>()
            / m as f64;
        let grand = means.iter().sum::<f64>() / m as f64;
        let between = n as f64 * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
        if within <= 0.0 {
            rhat.push(1.0);
            degenerate.push(true);
            continue;
        }
        let pooled = (n as f64 - 1.0) / n as f64 * within + between / n as f64;
        rhat.push((pooled / within).sqrt());
        degenerate.push(false);
    }
    Ok(GelmanRubin { rhat, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Gauss(usize);

    impl LogDensity for Gauss {
        fn dim(&self) -> usize {
            self.0
        }

        fn log_density(&self, x: &[f64]) -> f64 {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }

    fn spread(w: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..w).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }

    #[test]
    fn stretch_factor_covers_the_interval() {
        assert_eq!(stretch_factor(2.0, 0.0), 0.5);
        assert_eq!(stretch_factor(2.0, 1.0), 2.0);
        // inverse cdf of 1/sqrt(z): P(z < 1) = (1 - 1/sqrt(a)) / (sqrt(a) - 1/sqrt(a))
        let a: f64 = 2.0;
        let u = (1.0 - 1.0 / a.sqrt()) / (a.sqrt() - 1.0 / a.sqrt());
        assert!((stretch_factor(a, u) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unit_stretch_keeps_the_walker_and_inadmissible_rejects() {
        let x = [0.3, -0.1];
        assert_eq!(stretch_proposal(&x, &[5.0, 7.0], 1.0), x.to_vec());
        assert_eq!(log_acceptance(2, 1.0, -1.0, -1.0), 0.0);
        assert_eq!(log_acceptance(2, 1.3, f64::NEG_INFINITY, -1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn config_checks() {
        let c = ChainConfig { walkers: 4, steps: 10, burn_in: 0, stretch: 2.0, seed: 0 };
        assert!(c.validate(2).is_err());
        assert!(c.validate(1).is_ok());
        assert!(ChainConfig { stretch: 1.0, ..c }.validate(1).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let c = ChainConfig { walkers: 8, steps: 50, burn_in: 20, stretch: 2.0, seed: 3 };
        let a = run_ensemble(&Gauss(2), spread(8, 2, 1), &c).unwrap();
        let b = run_ensemble(&Gauss(2), spread(8, 2, 1), &c).unwrap();
        assert_eq!(a, b);
        let f = a.acceptance_fraction();
        assert!(f > 0.0 && f < 1.0);
        let layout = Layout { components: 1, modes: 0, has_kappa: false };
        assert_eq!(a.retained(layout, 20).len(), 8 * 51 - 20);
    }

    #[test]
    fn gelman_rubin_edge_cases() {
        let constant = vec![vec![vec![1.0]; 20]; 3];
        let g = gelman_rubin(&constant).unwrap();
        assert_eq!(g.rhat, vec![1.0]);
        assert!(g.degenerate[0]);
        let split: Vec<Vec<Vec<f64>>> = [-10.0, 10.0]
            .iter()
            .map(|&m| (0..50).map(|i| vec![m + ((i * 37) % 11) as f64 * 0.1]).collect())
            .collect();
        assert!(gelman_rubin(&split).unwrap().rhat[0] > 1.1);
        assert!(gelman_rubin(&constant[..1]).is_err());
    }
}
