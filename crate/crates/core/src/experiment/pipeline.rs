//! Stage functions and the on-disk pipeline runner.

use super::analysis::{boundary_marginals, inside_probability_grid, per_sample_stats, stats_histograms, Histogram, MarginalRow, SampleStats};
use super::config::ExperimentConfig;
use super::export::*;
use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::evidence::{evidence, select_model, EvidenceEstimate, Selection};
use crate::forward::{solve_transmission, Scene};
use crate::geometry::ShapeParams;
use crate::laplace::{posterior_covariance, LaplacePosterior};
use crate::map::{lm_solve, CostModel, LmResult};
use crate::mcmc::{gelman_rubin, sample_posterior, Ensemble, GelmanRubin};
use crate::measure::{add_noise, measure, DataVector};
use crate::model::ForwardModel;
use crate::samples::{Layout, SampleSet};
use crate::topo::{topo_derivative, topological_prior, Grid, PriorOptions, PriorSpec, TopoField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Per-stage seed offsets from the base seed.
pub mod seeds {
    pub const DATA: u64 = 0;
    pub const LAPLACE: u64 = 1;
    pub const MCMC: u64 = 2;
    pub const EVIDENCE: u64 = 100;

    pub fn derive(base: u64, offset: u64) -> u64 {
        base.wrapping_add(offset)
    }
}

/// Synthetic data split into the inversion and prior detector sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub detectors: Vec<[f64; 2]>,
    /// `f(u)` at every detector before noise.
    pub clean: Vec<Complex64>,
    pub noisy: DataVector,
    pub invert_points: Vec<[f64; 2]>,
    pub invert: DataVector,
    pub prior_points: Vec<[f64; 2]>,
    pub prior: DataVector,
}

/// Solve on the truth, measure at all detectors, add noise once and split
/// even indices (inversion) from odd indices (prior).
pub fn generate_data(cfg: &ExperimentConfig) -> Result<Generated> {
    let detectors = cfg.detectors.points();
    let scene = cfg.scene(detectors.clone());
    let curves = cfg.truth.iter().map(|t| t.curve()).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn crate::boundary::Curve> = curves.iter().map(|c| c.as_curve()).collect();
    let boundary = Boundary::sample(&refs, cfg.scene.truth_nodes);
    let u = solve_transmission(boundary, &scene)?.total_field(&detectors)?;
    let clean = measure(&u, cfg.data.operator);
    let noisy = add_noise(&clean, cfg.data.noise, seeds::derive(cfg.run.seed, seeds::DATA));
    let even: Vec<usize> = (0..detectors.len()).step_by(2).collect();
    let odd: Vec<usize> = (1..detectors.len()).step_by(2).collect();
    Ok(Generated {
        invert_points: even.iter().map(|&j| detectors[j]).collect(),
        invert: noisy.select(&even),
        prior_points: odd.iter().map(|&j| detectors[j]).collect(),
        prior: noisy.select(&odd),
        clean: clean.values,
        noisy,
        detectors,
    })
}

/// Forward model on the inversion detectors with the configured `kappa_i`.
pub fn invert_model(cfg: &ExperimentConfig, points: &[[f64; 2]]) -> ForwardModel {
    ForwardModel::new(cfg.scene(points.to_vec()), cfg.data.operator).with_nodes(cfg.scene.nodes)
}

/// Forward model for prior construction; uses the prior mean of `kappa_i` when it is inferred.
pub fn prior_model(cfg: &ExperimentConfig, points: &[[f64; 2]]) -> ForwardModel {
    let mut scene: Scene = cfg.scene(points.to_vec());
    if cfg.prior.infer_kappa {
        scene.kappa_i = cfg.kappa_mean();
    }
    ForwardModel::new(scene, cfg.data.operator).with_nodes(cfg.scene.nodes)
}

pub fn topological_field(cfg: &ExperimentConfig, data: &DataVector, points: &[[f64; 2]]) -> Result<TopoField> {
    let model = prior_model(cfg, points);
    let grid = Grid::square(cfg.prior.region_half_width, cfg.prior.grid_step);
    topo_derivative(grid, &model.scene, data, model.scene.kappa_i, model.scene.beta)
}

/// Topological prior with `l_target` components, extended by `kappa_i` when it is inferred.
pub fn build_prior(cfg: &ExperimentConfig, field: &TopoField, data: &DataVector, points: &[[f64; 2]], l_target: usize) -> Result<PriorSpec> {
    let model = prior_model(cfg, points);
    let options = PriorOptions { modes: cfg.scene.modes, decay: cfg.prior.decay, radius_rule: cfg.prior.radius_rule };
    let spec = topological_prior(field, data, &model, l_target, &options, cfg.prior.jitter)?;
    if cfg.prior.infer_kappa {
        spec.extend_with_kappa(cfg.kappa_mean(), cfg.prior.kappa_variance)
    } else {
        Ok(spec)
    }
}

pub fn cost_model(cfg: &ExperimentConfig, data: &DataVector, points: &[[f64; 2]], prior: &PriorSpec) -> Result<CostModel> {
    CostModel::for_shapes(invert_model(cfg, points), data.clone(), prior)
}

pub fn run_map(cfg: &ExperimentConfig, cost: &CostModel) -> Result<LmResult> {
    lm_solve(cost, &cost.prior_mean, &cfg.map.options())
}

pub fn run_laplace(cfg: &ExperimentConfig, cost: &CostModel, nu_map: &[f64], layout: Layout) -> Result<(LaplacePosterior, SampleSet)> {
    let post = posterior_covariance(cost, nu_map)?;
    let set = post.sample(cost, layout, cfg.laplace.samples, seeds::derive(cfg.run.seed, seeds::LAPLACE))?;
    Ok((post, set))
}

pub fn run_mcmc(cfg: &ExperimentConfig, cost: &CostModel, layout: Layout) -> Result<(Ensemble, SampleSet, GelmanRubin)> {
    let chain = cfg.mcmc.chain(seeds::derive(cfg.run.seed, seeds::MCMC));
    let (ens, set) = sample_posterior(cost, layout, &chain)?;
    let rhat = gelman_rubin(&ens.walker_chains(chain.burn_in))?;
    Ok((ens, set, rhat))
}

/// Evidence for each configured object count, with priors rebuilt per count.
pub fn run_evidence(cfg: &ExperimentConfig, gen: &Generated, field: &TopoField) -> Result<(Vec<EvidenceEstimate>, Selection)> {
    let mut out = Vec::new();
    for &m in &cfg.evidence.counts {
        let prior = build_prior(cfg, field, &gen.prior, &gen.prior_points, m)?;
        let cost = cost_model(cfg, &gen.invert, &gen.invert_points, &prior)?;
        let seed = seeds::derive(cfg.run.seed, seeds::EVIDENCE + m as u64);
        let e = evidence(&cost, m, cfg.evidence.samples, seed)?;
        log::info!("evidence m={m}: log {:.4} +- {:.4}", e.log_estimate, e.log_standard_error());
        out.push(e);
    }
    let sel = select_model(&out)?;
    Ok((out, sel))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub stats: Vec<SampleStats>,
    pub histograms: Vec<Histogram>,
    pub grid: Grid,
    pub inside: Vec<f64>,
    pub marginals: Vec<MarginalRow>,
}

pub fn analyze(cfg: &ExperimentConfig, set: &SampleSet) -> Result<Analysis> {
    let shapes: Vec<ShapeParams> = set.shapes()?;
    let stats = per_sample_stats(&shapes)?;
    let histograms = stats_histograms(&stats, cfg.stats.bins);
    let grid = Grid::square(cfg.stats.grid_half_width, cfg.stats.grid_step);
    let inside = inside_probability_grid(&shapes, &grid)?;
    let mut marginals = Vec::new();
    for l in 0..set.layout.components {
        marginals.extend(boundary_marginals(&shapes, l, cfg.stats.angles)?);
    }
    Ok(Analysis { stats, histograms, grid, inside, marginals })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Generate,
    Prior,
    Map,
    Laplace,
    Mcmc,
    Evidence,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::Generate, Stage::Prior, Stage::Map, Stage::Laplace, Stage::Mcmc, Stage::Evidence, Stage::Stats];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Prior => "prior",
            Stage::Map => "map",
            Stage::Laplace => "laplace",
            Stage::Mcmc => "mcmc",
            Stage::Evidence => "evidence",
            Stage::Stats => "stats",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub operator: crate::measure::MeasurementOperator,
    pub sigma_noise: f64,
    pub noise_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDoc {
    pub nu: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceDoc {
    pub floored: bool,
    pub samples: usize,
    pub discard_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDoc {
    pub walkers: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub retained: usize,
    pub acceptance_fraction: f64,
    pub max_rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub m: usize,
    pub unclear: bool,
}

/// What a finished stage reports back to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageOutcome {
    pub map_not_converged: bool,
}

/// Runs stages against an output directory; each stage reads what earlier stages wrote.
pub struct Runner {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let hash = cfg.hash();
        let path = dir.join("manifest.toml");
        let manifest = match read_toml::<Manifest>(&path) {
            Ok(m) if m.config_hash == hash => m,
            _ => Manifest::new(hash, cfg.run.seed),
        };
        let runner = Self { cfg, dir, manifest };
        atomic_write(&runner.dir.join("config.toml"), runner.cfg.to_toml().as_bytes())?;
        Ok(runner)
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn save_manifest(&self) -> Result<()> {
        write_toml(&self.path("manifest.toml"), &self.manifest)
    }

    fn emit_table(&mut self, t: &Table, file: &str, role: &str) -> Result<()> {
        t.write(&self.path(file))?;
        self.manifest.record(&self.dir, file, role)
    }

    fn emit_toml<T: Serialize>(&mut self, v: &T, file: &str, role: &str) -> Result<()> {
        write_toml(&self.path(file), v)?;
        self.manifest.record(&self.dir, file, role)
    }

    /// Run one stage, recording success or failure in the manifest.
    pub fn run(&mut self, stage: Stage) -> Result<StageOutcome> {
        log::info!("stage {}", stage.name());
        let result = match stage {
            Stage::Generate => self.generate(),
            Stage::Prior => self.prior(),
            Stage::Map => self.map(),
            Stage::Laplace => self.laplace(),
            Stage::Mcmc => self.mcmc(),
            Stage::Evidence => self.evidence(),
            Stage::Stats => self.stats(),
        };
        match &result {
            Ok(o) if o.map_not_converged => self.manifest.stage(stage.name(), "not-converged", String::new()),
            Ok(_) => self.manifest.stage(stage.name(), "ok", String::new()),
            Err(e) => self.manifest.stage(stage.name(), "failed", e.to_string()),
        }
        self.save_manifest()?;
        result
    }

    /// All stages enabled by the config, minus `skip`.
    pub fn run_all(&mut self, skip: &[Stage]) -> Result<StageOutcome> {
        let mut outcome = StageOutcome::default();
        for stage in Stage::ALL {
            let enabled = match stage {
                Stage::Laplace => self.cfg.laplace.enabled,
                Stage::Mcmc => self.cfg.mcmc.enabled,
                Stage::Evidence => self.cfg.evidence.enabled,
                _ => true,
            };
            if !enabled || skip.contains(&stage) {
                continue;
            }
            let o = self.run(stage)?;
            outcome.map_not_converged |= o.map_not_converged;
        }
        Ok(outcome)
    }

    fn generate(&mut self) -> Result<StageOutcome> {
        let g = generate_data(&self.cfg)?;
        self.emit_table(&data_table(&g.invert_points, &g.invert.values), "data_invert.csv", "inversion data")?;
        self.emit_table(&data_table(&g.prior_points, &g.prior.values), "data_prior.csv", "prior data")?;
        let meta = DataMeta { operator: g.invert.operator, sigma_noise: g.invert.sigma_noise, noise_level: self.cfg.data.noise };
        self.emit_toml(&meta, "data.toml", "data metadata")?;
        Ok(StageOutcome::default())
    }

    fn load_data(&self, file: &str) -> Result<(Vec<[f64; 2]>, DataVector)> {
        let meta: DataMeta = read_toml(&self.path("data.toml"))?;
        let (pts, values) = read_data_table(&Table::read(&self.path(file))?)?;
        Ok((pts, DataVector { values, operator: meta.operator, sigma_noise: meta.sigma_noise }))
    }

    fn load_prior(&self) -> Result<PriorSpec> {
        read_toml(&self.path("prior.toml"))
    }

    fn load_cost(&self) -> Result<(CostModel, PriorSpec)> {
        let prior = self.load_prior()?;
        let (pts, data) = self.load_data("data_invert.csv")?;
        Ok((cost_model(&self.cfg, &data, &pts, &prior)?, prior))
    }

    fn prior(&mut self) -> Result<StageOutcome> {
        let (pts, data) = self.load_data("data_prior.csv")?;
        let field = topological_field(&self.cfg, &data, &pts)?;
        self.emit_table(&topo_table(&field), "topo_field.csv", "topological derivative")?;
        let spec = build_prior(&self.cfg, &field, &data, &pts, self.cfg.prior.components)?;
        self.emit_toml(&spec, "prior.toml", "prior")?;
        Ok(StageOutcome::default())
    }

    fn map(&mut self) -> Result<StageOutcome> {
        let (cost, _) = self.load_cost()?;
        let res = run_map(&self.cfg, &cost)?;
        self.emit_table(&trace_table(&res.trace), "map_trace.csv", "MAP iterations")?;
        let doc = MapDoc { nu: res.nu.clone(), cost: res.cost, converged: res.converged, iterations: res.iterations };
        self.emit_toml(&doc, "map.toml", "MAP point")?;
        if !res.converged {
            log::warn!("MAP search hit the iteration cap");
        }
        Ok(StageOutcome { map_not_converged: !res.converged })
    }

    fn laplace(&mut self) -> Result<StageOutcome> {
        let (cost, prior) = self.load_cost()?;
        let map: MapDoc = read_toml(&self.path("map.toml"))?;
        let (post, set) = run_laplace(&self.cfg, &cost, &map.nu, Layout::of(&prior.nu0))?;
        self.emit_table(&samples_table(&set), "laplace_samples.csv", "Laplace samples")?;
        let doc = LaplaceDoc { floored: post.floored, samples: set.len(), discard_fraction: set.discard_fraction() };
        self.emit_toml(&doc, "laplace.toml", "Laplace summary")?;
        Ok(StageOutcome::default())
    }

    fn mcmc(&mut self) -> Result<StageOutcome> {
        let (cost, prior) = self.load_cost()?;
        let layout = Layout::of(&prior.nu0);
        let (ens, set, rhat) = run_mcmc(&self.cfg, &cost, layout)?;
        self.emit_table(&samples_table(&set), "mcmc_samples.csv", "MCMC samples")?;
        self.emit_table(&rhat_table(&layout.parameter_names(), &rhat), "mcmc_rhat.csv", "Gelman-Rubin")?;
        let doc = McmcDoc {
            walkers: self.cfg.mcmc.walkers,
            steps: self.cfg.mcmc.steps,
            burn_in: self.cfg.mcmc.burn_in,
            retained: set.len(),
            acceptance_fraction: ens.acceptance_fraction(),
            max_rhat: rhat.rhat.iter().cloned().fold(0.0, f64::max),
        };
        self.emit_toml(&doc, "mcmc.toml", "MCMC summary")?;
        Ok(StageOutcome::default())
    }

    fn evidence(&mut self) -> Result<StageOutcome> {
        let (ip, inv) = self.load_data("data_invert.csv")?;
        let (pp, pri) = self.load_data("data_prior.csv")?;
        let field = topological_field(&self.cfg, &pri, &pp)?;
        let gen = Generated {
            detectors: Vec::new(),
            clean: Vec::new(),
            noisy: inv.clone(),
            invert_points: ip,
            invert: inv,
            prior_points: pp,
            prior: pri,
        };
        let (est, sel) = run_evidence(&self.cfg, &gen, &field)?;
        let mut t = Table::new(["m", "log_estimate", "log_standard_error", "samples"]);
        for e in &est {
            t.push(vec![e.m.to_string(), format!("{}", e.log_estimate), format!("{}", e.log_standard_error()), e.samples.to_string()]);
        }
        self.emit_table(&t, "evidence.csv", "evidence")?;
        self.emit_toml(&SelectionDoc { m: sel.m, unclear: sel.unclear }, "selection.toml", "model selection")?;
        Ok(StageOutcome::default())
    }

    fn stats(&mut self) -> Result<StageOutcome> {
        let prior = self.load_prior()?;
        let layout = Layout::of(&prior.nu0);
        for tag in ["laplace", "mcmc"] {
            let file = format!("{tag}_samples.csv");
            if !self.path(&file).exists() {
                continue;
            }
            let set = read_samples_table(&Table::read(&self.path(&file))?, layout)?;
            if set.admissible_count() == 0 {
                return Err(Error::InvalidInput(format!("{file} has no admissible samples")));
            }
            let a = analyze(&self.cfg, &set)?;
            self.emit_table(&stats_table(&a.stats), &format!("{tag}_stats.csv"), "per-sample statistics")?;
            self.emit_table(&histogram_table(&a.histograms), &format!("{tag}_histograms.csv"), "statistic histograms")?;
            self.emit_table(&grid_table(&a.grid, &a.inside), &format!("{tag}_inside.csv"), "inside probability")?;
            self.emit_table(&marginals_table(&a.marginals), &format!("{tag}_marginals.csv"), "contour marginals")?;
        }
        Ok(StageOutcome::default())
    }
}

/// Output directory from the config unless overridden.
pub fn output_dir(cfg: &ExperimentConfig, over: Option<&Path>) -> PathBuf {
    over.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.run.out))
}
