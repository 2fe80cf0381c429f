//! Experiment configuration file.

use crate::boundary::{Curve, Ellipse};
use crate::error::{Error, Result};
use crate::forward::Scene;
use crate::geometry::{ComponentParams, ShapeParams, ADMISSIBILITY_GRID};
use crate::map::LmOptions;
use crate::measure::MeasurementOperator;
use crate::mcmc::ChainConfig;
use crate::topo::RadiusRule;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunSection,
    pub scene: SceneSection,
    #[serde(default)]
    pub detectors: DetectorLine,
    pub truth: Vec<TruthShape>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub map: MapSection,
    #[serde(default)]
    pub laplace: LaplaceSection,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub evidence: EvidenceSection,
    #[serde(default)]
    pub stats: StatsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Base seed; each stage derives its own stream from it.
    pub seed: u64,
    pub out: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1, out: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub kappa_e: f64,
    pub kappa_i: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "up")]
    pub incident: [f64; 2],
    /// Fourier modes per component in the inversion.
    #[serde(default = "five")]
    pub modes: usize,
    /// Boundary nodes per component inside inversions and sampling.
    #[serde(default = "nodes")]
    pub nodes: usize,
    /// Boundary nodes per component for the synthetic truth.
    #[serde(default = "truth_nodes")]
    pub truth_nodes: usize,
}

fn one() -> f64 {
    1.0
}
fn up() -> [f64; 2] {
    [0.0, 1.0]
}
fn five() -> usize {
    5
}
fn nodes() -> usize {
    crate::model::DEFAULT_NODES
}
fn truth_nodes() -> usize {
    128
}

/// Detectors `(x_start + step j, height)` for `j = 0..count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorLine {
    pub x_start: f64,
    pub step: f64,
    pub count: usize,
    pub height: f64,
}

impl Default for DetectorLine {
    fn default() -> Self {
        Self { x_start: -5.0, step: 0.05, count: 201, height: 5.0 }
    }
}

impl DetectorLine {
    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.count).map(|j| [self.x_start + self.step * j as f64, self.height]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TruthShape {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        center: [f64; 2],
        semi_x: f64,
        semi_y: f64,
        #[serde(default)]
        rotation: f64,
    },
    /// `r = scale (1 + 0.15 cos t + 0.05 cos 2t)`.
    Egg {
        center: [f64; 2],
        #[serde(default = "egg_scale")]
        scale: f64,
    },
    Fourier {
        center: [f64; 2],
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
    },
}

fn egg_scale() -> f64 {
    0.2
}

pub enum TruthCurve {
    Star(ComponentParams),
    Ellipse(Ellipse),
}

impl TruthCurve {
    pub fn as_curve(&self) -> &dyn Curve {
        match self {
            TruthCurve::Star(c) => c,
            TruthCurve::Ellipse(e) => e,
        }
    }
}

impl TruthShape {
    pub fn egg(center: [f64; 2], scale: f64) -> ComponentParams {
        ComponentParams { center, a: vec![scale, 0.075 * scale, 0.025 * scale], b: vec![0.0, 0.0] }
    }

    pub fn curve(&self) -> Result<TruthCurve> {
        let c = match self {
            TruthShape::Circle { center, radius } => TruthCurve::Star(ComponentParams::circle(*center, *radius, 0)),
            TruthShape::Ellipse { center, semi_x, semi_y, rotation } => {
                if !(*semi_x > 0.0 && *semi_y > 0.0) {
                    return Err(Error::Config("ellipse semi-axes must be positive".into()));
                }
                TruthCurve::Ellipse(Ellipse { center: *center, semi_x: *semi_x, semi_y: *semi_y, rotation: *rotation })
            }
            TruthShape::Egg { center, scale } => TruthCurve::Star(Self::egg(*center, *scale)),
            TruthShape::Fourier { center, a, b } => {
                if a.is_empty() {
                    return Err(Error::Config("fourier truth needs at least a0".into()));
                }
                let modes = (a.len() - 1).max(b.len());
                let mut aa = a.clone();
                aa.resize(modes + 1, 0.0);
                let mut bb = b.clone();
                bb.resize(modes, 0.0);
                TruthCurve::Star(ComponentParams { center: *center, a: aa, b: bb })
            }
        };
        if let TruthCurve::Star(s) = &c {
            if !s.is_admissible(ADMISSIBILITY_GRID) {
                return Err(Error::Inadmissible("truth shape has a vanishing radius".into()));
            }
        }
        Ok(c)
    }

    pub fn center(&self) -> [f64; 2] {
        match self {
            TruthShape::Circle { center, .. }
            | TruthShape::Ellipse { center, .. }
            | TruthShape::Egg { center, .. }
            | TruthShape::Fourier { center, .. } => *center,
        }
    }

    /// Polar radius about the center at angle `theta`.
    pub fn radius_at(&self, theta: f64) -> Result<f64> {
        Ok(match self.curve()? {
            TruthCurve::Star(c) => c.radius(theta / std::f64::consts::TAU),
            TruthCurve::Ellipse(e) => e.polar_radius(theta),
        })
    }

    /// Least-squares star-shaped representation with `modes` modes.
    pub fn fit(&self, modes: usize) -> Result<ComponentParams> {
        Ok(ComponentParams::fit_polar(self.center(), modes, |theta| self.radius_at(theta).unwrap_or(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub operator: MeasurementOperator,
    /// Noise standard deviation relative to the rms of the clean data.
    pub noise: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { operator: MeasurementOperator::Field, noise: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    /// Number of objects to look for.
    pub components: usize,
    pub decay: f64,
    pub radius_rule: RadiusRule,
    pub jitter: f64,
    /// Observation region half width and grid step for the topological derivative.
    pub region_half_width: f64,
    pub grid_step: f64,
    pub infer_kappa: bool,
    /// Defaults to `kappa_e + 2.5`.
    pub kappa_mean: Option<f64>,
    pub kappa_variance: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            components: 1,
            decay: 3.0,
            radius_rule: RadiusRule::Min,
            jitter: 0.5,
            region_half_width: 2.5,
            grid_step: 0.05,
            infer_kappa: false,
            kappa_mean: None,
            kappa_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub tau: f64,
    pub max_iterations: usize,
    pub mu_factor: f64,
}

impl Default for MapSection {
    fn default() -> Self {
        let d = LmOptions::default();
        Self { tau: d.tau, max_iterations: d.max_iterations, mu_factor: d.mu_factor }
    }
}

impl MapSection {
    pub fn options(&self) -> LmOptions {
        LmOptions { tau: self.tau, max_iterations: self.max_iterations, mu_factor: self.mu_factor, ..LmOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceSection {
    pub enabled: bool,
    pub samples: usize,
}

impl Default for LaplaceSection {
    fn default() -> Self {
        Self { enabled: true, samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub enabled: bool,
    pub walkers: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub stretch: f64,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self { enabled: false, walkers: 200, steps: 200, burn_in: 35_000, stretch: 2.0 }
    }
}

impl McmcSection {
    pub fn chain(&self, seed: u64) -> ChainConfig {
        ChainConfig { walkers: self.walkers, steps: self.steps, burn_in: self.burn_in, stretch: self.stretch, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvidenceSection {
    pub enabled: bool,
    pub counts: Vec<usize>,
    pub samples: usize,
}

impl Default for EvidenceSection {
    fn default() -> Self {
        Self { enabled: false, counts: vec![1, 2, 3, 4], samples: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    pub grid_half_width: f64,
    pub grid_step: f64,
    pub angles: usize,
    pub bins: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self { grid_half_width: 1.0, grid_step: 0.01, angles: 64, bins: 40 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// sha256 of the canonical serialization, defaults included.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        if !(s.kappa_e > 0.0 && s.kappa_i > 0.0 && s.beta > 0.0) {
            return Err(Error::Config("wavenumbers and beta must be positive".into()));
        }
        if s.nodes < 8 || s.nodes % 2 == 1 || s.truth_nodes < 8 || s.truth_nodes % 2 == 1 {
            return Err(Error::Config("node counts must be even and at least 8".into()));
        }
        if self.truth.is_empty() {
            return Err(Error::Config("at least one truth shape is required".into()));
        }
        if !(self.data.noise >= 0.0) {
            return Err(Error::Config("noise level must be non-negative".into()));
        }
        if self.detectors.count < 2 {
            return Err(Error::Config("need at least two detectors to split the data".into()));
        }
        if self.prior.components == 0 {
            return Err(Error::Config("prior needs at least one component".into()));
        }
        if self.prior.infer_kappa && !(self.prior.kappa_variance > 0.0) {
            return Err(Error::Config("kappa variance must be positive".into()));
        }
        if self.evidence.enabled && (self.evidence.counts.len() < 2 || self.evidence.samples < 100) {
            return Err(Error::Config("evidence needs two or more counts and at least 100 samples".into()));
        }
        if self.laplace.enabled && self.laplace.samples == 0 {
            return Err(Error::Config("laplace sample count must be positive".into()));
        }
        for t in &self.truth {
            t.curve()?;
        }
        Ok(())
    }

    pub fn scene(&self, detectors: Vec<[f64; 2]>) -> Scene {
        let s = &self.scene;
        Scene { kappa_e: s.kappa_e, kappa_i: s.kappa_i, beta: s.beta, incident: s.incident, detectors }
    }

    pub fn kappa_mean(&self) -> f64 {
        self.prior.kappa_mean.unwrap_or(self.scene.kappa_e + 2.5)
    }

    /// Truth shapes fitted with the inversion mode count, for comparisons.
    pub fn truth_params(&self) -> Result<ShapeParams> {
        Ok(ShapeParams::new(self.truth.iter().map(|t| t.fit(self.scene.modes)).collect::<Result<_>>()?))
    }
}
