//! Parameter-to-observable map.

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::forward::{solve_transmission, ForwardSolution, Scene};
use crate::geometry::{ShapeParams, ADMISSIBILITY_GRID};
use crate::measure::{DataVector, MeasurementOperator};
use num_complex::Complex64;

/// Default boundary nodes per component inside inversions.
pub const DEFAULT_NODES: usize = 64;

#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub scene: Scene,
    pub operator: MeasurementOperator,
    pub nodes_per_part: usize,
}

impl ForwardModel {
    pub fn new(scene: Scene, operator: MeasurementOperator) -> Self {
        Self { scene, operator, nodes_per_part: DEFAULT_NODES }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes_per_part = nodes;
        self
    }

    /// Scene with `kappa_i` taken from `nu` when it carries one.
    pub fn scene_for(&self, nu: &ShapeParams) -> Scene {
        match nu.kappa_i {
            Some(k) => self.scene.with_kappa_i(k),
            None => self.scene.clone(),
        }
    }

    pub fn solve(&self, nu: &ShapeParams) -> Result<ForwardSolution> {
        if !nu.is_admissible(ADMISSIBILITY_GRID) {
            return Err(Error::Inadmissible("vanishing radius, intersecting or nested boundaries".into()));
        }
        let b = Boundary::from_components(&nu.components, self.nodes_per_part);
        solve_transmission(b, &self.scene_for(nu))
    }

    /// Total field at the detectors.
    pub fn field(&self, nu: &ShapeParams) -> Result<Vec<Complex64>> {
        self.solve(nu)?.total_field(&self.scene.detectors)
    }

    /// `f(u)` at the detectors.
    pub fn predict(&self, nu: &ShapeParams) -> Result<Vec<Complex64>> {
        Ok(self.field(nu)?.into_iter().map(|u| self.operator.apply(u)).collect())
    }

    /// `f(u_inc)` at the detectors, the prediction without any obstacle.
    pub fn predict_empty(&self) -> Vec<Complex64> {
        self.scene.incident_at_detectors().into_iter().map(|u| self.operator.apply(u)).collect()
    }
}

/// `1/2 sum |d_j - f_j|^2`.
pub fn half_squared_misfit(data: &DataVector, prediction: &[Complex64]) -> f64 {
    0.5 * data.values.iter().zip(prediction).map(|(d, f)| (d - f).norm_sqr()).sum::<f64>()
}
