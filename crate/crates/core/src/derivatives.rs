//! Derivatives of the detector field with respect to shape parameters and
//! `kappa_i`, and the adjoint shape derivative of the misfit.
//!
//! For a boundary perturbation `V` the domain derivative `v` of the total
//! field is the radiating transmission solution with
//!
//! ```text
//! v- - v+                = -(V.n) (du-/dn - du+/dn)
//! beta dv-/dn - dv+/dn   = d/ds[(V.n) d/ds(beta u- - u+)] + (V.n)(beta kappa_i^2 u- - kappa_e^2 u+)
//! ```

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::forward::{arc_derivative, fundamental, fundamental_gradient, representation_matrix, ForwardSolution, Scene};
use crate::geometry::ShapeParams;
use crate::measure::{DataVector, MeasurementOperator};
use crate::model::ForwardModel;
use crate::topo::adjoint_weights;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Relative step for the forward-difference `kappa_i` derivative.
pub const KAPPA_STEP: f64 = 1e-4;

/// Boundary perturbation `dq/dnu_index` of one component at parameter `t`,
/// with `index` in `0..2M+3` following the pack order.
pub fn direction_field(modes: usize, index: usize, t: f64) -> [f64; 2] {
    let (s, c) = (TAU * t).sin_cos();
    match index {
        0 => [1.0, 0.0],
        1 => [0.0, 1.0],
        2 => [c, s],
        k if k <= 2 + modes => {
            let m = (k - 2) as f64;
            let w = 2.0 * (TAU * m * t).cos();
            [w * c, w * s]
        }
        k => {
            let m = (k - 2 - modes) as f64;
            let w = 2.0 * (TAU * m * t).sin();
            [w * c, w * s]
        }
    }
}

/// `V . n` at every node of the full boundary for one parameter of one component.
fn normal_velocity(boundary: &Boundary, component: usize, modes: usize, index: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(boundary.len());
    for (p, part) in boundary.parts.iter().enumerate() {
        let n = part.len();
        for j in 0..n {
            if p == component {
                let v = direction_field(modes, index, j as f64 / n as f64);
                out.push(v[0] * part.normal[j][0] + v[1] * part.normal[j][1]);
            } else {
                out.push(0.0);
            }
        }
    }
    out
}

/// Jump data `(f, g)` of the domain derivative for normal velocity `vn`.
pub fn frechet_jump_data(sol: &ForwardSolution, vn: &[f64]) -> (DVector<Complex64>, DVector<Complex64>) {
    let sys = &sol.system;
    let beta = sys.beta;
    let n = sys.nodes();
    let vn_c = DVector::from_iterator(n, vn.iter().map(|&v| Complex64::from(v)));
    let f = DVector::from_iterator(n, (0..n).map(|j| -vn[j] * (sol.psi[j] / beta - sol.psi[j])));
    let dphi = arc_derivative(&sys.boundary, &sol.phi);
    let flux = dphi.component_mul(&vn_c) * Complex64::from(beta - 1.0);
    let contrast = beta * sys.kappa_i * sys.kappa_i - sys.kappa_e * sys.kappa_e;
    let g = arc_derivative(&sys.boundary, &flux) + sol.phi.component_mul(&vn_c) * Complex64::from(contrast);
    (f, g)
}

/// Detector values of the domain derivative for normal velocity `vn`.
pub fn frechet_from_normal_velocity(sol: &ForwardSolution, vn: &[f64], rep: &DMatrix<Complex64>) -> DVector<Complex64> {
    let (f, g) = frechet_jump_data(sol, vn);
    let (vp, dvp) = sol.system.solve_jump(&f, &g);
    let n = sol.system.nodes();
    rep.columns(0, n) * vp + rep.columns(n, n) * dvp
}

/// Derivative of the detector field along parameter `index` of `component`.
pub fn frechet_shape_solve(
    sol: &ForwardSolution,
    modes: usize,
    component: usize,
    index: usize,
    detectors: &[[f64; 2]],
) -> Result<DVector<Complex64>> {
    let rep = representation_matrix(&sol.system.boundary, sol.system.kappa_e, detectors)?;
    let vn = normal_velocity(&sol.system.boundary, component, modes, index);
    Ok(frechet_from_normal_velocity(sol, &vn, &rep))
}

/// Jacobian of the detector field together with the field itself.
#[derive(Debug, Clone)]
pub struct Jacobian {
    /// `N x n`, columns in pack order.
    pub matrix: DMatrix<Complex64>,
    /// Total field at the detectors at the evaluation point.
    pub field: Vec<Complex64>,
    pub nu: ShapeParams,
}

/// Forward-difference derivative of the detector field in `kappa_i`, with step
/// `KAPPA_STEP * kappa_i`.
pub fn frechet_kappa_column(model: &ForwardModel, nu: &ShapeParams, base: Option<&[Complex64]>, step: Option<f64>) -> Result<Vec<Complex64>> {
    let kappa = model.scene_for(nu).kappa_i;
    let t = step.unwrap_or(KAPPA_STEP * kappa);
    if !(t > 0.0) {
        return Err(Error::InvalidInput("kappa step must be positive".into()));
    }
    let base = match base {
        Some(b) => b.to_vec(),
        None => model.field(nu)?,
    };
    let mut shifted = nu.clone();
    shifted.kappa_i = Some(kappa + t);
    let up = model.field(&shifted)?;
    Ok(up.iter().zip(&base).map(|(a, b)| (a - b) / t).collect())
}

/// All `L (2M + 3)` shape columns, plus the `kappa_i` column when `nu` carries one.
pub fn assemble_jacobian(model: &ForwardModel, nu: &ShapeParams) -> Result<Jacobian> {
    let sol = model.solve(nu)?;
    let detectors = &model.scene.detectors;
    let field = sol.total_field(detectors)?;
    let rep = representation_matrix(&sol.system.boundary, sol.system.kappa_e, detectors)?;
    let modes = nu.modes();
    let block = 2 * modes + 3;
    let mut matrix = DMatrix::zeros(detectors.len(), nu.dim());
    for l in 0..nu.components.len() {
        for index in 0..block {
            let vn = normal_velocity(&sol.system.boundary, l, modes, index);
            let col = frechet_from_normal_velocity(&sol, &vn, &rep);
            matrix.set_column(l * block + index, &col);
        }
    }
    if nu.kappa_i.is_some() {
        let col = frechet_kappa_column(model, nu, Some(&field), None)?;
        matrix.set_column(nu.dim() - 1, &DVector::from_vec(col));
    }
    Ok(Jacobian { matrix, field, nu: nu.clone() })
}

/// Adjoint field traces on the boundary: the transmission solution driven by
/// the Hankel sum of the residual weights instead of a plane wave.
#[derive(Debug, Clone)]
pub struct AdjointTraces {
    pub phi: DVector<Complex64>,
    pub psi: DVector<Complex64>,
}

pub fn adjoint_solve(sol: &ForwardSolution, scene: &Scene, chi: &[Complex64]) -> AdjointTraces {
    let b = &sol.system.boundary;
    let pts = b.points();
    let nrm = b.normals();
    let n = pts.len();
    let mut top = DVector::zeros(n);
    let mut bottom = DVector::zeros(n);
    for (i, (x, nu)) in pts.iter().zip(&nrm).enumerate() {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dn = Complex64::new(0.0, 0.0);
        for (&y, c) in scene.detectors.iter().zip(chi) {
            p += fundamental(scene.kappa_e, *x, y) * c;
            let g = fundamental_gradient(scene.kappa_e, *x, y);
            dn += (g[0] * nu[0] + g[1] * nu[1]) * c;
        }
        top[i] = 2.0 * p;
        bottom[i] = 2.0 * dn;
    }
    let (phi, psi) = sol.system.solve_rhs(&top, &bottom);
    AdjointTraces { phi, psi }
}

/// Boundary density `w` such that `<DJ_c, V> = int w (V.n) ds` for the
/// misfit `J_c = 1/2 sum |d_j - f(u(x_j))|^2`.
pub fn shape_gradient_density(sol: &ForwardSolution, adj: &AdjointTraces) -> Vec<f64> {
    let sys = &sol.system;
    let beta = sys.beta;
    let du = arc_derivative(&sys.boundary, &sol.phi);
    let dp = arc_derivative(&sys.boundary, &adj.phi);
    let contrast = beta * sys.kappa_i * sys.kappa_i - sys.kappa_e * sys.kappa_e;
    (0..sys.nodes())
        .map(|j| {
            // interior normal derivatives are psi / beta
            let normal = beta * (sol.psi[j] / beta) * (adj.psi[j] / beta);
            let tangential = du[j] * dp[j];
            let w = (1.0 - beta) * (normal + tangential) + contrast * sol.phi[j] * adj.phi[j];
            -w.re
        })
        .collect()
}

/// `<DJ_c, V>` along parameter `index` of `component`.
pub fn shape_derivative_cost(
    model: &ForwardModel,
    nu: &ShapeParams,
    data: &DataVector,
    component: usize,
    index: usize,
) -> Result<f64> {
    let sol = model.solve(nu)?;
    let scene = model.scene_for(nu);
    let u = sol.total_field(&scene.detectors)?;
    let chi = residual_weights(data, &u)?;
    let adj = adjoint_solve(&sol, &scene, &chi);
    let w = shape_gradient_density(&sol, &adj);
    let vn = normal_velocity(&sol.system.boundary, component, nu.modes(), index);
    let weights: Vec<f64> = sol.system.boundary.parts.iter().flat_map(|p| p.arc_weights()).collect();
    Ok(w.iter().zip(&vn).zip(&weights).map(|((a, b), c)| a * b * c).sum())
}

/// `chi_j = conj(d_j - f(u_j)) f'(u_j)` at the current field.
pub fn residual_weights(data: &DataVector, u: &[Complex64]) -> Result<Vec<Complex64>> {
    if data.len() != u.len() {
        return Err(Error::InvalidInput("data and field lengths differ".into()));
    }
    Ok(data
        .values
        .iter()
        .zip(u)
        .map(|(d, &v)| (d - data.operator.apply(v)).conj() * data.operator.derivative(v))
        .collect())
}

/// Empty-domain residual weights, as used by the topological derivative.
pub fn incident_residual_weights(data: &DataVector, scene: &Scene) -> Result<Vec<Complex64>> {
    adjoint_weights(data, scene)
}

/// Intensity chain factors `M_g = 2 u_j` and `M_h = 6 |u_j|^2 - 2 d_j`.
pub fn measurement_chain(u: &[Complex64], data: &DataVector) -> Result<(Vec<Complex64>, Vec<f64>)> {
    if data.operator != MeasurementOperator::Intensity {
        return Err(Error::InvalidInput("chain factors only apply to intensity data".into()));
    }
    if u.len() != data.len() {
        return Err(Error::InvalidInput("data and field lengths differ".into()));
    }
    let mg = u.iter().map(|v| 2.0 * v).collect();
    let mh = u.iter().zip(&data.values).map(|(v, d)| 6.0 * v.norm_sqr() - 2.0 * d.re).collect();
    Ok((mg, mh))
}
