//! Topological derivative of the data misfit and the Gaussian prior built from it.

use crate::error::{Error, Result};
use crate::forward::{fundamental, fundamental_gradient, Scene};
use crate::geometry::{ComponentParams, ShapeParams, ADMISSIBILITY_GRID};
use crate::measure::DataVector;
use crate::model::{half_squared_misfit, ForwardModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Rectangular lattice `(x0 + i h, y0 + j h)`, `i < nx`, `j < ny`, stored row-major in `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    /// Square `[-half, half]^2` with spacing `h`.
    pub fn square(half: f64, h: f64) -> Self {
        let n = (2.0 * half / h).round() as usize + 1;
        Self { x0: -half, y0: -half, h, nx: n, ny: n }
    }

    /// Default observation region `[-2.5, 2.5]^2` at spacing `0.05`.
    pub fn observation_region() -> Self {
        Self::square(2.5, 0.05)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.ny).flat_map(|j| (0..self.nx).map(move |i| (i, j))).map(|(i, j)| self.point(i, j)).collect()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl TopoField {
    pub fn min(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, v)| if v < best.1 { (k, v) } else { best })
    }
}

/// Adjoint weights `chi_j = conj(d_j - f(u_inc(x_j))) f'(u_inc(x_j))`.
pub fn adjoint_weights(data: &DataVector, scene: &Scene) -> Result<Vec<Complex64>> {
    if data.len() != scene.detectors.len() {
        return Err(Error::InvalidInput(format!(
            "{} data values for {} detectors",
            data.len(),
            scene.detectors.len()
        )));
    }
    Ok(scene
        .detectors
        .iter()
        .zip(&data.values)
        .map(|(&x, d)| {
            let u = scene.incident_field(x);
            (d - data.operator.apply(u)).conj() * data.operator.derivative(u)
        })
        .collect())
}

fn check_off_detectors(scene: &Scene, x: [f64; 2]) -> Result<()> {
    if scene.detectors.iter().any(|y| (x[0] - y[0]).hypot(x[1] - y[1]) < 1e-12) {
        return Err(Error::PointTooClose { x: x[0], y: x[1] });
    }
    Ok(())
}

/// `p(x) = (i/4) sum_j H_0(kappa_e |x - x_j|) chi_j`, the conjugate adjoint
/// field of the empty domain.
pub fn adjoint_field(data: &DataVector, scene: &Scene, points: &[[f64; 2]]) -> Result<Vec<Complex64>> {
    let chi = adjoint_weights(data, scene)?;
    points
        .iter()
        .map(|&x| {
            check_off_detectors(scene, x)?;
            Ok(scene.detectors.iter().zip(&chi).map(|(&y, c)| fundamental(scene.kappa_e, x, y) * c).sum())
        })
        .collect()
}

/// Adjoint field together with its analytic gradient.
pub fn adjoint_field_with_gradient(
    data: &DataVector,
    scene: &Scene,
    points: &[[f64; 2]],
) -> Result<Vec<(Complex64, [Complex64; 2])>> {
    let chi = adjoint_weights(data, scene)?;
    points
        .iter()
        .map(|&x| {
            check_off_detectors(scene, x)?;
            let mut p = Complex64::new(0.0, 0.0);
            let mut g = [Complex64::new(0.0, 0.0); 2];
            for (&y, c) in scene.detectors.iter().zip(&chi) {
                p += fundamental(scene.kappa_e, x, y) * c;
                let dg = fundamental_gradient(scene.kappa_e, x, y);
                g[0] += dg[0] * c;
                g[1] += dg[1] * c;
            }
            Ok((p, g))
        })
        .collect()
}

/// Topological derivative of the misfit at `x` for a nucleated inclusion with
/// wavenumber `kappa_i` and contrast `beta`:
/// `-Re[2 (1 - beta)/(1 + beta) grad u_inc . grad p + (beta kappa_i^2 - kappa_e^2) u_inc p]`.
///
/// With `p` the Hankel sum above, inserting a small disc of radius `eps` at
/// `x` changes the misfit by this value times `pi eps^2`.
pub fn topo_value(scene: &Scene, x: [f64; 2], p: Complex64, grad_p: [Complex64; 2], kappa_i: f64, beta: f64) -> f64 {
    let u = scene.incident_field(x);
    let gu = scene.incident_gradient(x);
    let grad_term = (gu[0] * grad_p[0] + gu[1] * grad_p[1]) * (2.0 * (1.0 - beta) / (1.0 + beta));
    let mass_term = u * p * (beta * kappa_i * kappa_i - scene.kappa_e * scene.kappa_e);
    -(grad_term + mass_term).re
}

pub fn topo_derivative(grid: Grid, scene: &Scene, data: &DataVector, kappa_i: f64, beta: f64) -> Result<TopoField> {
    use rayon::prelude::*;
    let points = grid.points();
    let chunks: Vec<Result<Vec<f64>>> = points
        .par_chunks(256)
        .map(|chunk| {
            let adj = adjoint_field_with_gradient(data, scene, chunk)?;
            Ok(chunk.iter().zip(adj).map(|(&x, (p, g))| topo_value(scene, x, p, g, kappa_i, beta)).collect())
        })
        .collect();
    let mut values = Vec::with_capacity(points.len());
    for c in chunks {
        values.extend(c?);
    }
    Ok(TopoField { grid, values })
}

/// A 4-connected set of grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridComponent {
    /// `(i, j)` lattice indices.
    pub cells: Vec<(usize, usize)>,
}

/// Cells with `D_T < (1 - c0) min D_T`, grouped by 4-connectivity. Components
/// are ordered by their most negative value.
pub fn threshold_components(field: &TopoField, c0: f64) -> Result<Vec<GridComponent>> {
    let (_, min) = field.min();
    if !(min < 0.0) {
        return Err(Error::NoDetectableObject);
    }
    let g = field.grid;
    let level = (1.0 - c0) * min;
    let mask: Vec<bool> = field.values.iter().map(|&v| v < level).collect();
    let mut seen = vec![false; g.len()];
    let mut out: Vec<(f64, GridComponent)> = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            if !mask[k] || seen[k] {
                continue;
            }
            let mut cells = Vec::new();
            let mut best = f64::INFINITY;
            let mut queue = VecDeque::from([(i, j)]);
            seen[k] = true;
            while let Some((a, b)) = queue.pop_front() {
                cells.push((a, b));
                best = best.min(field.values[g.index(a, b)]);
                let nbrs = [
                    (a.wrapping_sub(1), b),
                    (a + 1, b),
                    (a, b.wrapping_sub(1)),
                    (a, b + 1),
                ];
                for (c, d) in nbrs {
                    if c < g.nx && d < g.ny {
                        let kk = g.index(c, d);
                        if mask[kk] && !seen[kk] {
                            seen[kk] = true;
                            queue.push_back((c, d));
                        }
                    }
                }
            }
            out.push((best, GridComponent { cells }));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out.into_iter().map(|(_, c)| c).collect())
}

/// How the initial radius is read off a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusRule {
    /// Minimum distance from the centroid to the component boundary.
    #[default]
    Min,
    /// Average of the minimum and maximum distances.
    Average,
}

/// Centroid and initial radius of one component.
pub fn fit_circle(component: &GridComponent, grid: &Grid, rule: RadiusRule) -> ([f64; 2], f64) {
    let n = component.cells.len() as f64;
    let mut c = [0.0, 0.0];
    for &(i, j) in &component.cells {
        let p = grid.point(i, j);
        c[0] += p[0] / n;
        c[1] += p[1] / n;
    }
    let set: std::collections::HashSet<(usize, usize)> = component.cells.iter().copied().collect();
    let inside = |i: isize, j: isize| i >= 0 && j >= 0 && set.contains(&(i as usize, j as usize));
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for &(i, j) in &component.cells {
        let (a, b) = (i as isize, j as isize);
        if inside(a - 1, b) && inside(a + 1, b) && inside(a, b - 1) && inside(a, b + 1) {
            continue;
        }
        let p = grid.point(i, j);
        let d = (p[0] - c[0]).hypot(p[1] - c[1]);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let r = match rule {
        RadiusRule::Min => lo,
        RadiusRule::Average => 0.5 * (lo + hi),
    };
    // a single-cell component has its only cell at the centroid
    (c, r.max(0.5 * grid.h))
}

/// Options shared by the prior construction steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorOptions {
    pub modes: usize,
    pub decay: f64,
    pub radius_rule: RadiusRule,
}

impl Default for PriorOptions {
    fn default() -> Self {
        Self { modes: 5, decay: 3.0, radius_rule: RadiusRule::Min }
    }
}

/// Result of fitting circles to components.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMeanFit {
    pub nu0: ShapeParams,
    /// `J_c` of the fitted circles.
    pub cost: f64,
    /// `J_c` without any obstacle.
    pub empty_cost: f64,
    pub halvings: usize,
}

/// Circles fitted to each component, all radii halved until the misfit is
/// no larger than the misfit of the empty domain.
pub fn fit_prior_mean(
    components: &[GridComponent],
    grid: &Grid,
    data: &DataVector,
    model: &ForwardModel,
    options: &PriorOptions,
) -> Result<PriorMeanFit> {
    if components.is_empty() {
        return Err(Error::NoComponents);
    }
    let circles: Vec<([f64; 2], f64)> = components.iter().map(|c| fit_circle(c, grid, options.radius_rule)).collect();
    fit_prior_mean_from_circles(&circles, grid.h, data, model, options)
}

pub(crate) fn fit_prior_mean_from_circles(
    circles: &[([f64; 2], f64)],
    min_radius: f64,
    data: &DataVector,
    model: &ForwardModel,
    options: &PriorOptions,
) -> Result<PriorMeanFit> {
    let empty_cost = half_squared_misfit(data, &model.predict_empty());
    let mut scale = 1.0;
    let mut halvings = 0;
    loop {
        let nu0 = ShapeParams::new(
            circles.iter().map(|&(c, r)| ComponentParams::circle(c, r * scale, options.modes)).collect(),
        );
        if let Some(idx) = circles.iter().position(|&(_, r)| r * scale < min_radius) {
            return Err(Error::DegenerateComponent { index: idx });
        }
        let cost = if nu0.is_admissible(ADMISSIBILITY_GRID) {
            match model.predict(&nu0) {
                Ok(pred) => Some(half_squared_misfit(data, &pred)),
                Err(Error::IllConditioned { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        if let Some(cost) = cost {
            if cost <= empty_cost {
                return Ok(PriorMeanFit { nu0, cost, empty_cost, halvings });
            }
        }
        scale *= 0.5;
        halvings += 1;
    }
}

/// The fifty uniformly spaced threshold constants tried by [`scan_c0`], both ends included.
pub fn c0_candidates() -> Vec<f64> {
    (0..50).map(|k| 0.01 + (0.3 - 0.01) * k as f64 / 49.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct C0Choice {
    pub c0: f64,
    pub components: Vec<GridComponent>,
    /// `None` when no candidate produced the requested count.
    pub fit: Option<PriorMeanFit>,
}

/// Among thresholds producing exactly `l_target` components, the one whose
/// fitted circles give the smallest misfit. Otherwise the smallest threshold
/// whose component count is closest to `l_target`.
pub fn scan_c0(
    field: &TopoField,
    data: &DataVector,
    model: &ForwardModel,
    l_target: usize,
    options: &PriorOptions,
) -> Result<C0Choice> {
    if l_target == 0 {
        return Err(Error::InvalidInput("target component count must be at least 1".into()));
    }
    let mut best: Option<C0Choice> = None;
    let mut closest: Option<(usize, f64, Vec<GridComponent>)> = None;
    for c0 in c0_candidates() {
        let comps = threshold_components(field, c0)?;
        if comps.is_empty() {
            continue;
        }
        let gap = comps.len().abs_diff(l_target);
        if closest.as_ref().is_none_or(|(g, _, _)| gap < *g) {
            closest = Some((gap, c0, comps.clone()));
        }
        if comps.len() != l_target {
            continue;
        }
        let fit = match fit_prior_mean(&comps, &field.grid, data, model, options) {
            Ok(f) => f,
            Err(Error::DegenerateComponent { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|b| fit.cost < b.fit.as_ref().map_or(f64::INFINITY, |f| f.cost)) {
            best = Some(C0Choice { c0, components: comps, fit: Some(fit) });
        }
    }
    if let Some(b) = best {
        return Ok(b);
    }
    let (_, c0, components) = closest.ok_or(Error::NoComponents)?;
    Ok(C0Choice { c0, components, fit: None })
}

/// Prior variances in pack order: per component `0.1, 0.2, 0.1` for
/// `c_x, c_y, a_0`, then `0.1 / (1 + m^2)^s` for the `a_m` and again for the `b_m`.
pub fn build_prior_covariance(components: usize, modes: usize, decay: f64, kappa_variance: Option<f64>) -> Vec<f64> {
    let mode_var: Vec<f64> = (1..=modes).map(|m| 0.1 / (1.0 + (m * m) as f64).powf(decay)).collect();
    let mut out = Vec::new();
    for _ in 0..components {
        out.extend_from_slice(&[0.1, 0.2, 0.1]);
        out.extend_from_slice(&mode_var);
        out.extend_from_slice(&mode_var);
    }
    if let Some(v) = kappa_variance {
        out.push(v);
    }
    out
}

/// Gaussian prior `N(nu0, diag(variances))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub nu0: ShapeParams,
    pub variances: Vec<f64>,
    pub decay: f64,
    pub c0: f64,
}

impl PriorSpec {
    pub fn new(nu0: ShapeParams, decay: f64, c0: f64) -> Self {
        let variances = build_prior_covariance(nu0.components.len(), nu0.modes(), decay, None);
        Self { nu0, variances, decay, c0 }
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    /// Appends `kappa_i` with the given prior mean and variance.
    pub fn extend_with_kappa(&self, kappa0: f64, kappa_variance: f64) -> Result<Self> {
        if !(kappa_variance > 0.0) {
            return Err(Error::InvalidInput("kappa variance must be positive".into()));
        }
        if self.nu0.kappa_i.is_some() {
            return Err(Error::InvalidInput("prior already carries kappa_i".into()));
        }
        let mut out = self.clone();
        out.nu0.kappa_i = Some(kappa0);
        out.variances.push(kappa_variance);
        Ok(out)
    }

    /// `(nu - nu0)^T Gamma^-1 (nu - nu0)` for a packed vector.
    pub fn mahalanobis2(&self, nu: &[f64]) -> f64 {
        let mean = self.nu0.pack();
        nu.iter().zip(&mean).zip(&self.variances).map(|((x, m), v)| (x - m) * (x - m) / v).sum()
    }
}

/// Full topological prior: scan thresholds for `l_target` components, then
/// fit circles. When no threshold yields `l_target` components, surplus
/// components are dropped (keeping the deepest wells) or the deepest one is
/// replicated with centers shifted by `jitter` along alternating axes. If
/// halving then underflows, the radii stay at the grid spacing.
pub fn topological_prior(
    field: &TopoField,
    data: &DataVector,
    model: &ForwardModel,
    l_target: usize,
    options: &PriorOptions,
    jitter: f64,
) -> Result<PriorSpec> {
    let choice = scan_c0(field, data, model, l_target, options)?;
    if let Some(fit) = choice.fit {
        return Ok(PriorSpec::new(fit.nu0, options.decay, choice.c0));
    }
    let mut circles: Vec<([f64; 2], f64)> =
        choice.components.iter().map(|c| fit_circle(c, &field.grid, options.radius_rule)).collect();
    circles.truncate(l_target);
    let (c, r) = circles[0];
    let shifts = [[jitter, 0.0], [-jitter, 0.0], [0.0, jitter], [0.0, -jitter]];
    let mut k = 0;
    while circles.len() < l_target {
        let s = shifts[k % shifts.len()];
        let scale = 1.0 + (k / shifts.len()) as f64;
        circles.push(([c[0] + scale * s[0], c[1] + scale * s[1]], r));
        k += 1;
    }
    match fit_prior_mean_from_circles(&circles, field.grid.h, data, model, options) {
        Ok(fit) => Ok(PriorSpec::new(fit.nu0, options.decay, choice.c0)),
        Err(Error::DegenerateComponent { index }) => {
            // wrong-count priors keep their centers at the halving floor
            log::warn!("prior for {l_target} components: component {index} degenerate, radii set to the grid spacing");
            let nu0 = floor_circles(&circles, field.grid.h, options.modes);
            if !nu0.is_admissible(ADMISSIBILITY_GRID) {
                return Err(Error::DegenerateComponent { index });
            }
            Ok(PriorSpec::new(nu0, options.decay, choice.c0))
        }
        Err(e) => Err(e),
    }
}

fn floor_circles(circles: &[([f64; 2], f64)], h: f64, modes: usize) -> ShapeParams {
    ShapeParams::new(circles.iter().map(|&(c, r)| ComponentParams::circle(c, r.min(h), modes)).collect())
}
