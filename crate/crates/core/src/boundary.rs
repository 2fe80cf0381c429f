//! Discretized closed curves for the Nyström solver.
//!
//! Curves are sampled at `t_j = j / n` for `t` in `[0, 1)`; derivatives are
//! stored with respect to `tau = 2 pi t` so the quadrature weights follow the
//! usual `2 pi`-periodic conventions.

use crate::geometry::ComponentParams;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// A closed, counter-clockwise, twice differentiable curve on `t` in `[0, 1)`.
pub trait Curve: Sync {
    /// Point, first and second derivative with respect to `t`.
    fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]);
}

impl Curve for ComponentParams {
    fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        self.point_derivatives(t)
    }
}

/// Exact ellipse `c + R(rot) (a cos 2 pi t, b sin 2 pi t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_x: f64,
    pub semi_y: f64,
    /// Counter-clockwise rotation in radians.
    #[serde(default)]
    pub rotation: f64,
}

impl Curve for Ellipse {
    fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let (s, c) = (TAU * t).sin_cos();
        let (rs, rc) = self.rotation.sin_cos();
        let rot = |v: [f64; 2]| [rc * v[0] - rs * v[1], rs * v[0] + rc * v[1]];
        let p = rot([self.semi_x * c, self.semi_y * s]);
        let d1 = rot([-TAU * self.semi_x * s, TAU * self.semi_y * c]);
        let d2 = rot([-TAU * TAU * self.semi_x * c, -TAU * TAU * self.semi_y * s]);
        ([self.center[0] + p[0], self.center[1] + p[1]], d1, d2)
    }
}

impl Ellipse {
    /// Polar radius of the ellipse about its own center in direction `theta`.
    pub fn polar_radius(&self, theta: f64) -> f64 {
        let th = theta - self.rotation;
        let (a, b) = (self.semi_x, self.semi_y);
        a * b / ((b * th.cos()).powi(2) + (a * th.sin()).powi(2)).sqrt()
    }
}

/// One sampled component.
#[derive(Debug, Clone)]
pub struct DiscreteCurve {
    pub points: Vec<[f64; 2]>,
    /// `dx/dtau`
    pub d1: Vec<[f64; 2]>,
    /// `d2x/dtau2`
    pub d2: Vec<[f64; 2]>,
    /// `|dx/dtau|`
    pub speed: Vec<f64>,
    /// Unit outward normal.
    pub normal: Vec<[f64; 2]>,
}

impl DiscreteCurve {
    pub fn sample(curve: &dyn Curve, n: usize) -> Self {
        let mut out = Self {
            points: Vec::with_capacity(n),
            d1: Vec::with_capacity(n),
            d2: Vec::with_capacity(n),
            speed: Vec::with_capacity(n),
            normal: Vec::with_capacity(n),
        };
        for j in 0..n {
            let (p, dt, ddt) = curve.eval(j as f64 / n as f64);
            let d1 = [dt[0] / TAU, dt[1] / TAU];
            let d2 = [ddt[0] / (TAU * TAU), ddt[1] / (TAU * TAU)];
            let sp = d1[0].hypot(d1[1]);
            out.points.push(p);
            out.d1.push(d1);
            out.d2.push(d2);
            out.speed.push(sp);
            out.normal.push([d1[1] / sp, -d1[0] / sp]);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid weights `(2 pi / n) |x'|` for integrals in arc length.
    pub fn arc_weights(&self) -> Vec<f64> {
        let h = TAU / self.len() as f64;
        self.speed.iter().map(|s| s * h).collect()
    }

    /// Largest distance between consecutive nodes.
    pub fn max_spacing(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|j| {
                let (a, b) = (self.points[j], self.points[(j + 1) % n]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }
}

/// All components of a scatterer, sampled with the same node count.
#[derive(Debug, Clone)]
pub struct Boundary {
    pub parts: Vec<DiscreteCurve>,
}

impl Boundary {
    pub fn sample(curves: &[&dyn Curve], nodes_per_part: usize) -> Self {
        assert!(nodes_per_part >= 8 && nodes_per_part % 2 == 0, "node count must be even and at least 8");
        Self { parts: curves.iter().map(|c| DiscreteCurve::sample(*c, nodes_per_part)).collect() }
    }

    pub fn from_components(comps: &[ComponentParams], nodes_per_part: usize) -> Self {
        let curves: Vec<&dyn Curve> = comps.iter().map(|c| c as &dyn Curve).collect();
        Self::sample(&curves, nodes_per_part)
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.parts.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Start index of each part in the global node numbering.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.parts.len());
        let mut acc = 0;
        for p in &self.parts {
            out.push(acc);
            acc += p.len();
        }
        out
    }

    /// Speed `|x'|` at every global node.
    pub fn speeds(&self) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.speed.iter().copied()).collect()
    }

    pub fn normals(&self) -> Vec<[f64; 2]> {
        self.parts.iter().flat_map(|p| p.normal.iter().copied()).collect()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.parts.iter().flat_map(|p| p.points.iter().copied()).collect()
    }

    /// True if `x` lies inside one of the sampled curves.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        self.parts.iter().any(|p| crate::geometry::point_in_polygon(x, &p.points))
    }

    /// Distance from `x` to the nearest node.
    pub fn distance_to_nodes(&self, x: [f64; 2]) -> f64 {
        self.parts
            .iter()
            .flat_map(|p| p.points.iter())
            .map(|q| (q[0] - x[0]).hypot(q[1] - x[1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.parts.iter().map(|p| p.max_spacing()).fold(0.0, f64::max)
    }
}

/// Spectral differentiation matrix in `tau` for `n` (even) equispaced nodes.
pub fn fourier_diff_matrix(n: usize) -> DMatrix<f64> {
    assert!(n % 2 == 0);
    let h = TAU / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let k = i as isize - j as isize;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * k as f64 * h).tan()
        }
    })
}

/// Kress weights `R_k`, `k = 0..2n-1`, for `int_0^{2pi} ln(4 sin^2((t - tau)/2)) f(tau) dtau`
/// on `2n` nodes, indexed by the node offset `(i - j) mod 2n`.
pub fn log_weights(nodes: usize) -> Vec<f64> {
    assert!(nodes % 2 == 0);
    let n = nodes / 2;
    let nf = n as f64;
    (0..nodes)
        .map(|k| {
            let d = PI * k as f64 / nf;
            let mut s = 0.0;
            for m in 1..n {
                s += (m as f64 * d).cos() / m as f64;
            }
            -2.0 * PI / nf * s - PI / (nf * nf) * (nf * d).cos()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_derivative_is_exact_for_trig_polynomials() {
        let n = 32;
        let d = fourier_diff_matrix(n);
        let tau: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
        let f = nalgebra::DVector::from_iterator(n, tau.iter().map(|t| (3.0 * t).sin() + (5.0 * t).cos()));
        let df = &d * f;
        for (j, t) in tau.iter().enumerate() {
            let exact = 3.0 * (3.0 * t).cos() - 5.0 * (5.0 * t).sin();
            assert!((df[j] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn log_weights_integrate_known_moments() {
        // int ln(4 sin^2(s/2)) cos(m s) ds = -2 pi / m for m >= 1, and 0 for m = 0
        let nodes = 64;
        let w = log_weights(nodes);
        for m in 0..10 {
            let approx: f64 = (0..nodes).map(|k| w[k] * (m as f64 * TAU * k as f64 / nodes as f64).cos()).sum();
            let exact = if m == 0 { 0.0 } else { -TAU / m as f64 };
            assert!((approx - exact).abs() < 1e-12, "m = {m}: {approx}");
        }
    }

    #[test]
    fn ellipse_sampling_has_outward_normals_and_exact_perimeter_quadrature() {
        let e = Ellipse { center: [0.5, -0.2], semi_x: 0.3, semi_y: 0.3, rotation: 0.7 };
        let c = DiscreteCurve::sample(&e, 64);
        for (p, nrm) in c.points.iter().zip(&c.normal) {
            let r = [p[0] - 0.5, p[1] + 0.2];
            assert!((r[0] * nrm[0] + r[1] * nrm[1] - 0.3).abs() < 1e-12);
        }
        let perimeter: f64 = c.arc_weights().iter().sum();
        assert!((perimeter - TAU * 0.3).abs() < 1e-12);
    }

    #[test]
    fn ellipse_polar_radius_matches_points() {
        let e = Ellipse { center: [0.0, 0.0], semi_x: 0.2, semi_y: 0.1, rotation: 0.3 };
        for k in 0..16 {
            let (p, _, _) = e.eval(k as f64 / 16.0);
            let th = p[1].atan2(p[0]);
            assert!((p[0].hypot(p[1]) - e.polar_radius(th)).abs() < 1e-14);
        }
    }

    #[test]
    fn component_curve_derivatives_match_finite_differences() {
        let mut c = ComponentParams::circle([0.1, 0.2], 0.3, 3);
        c.a[2] = 0.02;
        c.b[0] = -0.03;
        let h = 1e-6;
        for &t in &[0.0, 0.13, 0.71] {
            let (_, d1, d2) = c.eval(t);
            let (pp, dp, _) = c.eval(t + h);
            let (pm, dm, _) = c.eval(t - h);
            for k in 0..2 {
                assert!(((pp[k] - pm[k]) / (2.0 * h) - d1[k]).abs() < 1e-6);
                assert!(((dp[k] - dm[k]) / (2.0 * h) - d2[k]).abs() < 1e-4);
            }
        }
    }
}
