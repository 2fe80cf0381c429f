//! Helmholtz transmission problem for penetrable obstacles.
//!
//! The unknowns are the exterior traces `phi = u+` and `psi = du+/dn` of the
//! total field on every boundary node. The interior traces follow from the
//! transmission conditions as `phi` and `psi / beta`. Adding the exterior and
//! interior Green representations gives the second-kind system
//!
//! ```text
//! [ 2I - K_e + K_i      S_e - S_i / beta             ] [phi]   [2 u_inc    ]
//! [ -(T_e - T_i)        (1 + 1/beta) I + K'_e - K'_i / beta ] [psi] = [2 du_inc/dn]
//! ```
//!
//! where `S, K, K', T` are the single, double, adjoint double and
//! hypersingular layer operators (with the factor 2 convention). Exterior
//! operators couple all components; interior ones are block diagonal.

use crate::boundary::{fourier_diff_matrix, log_weights, Boundary};
use crate::error::{Error, Result};
use crate::special::{bessel01, hankel0, hankel1, EULER_GAMMA};
use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest tolerated ratio between the extreme pivots of the LU factorization.
pub const MAX_PIVOT_RATIO: f64 = 1e13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub kappa_e: f64,
    pub kappa_i: f64,
    pub beta: f64,
    /// Unit propagation direction of the incident plane wave.
    pub incident: [f64; 2],
    pub detectors: Vec<[f64; 2]>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa_e", self.kappa_e), ("kappa_i", self.kappa_i), ("beta", self.beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and positive, got {v}")));
            }
        }
        let norm = self.incident[0].hypot(self.incident[1]);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("incident direction must be a unit vector, |d| = {norm}")));
        }
        Ok(())
    }

    pub fn with_kappa_i(&self, kappa_i: f64) -> Self {
        Self { kappa_i, ..self.clone() }
    }

    pub fn incident_field(&self, x: [f64; 2]) -> Complex64 {
        let phase = self.kappa_e * (self.incident[0] * x[0] + self.incident[1] * x[1]);
        Complex64::from_polar(1.0, phase)
    }

    /// `grad u_inc` at `x`.
    pub fn incident_gradient(&self, x: [f64; 2]) -> [Complex64; 2] {
        let u = self.incident_field(x) * I * self.kappa_e;
        [u * self.incident[0], u * self.incident[1]]
    }

    pub fn incident_at_detectors(&self) -> Vec<Complex64> {
        self.detectors.iter().map(|&x| self.incident_field(x)).collect()
    }
}

/// The four layer operators for one wavenumber on one boundary.
#[derive(Debug, Clone)]
pub struct LayerOperators {
    pub s: DMatrix<Complex64>,
    pub k: DMatrix<Complex64>,
    pub kp: DMatrix<Complex64>,
    pub t: DMatrix<Complex64>,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    // (a2, -a1) . b, the unnormalized normal of tangent `a` dotted with `b`
    a[1] * b[0] - a[0] * b[1]
}

impl LayerOperators {
    /// Nyström matrices with logarithmic splitting on each component's own
    /// block. With `couple` false the cross-component blocks are zero.
    pub fn assemble(boundary: &Boundary, kappa: f64, couple: bool) -> Self {
        let n = boundary.len();
        let mut s = DMatrix::<Complex64>::zeros(n, n);
        let mut k = DMatrix::<Complex64>::zeros(n, n);
        let mut kp = DMatrix::<Complex64>::zeros(n, n);
        let offsets = boundary.offsets();
        for (p, part_p) in boundary.parts.iter().enumerate() {
            for (q, part_q) in boundary.parts.iter().enumerate() {
                let (op, oq) = (offsets[p], offsets[q]);
                let nq = part_q.len();
                let h = TAU / nq as f64;
                if p == q {
                    let weights = log_weights(nq);
                    for i in 0..nq {
                        let (xi, di, si) = (part_q.points[i], part_q.d1[i], part_q.speed[i]);
                        for j in 0..nq {
                            let (gi, gj) = (op + i, oq + j);
                            let (xj, dj, sj) = (part_q.points[j], part_q.d1[j], part_q.speed[j]);
                            let rw = weights[(i + nq - j) % nq];
                            if i == j {
                                let m1 = -sj / TAU;
                                let m2 = (I * 0.5 - EULER_GAMMA / PI - (kappa * sj / 2.0).ln() / PI) * sj;
                                s[(gi, gj)] = m2 * h + rw * m1;
                                let dd = part_q.d2[i];
                                let diag = (di[1] * dd[0] - di[0] * dd[1]) / (TAU * si * si);
                                k[(gi, gj)] = Complex64::from(diag * h);
                                kp[(gi, gj)] = Complex64::from(diag * h);
                                continue;
                            }
                            let d = [xi[0] - xj[0], xi[1] - xj[1]];
                            let r = d[0].hypot(d[1]);
                            let b = bessel01(kappa * r);
                            let lg = (2.0 * (PI * (i as f64 - j as f64) / nq as f64).sin()).powi(2).ln();
                            let m = I * 0.5 * b.h0() * sj;
                            let m1 = -b.j0 * sj / TAU;
                            s[(gi, gj)] = rw * m1 + h * (m - m1 * lg);
                            let c = cross(dj, d);
                            let l = I * (kappa / 2.0) * c * b.h1() / r;
                            let l1 = -kappa * c * b.j1 / (TAU * r);
                            k[(gi, gj)] = rw * l1 + h * (l - l1 * lg);
                            let cp = -cross(di, d) * sj / si;
                            let lp = I * (kappa / 2.0) * cp * b.h1() / r;
                            let lp1 = -kappa * cp * b.j1 / (TAU * r);
                            kp[(gi, gj)] = rw * lp1 + h * (lp - lp1 * lg);
                        }
                    }
                } else if couple {
                    for i in 0..part_p.len() {
                        let (xi, di, si) = (part_p.points[i], part_p.d1[i], part_p.speed[i]);
                        for j in 0..nq {
                            let (xj, dj, sj) = (part_q.points[j], part_q.d1[j], part_q.speed[j]);
                            let d = [xi[0] - xj[0], xi[1] - xj[1]];
                            let r = d[0].hypot(d[1]);
                            let b = bessel01(kappa * r);
                            let (gi, gj) = (op + i, oq + j);
                            s[(gi, gj)] = h * I * 0.5 * b.h0() * sj;
                            k[(gi, gj)] = h * I * (kappa / 2.0) * cross(dj, d) * b.h1() / r;
                            kp[(gi, gj)] = h * I * (kappa / 2.0) * (-cross(di, d) * sj / si) * b.h1() / r;
                        }
                    }
                }
            }
        }
        let t = maue(boundary, kappa, &s);
        Self { s, k, kp, t }
    }
}

/// Block-diagonal arc-length derivative `W D` with `W = diag(1 / |x'|)`.
fn arc_derivative_blocks(boundary: &Boundary) -> Vec<DMatrix<f64>> {
    boundary
        .parts
        .iter()
        .map(|p| {
            let mut d = fourier_diff_matrix(p.len());
            for (i, sp) in p.speed.iter().enumerate() {
                d.row_mut(i).scale_mut(1.0 / sp);
            }
            d
        })
        .collect()
}

/// Arc-length derivative of a nodal function, part by part.
pub fn arc_derivative(boundary: &Boundary, f: &DVector<Complex64>) -> DVector<Complex64> {
    let mut out = DVector::zeros(f.len());
    for ((p, o), d) in boundary.parts.iter().zip(boundary.offsets()).zip(arc_derivative_blocks(boundary)) {
        let n = p.len();
        let seg = f.rows(o, n);
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += seg[j] * d[(i, j)];
            }
            out[o + i] = acc;
        }
    }
    out
}

/// Hypersingular operator from the single layer by Maue's identity
/// `T = d/ds S d/ds + kappa^2 nu . S nu`.
fn maue(boundary: &Boundary, kappa: f64, s: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let blocks = arc_derivative_blocks(boundary);
    let offsets = boundary.offsets();
    let n = s.nrows();
    // S (W D): right multiplication block by block
    let mut sd = DMatrix::<Complex64>::zeros(n, n);
    for (q, d) in blocks.iter().enumerate() {
        let (o, m) = (offsets[q], d.nrows());
        let dc = d.map(Complex64::from);
        let prod = s.columns(o, m) * &dc;
        sd.columns_mut(o, m).copy_from(&prod);
    }
    let mut t = DMatrix::<Complex64>::zeros(n, n);
    for (p, d) in blocks.iter().enumerate() {
        let (o, m) = (offsets[p], d.nrows());
        let dc = d.map(Complex64::from);
        let prod = &dc * sd.rows(o, m);
        t.rows_mut(o, m).copy_from(&prod);
    }
    let normals = boundary.normals();
    let k2 = kappa * kappa;
    for i in 0..n {
        for j in 0..n {
            let dot = normals[i][0] * normals[j][0] + normals[i][1] * normals[j][1];
            t[(i, j)] += s[(i, j)] * (k2 * dot);
        }
    }
    t
}

/// Assembled and factorized transmission system for one geometry and scene.
pub struct TransmissionSystem {
    pub boundary: Boundary,
    pub kappa_e: f64,
    pub kappa_i: f64,
    pub beta: f64,
    /// Interior operators, needed for jump right-hand sides.
    pub interior: LayerOperators,
    lu: LU<Complex64, Dyn, Dyn>,
    pub pivot_ratio: f64,
}

impl std::fmt::Debug for TransmissionSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransmissionSystem")
            .field("nodes", &self.boundary.len())
            .field("kappa_e", &self.kappa_e)
            .field("kappa_i", &self.kappa_i)
            .field("beta", &self.beta)
            .field("pivot_ratio", &self.pivot_ratio)
            .finish()
    }
}

impl TransmissionSystem {
    pub fn new(boundary: Boundary, kappa_e: f64, kappa_i: f64, beta: f64) -> Result<Self> {
        let n = boundary.len();
        let ext = LayerOperators::assemble(&boundary, kappa_e, true);
        let int = LayerOperators::assemble(&boundary, kappa_i, false);
        let mut a = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
        let ib = 1.0 / beta;
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = int.k[(i, j)] - ext.k[(i, j)];
                a[(i, n + j)] = ext.s[(i, j)] - int.s[(i, j)] * ib;
                a[(n + i, j)] = int.t[(i, j)] - ext.t[(i, j)];
                a[(n + i, n + j)] = ext.kp[(i, j)] - int.kp[(i, j)] * ib;
            }
            a[(i, i)] += 2.0;
            a[(n + i, n + i)] += 1.0 + ib;
        }
        let lu = a.lu();
        let diag = lu.u().diagonal().map(|z| z.norm());
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let pivot_ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !pivot_ratio.is_finite() || pivot_ratio > MAX_PIVOT_RATIO {
            return Err(Error::IllConditioned { condition: pivot_ratio });
        }
        Ok(Self { boundary, kappa_e, kappa_i, beta, interior: int, lu, pivot_ratio })
    }

    pub fn nodes(&self) -> usize {
        self.boundary.len()
    }

    /// Solves with right-hand side `[top; bottom]`, returning `(phi, psi)`.
    pub fn solve_rhs(&self, top: &DVector<Complex64>, bottom: &DVector<Complex64>) -> (DVector<Complex64>, DVector<Complex64>) {
        let n = self.nodes();
        let mut rhs = DVector::zeros(2 * n);
        rhs.rows_mut(0, n).copy_from(top);
        rhs.rows_mut(n, n).copy_from(bottom);
        let x = self.lu.solve(&rhs).expect("factorization checked at construction");
        (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }

    /// Radiating field `v` with `v- - v+ = f` and `beta dv-/dn - dv+/dn = g`
    /// on the boundary. Returns the exterior traces `(v+, dv+/dn)`.
    pub fn solve_jump(&self, f: &DVector<Complex64>, g: &DVector<Complex64>) -> (DVector<Complex64>, DVector<Complex64>) {
        let ib = 1.0 / self.beta;
        let int = &self.interior;
        let top = -(f + &int.k * f) + &int.s * g * Complex64::from(ib);
        let bottom = (&int.kp * g - g) * Complex64::from(ib) - &int.t * f;
        self.solve_rhs(&top, &bottom)
    }
}

/// Total field solution: exterior traces of `u` for one incident plane wave.
#[derive(Debug)]
pub struct ForwardSolution {
    pub system: TransmissionSystem,
    pub incident: [f64; 2],
    /// `u` on the boundary nodes (continuous across the boundary).
    pub phi: DVector<Complex64>,
    /// Exterior normal derivative; the interior one is `psi / beta`.
    pub psi: DVector<Complex64>,
}

impl ForwardSolution {
    pub fn scene_like(&self, detectors: Vec<[f64; 2]>) -> Scene {
        Scene {
            kappa_e: self.system.kappa_e,
            kappa_i: self.system.kappa_i,
            beta: self.system.beta,
            incident: self.incident,
            detectors,
        }
    }

    /// Total field at exterior points.
    pub fn total_field(&self, points: &[[f64; 2]]) -> Result<Vec<Complex64>> {
        let scene = self.scene_like(Vec::new());
        let sc = exterior_field(&self.system.boundary, self.system.kappa_e, &self.phi, &self.psi, points)?;
        Ok(points.iter().zip(sc).map(|(&x, v)| v + scene.incident_field(x)).collect())
    }
}

/// Matrix of the boundary integral representation
/// `v(x) = int dPhi/dn_y phi - Phi psi ds_y` acting on `[phi; psi]`, one row
/// per exterior point, with `Phi` the fundamental solution for `kappa`.
pub fn representation_matrix(boundary: &Boundary, kappa: f64, points: &[[f64; 2]]) -> Result<DMatrix<Complex64>> {
    let spacing = boundary.max_spacing();
    let n = boundary.len();
    let mut out = DMatrix::zeros(points.len(), 2 * n);
    for (row, &x) in points.iter().enumerate() {
        if boundary.contains(x) || boundary.distance_to_nodes(x) < spacing {
            return Err(Error::PointTooClose { x: x[0], y: x[1] });
        }
        let mut g = 0;
        for part in &boundary.parts {
            let h = TAU / part.len() as f64;
            for j in 0..part.len() {
                let y = part.points[j];
                let d = [x[0] - y[0], x[1] - y[1]];
                let r = d[0].hypot(d[1]);
                let b = bessel01(kappa * r);
                let nu = part.normal[j];
                let w = h * part.speed[j];
                out[(row, g)] = I * (kappa / 4.0) * b.h1() * (d[0] * nu[0] + d[1] * nu[1]) / r * w;
                out[(row, n + g)] = -I * 0.25 * b.h0() * w;
                g += 1;
            }
        }
    }
    Ok(out)
}

/// Radiating field with exterior traces `(phi, psi)` evaluated at exterior points.
pub fn exterior_field(
    boundary: &Boundary,
    kappa: f64,
    phi: &DVector<Complex64>,
    psi: &DVector<Complex64>,
    points: &[[f64; 2]],
) -> Result<Vec<Complex64>> {
    let r = representation_matrix(boundary, kappa, points)?;
    let n = boundary.len();
    let v = r.columns(0, n) * phi + r.columns(n, n) * psi;
    Ok(v.iter().copied().collect())
}

/// Solves the transmission problem for a plane wave hitting the obstacles
/// described by `boundary`.
pub fn solve_transmission(boundary: Boundary, scene: &Scene) -> Result<ForwardSolution> {
    scene.validate()?;
    if boundary.is_empty() {
        return Err(Error::InvalidInput("no obstacle boundary".into()));
    }
    let nodes = boundary.points();
    let normals = boundary.normals();
    let mut top = DVector::zeros(nodes.len());
    let mut bottom = DVector::zeros(nodes.len());
    for (i, (x, nu)) in nodes.iter().zip(&normals).enumerate() {
        let g = scene.incident_gradient(*x);
        top[i] = 2.0 * scene.incident_field(*x);
        bottom[i] = 2.0 * (g[0] * nu[0] + g[1] * nu[1]);
    }
    let system = TransmissionSystem::new(boundary, scene.kappa_e, scene.kappa_i, scene.beta)?;
    let (phi, psi) = system.solve_rhs(&top, &bottom);
    Ok(ForwardSolution { system, incident: scene.incident, phi, psi })
}

/// Field at the scene detectors, or the bare incident field without obstacles.
pub fn detector_field(boundary: Option<Boundary>, scene: &Scene) -> Result<Vec<Complex64>> {
    match boundary {
        None => {
            scene.validate()?;
            Ok(scene.incident_at_detectors())
        }
        Some(b) => solve_transmission(b, scene)?.total_field(&scene.detectors),
    }
}

/// `(i/4) H_0(kappa |x - y|)`, the outgoing fundamental solution.
pub fn fundamental(kappa: f64, x: [f64; 2], y: [f64; 2]) -> Complex64 {
    I * 0.25 * hankel0(kappa * (x[0] - y[0]).hypot(x[1] - y[1]))
}

/// Gradient of [`fundamental`] with respect to `x`.
pub fn fundamental_gradient(kappa: f64, x: [f64; 2], y: [f64; 2]) -> [Complex64; 2] {
    let d = [x[0] - y[0], x[1] - y[1]];
    let r = d[0].hypot(d[1]);
    let c = -I * 0.25 * kappa * hankel1(kappa * r) / r;
    [c * d[0], c * d[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{Curve, Ellipse};
    use crate::geometry::ComponentParams;

    pub(crate) fn line_detectors(step: usize) -> Vec<[f64; 2]> {
        (0..=200).step_by(step).map(|j| [-5.0 + 0.05 * j as f64, 5.0]).collect()
    }

    fn scene(kappa_e: f64, kappa_i: f64, beta: f64) -> Scene {
        Scene { kappa_e, kappa_i, beta, incident: [0.0, 1.0], detectors: line_detectors(2) }
    }

    #[test]
    fn zero_contrast_gives_incident_field() {
        let e = Ellipse { center: [0.1, -0.1], semi_x: 0.3, semi_y: 0.15, rotation: 0.4 };
        let c = ComponentParams::circle([1.0, 0.5], 0.2, 3);
        let b = Boundary::sample(&[&e as &dyn Curve, &c], 96);
        let sc = scene(12.56, 12.56, 1.0);
        let sol = solve_transmission(b, &sc).unwrap();
        let u = sol.total_field(&sc.detectors).unwrap();
        for (x, v) in sc.detectors.iter().zip(&u) {
            assert!((v - sc.incident_field(*x)).norm() < 1e-10);
        }
    }

    #[test]
    fn no_obstacle_is_incident_exactly() {
        let sc = scene(12.56, 15.12, 1.0);
        let u = detector_field(None, &sc).unwrap();
        assert_eq!(u, sc.incident_at_detectors());
    }

    #[test]
    fn interior_points_rejected() {
        let b = Boundary::from_components(&[ComponentParams::circle([0.0, 0.0], 0.2, 2)], 32);
        let sol = solve_transmission(b, &scene(12.56, 15.12, 1.0)).unwrap();
        assert!(matches!(sol.total_field(&[[0.0, 0.0]]), Err(Error::PointTooClose { .. })));
        assert!(matches!(sol.total_field(&[[0.2001, 0.0]]), Err(Error::PointTooClose { .. })));
    }

    #[test]
    fn linear_in_incident_amplitude() {
        let b = Boundary::from_components(&[ComponentParams::circle([0.0, 0.0], 0.2, 2)], 64);
        let sc = scene(12.56, 15.12, 1.3);
        let system = TransmissionSystem::new(b, sc.kappa_e, sc.kappa_i, sc.beta).unwrap();
        let pts = system.boundary.points();
        let nrm = system.boundary.normals();
        let top: DVector<Complex64> = DVector::from_iterator(pts.len(), pts.iter().map(|&x| 2.0 * sc.incident_field(x)));
        let bottom = DVector::from_iterator(
            pts.len(),
            pts.iter().zip(&nrm).map(|(&x, nu)| {
                let g = sc.incident_gradient(x);
                2.0 * (g[0] * nu[0] + g[1] * nu[1])
            }),
        );
        let alpha = Complex64::new(0.3, -1.7);
        let (p1, s1) = system.solve_rhs(&top, &bottom);
        let (p2, s2) = system.solve_rhs(&(&top * alpha), &(&bottom * alpha));
        assert!((p1 * alpha - &p2).norm() < 1e-12 * p2.norm());
        assert!((s1 * alpha - &s2).norm() < 1e-12 * s2.norm());
    }

    #[test]
    fn scattered_route_agrees_with_total_field_route() {
        // The scattered field is the radiating solution of a jump problem with
        // f = u_inc, g = du_inc/dn; solving that independently must reproduce
        // the total-field formulation.
        let e = Ellipse { center: [0.0, 0.0], semi_x: 0.2, semi_y: 0.1, rotation: 0.0 };
        let b = Boundary::sample(&[&e as &dyn Curve], 128);
        let sc = scene(20.56, 25.12, 1.7);
        let sol = solve_transmission(b, &sc).unwrap();
        let u = sol.total_field(&sc.detectors).unwrap();
        let pts = sol.system.boundary.points();
        let nrm = sol.system.boundary.normals();
        let f = DVector::from_iterator(pts.len(), pts.iter().map(|&x| sc.incident_field(x)));
        // (u-, u_sc) jumps by u_inc, and beta du-/dn - du_sc/dn = du_inc/dn
        let g = DVector::from_iterator(
            pts.len(),
            pts.iter().zip(&nrm).map(|(&x, nu)| {
                let gr = sc.incident_gradient(x);
                gr[0] * nu[0] + gr[1] * nu[1]
            }),
        );
        let (vp, dvp) = sol.system.solve_jump(&f, &g);
        let usc = exterior_field(&sol.system.boundary, sc.kappa_e, &vp, &dvp, &sc.detectors).unwrap();
        let num: f64 = u.iter().zip(&usc).zip(&sc.detectors).map(|((a, b), x)| (a - b - sc.incident_field(*x)).norm_sqr()).sum();
        let den: f64 = usc.iter().map(|v| v.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-8, "rel {}", (num / den).sqrt());
    }

    #[test]
    fn field_decays_like_inverse_square_root() {
        let b = Boundary::from_components(&[ComponentParams::circle([0.0, 0.0], 0.1, 2)], 64);
        let sc = scene(12.56, 15.12, 1.0);
        let sol = solve_transmission(b, &sc).unwrap();
        let far = |r: f64| {
            let x = [r * 0.6, r * 0.8];
            (sol.total_field(&[x]).unwrap()[0] - sc.incident_field(x)).norm()
        };
        let (r1, r2) = (5.0, 20.0);
        let exponent = (far(r2) / far(r1)).ln() / (r2 / r1).ln();
        assert!((exponent + 0.5).abs() < 0.05, "decay exponent {exponent}");
    }

    #[test]
    fn fundamental_gradient_matches_finite_difference() {
        let (x, y) = ([0.3, 0.4], [-0.2, 0.1]);
        let g = fundamental_gradient(12.0, x, y);
        let h = 1e-6;
        let fx = (fundamental(12.0, [x[0] + h, x[1]], y) - fundamental(12.0, [x[0] - h, x[1]], y)) / (2.0 * h);
        let fy = (fundamental(12.0, [x[0], x[1] + h], y) - fundamental(12.0, [x[0], x[1] - h], y)) / (2.0 * h);
        assert!((g[0] - fx).norm() < 1e-6 && (g[1] - fy).norm() < 1e-6);
    }
}
