//! Summaries of sample sets: inside probabilities, contour marginals and histograms.

use crate::error::{Error, Result};
use crate::geometry::{shape_stats, ComponentParams, ShapeParams, ShapeStats};
use crate::topo::Grid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Quadrature nodes for per-sample statistics.
pub const STATS_NODES: usize = 256;

/// Polygon resolution for ray casting in the contour marginals.
pub const RAY_POLYGON: usize = 512;

pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Upper bound of the radius, `a_0 + 2 sum (|a_m| + |b_m|)`.
fn radius_bound(c: &ComponentParams) -> f64 {
    c.a[0] + 2.0 * c.a[1..].iter().chain(&c.b).map(|v| v.abs()).sum::<f64>()
}

/// Whether `p` lies strictly inside a star-shaped component.
pub fn star_contains(c: &ComponentParams, p: [f64; 2]) -> bool {
    let (dx, dy) = (p[0] - c.center[0], p[1] - c.center[1]);
    let rho = dx.hypot(dy);
    if rho == 0.0 {
        return c.a[0] > 0.0;
    }
    let t = dy.atan2(dx).rem_euclid(TAU) / TAU;
    rho < c.radius(t)
}

/// Fraction of shapes containing each grid point. Components of an
/// admissible shape are disjoint, so their indicators add up to at most one.
pub fn inside_probability_grid(shapes: &[ShapeParams], grid: &Grid) -> Result<Vec<f64>> {
    if shapes.is_empty() {
        return Err(Error::InvalidInput("no admissible samples".into()));
    }
    let counts = shapes
        .par_chunks(64)
        .map(|chunk| {
            let mut counts = vec![0u32; grid.len()];
            for s in chunk {
                for c in &s.components {
                    let rb = radius_bound(c);
                    let lo_i = ((c.center[0] - rb - grid.x0) / grid.h).floor().max(0.0) as usize;
                    let lo_j = ((c.center[1] - rb - grid.y0) / grid.h).floor().max(0.0) as usize;
                    let hi_i = (((c.center[0] + rb - grid.x0) / grid.h).ceil() as isize).min(grid.nx as isize - 1);
                    let hi_j = (((c.center[1] + rb - grid.y0) / grid.h).ceil() as isize).min(grid.ny as isize - 1);
                    if hi_i < 0 || hi_j < 0 {
                        continue;
                    }
                    for j in lo_j..=hi_j as usize {
                        for i in lo_i..=hi_i as usize {
                            if star_contains(c, grid.point(i, j)) {
                                counts[grid.index(i, j)] += 1;
                            }
                        }
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u32; grid.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let n = shapes.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Largest distance along the ray `origin + s (cos phi, sin phi)`, `s >= 0`, to the polygon.
fn ray_distance(origin: [f64; 2], phi: f64, poly: &[[f64; 2]]) -> Option<f64> {
    let d = [phi.cos(), phi.sin()];
    let mut best: Option<f64> = None;
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let e = [q[0] - p[0], q[1] - p[1]];
        let den = d[0] * e[1] - d[1] * e[0];
        if den.abs() < 1e-300 {
            continue;
        }
        let w = [p[0] - origin[0], p[1] - origin[1]];
        let s = (w[0] * e[1] - w[1] * e[0]) / den;
        let u = (w[0] * d[1] - w[1] * d[0]) / den;
        if s >= 0.0 && (0.0..1.0).contains(&u) {
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
    }
    best
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub component: usize,
    pub angle: f64,
    /// Boundary distance at the levels of [`QUANTILES`].
    pub quantiles: [f64; 5],
}

/// Per-angle distribution of the boundary distance from each sample's center of mass.
pub fn boundary_marginals(shapes: &[ShapeParams], component: usize, n_angles: usize) -> Result<Vec<MarginalRow>> {
    if shapes.is_empty() || n_angles == 0 {
        return Err(Error::InvalidInput("need samples and at least one angle".into()));
    }
    let per_sample: Vec<Vec<f64>> = shapes
        .par_iter()
        .map(|s| {
            let c = s.components.get(component).ok_or(Error::DegenerateComponent { index: component })?;
            let com = shape_stats(c, STATS_NODES)?.center_of_mass;
            let poly = c.polygon(RAY_POLYGON);
            Ok((0..n_angles)
                .map(|k| ray_distance(com, TAU * k as f64 / n_angles as f64, &poly).unwrap_or(0.0))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..n_angles)
        .map(|k| {
            let mut v: Vec<f64> = per_sample.iter().map(|d| d[k]).collect();
            v.sort_by(f64::total_cmp);
            MarginalRow { component, angle: TAU * k as f64 / n_angles as f64, quantiles: QUANTILES.map(|q| quantile(&v, q)) }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub sample: usize,
    pub component: usize,
    pub stats: ShapeStats,
    pub kappa_i: Option<f64>,
}

pub fn per_sample_stats(shapes: &[ShapeParams]) -> Result<Vec<SampleStats>> {
    let rows: Vec<Vec<SampleStats>> = shapes
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            s.components
                .iter()
                .enumerate()
                .map(|(l, c)| Ok(SampleStats { sample: i, component: l, stats: shape_stats(c, STATS_NODES)?, kappa_i: s.kappa_i }))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    pub component: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Fixed-width bins over `range`, or over the data range when `None`.
    /// Constant data give a single bin.
    pub fn build(name: &str, component: usize, values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Self {
        let (lo, hi) = range.unwrap_or_else(|| {
            values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
        });
        if values.is_empty() || !(hi > lo) || bins == 0 {
            let edge = if lo.is_finite() { lo } else { 0.0 };
            return Self { name: name.into(), component, edges: vec![edge, edge], counts: vec![values.len()] };
        }
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + w * k as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - lo) / w).floor().max(0.0) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { name: name.into(), component, edges, counts }
    }

    /// Fraction of the counts in bins whose centers lie within `width` of `center`,
    /// with angles compared modulo `pi` when `periodic`.
    pub fn mass_near(&self, center: f64, width: f64, periodic: bool) -> f64 {
        let total: usize = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let mut inside = 0;
        for (k, c) in self.counts.iter().enumerate() {
            let mid = 0.5 * (self.edges[k] + self.edges[k + 1]);
            let mut d = (mid - center).abs();
            if periodic {
                d = d.rem_euclid(PI);
                d = d.min(PI - d);
            }
            if d <= width {
                inside += c;
            }
        }
        inside as f64 / total as f64
    }
}

/// Histograms of every statistic per component, plus `kappa_i` when present.
pub fn stats_histograms(stats: &[SampleStats], bins: usize) -> Vec<Histogram> {
    let components = stats.iter().map(|s| s.component + 1).max().unwrap_or(0);
    let mut out = Vec::new();
    type Getter = fn(&ShapeStats) -> f64;
    let fields: [(&str, Getter, Option<(f64, f64)>); 8] = [
        ("area", |s| s.area, None),
        ("deviation", |s| s.deviation, None),
        ("center_x", |s| s.center_of_mass[0], None),
        ("center_y", |s| s.center_of_mass[1], None),
        ("r_min", |s| s.r_min, None),
        ("r_max", |s| s.r_max, None),
        ("dir_min", |s| s.dir_min, Some((0.0, PI))),
        ("dir_max", |s| s.dir_max, Some((0.0, PI))),
    ];
    for l in 0..components {
        let rows: Vec<&SampleStats> = stats.iter().filter(|s| s.component == l).collect();
        for (name, get, range) in &fields {
            let v: Vec<f64> = rows.iter().map(|r| get(&r.stats)).collect();
            out.push(Histogram::build(name, l, &v, bins, *range));
        }
    }
    let kappa: Vec<f64> = stats.iter().filter(|s| s.component == 0).filter_map(|s| s.kappa_i).collect();
    if !kappa.is_empty() {
        out.push(Histogram::build("kappa_i", 0, &kappa, bins, None));
    }
    out
}
