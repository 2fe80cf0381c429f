//! Separation-of-variables solution for a penetrable circular cylinder.

use crate::error::{Error, Result};
use crate::forward::Scene;
use crate::special::bessel_jy_seq;
use num_complex::Complex64;

/// Truncation cap for the partial-wave series.
pub const MAX_ORDER: usize = 400;

/// Scattering ratios `c_n`, `n = 0..=order`, of the exterior field
/// `u_sc = sum eps_n i^n c_n H_n(kappa_e rho) cos(n (theta - alpha))`
/// relative to a unit plane wave.
pub fn scattering_coefficients(radius: f64, scene: &Scene, order: usize) -> Vec<Complex64> {
    let (ke, ki, beta) = (scene.kappa_e, scene.kappa_i, scene.beta);
    let (je, ye) = bessel_jy_seq(order + 1, ke * radius);
    let (ji, _) = bessel_jy_seq(order + 1, ki * radius);
    let deriv = |v: &[f64], n: usize, x: f64| if n == 0 { -v[1] } else { v[n - 1] - n as f64 / x * v[n] };
    (0..=order)
        .map(|n| {
            let (xe, xi) = (ke * radius, ki * radius);
            let j = je[n];
            let jd = deriv(&je, n, xe);
            let h = Complex64::new(je[n], ye[n]);
            let hd = Complex64::new(jd, deriv(&ye, n, xe));
            let (jin, jind) = (ji[n], deriv(&ji, n, xi));
            let num = beta * ki * j * jind - ke * jd * jin;
            let den = ke * hd * jin - beta * ki * h * jind;
            num / den
        })
        .collect()
}

fn series_at(
    coeffs: &[Complex64],
    radius: f64,
    center: [f64; 2],
    scene: &Scene,
    x: [f64; 2],
) -> Result<Complex64> {
    let d = [x[0] - center[0], x[1] - center[1]];
    let rho = d[0].hypot(d[1]);
    if rho <= radius {
        return Err(Error::PointTooClose { x: x[0], y: x[1] });
    }
    let alpha = scene.incident[1].atan2(scene.incident[0]);
    let theta = d[1].atan2(d[0]);
    let (j, y) = bessel_jy_seq(coeffs.len() - 1, scene.kappa_e * rho);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut i_pow = Complex64::new(1.0, 0.0);
    for (n, c) in coeffs.iter().enumerate() {
        let eps = if n == 0 { 1.0 } else { 2.0 };
        let h = Complex64::new(j[n], y[n]);
        sum += eps * i_pow * c * h * (n as f64 * (theta - alpha)).cos();
        i_pow *= Complex64::new(0.0, 1.0);
    }
    let phase = scene.incident_field(center);
    Ok(scene.incident_field(x) + phase * sum)
}

/// Total field at `points` using exactly `order` partial waves.
pub fn mie_field_with_order(
    radius: f64,
    center: [f64; 2],
    scene: &Scene,
    points: &[[f64; 2]],
    order: usize,
) -> Result<Vec<Complex64>> {
    scene.validate()?;
    let coeffs = scattering_coefficients(radius, scene, order);
    points.iter().map(|&x| series_at(&coeffs, radius, center, scene, x)).collect()
}

/// Total field of a plane wave scattered by the disc `|x - center| < radius`.
/// The series is truncated once the terms drop below `1e-14` of the field.
pub fn mie_circle_reference(radius: f64, center: [f64; 2], scene: &Scene, points: &[[f64; 2]]) -> Result<Vec<Complex64>> {
    scene.validate()?;
    let coeffs = scattering_coefficients(radius, scene, MAX_ORDER);
    // worst case over the points: the closest one has the slowest decay
    let rho_min = points
        .iter()
        .map(|x| (x[0] - center[0]).hypot(x[1] - center[1]))
        .fold(f64::INFINITY, f64::min);
    if rho_min <= radius {
        let x = points
            .iter()
            .find(|x| (x[0] - center[0]).hypot(x[1] - center[1]) <= radius)
            .copied()
            .unwrap_or([f64::NAN, f64::NAN]);
        return Err(Error::PointTooClose { x: x[0], y: x[1] });
    }
    let (j, y) = bessel_jy_seq(MAX_ORDER, scene.kappa_e * rho_min);
    let start = (scene.kappa_e.max(scene.kappa_i) * radius) as usize + 2;
    let mut order = None;
    for n in start..MAX_ORDER {
        let term = |m: usize| coeffs[m].norm() * j[m].hypot(y[m]);
        if term(n) < 1e-14 && term(n + 1) < 1e-14 {
            order = Some(n + 1);
            break;
        }
    }
    let order = order.ok_or(Error::SeriesNonConvergence { cap: MAX_ORDER })?;
    points.iter().map(|&x| series_at(&coeffs[..=order], radius, center, scene, x)).collect()
}
