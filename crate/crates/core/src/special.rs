//! Bessel and Hankel functions of integer order for real positive arguments.
//!
//! Small and moderate arguments use Miller's backward recurrence for `J_n`
//! normalized by `J_0 + 2 sum J_2k = 1`, with `Y_0` and `Y_1` obtained from the
//! Neumann series over the same `J_n` sequence. Large arguments use the Hankel
//! asymptotic expansion, which is accurate to roundoff above [`ASYMPTOTIC_MIN`].

use num_complex::Complex64;
use std::f64::consts::{FRAC_2_PI, PI};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments at or above this value use the asymptotic expansion.
pub const ASYMPTOTIC_MIN: f64 = 20.0;

/// `J_0, J_1, Y_0, Y_1` evaluated together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bessel01 {
    pub j0: f64,
    pub j1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Bessel01 {
    pub fn h0(&self) -> Complex64 {
        Complex64::new(self.j0, self.y0)
    }

    pub fn h1(&self) -> Complex64 {
        Complex64::new(self.j1, self.y1)
    }
}

fn miller_start(order: usize, x: f64) -> usize {
    let top = (order as f64).max(x);
    let m = top + 24.0 + 8.0 * top.cbrt();
    2 * ((m as usize) / 2 + 1)
}

/// `J_0(x) .. J_nmax(x)` by backward recurrence. `x` must be positive.
pub fn bessel_j_seq(nmax: usize, x: f64) -> Vec<f64> {
    let start = miller_start(nmax, x);
    let mut out = vec![0.0; nmax + 1];
    let mut jp = 0.0_f64; // J_{k+1}
    let mut jk = 1e-300_f64; // J_k
    let mut norm = 0.0;
    let two_over_x = 2.0 / x;
    let mut k = start;
    loop {
        if k <= nmax {
            out[k] = jk;
        }
        if k % 2 == 0 {
            norm += if k == 0 { jk } else { 2.0 * jk };
        }
        if k == 0 {
            break;
        }
        let jm = k as f64 * two_over_x * jk - jp;
        jp = jk;
        jk = jm;
        k -= 1;
        if jk.abs() > 1e250 {
            jk *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

fn asymptotic(nu: f64, x: f64) -> (f64, f64) {
    // Returns (J_nu, Y_nu) from the Hankel expansion.
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0_f64;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        term *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * x);
        let mag = term.abs();
        if mag > prev || mag < 1e-17 {
            break;
        }
        prev = mag;
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    let amp = (FRAC_2_PI / x).sqrt();
    let (s, c) = chi.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

/// Evaluates `J_0, J_1, Y_0, Y_1` at `x > 0`.
pub fn bessel01(x: f64) -> Bessel01 {
    debug_assert!(x > 0.0, "bessel01 needs a positive argument, got {x}");
    if x >= ASYMPTOTIC_MIN {
        let (j0, y0) = asymptotic(0.0, x);
        let (j1, y1) = asymptotic(1.0, x);
        return Bessel01 { j0, j1, y0, y1 };
    }
    // Backward recurrence accumulating the normalization and both Neumann
    // sums on the fly, so no sequence is stored.
    let start = miller_start(1, x);
    let two_over_x = 2.0 / x;
    let (mut jp, mut jk) = (0.0_f64, 1e-300_f64);
    let (mut norm, mut s0, mut s1) = (0.0, 0.0, 0.0);
    let j0;
    let mut j1 = 0.0;
    let mut k = start;
    loop {
        if k % 2 == 0 {
            norm += if k == 0 { jk } else { 2.0 * jk };
            if k > 0 {
                let half = (k / 2) as f64;
                let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                s0 += sign * jk / half;
            }
        } else if k >= 3 {
            let half = ((k - 1) / 2) as f64;
            let sign = if ((k - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            s1 += sign * (2.0 * half + 1.0) / (half * (half + 1.0)) * jk;
        }
        if k == 1 {
            j1 = jk;
        }
        if k == 0 {
            j0 = jk;
            break;
        }
        let jm = k as f64 * two_over_x * jk - jp;
        jp = jk;
        jk = jm;
        k -= 1;
        if jk.abs() > 1e250 {
            jk *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            s0 *= 1e-250;
            s1 *= 1e-250;
            j1 *= 1e-250;
        }
    }
    let (j0, j1, s0, s1) = (j0 / norm, j1 / norm, s0 / norm, s1 / norm);
    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let y0 = FRAC_2_PI * (log_term * j0 - 2.0 * s0);
    let y1 = FRAC_2_PI * (-j0 / x + (log_term - 1.0) * j1 - s1);
    Bessel01 { j0, j1, y0, y1 }
}

/// `H_0^(1)(x)`.
pub fn hankel0(x: f64) -> Complex64 {
    bessel01(x).h0()
}

/// `H_1^(1)(x)`.
pub fn hankel1(x: f64) -> Complex64 {
    bessel01(x).h1()
}

/// `J_n(x)` and `Y_n(x)` for `n = 0..=nmax`. `Y_n` comes from forward
/// recurrence, which is stable because `|Y_n|` grows with `n`.
pub fn bessel_jy_seq(nmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let top = nmax.max(1);
    let b = bessel01(x);
    let mut j = bessel_j_seq(top, x);
    let mut y = vec![0.0; top + 1];
    y[0] = b.y0;
    y[1] = b.y1;
    for n in 1..top {
        y[n + 1] = 2.0 * n as f64 / x * y[n] - y[n - 1];
    }
    j.truncate(nmax + 1);
    y.truncate(nmax + 1);
    (j, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from an independent Bessel library
    const TABLE: &[(f64, f64, f64, f64, f64)] = &[
        (1e-3, 0.9999997500000155, 0.0004999999375000026, -4.471416611375923, -636.6221672311395),
        (0.05, 0.9993750976494685, 0.024992188313759704, -1.9793110008172097, -12.789855171174972),
        (0.7, 0.8812008886074052, 0.3289957415400589, -0.1906649293373951, -1.1032498719076336),
        (2.404825557695773, -9.586882554916807e-17, 0.5191474972894666, 0.5099243834484792, 0.10274668243825957),
        (5.0, -0.1775967713143383, -0.3275791375914653, -0.30851762524903303, 0.14786314339122691),
        (12.3, 0.11079795030758527, -0.1942588480405913, -0.19859309463502633, -0.11894840329926633),
        (19.99, 0.16768479902327932, 0.06519257814216627, 0.060981961814838156, -0.166212685502104),
        (20.01, 0.1663481614896892, 0.06846618525879461, 0.06429214025167442, -0.1647943881506846),
        (37.5, 0.07172270511060252, -0.1078233440192769, -0.10876981940906545, -0.07317908043183018),
        (150.0, -0.0007740903753941157, -0.06514516365772736, -0.06514222150903737, 0.0005569563495603133),
    ];

    #[test]
    fn order_zero_and_one_match_reference_table() {
        for &(x, j0, j1, y0, y1) in TABLE {
            let b = bessel01(x);
            let scale = |v: f64| v.abs().max(1e-2);
            assert!((b.j0 - j0).abs() < 2e-14 * scale(j0) * 100.0, "j0({x}) = {} vs {j0}", b.j0);
            assert!((b.j1 - j1).abs() < 2e-12 * scale(j1), "j1({x}) = {} vs {j1}", b.j1);
            assert!((b.y0 - y0).abs() < 2e-12 * scale(y0), "y0({x}) = {} vs {y0}", b.y0);
            assert!((b.y1 - y1).abs() < 2e-12 * scale(y1), "y1({x}) = {} vs {y1}", b.y1);
        }
    }

    #[test]
    fn higher_orders_match_reference() {
        let (j, y) = bessel_jy_seq(40, 7.5);
        let jref = [(0, 0.26633965788037844), (5, 0.28347390516255044), (10, 0.03899825788941222), (20, 6.29609082847653e-08), (40, 7.943888545605409e-26)];
        for (n, v) in jref {
            assert!((j[n] - v).abs() <= 1e-12 * v.abs(), "J_{n}: {} vs {v}", j[n]);
        }
        let yref = [(0, 0.11731328614820863), (5, 0.17541805694546514), (10, -1.2769419280524372), (20, -272761.75448916835)];
        for (n, v) in yref {
            assert!((y[n] - v).abs() <= 1e-11 * v.abs(), "Y_{n}: {} vs {v}", y[n]);
        }
    }

    #[test]
    fn wronskian_holds_across_the_switch() {
        for i in 1..400 {
            let x = 0.1 * i as f64;
            let b = bessel01(x);
            let w = b.j1 * b.y0 - b.j0 * b.y1;
            assert!((w - 2.0 / (PI * x)).abs() < 1e-13, "x = {x}: {w}");
        }
    }

    #[test]
    fn high_order_sequence_wronskian_for_large_argument() {
        let x = 33.0;
        let (j, y) = bessel_jy_seq(60, x);
        for n in 0..50 {
            let w = j[n + 1] * y[n] - j[n] * y[n + 1];
            assert!((w - 2.0 / (PI * x)).abs() < 1e-11 * y[n + 1].abs().max(1.0), "n={n} w={w}");
        }
    }
}
