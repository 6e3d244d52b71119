//! Bessel and Hankel functions of orders 0 and 1, the entire series
//! `T_m`, and the Helmholtz fundamental solution.
//!
//! Power series are used for `x <= 12` and the Hankel asymptotic expansion
//! beyond; both are accurate to about `1e-10` absolute at the switch.

use crate::error::{Error, Result};
use crate::geometry::Point;
use num_complex::Complex64;
use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 12.0;

/// `T_m(x) = sum_j (-x^2/4)^j m! / (j! (m+j)!)`, so that
/// `J_m(x) = (x/2)^m / m! * T_m(x)` and `T_m(0) = 1`.
pub fn t_series(m: usize, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 0..500 {
        term *= q / ((j + 1) as f64 * (m + j + 1) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && j > 2 {
            break;
        }
    }
    sum
}

/// `J_n(x)` for integer `n >= 0` by its power series (moderate `x`).
pub fn bessel_jn_series(n: usize, x: f64) -> f64 {
    let mut pref = 1.0;
    for i in 1..=n {
        pref *= 0.5 * x / i as f64;
    }
    pref * t_series(n, x)
}

/// Asymptotic `(P, Q)` for order `nu` at large `x`.
fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kk = (2 * k - 1) as f64;
        term *= (mu - kk * kk) / (k as f64 * 8.0 * x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        // a_k / x^k alternates between Q (odd k) and P (even k) with signs (-1)^{floor(k/2)}.
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * term;
        } else {
            p += sign * term;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}

fn asymptotic_jy(nu: f64, x: f64) -> (f64, f64) {
    let (p, q) = hankel_pq(nu, x);
    let chi = x - (0.5 * nu + 0.25) * PI;
    let amp = (2.0 / (PI * x)).sqrt();
    (amp * (p * chi.cos() - q * chi.sin()), amp * (p * chi.sin() + q * chi.cos()))
}

pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        t_series(0, x)
    } else {
        asymptotic_jy(0.0, x).0
    }
}

pub fn bessel_j1(x: f64) -> f64 {
    let s = x.signum();
    let x = x.abs();
    s * if x <= SERIES_LIMIT { 0.5 * x * t_series(1, x) } else { asymptotic_jy(1.0, x).0 }
}

/// `Y_0(x)` for `x > 0`.
pub fn bessel_y0(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        return asymptotic_jy(0.0, x).1;
    }
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut sum = 0.0;
    for k in 1..200 {
        term *= -q / (k as f64 * k as f64);
        harmonic += 1.0 / k as f64;
        let t = -term * harmonic;
        sum += t;
        if t.abs() < 1e-17 * sum.abs().max(1e-300) && k > 2 {
            break;
        }
    }
    (2.0 / PI) * (((0.5 * x).ln() + EULER_GAMMA) * bessel_j0(x) + sum)
}

/// `Y_1(x)` for `x > 0`.
pub fn bessel_y1(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        return asymptotic_jy(1.0, x).1;
    }
    let half = 0.5 * x;
    // psi(k+1) + psi(k+2) = -2 gamma + H_k + H_{k+1}
    let mut term = half; // (x/2)^{2k+1} / (k! (k+1)!) at k = 0
    let mut hk = 0.0;
    let mut sum = 0.0;
    for k in 0..200 {
        let hk1 = hk + 1.0 / (k + 1) as f64;
        let t = term * (-2.0 * EULER_GAMMA + hk + hk1);
        sum += t;
        if t.abs() < 1e-17 * sum.abs().max(1e-300) && k > 2 {
            break;
        }
        term *= -half * half / ((k + 1) as f64 * (k + 2) as f64);
        hk = hk1;
    }
    (2.0 / PI) * half.ln() * bessel_j1(x) - 2.0 / (PI * x) - sum / PI
}

/// `H_0^{(1)}(x)` for `x > 0`.
pub fn hankel1_0(x: f64) -> Complex64 {
    Complex64::new(bessel_j0(x), bessel_y0(x))
}

/// `H_1^{(1)}(x)` for `x > 0`.
pub fn hankel1_1(x: f64) -> Complex64 {
    Complex64::new(bessel_j1(x), bessel_y1(x))
}

/// Value and `y`-gradient of the fundamental solution `G_k(y - x)`:
/// `-(1/2pi) ln|y-x|` for `k = 0`, `(i/4) H_0^{(1)}(k|y-x|)` otherwise.
pub fn fundamental_solution(k: f64, x: Point, y: Point) -> Result<(Complex64, [Complex64; 2])> {
    let d = y - x;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(fundamental_solution_unchecked(k, d, r))
}

#[inline]
pub(crate) fn fundamental_solution_unchecked(k: f64, d: Point, r: f64) -> (Complex64, [Complex64; 2]) {
    if k == 0.0 {
        let v = -r.ln() / (2.0 * PI);
        let g = -1.0 / (2.0 * PI * r * r);
        (Complex64::new(v, 0.0), [Complex64::new(g * d.x, 0.0), Complex64::new(g * d.y, 0.0)])
    } else {
        let kr = k * r;
        let i4 = Complex64::new(0.0, 0.25);
        let v = i4 * hankel1_0(kr);
        let dr = -i4 * k * hankel1_1(kr) / r;
        (v, [dr * d.x, dr * d.y])
    }
}
