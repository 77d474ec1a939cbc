//! Test-only derivative oracle: Richardson-extrapolated central differences
//! in l = cosh s, independent of the term algebra.

use std::f64::consts::PI;

/// `arccosh(l)^2`, continued analytically to `l < 1` as `-arccos(l)^2`.
pub fn v_of_l(l: f64) -> f64 {
    if l >= 1.0 {
        let s = l.acosh();
        s * s
    } else {
        let t = l.acos();
        -t * t
    }
}

pub fn g_of_l(rate: f64, shift: f64, l: f64) -> f64 {
    (rate / PI).sqrt() * (-rate * v_of_l(l) + shift).exp()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn central_difference<F: Fn(f64) -> f64>(f: &F, x: f64, n: usize, h: f64) -> f64 {
    let half = n as f64 / 2.0;
    let sum: f64 = (0..=n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * binom(n, k) * f(x + (half - k as f64) * h)
        })
        .sum();
    sum / h.powi(n as i32)
}

/// n-th derivative of `f` at `x` by Richardson extrapolation of central
/// differences over steps `h0 / CON^j` (Ridders' scheme): the tableau entry
/// whose error estimate (successive differences, floored by rounding noise)
/// is smallest is returned.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, n: usize, h0: f64, levels: usize) -> f64 {
    const CON: f64 = 1.4;
    let con2 = CON * CON;
    let mut best = f64::NAN;
    let mut best_err = f64::INFINITY;
    let mut prev: Vec<f64> = Vec::new();
    let scale = f(x).abs();
    let mut h = h0;
    for j in 0..levels {
        // Rounding noise of the difference quotient at this step; entries at
        // or below it cannot be told apart, however well they agree.
        let noise = 64.0 * f64::EPSILON * 2f64.powi(n as i32) * scale / h.powi(n as i32);
        let mut row = vec![central_difference(&f, x, n, h)];
        let mut fac = con2;
        for m in 1..=j {
            let v = (row[m - 1] * fac - prev[m - 1]) / (fac - 1.0);
            fac *= con2;
            let err = (v - row[m - 1]).abs().max((v - prev[m - 1]).abs()).max(noise);
            if err <= best_err {
                best_err = err;
                best = v;
            }
            row.push(v);
        }
        prev = row;
        h /= CON;
    }
    best
}

const H0_FACTOR: f64 = 1.0;
const LEVELS: usize = 14;

/// `d^n G / dl^n` at `l = cosh s`.
pub fn g_derivative_oracle(rate: f64, shift: f64, n: usize, s: f64) -> f64 {
    let l = s.cosh();
    if n == 0 {
        return g_of_l(rate, shift, l);
    }
    // Stay inside the analyticity disc around l (branch point at l = -1).
    let h0 = H0_FACTOR * (l + 1.0) / n as f64;
    richardson_derivative(|x| g_of_l(rate, shift, x), l, n, h0, LEVELS)
}
