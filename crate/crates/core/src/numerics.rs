//! Small numerical utilities shared by the solver, the test harness and the
//! sweep driver.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

/// `n` points `10^a, ..., 10^b`, evenly spaced in the exponent.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(a)],
        _ => (0..n)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_slope(&lx, &ly)
}

/// `n` equispaced points on a circle, starting at angle 0, counter-clockwise.
pub fn circle_points(center: Complex64, radius: f64, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|j| center + Complex64::from_polar(radius, TAU * j as f64 / n as f64))
        .collect()
}

/// Taylor coefficient `a_k` of a function holomorphic on `|x| <= radius`,
/// by the trapezoid rule on `n` points of that circle.
pub fn taylor_coefficient<F>(f: F, k: u32, radius: f64, n: usize) -> Complex64
where
    F: Fn(Complex64) -> Complex64,
{
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let theta = TAU * j as f64 / n as f64;
        let x = Complex64::from_polar(radius, theta);
        acc += f(x) * Complex64::from_polar(1.0, -(k as f64) * theta);
    }
    acc / (n as f64 * radius.powi(k as i32))
}

/// Mixed Taylor coefficient of `x^k y^l` for `f(x, y)` holomorphic on a
/// bidisk.
pub fn taylor_coefficient_2d<F>(
    f: F,
    (k, l): (u32, u32),
    (rx, ry): (f64, f64),
    n: usize,
) -> Complex64
where
    F: Fn(Complex64, Complex64) -> Complex64,
{
    taylor_coefficient(
        |x| taylor_coefficient(|y| f(x, y), l, ry, n),
        k,
        rx,
        n,
    )
}

/// Winding number of `f` around 0 along the circle `|z - center| = radius`,
/// from the accumulated argument increments on `n` samples.
pub fn winding_number<F>(f: F, center: Complex64, radius: f64, n: usize) -> i64
where
    F: Fn(Complex64) -> Complex64,
{
    let pts = circle_points(center, radius, n);
    let vals: Vec<Complex64> = pts.iter().map(|&z| f(z)).collect();
    let mut total = 0.0;
    for j in 0..n {
        let a = vals[j];
        let b = vals[(j + 1) % n];
        total += (b / a).arg();
    }
    (total / (2.0 * PI)).round() as i64
}

/// Maximum of `|a_i - b_i|`.
pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Reduce the imaginary part into `(-π, π]`.
pub fn wrap_imaginary(z: Complex64) -> Complex64 {
    let mut im = z.im.rem_euclid(TAU);
    if im > PI {
        im -= TAU;
    }
    Complex64::new(z.re, im)
}

/// Distance between two complex numbers modulo `2πi`.
pub fn dist_mod_2pi_i(a: Complex64, b: Complex64) -> f64 {
    wrap_imaginary(a - b).norm()
}

/// Roots of `c[0] + c[1] x + ... + c[n] x^n` by Aberth iteration.
///
/// Trailing coefficients below `1e-14` times the largest are dropped first.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let big = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut c: Vec<Complex64> = coeffs.to_vec();
    while c.last().is_some_and(|x| x.norm() <= 1e-14 * big) {
        c.pop();
    }
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let monic: Vec<Complex64> = c.iter().map(|x| x / lead).collect();
    // Cauchy bound on the root moduli.
    let bound = 1.0 + monic[..n].iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut roots: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(0.5 * bound, TAU * k as f64 / n as f64 + 0.4))
        .collect();
    let eval = |z: Complex64| {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &a in monic.iter().rev() {
            dp = dp * z + p;
            p = p * z + a;
        }
        (p, dp)
    };
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for k in 0..n {
            let z = roots[k];
            let (p, dp) = eval(z);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| 1.0 / (z - roots[j]))
                .sum();
            let step = ratio / (1.0 - ratio * repulsion);
            roots[k] = z - step;
            moved = moved.max(step.norm() / (1.0 + z.norm()));
        }
        if moved < 1e-15 {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logspace_endpoints() {
        let v = logspace(-2.0, -6.0, 5);
        assert_eq!(v.len(), 5);
        assert!((v[0] - 1e-2).abs() < 1e-18);
        assert!((v[4] - 1e-6).abs() < 1e-20);
        assert!((v[2] - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn slope_of_power_law() {
        let x = logspace(-1.0, -5.0, 9);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn taylor_coefficients_of_exp() {
        let a3 = taylor_coefficient(|x| x.exp(), 3, 0.5, 32);
        assert!((a3 - 1.0 / 6.0).norm() < 1e-14, "{a3}");
        let a11 = taylor_coefficient_2d(|x, y| (x * y).exp() + x, (1, 1), (0.5, 0.5), 32);
        assert!((a11.re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn winding_counts_zeros() {
        let f = |z: Complex64| (z - 0.1) * (z + Complex64::new(0.0, 0.2)).powi(2);
        assert_eq!(winding_number(f, Complex64::new(0.0, 0.0), 1.0, 256), 3);
        assert_eq!(winding_number(f, Complex64::new(5.0, 0.0), 1.0, 256), 0);
    }

    #[test]
    fn wrap_brings_imaginary_into_principal_range() {
        let z = Complex64::new(1.0, 3.0 * PI);
        assert!((wrap_imaginary(z) - Complex64::new(1.0, PI)).norm() < 1e-12);
        assert!(dist_mod_2pi_i(Complex64::new(0.0, TAU), Complex64::new(0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn polynomial_roots_of_known_cubic() {
        // (x - 1)(x + 2)(x - 3i)
        let c = |re, im| Complex64::new(re, im);
        let mut roots = polynomial_roots(&[c(0.0, 6.0), c(-2.0, -3.0), c(1.0, -3.0), c(1.0, 0.0)]);
        roots.sort_by(|a, b| a.re.total_cmp(&b.re));
        let want = [c(-2.0, 0.0), c(0.0, 3.0), c(1.0, 0.0)];
        assert!(max_abs_diff(&roots, &want) < 1e-13, "{roots:?}");
    }
}
