//! Cauchy kernel and fundamental bidifferential of a component.
//!
//! Normalization: `K(z, w) = dz / (2πi (z - w))`, so `K` has residue
//! `1/(2πi)` on the diagonal and `ω = 2πi ∂_w K`.

use std::f64::consts::TAU;

use num_complex::Complex64;

/// Evaluator for the kernels of one component.
///
/// Coordinates are global on the component; chart data is passed as
/// `(center, radius)` pairs.
pub trait KernelEvaluator: Send + Sync {
    /// Coefficient of `dz` in `K(z, w)`.
    fn cauchy(&self, z: Complex64, w: Complex64) -> Complex64;

    /// Coefficient of `dz dw` in `ω(z, w)`.
    fn bidifferential(&self, z: Complex64, w: Complex64) -> Complex64;

    /// Regular part of `ω` between chart centres, in chart coordinates.
    fn beta(&self, a: (Complex64, f64), b: (Complex64, f64)) -> Complex64;

    /// Base point of the kernel, if it has one.
    fn base_point(&self) -> Option<Complex64> {
        None
    }
}

/// The closed-form kernels of the Riemann sphere.
#[derive(Debug, Clone, Copy, Default)]
pub struct Genus0Kernel;

impl KernelEvaluator for Genus0Kernel {
    fn cauchy(&self, z: Complex64, w: Complex64) -> Complex64 {
        1.0 / (Complex64::new(0.0, TAU) * (z - w))
    }

    fn bidifferential(&self, z: Complex64, w: Complex64) -> Complex64 {
        let d = z - w;
        1.0 / (d * d)
    }

    fn beta(&self, (qa, ra): (Complex64, f64), (qb, rb): (Complex64, f64)) -> Complex64 {
        // Affine charts leave dz dw/(z-w)^2 unchanged, so the same-chart
        // regular part vanishes.
        if qa == qb && ra == rb {
            return Complex64::new(0.0, 0.0);
        }
        ra * rb * self.bidifferential(qa, qb)
    }
}

/// `∮ K(z, w_0) ` in `z` over a counter-clockwise circle, by the trapezoid
/// rule on `n` nodes.
pub fn a_normalization_check(
    kernel: &dyn KernelEvaluator,
    w0: Complex64,
    center: Complex64,
    radius: f64,
    n: usize,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let u = Complex64::from_polar(1.0, TAU * j as f64 / n as f64);
        let z = center + radius * u;
        let dz = Complex64::new(0.0, TAU / n as f64) * radius * u;
        acc += kernel.cauchy(z, w0) * dz;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cauchy_value() {
        let k = Genus0Kernel.cauchy(c(0.0, 0.0), c(1.0, 0.0));
        assert!((k - (-1.0 / c(0.0, TAU))).norm() < 1e-16);
    }

    #[test]
    fn beta_values() {
        let b = Genus0Kernel.beta((c(2.0, 0.0), 1.0), (c(-2.0, 0.0), 1.0));
        assert!((b - c(1.0 / 16.0, 0.0)).norm() < 1e-16);
        assert_eq!(Genus0Kernel.beta((c(2.0, 0.0), 1.0), (c(2.0, 0.0), 1.0)), c(0.0, 0.0));
    }

    #[test]
    fn contour_values() {
        let inside = a_normalization_check(&Genus0Kernel, c(0.1, 0.2), c(0.0, 0.0), 1.0, 64);
        assert!((inside - c(1.0, 0.0)).norm() < 1e-14);
        let outside = a_normalization_check(&Genus0Kernel, c(3.0, 0.0), c(0.0, 0.0), 1.0, 64);
        assert!(outside.norm() < 1e-14);
    }

    #[test]
    fn bidifferential_is_derivative_of_cauchy() {
        let z = c(0.3, -0.7);
        let w = c(1.1, 0.4);
        let h = 1e-5;
        let hh = c(h, 0.0);
        let fd = (Genus0Kernel.cauchy(z, w + hh) - Genus0Kernel.cauchy(z, w - hh)) / (2.0 * h);
        let lhs = c(0.0, TAU) * fd;
        let rhs = Genus0Kernel.bidifferential(z, w);
        assert!((lhs - rhs).norm() / rhs.norm() < 1e-6);
    }
}
