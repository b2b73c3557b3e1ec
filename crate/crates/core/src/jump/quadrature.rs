//! Trapezoid-rule backend for the jump recursion.
//!
//! `ξ_e^(k)` is stored by its values at the seam nodes of `e`; each Cauchy
//! integral over a seam is the trapezoid sum over that seam's nodes. The
//! integrands are analytic and periodic, so the rule converges
//! geometrically in the number of nodes.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::{seam_nodes, JumpData, JumpError};
use crate::curve::{OrientedEdge, PlumbingParams, StableCurve};
use crate::kernel::KernelEvaluator;

/// Sampled solution: boundary data `I_e^* ξ_{-e}^(k-1)` on every seam for
/// `k = 1..=K`, from which `η^(k)` is evaluated anywhere.
pub struct QuadratureSolution<'k> {
    kernel: &'k dyn KernelEvaluator,
    curve: StableCurve,
    /// `nodes[slot][j]`, global coordinates.
    nodes: Vec<Vec<Complex64>>,
    /// `weights[slot][j] = dw` for the counter-clockwise seam.
    weights: Vec<Vec<Complex64>>,
    /// `boundary[k-1][slot][j]`.
    boundary: Vec<Vec<Vec<Complex64>>>,
}

/// Run `k_levels` steps of the recursion with `n_quad` nodes per seam.
pub fn solve<'k>(
    data: &JumpData,
    curve: &StableCurve,
    params: &PlumbingParams,
    kernel: &'k dyn KernelEvaluator,
    k_levels: usize,
    n_quad: usize,
) -> Result<QuadratureSolution<'k>, JumpError> {
    params.check(curve)?;
    let ends: Vec<OrientedEdge> = curve.oriented_edges().collect();
    let nodes: Vec<Vec<Complex64>> = ends
        .iter()
        .map(|&e| seam_nodes(curve, params, e, n_quad))
        .collect();
    let weights: Vec<Vec<Complex64>> = ends
        .iter()
        .map(|&e| {
            let q = curve.node_point(e);
            nodes[e.slot()]
                .iter()
                .map(|&w| Complex64::new(0.0, TAU / n_quad as f64) * (w - q))
                .collect()
        })
        .collect();
    let derivs: Vec<Vec<Complex64>> = ends
        .iter()
        .map(|&e| {
            let g = curve.gluing_map(e, params.get(e));
            nodes[e.slot()].iter().map(|&z| g.derivative(z)).collect()
        })
        .collect();

    // values[slot][j]: ξ_e^(k) at node j of seam e.
    let mut values: Vec<Vec<Complex64>> = Vec::with_capacity(ends.len());
    for &e in &ends {
        let xi = data.xi0(e);
        let mut row = Vec::with_capacity(n_quad);
        for &z in &nodes[e.slot()] {
            row.push(xi.eval(z)?);
        }
        values.push(row);
    }

    let mut sol = QuadratureSolution {
        kernel,
        curve: curve.clone(),
        nodes,
        weights,
        boundary: Vec::with_capacity(k_levels),
    };
    for _ in 0..k_levels {
        // Node j of e is glued to node j of -e.
        let h: Vec<Vec<Complex64>> = ends
            .iter()
            .map(|&e| {
                let back = &values[e.reversed().slot()];
                (0..n_quad).map(|j| back[j] * derivs[e.slot()][j]).collect()
            })
            .collect();
        sol.boundary.push(h);
        let level = sol.boundary.len();
        values = ends
            .iter()
            .map(|&e| {
                let others: Vec<OrientedEdge> = curve
                    .ends_at(curve.source(e))
                    .into_iter()
                    .filter(|&f| f != e)
                    .collect();
                sol.nodes[e.slot()]
                    .iter()
                    .map(|&z| {
                        others
                            .iter()
                            .map(|&f| sol.cauchy_transform(level, f, z))
                            .sum()
                    })
                    .collect()
            })
            .collect();
    }
    Ok(sol)
}

impl QuadratureSolution<'_> {
    pub fn levels(&self) -> usize {
        self.boundary.len()
    }

    /// Trapezoid value of `∮_{γ_e} K(z, w) I_e^* ξ_{-e}^(k-1)(w)`.
    fn cauchy_transform(&self, k: usize, e: OrientedEdge, z: Complex64) -> Complex64 {
        let h = &self.boundary[k - 1][e.slot()];
        let nodes = &self.nodes[e.slot()];
        let weights = &self.weights[e.slot()];
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..nodes.len() {
            acc += h[j] * self.kernel.cauchy(z, nodes[j]) * weights[j];
        }
        acc
    }

    /// Coefficient of `dz` in `η_v^(k)` at `z`, for `z` off the seams.
    pub fn eta_level(&self, k: usize, v: usize, z: Complex64) -> Complex64 {
        self.curve
            .ends_at(v)
            .into_iter()
            .map(|e| self.cauchy_transform(k, e, z))
            .sum()
    }

    /// Coefficient of `dz` in `Σ_k η_v^(k)` at `z`.
    pub fn eta(&self, v: usize, z: Complex64) -> Complex64 {
        (1..=self.levels()).map(|k| self.eta_level(k, v, z)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::presets;
    use crate::jump::{initial_data, iterate, DataMode, SolverSettings};
    use crate::kernel::Genus0Kernel;
    use crate::ratdiff::RationalDifferential;

    #[test]
    fn agrees_with_residue_backend_on_genus_one() {
        let curve = presets::genus_one();
        let omega = vec![RationalDifferential::third_kind(
            Complex64::new(2.0, 0.0),
            Complex64::new(-2.0, 0.0),
        )];
        let data = initial_data(&omega, &curve, DataMode::Stable).unwrap();
        let params = PlumbingParams::uniform(1, 1e-3);
        let exact = iterate(&data, &curve, &params, &SolverSettings::fixed(3)).unwrap();
        let quad = solve(&data, &curve, &params, &Genus0Kernel, 3, 64).unwrap();
        for z in [Complex64::new(0.0, 1.0), Complex64::new(2.9, 0.0)] {
            for k in 1..=3 {
                let a = exact.eta_level(k, 0).eval(z).unwrap();
                let b = quad.eta_level(k, 0, z);
                assert!((a - b).norm() < 1e-13, "k={k}: {a} vs {b}");
            }
        }
    }
}
