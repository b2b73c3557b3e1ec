//! The jump problem on a plumbed curve and its recursive solution.
//!
//! Every seam integral has a rational integrand, so the residue backend
//! evaluates it exactly: the Cauchy integral over the seam around `q_e` of the
//! pulled-back data `I_e^* ξ_{-e}` is the sum of its principal parts inside the
//! seam. [`quadrature`] runs the same recursion with the trapezoid rule.

pub mod quadrature;

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, OrientedEdge, PlumbingParams, StableCurve};
use crate::ratdiff::{RatDiffError, RationalDifferential, Term};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JumpError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    RatDiff(#[from] RatDiffError),
    #[error("expected one differential per vertex ({expected}), got {got}")]
    VertexCount { expected: usize, got: usize },
    #[error("residues at the two ends of {edge} are {r_plus} and {r_minus}, not opposite")]
    ResidueMismatch {
        edge: String,
        r_plus: Complex64,
        r_minus: Complex64,
    },
    #[error("pole of order {order} at node end {edge}; stable data allows simple poles only")]
    HigherOrderPole { edge: String, order: i32 },
    #[error("iteration does not contract: ratio {ratio:.3e} at step {step}")]
    NonConvergence { step: usize, ratio: f64 },
    #[error("tolerance not reached after {k_max} steps (last ratio {ratio:.3e})")]
    TruncationCap { k_max: usize, ratio: f64 },
    #[error("point {point} lies in the removed cap around {edge}")]
    InsideCap { point: Complex64, edge: String },
}

/// How initial data is extracted from the per-vertex differentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Simple poles at nodes with opposite residues.
    #[default]
    Stable,
    /// Any principal part at a node; `ξ_e^(0)` is the differential minus
    /// its principal part at `q_e`.
    General,
}

/// Jump data: the base differential of each component plus `ξ_e^(0)` for
/// each edge end, all in global coordinates of the relevant component.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpData {
    pub base: Vec<RationalDifferential>,
    pub xi0: Vec<RationalDifferential>,
    pub residues: Vec<Complex64>,
}

impl JumpData {
    pub fn zero(curve: &StableCurve) -> Self {
        Self {
            base: vec![RationalDifferential::zero(); curve.n_vertices()],
            xi0: vec![RationalDifferential::zero(); 2 * curve.n_edges()],
            residues: vec![Complex64::new(0.0, 0.0); 2 * curve.n_edges()],
        }
    }

    pub fn xi0(&self, e: OrientedEdge) -> &RationalDifferential {
        &self.xi0[e.slot()]
    }

    pub fn residue(&self, e: OrientedEdge) -> Complex64 {
        self.residues[e.slot()]
    }

    /// `ξ̃_e`: the chart value of `ξ_e^(0)` at the node.
    pub fn xi_tilde(&self, curve: &StableCurve, e: OrientedEdge) -> Result<Complex64, JumpError> {
        Ok(self
            .xi0(e)
            .chart_expansion(curve.node_point(e), curve.radius(e), 0)?
            .constant())
    }
}

/// Relative tolerance for the opposite-residue check.
const RESIDUE_TOL: f64 = 1e-12;

/// Initial data `ξ_e^(0) = Ω_v - (principal part at q_e)`.
pub fn initial_data(
    omega: &[RationalDifferential],
    curve: &StableCurve,
    mode: DataMode,
) -> Result<JumpData, JumpError> {
    if omega.len() != curve.n_vertices() {
        return Err(JumpError::VertexCount {
            expected: curve.n_vertices(),
            got: omega.len(),
        });
    }
    let mut xi0 = Vec::with_capacity(2 * curve.n_edges());
    let mut residues = Vec::with_capacity(2 * curve.n_edges());
    for e in curve.oriented_edges() {
        let w = &omega[curve.source(e)];
        let q = curve.node_point(e);
        let principal = w.principal_part_at(q);
        if mode == DataMode::Stable && principal.max_pole_order() > 1 {
            return Err(JumpError::HigherOrderPole {
                edge: curve.end_label(e),
                order: principal.max_pole_order(),
            });
        }
        residues.push(w.residue(q));
        xi0.push(w.holomorphic_part_at(q));
    }
    if mode == DataMode::Stable {
        for edge in 0..curve.n_edges() {
            let (a, b) = (residues[2 * edge], residues[2 * edge + 1]);
            let scale = a.norm().max(b.norm());
            if (a + b).norm() > RESIDUE_TOL * scale {
                return Err(JumpError::ResidueMismatch {
                    edge: curve.edges[edge].id.clone(),
                    r_plus: a,
                    r_minus: b,
                });
            }
        }
    }
    Ok(JumpData {
        base: omega.to_vec(),
        xi0,
        residues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stop once the newest correction is below `tol * ‖ξ^(0)‖ * (1 - ratio)`.
    pub tol: f64,
    pub k_max: usize,
    /// Seam points per edge end used for the sup-norms.
    pub seam_samples: usize,
    /// Refuse to continue when the observed contraction ratio reaches this.
    pub max_ratio: f64,
    pub force: bool,
    /// Run exactly this many steps, ignoring `tol`.
    pub fixed_order: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            k_max: 32,
            seam_samples: 32,
            max_ratio: 0.5,
            force: false,
            fixed_order: None,
        }
    }
}

impl SolverSettings {
    pub fn fixed(k: usize) -> Self {
        Self {
            fixed_order: Some(k),
            force: true,
            ..Self::default()
        }
    }
}

/// Seam points of edge end `e` as `(q_e, z - q_e)`: `z_e = √|s_e| e^{iθ_j}`
/// on the forward end and the images `s_e / z_e` on the backward end, so
/// node `j` of `e` and node `j` of `-e` are glued.
pub fn seam_offsets(
    curve: &StableCurve,
    params: &PlumbingParams,
    e: OrientedEdge,
    n: usize,
) -> Vec<(Complex64, Complex64)> {
    let s = params.get(e);
    let r = s.norm().sqrt();
    let q = curve.node_point(e);
    let rho = curve.radius(e);
    (0..n)
        .map(|j| {
            let u = Complex64::from_polar(r, TAU * j as f64 / n as f64);
            let ze = if e.flipped { s / u } else { u };
            (q, ze * rho)
        })
        .collect()
}

/// Seam points of edge end `e` in global coordinates.
pub fn seam_nodes(
    curve: &StableCurve,
    params: &PlumbingParams,
    e: OrientedEdge,
    n: usize,
) -> Vec<Complex64> {
    seam_offsets(curve, params, e, n)
        .into_iter()
        .map(|(q, d)| q + d)
        .collect()
}

/// Sup over the seam of `e` of the chart coefficient of `ω`, and of its
/// gross term magnitude.
fn seam_sup(
    curve: &StableCurve,
    e: OrientedEdge,
    nodes: &[(Complex64, Complex64)],
    w: &RationalDifferential,
) -> Result<(f64, f64), JumpError> {
    let rho = curve.radius(e);
    let (mut sup, mut gross): (f64, f64) = (0.0, 0.0);
    for &(q, d) in nodes {
        sup = sup.max(w.eval_near(q, d)?.norm() * rho);
        gross = gross.max(w.gross_near(q, d) * rho);
    }
    Ok((sup, gross))
}

/// Corrections below this multiple of their gross term magnitude are
/// rounding noise.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// Output of the residue-calculus solver.
#[derive(Debug, Clone)]
pub struct JumpSolution {
    pub curve: StableCurve,
    pub params: PlumbingParams,
    pub data: JumpData,
    /// `xi[k][slot]` for `k = 0..=K`.
    pub xi: Vec<Vec<RationalDifferential>>,
    /// `eta[k - 1][vertex]` for `k = 1..=K`.
    pub eta: Vec<Vec<RationalDifferential>>,
    /// Seam sup-norm of `ξ^(k)`, max over edge ends.
    pub norms: Vec<f64>,
    pub ratios: Vec<f64>,
    pub tail_bound: f64,
    /// Rounding level of the last correction; the iteration also stops
    /// once a correction sinks below it.
    pub roundoff_floor: f64,
    eta_sum: Vec<RationalDifferential>,
}

/// Solve the jump problem by the exact recursion.
pub fn iterate(
    data: &JumpData,
    curve: &StableCurve,
    params: &PlumbingParams,
    settings: &SolverSettings,
) -> Result<JumpSolution, JumpError> {
    params.check(curve)?;
    let ends: Vec<OrientedEdge> = curve.oriented_edges().collect();
    let nodes: Vec<Vec<(Complex64, Complex64)>> = ends
        .iter()
        .map(|&e| seam_offsets(curve, params, e, settings.seam_samples))
        .collect();
    let maps: Vec<_> = ends
        .iter()
        .map(|&e| curve.gluing_map(e, params.get(e)))
        .collect();
    let sup_of = |xis: &[RationalDifferential]| -> Result<(f64, f64), JumpError> {
        let (mut m, mut g): (f64, f64) = (0.0, 0.0);
        for (i, &e) in ends.iter().enumerate() {
            let (a, b) = seam_sup(curve, e, &nodes[i], &xis[i])?;
            m = m.max(a);
            g = g.max(b);
        }
        Ok((m, g))
    };

    let mut xi = vec![data.xi0.clone()];
    let mut eta: Vec<Vec<RationalDifferential>> = Vec::new();
    let (norm0, gross0) = sup_of(&data.xi0)?;
    let mut norms = vec![norm0];
    let mut floor = ROUNDOFF * gross0;
    let mut floored = false;
    let mut ratios: Vec<f64> = Vec::new();
    let target = settings.fixed_order;

    loop {
        let k = xi.len();
        let done = match target {
            Some(order) => k > order,
            None => {
                let last = *norms.last().expect("nonempty");
                let ratio = ratios.last().copied().unwrap_or(0.0);
                last == 0.0
                    || floored
                    || (k > 1 && last < settings.tol * norm0 * (1.0 - ratio))
            }
        };
        if done {
            break;
        }
        if target.is_none() && k > settings.k_max {
            return Err(JumpError::TruncationCap {
                k_max: settings.k_max,
                ratio: ratios.last().copied().unwrap_or(f64::NAN),
            });
        }
        let prev = xi.last().expect("nonempty");
        // P_e: Cauchy transform over seam e of I_e^* ξ_{-e}^(k-1).
        let projected: Vec<RationalDifferential> = ends
            .par_iter()
            .enumerate()
            .map(|(i, &e)| {
                let pulled = prev[e.reversed().slot()].pullback(&maps[i]);
                pulled.principal_parts_inside(
                    curve.node_point(e),
                    curve.seam_radius(e, params.get(e)),
                )
            })
            .collect();
        let eta_k: Vec<RationalDifferential> = (0..curve.n_vertices())
            .map(|v| {
                curve
                    .ends_at(v)
                    .iter()
                    .map(|e| projected[e.slot()].clone())
                    .sum()
            })
            .collect();
        let xi_k: Vec<RationalDifferential> = ends
            .iter()
            .map(|&e| {
                curve
                    .ends_at(curve.source(e))
                    .iter()
                    .filter(|&&f| f != e)
                    .map(|f| projected[f.slot()].clone())
                    .sum()
            })
            .collect();
        let (norm_k, gross_k) = sup_of(&xi_k)?;
        let prev_norm = *norms.last().expect("nonempty");
        let ratio = if prev_norm > 0.0 { norm_k / prev_norm } else { 0.0 };
        floor = ROUNDOFF * gross_k;
        floored = k > 1 && norm_k <= floor;
        if target.is_none() && !settings.force && !floored && ratio >= settings.max_ratio {
            return Err(JumpError::NonConvergence { step: k, ratio });
        }
        norms.push(norm_k);
        ratios.push(ratio);
        xi.push(xi_k);
        eta.push(eta_k);
    }

    let last_ratio = ratios.last().copied().unwrap_or(0.0);
    let tail_bound = if floored {
        // Below the rounding level the ratio is noise; the neglected tail is
        // no larger than the last correction.
        norms.last().copied().unwrap_or(0.0)
    } else if last_ratio < 1.0 {
        norms.last().copied().unwrap_or(0.0) * last_ratio / (1.0 - last_ratio)
    } else {
        f64::INFINITY
    };
    let eta_sum = (0..curve.n_vertices())
        .map(|v| eta.iter().map(|level| level[v].clone()).sum())
        .collect();
    Ok(JumpSolution {
        curve: curve.clone(),
        params: params.clone(),
        data: data.clone(),
        xi,
        eta,
        norms,
        ratios,
        tail_bound,
        roundoff_floor: floor,
        eta_sum,
    })
}

/// `η_v^(1)` to first order in `s`: `-Σ_{e ∈ E_v} s_e ρ_e ξ̃_{-e} dz / (z - q_e)^2`.
pub fn first_order(
    data: &JumpData,
    curve: &StableCurve,
    params: &PlumbingParams,
) -> Result<Vec<RationalDifferential>, JumpError> {
    let mut out = vec![RationalDifferential::zero(); curve.n_vertices()];
    for e in curve.oriented_edges() {
        let xt = data.xi_tilde(curve, e.reversed())?;
        let coeff = -params.get(e) * curve.radius(e) * xt;
        let term = RationalDifferential::monomial(curve.node_point(e), 2, coeff);
        let v = curve.source(e);
        out[v] = &out[v] + &term;
    }
    Ok(out)
}

impl JumpSolution {
    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        self.eta.len()
    }

    /// `Σ_k η_v^(k)`.
    pub fn eta_total(&self, v: usize) -> &RationalDifferential {
        &self.eta_sum[v]
    }

    /// `Ω_{v,s} = Ω_v + η_v` as a rational differential.
    pub fn glued(&self, v: usize) -> RationalDifferential {
        &self.data.base[v] + &self.eta_sum[v]
    }

    pub fn eta_level(&self, k: usize, v: usize) -> RationalDifferential {
        if k == 0 {
            RationalDifferential::zero()
        } else {
            self.eta[k - 1][v].clone()
        }
    }

    /// Coefficient of `dz` of `Ω_{v,s}` at `z`, refusing points inside caps.
    pub fn eval_glued(&self, v: usize, z: Complex64) -> Result<Complex64, JumpError> {
        for e in self.curve.ends_at(v) {
            let r = self.curve.seam_radius(e, self.params.get(e));
            if (z - self.curve.node_point(e)).norm() < r * (1.0 - 1e-12) {
                return Err(JumpError::InsideCap {
                    point: z,
                    edge: self.curve.end_label(e),
                });
            }
        }
        Ok(self.data.base[v].eval(z)? + self.eta_sum[v].eval(z)?)
    }

    /// Max over seam points of `|Ω_{v(e),s} - I_e^* Ω_{v(-e),s}|` in the
    /// chart of `e`.
    pub fn jump_residual(&self, e: OrientedEdge, n: usize) -> Result<f64, JumpError> {
        let curve = &self.curve;
        let back = e.reversed();
        let scale = self.params.get(e) * curve.radius(e) * curve.radius(back);
        let here = self.glued(curve.source(e));
        let there = self.glued(curve.source(back));
        let rho = curve.radius(e);
        let q_back = curve.node_point(back);
        let mut worst: f64 = 0.0;
        for (q, d) in seam_offsets(curve, &self.params, e, n) {
            let a = here.eval_near(q, d)?;
            let b = there.eval_near(q_back, scale / d)? * (-scale / (d * d));
            worst = worst.max((a - b).norm() * rho);
        }
        Ok(worst)
    }

    /// Rounding level of [`Self::max_jump_residual`]: the gross term
    /// magnitude of both sides on the seams, times a small multiple of the
    /// machine epsilon.
    pub fn jump_roundoff(&self, n: usize) -> f64 {
        let curve = &self.curve;
        let mut worst: f64 = 0.0;
        for e in curve.oriented_edges() {
            let back = e.reversed();
            let scale = self.params.get(e) * curve.radius(e) * curve.radius(back);
            let here = self.glued(curve.source(e));
            let there = self.glued(curve.source(back));
            let q_back = curve.node_point(back);
            for (q, d) in seam_offsets(curve, &self.params, e, n) {
                let a = here.gross_near(q, d);
                let b = there.gross_near(q_back, scale / d) * (scale / (d * d)).norm();
                worst = worst.max((a + b) * curve.radius(e));
            }
        }
        ROUNDOFF * worst
    }

    /// Largest jump residual over all edge ends.
    pub fn max_jump_residual(&self, n: usize) -> Result<f64, JumpError> {
        let mut worst: f64 = 0.0;
        for e in self.curve.oriented_edges() {
            worst = worst.max(self.jump_residual(e, n)?);
        }
        Ok(worst)
    }

    /// `∮ η` over each seam (counter-clockwise around the `from` end),
    /// by residues.
    pub fn a_norm_residual(&self) -> Vec<Complex64> {
        (0..self.curve.n_edges())
            .map(|edge| {
                let e = OrientedEdge::forward(edge);
                let v = self.curve.source(e);
                Complex64::new(0.0, TAU)
                    * self.eta_sum[v].residues_inside(
                        self.curve.node_point(e),
                        self.curve.seam_radius(e, self.params.get(e)),
                    )
            })
            .collect()
    }

    /// `∮_{γ_e} ξ_e^(k)` for every `k` and `e`, by residues; largest modulus.
    pub fn zeroseam_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for level in &self.xi {
            for e in self.curve.oriented_edges() {
                let r = level[e.slot()].residues_inside(
                    self.curve.node_point(e),
                    self.curve.seam_radius(e, self.params.get(e)),
                );
                worst = worst.max(TAU * r.norm());
            }
        }
        worst
    }

    /// Max deviation from `η_v^(k) = I_e^* ξ_{-e}^(k-1) + ξ_e^(k)` on the
    /// annulus between the seam and the chart boundary.
    pub fn local_identity_residual(&self, k: usize, n: usize) -> Result<f64, JumpError> {
        let curve = &self.curve;
        let mut worst: f64 = 0.0;
        for e in curve.oriented_edges() {
            let g = curve.gluing_map(e, self.params.get(e));
            let eta = self.eta_level(k, curve.source(e));
            let prev = &self.xi[k - 1][e.reversed().slot()];
            let cur = &self.xi[k][e.slot()];
            let r_in = self.params.get(e).norm().sqrt();
            for (i, radius) in [r_in * 2.0, r_in.sqrt(), 0.9].into_iter().enumerate() {
                if radius <= r_in {
                    continue;
                }
                for j in 0..n {
                    let theta = TAU * (j as f64 + 0.5 * i as f64) / n as f64;
                    let z = curve.from_chart(e, Complex64::from_polar(radius, theta));
                    let lhs = eta.eval(z)?;
                    let rhs = prev.eval(g.apply(z))? * g.derivative(z) + cur.eval(z)?;
                    worst = worst.max((lhs - rhs).norm() * curve.radius(e));
                }
            }
        }
        Ok(worst)
    }

    /// `‖η_v‖_{L²}` on the component minus its caps, by Stokes:
    /// `‖η‖² = -(i/2) Σ_e ∮ π conj(η)` over the seams, with `π` a primitive.
    pub fn l2_norm(&self, v: usize, n: usize) -> Result<f64, JumpError> {
        Ok(l2_norm_outside_caps(
            &self.eta_sum[v],
            &self
                .curve
                .ends_at(v)
                .iter()
                .map(|&e| {
                    (
                        self.curve.node_point(e),
                        self.curve.seam_radius(e, self.params.get(e)),
                    )
                })
                .collect::<Vec<_>>(),
            n,
        )?
        .sqrt())
    }
}

/// `∫ |η|²` over the sphere minus the given disks, for `η` with all poles
/// inside the disks and zero residue sum in each disk.
pub fn l2_norm_outside_caps(
    eta: &RationalDifferential,
    caps: &[(Complex64, f64)],
    n: usize,
) -> Result<f64, JumpError> {
    // Primitive: non-logarithmic parts directly, logarithms grouped per cap
    // as log((z - p)/(z - q)), single-valued outside the cap.
    let owner = |p: &Term| -> Option<usize> {
        caps.iter()
            .enumerate()
            .filter(|(_, (q, r))| p.displacement(*q).norm() < *r)
            .min_by(|a, b| {
                p.displacement(a.1 .0)
                    .norm()
                    .total_cmp(&p.displacement(b.1 .0).norm())
            })
            .map(|(i, _)| i)
    };
    let terms = eta.terms();
    let owners: Vec<Option<usize>> = terms.iter().map(owner).collect();
    let primitive = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, own) in terms.iter().zip(&owners) {
            if t.order == 1 {
                let base = own.map(|i| z - caps[i].0).unwrap_or(Complex64::new(1.0, 0.0));
                acc += t.coeff * (t.displacement(z) / base).ln();
            } else {
                let m = t.order;
                acc += -t.coeff * t.displacement(z).powi(1 - m) / f64::from(m - 1);
            }
        }
        acc
    };
    let mut total = Complex64::new(0.0, 0.0);
    for &(q, r) in caps {
        for j in 0..n {
            let u = Complex64::from_polar(1.0, TAU * j as f64 / n as f64);
            let z = q + r * u;
            let dz = Complex64::new(0.0, TAU / n as f64) * r * u;
            total += primitive(z) * (eta.eval(z)? * dz).conj();
        }
    }
    let sq = (Complex64::new(0.0, -0.5) * total).re;
    Ok(sq.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::presets;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn g1_data() -> (StableCurve, JumpData) {
        let curve = presets::genus_one();
        let omega = vec![RationalDifferential::third_kind(c(2.0, 0.0), c(-2.0, 0.0))];
        let data = initial_data(&omega, &curve, DataMode::Stable).unwrap();
        (curve, data)
    }

    #[test]
    fn initial_data_strips_node_poles() {
        let (_, data) = g1_data();
        let e = OrientedEdge::forward(0);
        assert_eq!(
            data.xi0(e),
            &RationalDifferential::monomial(c(-2.0, 0.0), 1, c(-1.0, 0.0))
        );
        assert_eq!(data.residue(e), c(1.0, 0.0));
        assert_eq!(data.residue(e.reversed()), c(-1.0, 0.0));
    }

    #[test]
    fn initial_data_rejects_unbalanced_residues() {
        let curve = presets::genus_one();
        let omega = vec![RationalDifferential::from_terms([
            crate::ratdiff::Term::new(c(2.0, 0.0), 1, c(1.0, 0.0)),
            crate::ratdiff::Term::new(c(-2.0, 0.0), 1, c(1.0, 0.0)),
            crate::ratdiff::Term::new(c(0.0, 5.0), 1, c(-2.0, 0.0)),
        ])];
        assert!(matches!(
            initial_data(&omega, &curve, DataMode::Stable),
            Err(JumpError::ResidueMismatch { .. })
        ));
    }

    #[test]
    fn higher_order_pole_rejected_in_stable_mode() {
        let curve = presets::genus_one();
        let omega = vec![RationalDifferential::monomial(c(2.0, 0.0), 2, c(1.0, 0.0))];
        assert!(matches!(
            initial_data(&omega, &curve, DataMode::Stable),
            Err(JumpError::HigherOrderPole { .. })
        ));
        assert!(initial_data(&omega, &curve, DataMode::General).is_ok());
    }

    #[test]
    fn zero_order_keeps_raw_jump() {
        let (curve, data) = g1_data();
        let params = PlumbingParams::uniform(1, 1e-3);
        let sol = iterate(&data, &curve, &params, &SolverSettings::fixed(0)).unwrap();
        assert_eq!(sol.order(), 0);
        assert!(sol.eta_total(0).is_zero());
        assert!(sol.max_jump_residual(16).unwrap() > 1e-4);
    }

    #[test]
    fn genus_one_jump_cancels() {
        let (curve, data) = g1_data();
        let params = PlumbingParams::uniform(1, 1e-4);
        let sol = iterate(&data, &curve, &params, &SolverSettings::default()).unwrap();
        let res = sol.max_jump_residual(32).unwrap();
        assert!(res < 1e-12, "{res} {:?} {:?}", sol.norms, sol.eta_total(0));
        assert!(sol.a_norm_residual()[0].norm() < 1e-12);
        assert!(sol.zeroseam_residual() < 1e-14);
        for k in 1..=sol.order() {
            assert!(sol.local_identity_residual(k, 16).unwrap() < 1e-12);
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let curve = presets::genus_two();
        let data = JumpData::zero(&curve);
        let params = PlumbingParams::uniform(2, 1e-3);
        let sol = iterate(&data, &curve, &params, &SolverSettings::default()).unwrap();
        assert_eq!(sol.order(), 0);
        assert_eq!(sol.l2_norm(0, 64).unwrap(), 0.0);
        assert!(sol.a_norm_residual().iter().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn contraction_threshold_enforced() {
        let curve = presets::totally_degenerate(&[(c(1.05, 0.0), c(-1.05, 0.0))]);
        let omega = vec![RationalDifferential::third_kind(c(1.05, 0.0), c(-1.05, 0.0))];
        let data = initial_data(&omega, &curve, DataMode::Stable).unwrap();
        let params = PlumbingParams::uniform(1, 0.9);
        let settings = SolverSettings {
            max_ratio: 0.1,
            ..SolverSettings::default()
        };
        let err = iterate(&data, &curve, &params, &settings).err();
        assert!(matches!(err, Some(JumpError::NonConvergence { .. })));
        let forced = SolverSettings {
            force: true,
            ..settings
        };
        assert!(iterate(&data, &curve, &params, &forced).is_ok());
    }

    #[test]
    fn first_order_sign_and_size() {
        let (curve, data) = g1_data();
        let params = PlumbingParams::uniform(1, 1e-3);
        let fo = first_order(&data, &curve, &params).unwrap();
        // ξ̃_{±1} = -1/4, so the coefficient of dz/(z-2)^2 is -s ξ̃_{-1} = s/4.
        assert!((fo[0].terms()[1].coeff - c(1e-3 / 4.0, 0.0)).norm() < 1e-18);
    }

    #[test]
    fn l2_of_double_pole_outside_unit_disk() {
        let eta = RationalDifferential::monomial(c(0.0, 0.0), 2, c(1.0, 0.0));
        let sq = l2_norm_outside_caps(&eta, &[(c(0.0, 0.0), 1.0)], 64).unwrap();
        assert!((sq - PI).abs() < 1e-12);
    }

    #[test]
    fn corrupted_eta_breaks_normalization() {
        let (curve, data) = g1_data();
        let params = PlumbingParams::uniform(1, 1e-3);
        let mut sol = iterate(&data, &curve, &params, &SolverSettings::default()).unwrap();
        sol.eta_sum[0] = &sol.eta_sum[0]
            + &RationalDifferential::third_kind(c(2.0, 0.0), c(-2.0, 0.0));
        let r = sol.a_norm_residual()[0];
        assert!((r - c(0.0, TAU)).norm() < 1e-12);
    }
}
