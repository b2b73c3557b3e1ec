//! Normalized differentials, B-periods and the period matrix of a plumbed
//! curve.
//!
//! A cycle is realised as a concrete path: inside each component it runs
//! along chart circles and straight segments between them, and it crosses
//! node `e` radially, from `z_e = 1` to `z_e = √s_e`, then from
//! `z_{-e} = √s_e` to `z_{-e} = 1`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, CyclePath, OrientedEdge, PlumbingParams, StableCurve, SymplecticBasis};
use crate::jump::{initial_data, iterate, DataMode, JumpData, JumpError, JumpSolution, SolverSettings};
use crate::ratdiff::{RatDiffError, RationalDifferential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeriodError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Jump(#[from] JumpError),
    #[error(transparent)]
    RatDiff(#[from] RatDiffError),
    #[error("cycle does not close up")]
    OpenCycle,
    #[error("no route inside component {vertex}: chart {blocker} blocks the path")]
    RouteBlocked { vertex: String, blocker: String },
}

/// Largest angle subtended by one chord of an arc.
const ARC_STEP: f64 = PI / 16.0;

/// Per-vertex differentials `v_k` for every B-cycle of `basis`: on the
/// component left by `e_i` and entered by `-e_{i-1}`, add
/// `dz/(z - q_{e_i}) - dz/(z - q_{-e_{i-1}})`.
pub fn normalized_basis(
    curve: &StableCurve,
    basis: &SymplecticBasis,
) -> Vec<Vec<RationalDifferential>> {
    basis
        .b_cycles
        .iter()
        .map(|cycle| {
            let mut per_vertex = vec![RationalDifferential::zero(); curve.n_vertices()];
            let n = cycle.edges.len();
            for i in 0..n {
                let exit = cycle.edges[i];
                let entry = cycle.edges[(i + n - 1) % n].reversed();
                let v = curve.source(exit);
                let w = RationalDifferential::third_kind(
                    curve.node_point(exit),
                    curve.node_point(entry),
                );
                per_vertex[v] = &per_vertex[v] + &w;
            }
            per_vertex
        })
        .collect()
}

/// Polyline points of an arc of the circle `|z - center| = radius`.
fn arc(center: Complex64, radius: f64, from: f64, to: f64) -> Vec<Complex64> {
    let steps = ((to - from).abs() / ARC_STEP).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|j| center + Complex64::from_polar(radius, from + (to - from) * j as f64 / steps as f64))
        .collect()
}

/// Signed angle `b - a` reduced to `(-π, π]`.
fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (b - a).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

/// Segment from `a` to `b`, bending around every chart disk in `disks`
/// that it meets, along the shorter side of its circle.
fn detoured_segment(
    curve: &StableCurve,
    v: usize,
    a: Complex64,
    b: Complex64,
    disks: &[OrientedEdge],
) -> Result<Vec<Complex64>, PeriodError> {
    let dir = b - a;
    let len2 = dir.norm_sqr();
    // (t_in, t_out, disk) for every crossing.
    let mut hits = Vec::new();
    for &e in disks {
        let m = curve.node_point(e);
        let r = curve.radius(e);
        let t_foot = ((m - a) * dir.conj()).re / len2;
        let foot = a + dir * t_foot.clamp(0.0, 1.0);
        if (foot - m).norm() >= r {
            continue;
        }
        let perp2 = (a + dir * t_foot - m).norm_sqr();
        let half = ((r * r - perp2) / len2).sqrt();
        let (t_in, t_out) = (t_foot - half, t_foot + half);
        if t_in <= 0.0 || t_out >= 1.0 {
            return Err(PeriodError::RouteBlocked {
                vertex: curve.vertex_names[v].clone(),
                blocker: curve.end_label(e),
            });
        }
        hits.push((t_in, t_out, e));
    }
    hits.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut pts = vec![a];
    for (t_in, t_out, e) in hits {
        let m = curve.node_point(e);
        let r = curve.radius(e);
        let start = (a + dir * t_in - m).arg();
        let end = (a + dir * t_out - m).arg();
        let mut sweep = angle_diff(start, end);
        if sweep == -PI {
            sweep = PI;
        }
        pts.extend(arc(m, r, start, start + sweep));
    }
    pts.push(b);
    Ok(pts)
}

/// Path inside component `v` from `z_{entry} = 1` to `z_{exit} = 1`.
fn component_route(
    curve: &StableCurve,
    entry: OrientedEdge,
    exit: OrientedEdge,
) -> Result<Vec<Complex64>, PeriodError> {
    let (qa, ra) = (curve.node_point(entry), curve.radius(entry));
    let (qb, rb) = (curve.node_point(exit), curve.radius(exit));
    if entry == exit {
        return Ok(vec![qa + ra]);
    }
    let v = curve.source(exit);
    let toward = (qb - qa).arg();
    let mut sweep_a = angle_diff(0.0, toward);
    if sweep_a == -PI {
        sweep_a = PI;
    }
    let mut pts = arc(qa, ra, 0.0, sweep_a);
    let away = toward + PI;
    let p = qa + Complex64::from_polar(ra, toward);
    let q = qb + Complex64::from_polar(rb, away);
    let others: Vec<OrientedEdge> = curve
        .ends_at(v)
        .into_iter()
        .filter(|&e| e != entry && e != exit)
        .collect();
    let seg = detoured_segment(curve, v, p, q, &others)?;
    pts.extend_from_slice(&seg[1..]);
    let mut sweep_b = angle_diff(away, 0.0);
    if sweep_b == -PI {
        sweep_b = PI;
    }
    pts.extend_from_slice(&arc(qb, rb, away, away + sweep_b)[1..]);
    Ok(pts)
}

/// Chart path from `from` to `to` along which `|z|` is monotone and `arg z`
/// is linear.
fn radial(from: Complex64, to: Complex64) -> Vec<Complex64> {
    let ratio = to / from;
    if ratio.im == 0.0 && ratio.re > 0.0 {
        return vec![from, to];
    }
    let log = ratio.ln();
    let steps = ((log.im.abs() / ARC_STEP).ceil() as usize).max(8);
    (0..=steps)
        .map(|j| from * (log * (j as f64 / steps as f64)).exp())
        .collect()
}

fn check_closed(curve: &StableCurve, cycle: &CyclePath) -> Result<(), PeriodError> {
    if cycle.edges.is_empty() || !cycle.is_closed(curve) {
        return Err(PeriodError::OpenCycle);
    }
    Ok(())
}

/// `∫_cycle Ω_s` for the glued differential of `sol`.
pub fn period_numeric(sol: &JumpSolution, cycle: &CyclePath) -> Result<Complex64, PeriodError> {
    let curve = &sol.curve;
    check_closed(curve, cycle)?;
    let glued: Vec<RationalDifferential> = (0..curve.n_vertices()).map(|v| sol.glued(v)).collect();
    let n = cycle.edges.len();
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let exit = cycle.edges[i];
        let entry = cycle.edges[(i + n - 1) % n].reversed();
        let v = curve.source(exit);
        total += glued[v].integrate_along(&component_route(curve, entry, exit)?)?;

        let s = sol.params.get(exit);
        let root = s.sqrt();
        let one = Complex64::new(1.0, 0.0);
        let back = exit.reversed();
        let out: Vec<Complex64> = radial(one, root).iter().map(|z| z * curve.radius(exit)).collect();
        total += glued[v].integrate_near(curve.node_point(exit), &out)?;
        let inn: Vec<Complex64> = radial(root, one).iter().map(|z| z * curve.radius(back)).collect();
        total += glued[curve.source(back)].integrate_near(curve.node_point(back), &inn)?;
    }
    Ok(total)
}

/// Small-`s` expansion of a period:
/// `Σ_e log_coeffs[e] Log s_e + constant + Σ_e linear_coeffs[e] s_e + O(s²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodExpansion {
    pub log_coeffs: Vec<Complex64>,
    pub constant: Complex64,
    pub linear_coeffs: Vec<Complex64>,
}

impl PeriodExpansion {
    pub fn evaluate(&self, params: &PlumbingParams) -> Complex64 {
        let mut total = self.constant;
        for (e, s) in params.s.iter().enumerate() {
            total += self.log_coeffs[e] * s.ln() + self.linear_coeffs[e] * s;
        }
        total
    }
}

/// Expansion of `∫_cycle Ω_s` for stable data `omega`, from the limit data
/// alone.
pub fn period_expansion(
    curve: &StableCurve,
    omega: &[RationalDifferential],
    cycle: &CyclePath,
) -> Result<PeriodExpansion, PeriodError> {
    check_closed(curve, cycle)?;
    let data = initial_data(omega, curve, DataMode::Stable)?;
    expansion_from_data(curve, &data, cycle)
}

fn expansion_from_data(
    curve: &StableCurve,
    data: &JumpData,
    cycle: &CyclePath,
) -> Result<PeriodExpansion, PeriodError> {
    let zero = Complex64::new(0.0, 0.0);
    let mut log_coeffs = vec![zero; curve.n_edges()];
    let mut linear_coeffs = vec![zero; curve.n_edges()];
    let mut constant = zero;
    let n = cycle.edges.len();
    for i in 0..n {
        let exit = cycle.edges[i];
        let entry = cycle.edges[(i + n - 1) % n].reversed();
        let v = curve.source(exit);
        let omega = &data.base[v];
        log_coeffs[exit.edge] += data.residue(exit);

        constant += omega.integrate_along(&component_route(curve, entry, exit)?)?;
        let (q_in, r_in) = (curve.node_point(entry), curve.radius(entry));
        let (q_out, r_out) = (curve.node_point(exit), curve.radius(exit));
        constant += data.xi0(entry).integrate_near(q_in, &[zero, Complex64::new(r_in, 0.0)])?;
        constant += data.xi0(exit).integrate_near(q_out, &[Complex64::new(r_out, 0.0), zero])?;

        for e in curve.ends_at(v) {
            let rho = curve.radius(e);
            let sigma = if e == exit || e == entry {
                rho / (q_in - q_out)
            } else {
                let q = curve.node_point(e);
                rho * (1.0 / (q_in - q) - 1.0 / (q_out - q))
            };
            linear_coeffs[e.edge] -= data.xi_tilde(curve, e.reversed())? * sigma;
        }
    }
    Ok(PeriodExpansion {
        log_coeffs,
        constant,
        linear_coeffs,
    })
}

/// Both sides of the node-crossing identity for edge end `e`:
/// the glued integral over the two radial pieces, and
/// `r_e Log s_e + Σ_k ∫_{1}^{s_e} ξ_e^(k) + Σ_k ∫_{s_e}^{1} ξ_{-e}^(k)` in chart
/// coordinates.
pub fn node_crossing_sides(
    sol: &JumpSolution,
    e: OrientedEdge,
) -> Result<(Complex64, Complex64), PeriodError> {
    let curve = &sol.curve;
    let back = e.reversed();
    let s = sol.params.get(e);
    let root = s.sqrt();
    let one = Complex64::new(1.0, 0.0);
    let (qe, re) = (curve.node_point(e), curve.radius(e));
    let (qb, rb) = (curve.node_point(back), curve.radius(back));
    let scaled = |pts: Vec<Complex64>, r: f64| -> Vec<Complex64> { pts.into_iter().map(|z| z * r).collect() };

    let lhs = sol.glued(curve.source(e)).integrate_near(qe, &scaled(radial(one, root), re))?
        + sol.glued(curve.source(back)).integrate_near(qb, &scaled(radial(root, one), rb))?;

    let xi_e: RationalDifferential = sol.xi.iter().map(|lvl| lvl[e.slot()].clone()).sum();
    let xi_b: RationalDifferential = sol.xi.iter().map(|lvl| lvl[back.slot()].clone()).sum();
    let rhs = sol.data.residue(e) * s.ln()
        + xi_e.integrate_near(qe, &scaled(radial(one, s), re))?
        + xi_b.integrate_near(qb, &scaled(radial(s, one), rb))?;
    Ok((lhs, rhs))
}

/// Period matrix `τ[h][k] = ∫_{B_h} v_k` of a plumbed curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMatrix {
    pub entries: Vec<Vec<Complex64>>,
    /// Largest solver tail bound over the normalized differentials.
    pub tail_bound: f64,
    /// Iteration depth per normalized differential.
    pub orders: Vec<usize>,
}

impl PeriodMatrix {
    pub fn genus(&self) -> usize {
        self.entries.len()
    }

    /// `max |τ_hk - τ_kh|`.
    pub fn asymmetry(&self) -> f64 {
        let g = self.genus();
        let mut worst: f64 = 0.0;
        for h in 0..g {
            for k in 0..h {
                worst = worst.max((self.entries[h][k] - self.entries[k][h]).norm());
            }
        }
        worst
    }
}

/// Solve for each normalized differential and integrate it over every
/// B-cycle. Rows are computed in parallel.
pub fn period_matrix_numeric(
    curve: &StableCurve,
    params: &PlumbingParams,
    settings: &SolverSettings,
) -> Result<(PeriodMatrix, Vec<JumpSolution>), PeriodError> {
    let basis = curve.symplectic_basis()?;
    let forms = normalized_basis(curve, &basis);
    let solutions: Vec<JumpSolution> = forms
        .par_iter()
        .map(|omega| {
            let data = initial_data(omega, curve, DataMode::Stable)?;
            Ok(iterate(&data, curve, params, settings)?)
        })
        .collect::<Result<_, PeriodError>>()?;
    let g = basis.genus();
    let mut entries = vec![vec![Complex64::new(0.0, 0.0); g]; g];
    for (k, sol) in solutions.iter().enumerate() {
        for (h, cycle) in basis.b_cycles.iter().enumerate() {
            entries[h][k] = period_numeric(sol, cycle)?;
        }
    }
    let tail_bound = solutions.iter().map(|s| s.tail_bound).fold(0.0, f64::max);
    let orders = solutions.iter().map(|s| s.order()).collect();
    Ok((
        PeriodMatrix {
            entries,
            tail_bound,
            orders,
        },
        solutions,
    ))
}

/// Expansion of every entry of the period matrix.
pub fn period_matrix_expansion(
    curve: &StableCurve,
) -> Result<Vec<Vec<PeriodExpansion>>, PeriodError> {
    let basis = curve.symplectic_basis()?;
    let forms = normalized_basis(curve, &basis);
    let data: Vec<JumpData> = forms
        .iter()
        .map(|omega| initial_data(omega, curve, DataMode::Stable))
        .collect::<Result<_, _>>()?;
    basis
        .b_cycles
        .iter()
        .map(|cycle| {
            data.iter()
                .map(|d| expansion_from_data(curve, d, cycle))
                .collect()
        })
        .collect()
}

/// `∮_{A_h} v_k` for every `h`, `k`, by residues of the glued forms inside
/// the seams.
pub fn a_periods(solutions: &[JumpSolution], basis: &SymplecticBasis) -> Vec<Vec<Complex64>> {
    basis
        .a_cycles
        .iter()
        .map(|&a| {
            solutions
                .iter()
                .map(|sol| {
                    let q = sol.curve.node_point(a);
                    let r = sol.curve.seam_radius(a, sol.params.get(a));
                    let v = sol.curve.source(a);
                    Complex64::new(0.0, TAU) * sol.glued(v).residues_inside(q, r)
                })
                .collect()
        })
        .collect()
}

/// Linear coefficient of `τ_hk` in `s_e`:
/// `-hol(v_k)(q_e) hol(v_h)(q_{-e}) - hol(v_k)(q_{-e}) hol(v_h)(q_e)`, with
/// `hol` the chart value of the node-regular part.
pub fn linear_coefficients_from_residuals(
    curve: &StableCurve,
) -> Result<Vec<Vec<Vec<Complex64>>>, PeriodError> {
    let basis = curve.symplectic_basis()?;
    let forms = normalized_basis(curve, &basis);
    let data: Vec<JumpData> = forms
        .iter()
        .map(|omega| initial_data(omega, curve, DataMode::Stable))
        .collect::<Result<_, _>>()?;
    let g = basis.genus();
    let mut out = vec![vec![vec![Complex64::new(0.0, 0.0); curve.n_edges()]; g]; g];
    for h in 0..g {
        for k in 0..g {
            for e in curve.oriented_edges() {
                let a = data[k].xi_tilde(curve, e)?;
                let b = data[h].xi_tilde(curve, e.reversed())?;
                out[h][k][e.edge] -= a * b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::presets;
    use crate::numerics::dist_mod_2pi_i;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn genus_one_constant_term() {
        let curve = presets::genus_one();
        let exp = period_matrix_expansion(&curve).unwrap();
        let e = &exp[0][0];
        assert_eq!(e.log_coeffs[0], c(1.0, 0.0));
        let want = c(-2.0 * 4f64.ln(), PI);
        assert!(dist_mod_2pi_i(e.constant, want) < 1e-13, "{}", e.constant);
        assert!((e.linear_coeffs[0] - c(-0.125, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn genus_one_numeric_matches_expansion() {
        let curve = presets::genus_one();
        let exp = period_matrix_expansion(&curve).unwrap();
        for s in [1e-2, 1e-3, 1e-4] {
            let params = PlumbingParams::uniform(1, s);
            let (tau, sols) =
                period_matrix_numeric(&curve, &params, &SolverSettings::default()).unwrap();
            let approx = exp[0][0].evaluate(&params);
            let d = (tau.entries[0][0] - approx).norm();
            assert!(d < 0.1 * s * s, "s={s}: {} vs {approx}, diff {d}", tau.entries[0][0]);
            let basis = curve.symplectic_basis().unwrap();
            let a = a_periods(&sols, &basis);
            assert!((a[0][0] - c(0.0, TAU)).norm() < 1e-12);
        }
    }

    #[test]
    fn node_crossing_identity_holds() {
        let curve = presets::genus_two();
        let basis = curve.symplectic_basis().unwrap();
        let forms = normalized_basis(&curve, &basis);
        let data = initial_data(&forms[1], &curve, DataMode::Stable).unwrap();
        let params = PlumbingParams::new(vec![c(1e-3, 0.0), c(2e-4, 1e-4)]);
        let sol = iterate(&data, &curve, &params, &SolverSettings::default()).unwrap();
        for e in curve.oriented_edges() {
            let (lhs, rhs) = node_crossing_sides(&sol, e).unwrap();
            assert!((lhs - rhs).norm() < 1e-12, "{}: {lhs} vs {rhs}", curve.end_label(e));
        }
    }

    #[test]
    fn genus_two_matrix_is_symmetric_and_normalized() {
        let curve = presets::genus_two();
        let params = PlumbingParams::new(vec![c(1e-3, 0.0), c(5e-4, 0.0)]);
        let (tau, sols) =
            period_matrix_numeric(&curve, &params, &SolverSettings::default()).unwrap();
        assert!(tau.asymmetry() < 1e-12, "{:?}", tau.entries);
        let basis = curve.symplectic_basis().unwrap();
        let a = a_periods(&sols, &basis);
        for h in 0..2 {
            for k in 0..2 {
                let want = if h == k { c(0.0, TAU) } else { c(0.0, 0.0) };
                assert!((a[h][k] - want).norm() < 1e-12);
            }
        }
        assert!(tau.entries[0][0].re < 0.0 && tau.entries[1][1].re < 0.0);
    }

    #[test]
    fn linear_terms_agree_two_ways() {
        for curve in [presets::genus_two(), presets::banana(), presets::theta()] {
            let exp = period_matrix_expansion(&curve).unwrap();
            let lin = linear_coefficients_from_residuals(&curve).unwrap();
            for h in 0..exp.len() {
                for k in 0..exp.len() {
                    for e in 0..curve.n_edges() {
                        let a = exp[h][k].linear_coeffs[e];
                        let b = lin[h][k][e];
                        assert!((a - b).norm() < 1e-13, "({h},{k}) e{e}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn blocked_route_detours() {
        // A chart sits on the straight line between the two loop ends.
        let curve = presets::totally_degenerate(&[
            (c(4.0, 0.0), c(-4.0, 0.0)),
            (c(0.0, 0.5), c(0.0, 9.0)),
        ]);
        let route = component_route(&curve, OrientedEdge::new(0, true), OrientedEdge::forward(0)).unwrap();
        for z in &route {
            for e in curve.oriented_edges() {
                assert!((z - curve.node_point(e)).norm() > 0.95 * curve.radius(e));
            }
        }
    }
}
