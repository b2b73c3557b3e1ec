//! Twisted differentials on a levelled nodal curve and the degenerating
//! families obtained by plumbing them with level-dependent scalings.
//!
//! Levels are `0, -1, ..., 1 - N`. A down-going edge end `e` (upper vertex at
//! level `i`, lower at `j < i`) has a zero of order `k_e` on the upper side
//! and a pole of order `k_e + 2` on the lower side; its plumbing parameter
//! satisfies `s_e^{k_e + 1} = t_{i,j}`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, OrientedEdge, PlumbingParams, StableCurve};
use crate::jump::{iterate, JumpData, JumpError, JumpSolution, SolverSettings};
use crate::numerics::winding_number;
use crate::ratdiff::{RatDiffError, RationalDifferential};

/// Relative tolerance for vanishing orders.
const ORDER_TOL: f64 = 1e-9;
/// Relative tolerance for residue identities.
const RESIDUE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwistedError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Jump(#[from] JumpError),
    #[error(transparent)]
    RatDiff(#[from] RatDiffError),
    #[error("expected {expected} per-vertex entries, got {got}")]
    VertexCount { expected: usize, got: usize },
    #[error("expected {expected} scaling parameters, got {got}")]
    LevelCount { expected: usize, got: usize },
    #[error("residues facing level {level} from {vertex} sum to {sum}")]
    ResidueCondition {
        vertex: String,
        level: i32,
        sum: Complex64,
    },
    #[error("down-going end {edge} has order {order:?} on its upper side")]
    BadUpperOrder { edge: String, order: Option<i32> },
    #[error("horizontal edge {edge} has no plumbing parameter")]
    MissingHorizontal { edge: String },
    #[error("initial data at {edge} has a principal part of size {size:.3e}")]
    NotHolomorphic { edge: String, size: f64 },
    #[error("incompatible twisted data: {0:?}")]
    Incompatible(Vec<Condition>),
}

/// Per-vertex differentials `Ξ_v` and a level function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwistedData {
    pub differentials: Vec<RationalDifferential>,
    pub levels: Vec<i32>,
}

impl TwistedData {
    pub fn new(
        differentials: Vec<RationalDifferential>,
        levels: Vec<i32>,
    ) -> Result<Self, TwistedError> {
        if differentials.len() != levels.len() {
            return Err(TwistedError::VertexCount {
                expected: levels.len(),
                got: differentials.len(),
            });
        }
        Ok(Self {
            differentials,
            levels,
        })
    }

    pub fn level(&self, v: usize) -> i32 {
        self.levels[v]
    }

    pub fn top_level(&self) -> i32 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    pub fn bottom_level(&self) -> i32 {
        self.levels.iter().copied().min().unwrap_or(0)
    }

    pub fn n_levels(&self) -> usize {
        (self.top_level() - self.bottom_level() + 1) as usize
    }

    /// `ord_{q_e} Ξ_{v(e)}`; `None` when `Ξ_{v(e)}` vanishes identically.
    pub fn node_order(&self, curve: &StableCurve, e: OrientedEdge) -> Option<i32> {
        self.differentials[curve.source(e)].order_at(curve.node_point(e), ORDER_TOL)
    }

    /// `E_v^j`: ends at `v` whose other side sits at level `j`.
    pub fn ends_facing(&self, curve: &StableCurve, v: usize, j: i32) -> Vec<OrientedEdge> {
        curve
            .ends_at(v)
            .into_iter()
            .filter(|&e| self.level(curve.source(e.reversed())) == j)
            .collect()
    }

    /// The end of `edge` on the higher level, or `None` for a horizontal edge.
    pub fn upper_end(&self, curve: &StableCurve, edge: usize) -> Option<OrientedEdge> {
        let e = OrientedEdge::forward(edge);
        let (a, b) = (
            self.level(curve.source(e)),
            self.level(curve.source(e.reversed())),
        );
        match a.cmp(&b) {
            std::cmp::Ordering::Greater => Some(e),
            std::cmp::Ordering::Less => Some(e.reversed()),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// One entry of the compatibility report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    MarkedOrders,
    PolesAtNodes,
    OrderSum,
    OppositeResidues,
    LevelOrder,
    GlobalResidue,
    Maxima,
}

impl Condition {
    pub const ALL: [Condition; 7] = [
        Condition::MarkedOrders,
        Condition::PolesAtNodes,
        Condition::OrderSum,
        Condition::OppositeResidues,
        Condition::LevelOrder,
        Condition::GlobalResidue,
        Condition::Maxima,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub checks: Vec<ConditionCheck>,
}

impl CompatibilityReport {
    pub fn is_clean(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<Condition> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.condition)
            .collect()
    }

    pub fn passed(&self, condition: Condition) -> bool {
        self.checks
            .iter()
            .any(|c| c.condition == condition && c.passed)
    }
}

fn near(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= 1e-12 * (1.0 + a.norm().max(b.norm()))
}

fn residues_cancel(values: &[Complex64]) -> bool {
    let sum: Complex64 = values.iter().sum();
    let mass: f64 = values.iter().map(|r| r.norm()).sum();
    sum.norm() <= RESIDUE_TOL * mass.max(1e-300)
}

/// Itemized check of every [`Condition`]. The maxima condition reads
/// `Ξ_v = Ω_v` on top-level components and `Ω_v = 0` below.
pub fn check_compatibility(
    curve: &StableCurve,
    twisted: &TwistedData,
    omega: &[RationalDifferential],
) -> Result<CompatibilityReport, TwistedError> {
    let nv = curve.n_vertices();
    for got in [twisted.differentials.len(), twisted.levels.len(), omega.len()] {
        if got != nv {
            return Err(TwistedError::VertexCount { expected: nv, got });
        }
    }
    let name = |v: usize| curve.vertex_names[v].as_str();
    let mut fails: Vec<Vec<String>> = vec![Vec::new(); Condition::ALL.len()];

    for m in &curve.marked {
        let got = twisted.differentials[m.vertex].order_at(m.point, ORDER_TOL);
        if got != Some(m.order as i32) {
            fails[0].push(format!(
                "marked point {} on {}: order {got:?}, expected {}",
                m.point,
                name(m.vertex),
                m.order
            ));
        }
    }

    for (v, xi) in twisted.differentials.iter().enumerate() {
        if xi.is_zero() {
            fails[1].push(format!("Ξ vanishes on {}", name(v)));
            continue;
        }
        if !xi.is_holomorphic_at_infinity(RESIDUE_TOL) {
            fails[1].push(format!("Ξ has a pole at infinity on {}", name(v)));
        }
        let nodes: Vec<Complex64> = curve
            .ends_at(v)
            .iter()
            .map(|&e| curve.node_point(e))
            .collect();
        for p in xi.poles() {
            if !nodes.iter().any(|&q| near(p, q)) {
                fails[1].push(format!("pole at {p} on {} is not a node", name(v)));
            }
        }
    }

    for edge in 0..curve.n_edges() {
        let e = OrientedEdge::forward(edge);
        let label = &curve.edges[edge].id;
        let (a, b) = (twisted.node_order(curve, e), twisted.node_order(curve, e.reversed()));
        let (Some(oa), Some(ob)) = (a, b) else {
            fails[2].push(format!("{label}: order undefined"));
            continue;
        };
        if oa + ob != -2 {
            fails[2].push(format!("{label}: orders {oa} + {ob} != -2"));
        }
        if oa == -1 && ob == -1 {
            let ra = twisted.differentials[curve.source(e)].residue(curve.node_point(e));
            let rb = twisted.differentials[curve.source(e.reversed())]
                .residue(curve.node_point(e.reversed()));
            if !residues_cancel(&[ra, rb]) {
                fails[3].push(format!("{label}: residues {ra} and {rb}"));
            }
        }
        let (la, lb) = (
            twisted.level(curve.source(e)),
            twisted.level(curve.source(e.reversed())),
        );
        let consistent = (la >= lb) == (oa >= ob)
            && (lb >= la) == (ob >= oa)
            && ((la == lb) == (oa == -1 && ob == -1));
        if !consistent {
            fails[4].push(format!(
                "{label}: levels ({la}, {lb}) against orders ({oa}, {ob})"
            ));
        }
    }

    for v in 0..nv {
        for j in twisted.bottom_level()..twisted.level(v) {
            let res: Vec<Complex64> = twisted
                .ends_facing(curve, v, j)
                .into_iter()
                .map(|e| {
                    let r = e.reversed();
                    twisted.differentials[curve.source(r)].residue(curve.node_point(r))
                })
                .collect();
            if !res.is_empty() && !residues_cancel(&res) {
                let sum: Complex64 = res.iter().sum();
                fails[5].push(format!(
                    "{} facing level {j}: residues sum to {sum}",
                    name(v)
                ));
            }
        }
    }

    let top = twisted.top_level();
    for v in 0..nv {
        let xi = &twisted.differentials[v];
        if twisted.level(v) == top {
            let diff = (xi - &omega[v]).scale();
            if omega[v].is_zero() || diff > 1e-12 * xi.scale().max(omega[v].scale()) {
                fails[6].push(format!("{}: Ξ and Ω differ on a top component", name(v)));
            }
        } else if !omega[v].is_zero() {
            fails[6].push(format!("{}: Ω is nonzero below the top level", name(v)));
        }
    }

    Ok(CompatibilityReport {
        checks: Condition::ALL
            .iter()
            .zip(fails)
            .map(|(&condition, failures)| ConditionCheck {
                condition,
                passed: failures.is_empty(),
                failures,
            })
            .collect(),
    })
}

/// `φ_{v,j} = Σ_{e ∈ E_v^j} r_e dz/(z - q_e)` with `r_e = -res_{q_{-e}} Ξ_{v(-e)}`.
pub fn modification_differential(
    curve: &StableCurve,
    twisted: &TwistedData,
    v: usize,
    j: i32,
) -> Result<RationalDifferential, TwistedError> {
    let ends = twisted.ends_facing(curve, v, j);
    let residues: Vec<Complex64> = ends
        .iter()
        .map(|&e| {
            let r = e.reversed();
            -twisted.differentials[curve.source(r)].residue(curve.node_point(r))
        })
        .collect();
    if !residues.is_empty() && !residues_cancel(&residues) {
        return Err(TwistedError::ResidueCondition {
            vertex: curve.vertex_names[v].clone(),
            level: j,
            sum: residues.iter().sum(),
        });
    }
    Ok(ends
        .iter()
        .zip(&residues)
        .map(|(&e, &r)| RationalDifferential::monomial(curve.node_point(e), 1, r))
        .sum())
}

/// Scaling parameters `t = (t_{-1}, ..., t_{1-N})`, one per level drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub t: Vec<Complex64>,
}

impl ScalingParams {
    pub fn new(t: Vec<Complex64>) -> Self {
        Self { t }
    }

    /// The same real `t` at every level drop.
    pub fn uniform(n_drops: usize, t: f64) -> Self {
        Self::new(vec![Complex64::new(t, 0.0); n_drops])
    }

    /// `t_{i,j} = Π_{k=j}^{i-1} t_k` for levels `i >= j`; `t_{i,i} = 1`.
    pub fn between(&self, i: i32, j: i32) -> Complex64 {
        (j..i)
            .map(|k| self.t[(-k - 1) as usize])
            .product()
    }

    pub fn norm(&self) -> f64 {
        self.t.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }
}

/// Choices left open by the level structure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingOptions {
    /// Explicit `s` for horizontal edges, by edge index.
    pub horizontal: Vec<(usize, Complex64)>,
    /// Used for horizontal edges without an explicit value and without
    /// adjacent down-going edges.
    pub horizontal_default: Option<Complex64>,
    /// Non-principal roots: `s_e` is multiplied by `exp(2πi b / (k_e + 1))`.
    pub branches: Vec<(usize, u32)>,
}

/// How far the produced `s` is from matching `t`: along parallel edges,
/// along descending paths, and between levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingAudit {
    /// Max over `v, j` of the spread of `s_e^{k_e+1}` within `E_v^j`,
    /// relative to `t_{l_v, j}`.
    pub parallel: f64,
    /// Max over strictly descending simple paths of the relative deviation
    /// of `Π s^{k+1}` from `t` between the endpoint levels.
    pub paths: f64,
    /// Max over vertex pairs of the relative deviation of the level
    /// potential, which covers pairs on equal levels.
    pub levels: f64,
    pub n_paths: usize,
}

impl ScalingAudit {
    pub fn max(&self) -> f64 {
        self.parallel.max(self.paths).max(self.levels)
    }
}

/// `s_e` for every edge: principal `(k_e + 1)`-th roots of `t_{i,j}` on
/// down-going edges; horizontal edges take the explicit value, else the
/// geometric mean of `|s|` over adjacent down-going edges, else the default.
pub fn scaling_to_plumbing(
    curve: &StableCurve,
    twisted: &TwistedData,
    t: &ScalingParams,
    options: &ScalingOptions,
) -> Result<(PlumbingParams, ScalingAudit), TwistedError> {
    let drops = twisted.n_levels() - 1;
    if t.t.len() != drops {
        return Err(TwistedError::LevelCount {
            expected: drops,
            got: t.t.len(),
        });
    }
    let ne = curve.n_edges();
    let mut s: Vec<Option<Complex64>> = vec![None; ne];
    let mut k_plus_one = vec![0u32; ne];
    for (edge, slot) in s.iter_mut().enumerate() {
        let Some(up) = twisted.upper_end(curve, edge) else {
            continue;
        };
        let order = twisted.node_order(curve, up);
        let k = match order {
            Some(k) if k >= 0 => k as u32,
            _ => {
                return Err(TwistedError::BadUpperOrder {
                    edge: curve.edges[edge].id.clone(),
                    order,
                })
            }
        };
        let (i, j) = (
            twisted.level(curve.source(up)),
            twisted.level(curve.source(up.reversed())),
        );
        let n = f64::from(k + 1);
        let target = t.between(i, j);
        let mut root = if k == 0 { target } else { (target.ln() / n).exp() };
        if let Some(&(_, b)) = options.branches.iter().find(|(e, _)| *e == edge) {
            root *= Complex64::from_polar(1.0, TAU * f64::from(b) / n);
        }
        *slot = Some(root);
        k_plus_one[edge] = k + 1;
    }
    let down = s.clone();
    for edge in 0..ne {
        if down[edge].is_some() {
            continue;
        }
        if let Some(&(_, value)) = options.horizontal.iter().find(|(e, _)| *e == edge) {
            s[edge] = Some(value);
            continue;
        }
        let e = OrientedEdge::forward(edge);
        let adjacent: BTreeSet<usize> = [curve.source(e), curve.source(e.reversed())]
            .iter()
            .flat_map(|&v| curve.ends_at(v))
            .map(|f| f.edge)
            .filter(|&f| down[f].is_some())
            .collect();
        s[edge] = if adjacent.is_empty() {
            options.horizontal_default
        } else {
            let mean_log = adjacent
                .iter()
                .map(|&f| down[f].expect("down edge").norm().ln())
                .sum::<f64>()
                / adjacent.len() as f64;
            Some(Complex64::new(mean_log.exp(), 0.0))
        };
        if s[edge].is_none() {
            return Err(TwistedError::MissingHorizontal {
                edge: curve.edges[edge].id.clone(),
            });
        }
    }
    let params = PlumbingParams::new(s.into_iter().map(|x| x.expect("assigned")).collect());
    let audit = audit_scaling(curve, twisted, t, &params, &k_plus_one);
    Ok((params, audit))
}

fn relative_gap(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn audit_scaling(
    curve: &StableCurve,
    twisted: &TwistedData,
    t: &ScalingParams,
    params: &PlumbingParams,
    k_plus_one: &[u32],
) -> ScalingAudit {
    let weight = |e: OrientedEdge| params.get(e).powu(k_plus_one[e.edge]);
    let nv = curve.n_vertices();

    let mut parallel: f64 = 0.0;
    for v in 0..nv {
        for j in twisted.bottom_level()..twisted.level(v) {
            let ends = twisted.ends_facing(curve, v, j);
            let target = t.between(twisted.level(v), j);
            for e in ends {
                parallel = parallel.max(relative_gap(weight(e), target));
            }
        }
    }

    // Strictly descending simple paths between every ordered pair.
    let mut paths: f64 = 0.0;
    let mut n_paths = 0usize;
    for start in 0..nv {
        let mut stack: Vec<(usize, Complex64)> = vec![(start, Complex64::new(1.0, 0.0))];
        while let Some((v, product)) = stack.pop() {
            for e in curve.ends_at(v) {
                let w = curve.source(e.reversed());
                if twisted.level(w) >= twisted.level(v) {
                    continue;
                }
                let next = product * weight(e);
                let target = t.between(twisted.level(start), twisted.level(w));
                paths = paths.max(relative_gap(next, target));
                n_paths += 1;
                stack.push((w, next));
            }
        }
    }

    // Potential along a spanning forest of non-horizontal edges: crossing a
    // down-going edge multiplies by s^{k+1}, crossing it upward divides.
    let mut potential: Vec<Option<Complex64>> = vec![None; nv];
    let mut levels: f64 = 0.0;
    for root in 0..nv {
        if potential[root].is_some() {
            continue;
        }
        potential[root] = Some(Complex64::new(1.0, 0.0));
        let mut members = vec![root];
        let mut queue = vec![root];
        while let Some(v) = queue.pop() {
            for e in curve.ends_at(v) {
                let w = curve.source(e.reversed());
                let (lv, lw) = (twisted.level(v), twisted.level(w));
                if lv == lw {
                    continue;
                }
                let step = if lv > lw { weight(e) } else { 1.0 / weight(e.reversed()) };
                let p = potential[v].expect("visited") * step;
                match potential[w] {
                    None => {
                        potential[w] = Some(p);
                        members.push(w);
                        queue.push(w);
                    }
                    Some(existing) => levels = levels.max(relative_gap(existing, p)),
                }
            }
        }
        for &a in &members {
            for &b in &members {
                let (la, lb) = (twisted.level(a), twisted.level(b));
                if la >= lb {
                    let ratio = potential[b].expect("visited") / potential[a].expect("visited");
                    levels = levels.max(relative_gap(ratio, t.between(la, lb)));
                }
            }
        }
    }

    ScalingAudit {
        parallel,
        paths,
        levels,
        n_paths,
    }
}

/// The glued family with its per-vertex bookkeeping.
#[derive(Debug, Clone)]
pub struct TwistedFamily {
    pub solution: JumpSolution,
    pub twisted: TwistedData,
    pub scaling: ScalingParams,
    pub audit: ScalingAudit,
    /// `Ξ̂_v`.
    pub modified: Vec<RationalDifferential>,
    /// `t_{0, l_v}` per vertex.
    pub vertex_scale: Vec<Complex64>,
}

/// Build the initial data from `Ξ̂`, plumb with the `s` induced by `t`, and
/// solve the jump problem.
pub fn build_twisted_family(
    curve: &StableCurve,
    twisted: &TwistedData,
    t: &ScalingParams,
    options: &ScalingOptions,
    settings: &SolverSettings,
) -> Result<TwistedFamily, TwistedError> {
    let (params, audit) = scaling_to_plumbing(curve, twisted, t, options)?;
    let data = twisted_initial_data(curve, twisted, t, &params)?;
    let solution = iterate(&data.0, curve, &params, settings)?;
    Ok(TwistedFamily {
        solution,
        twisted: twisted.clone(),
        scaling: t.clone(),
        audit,
        modified: data.1,
        vertex_scale: data.2,
    })
}

/// Jump data of the twisted construction, the modified differentials and
/// the per-vertex scales. Every condition except the maxima one must hold.
pub fn twisted_initial_data(
    curve: &StableCurve,
    twisted: &TwistedData,
    t: &ScalingParams,
    params: &PlumbingParams,
) -> Result<(JumpData, Vec<RationalDifferential>, Vec<Complex64>), TwistedError> {
    let omega: Vec<RationalDifferential> = (0..curve.n_vertices())
        .map(|v| {
            if twisted.level(v) == twisted.top_level() {
                twisted.differentials[v].clone()
            } else {
                RationalDifferential::zero()
            }
        })
        .collect();
    let report = check_compatibility(curve, twisted, &omega)?;
    let failed: Vec<Condition> = report
        .failed()
        .into_iter()
        .filter(|&c| c != Condition::Maxima)
        .collect();
    if !failed.is_empty() {
        return Err(TwistedError::Incompatible(failed));
    }
    let top = twisted.top_level();
    let nv = curve.n_vertices();
    let mut modified = Vec::with_capacity(nv);
    for v in 0..nv {
        let i = twisted.level(v);
        let mut hat = twisted.differentials[v].clone();
        for j in twisted.bottom_level()..i {
            let phi = modification_differential(curve, twisted, v, j)?;
            hat = hat + phi * t.between(i, j);
        }
        modified.push(hat);
    }
    let vertex_scale: Vec<Complex64> = (0..nv)
        .map(|v| t.between(top, twisted.level(v)))
        .collect();

    let mut xi0 = vec![RationalDifferential::zero(); 2 * curve.n_edges()];
    for edge in 0..curve.n_edges() {
        match twisted.upper_end(curve, edge) {
            Some(up) => {
                let low = up.reversed();
                let (vu, vl) = (curve.source(up), curve.source(low));
                let q_low = curve.node_point(low);
                let principal = modified[vl].principal_part_at(q_low);
                let pulled = principal.pullback(&curve.gluing_map(up, params.get(up)));
                let drop = t.between(twisted.level(vu), twisted.level(vl));
                let upper = (&modified[vu] - &(pulled * drop)) * vertex_scale[vu];
                xi0[up.slot()] = strip_node(curve, up, upper)?;
                xi0[low.slot()] = modified[vl].holomorphic_part_at(q_low) * vertex_scale[vl];
            }
            None => {
                for e in [OrientedEdge::forward(edge), OrientedEdge::forward(edge).reversed()] {
                    let v = curve.source(e);
                    xi0[e.slot()] =
                        modified[v].holomorphic_part_at(curve.node_point(e)) * vertex_scale[v];
                }
            }
        }
    }
    let base: Vec<RationalDifferential> = modified
        .iter()
        .zip(&vertex_scale)
        .map(|(m, &c)| m * c)
        .collect();
    let residues = curve
        .oriented_edges()
        .map(|e| base[curve.source(e)].residue(curve.node_point(e)))
        .collect();
    Ok((
        JumpData {
            base,
            xi0,
            residues,
        },
        modified,
        vertex_scale,
    ))
}

/// Remove the (cancelled) principal part at the node, refusing if it is
/// not negligible.
fn strip_node(
    curve: &StableCurve,
    e: OrientedEdge,
    xi: RationalDifferential,
) -> Result<RationalDifferential, TwistedError> {
    let q = curve.node_point(e);
    let leftover = xi.principal_part_at(q).scale();
    let rest = xi.holomorphic_part_at(q);
    if leftover > 1e-10 * rest.scale().max(1e-300) {
        return Err(TwistedError::NotHolomorphic {
            edge: curve.end_label(e),
            size: leftover,
        });
    }
    Ok(rest)
}

impl TwistedFamily {
    pub fn params(&self) -> &PlumbingParams {
        &self.solution.params
    }

    /// `sup |t_{0,l_v}^{-1} Ξ_t(z) - Ξ_v(z)|` over `samples` on `C_v`.
    pub fn rescaled_error(&self, v: usize, samples: &[Complex64]) -> Result<f64, TwistedError> {
        let mut sup: f64 = 0.0;
        for &z in samples {
            let glued = self.solution.eval_glued(v, z)? / self.vertex_scale[v];
            let limit = self.twisted.differentials[v].eval(z)?;
            sup = sup.max((glued - limit).norm());
        }
        Ok(sup)
    }

    /// Zeros of `Ξ_t` on `C_v` inside the circle, counted with multiplicity.
    pub fn zero_count(&self, v: usize, center: Complex64, radius: f64, n: usize) -> i64 {
        let glued = self.solution.glued(v);
        winding_number(
            |z| glued.eval(z).unwrap_or(Complex64::new(f64::NAN, 0.0)),
            center,
            radius,
            n,
        )
    }

    /// Count for every marked point on a circle of [`cluster_radius`].
    pub fn zero_clusters(&self, n: usize) -> Vec<(usize, i64)> {
        let curve = &self.solution.curve;
        (0..curve.marked.len())
            .map(|k| {
                let m = &curve.marked[k];
                let r = cluster_radius(curve, k);
                (k, self.zero_count(m.vertex, m.point, r, n))
            })
            .collect()
    }
}

/// Points on the chart boundaries `|z - q_e| = ρ_e` of `C_v`: a compact set
/// away from the nodes.
pub fn compact_samples(curve: &StableCurve, v: usize, per_end: usize) -> Vec<Complex64> {
    curve
        .ends_at(v)
        .into_iter()
        .flat_map(|e| {
            crate::numerics::circle_points(curve.node_point(e), curve.radius(e), per_end)
        })
        .collect()
}

/// Half the distance from marked point `k` to the nearest other marked
/// point or chart boundary on its component.
pub fn cluster_radius(curve: &StableCurve, k: usize) -> f64 {
    let m = &curve.marked[k];
    let others = curve
        .marked
        .iter()
        .enumerate()
        .filter(|&(i, o)| i != k && o.vertex == m.vertex)
        .map(|(_, o)| (o.point - m.point).norm());
    let charts = curve
        .ends_at(m.vertex)
        .into_iter()
        .map(|e| (curve.node_point(e) - m.point).norm() - curve.radius(e));
    0.5 * others.chain(charts).fold(f64::INFINITY, f64::min).min(1.0)
}

/// Worked configurations and planted violations.
pub mod presets {
    use super::*;
    use crate::curve::{Edge, MarkedPoint};

    /// A curve with its twisted differential and the limit `Ω`.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TwistedScenario {
        pub curve: StableCurve,
        pub twisted: TwistedData,
        pub omega: Vec<RationalDifferential>,
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn edge(id: &str, from: usize, to: usize, q_from: Complex64, q_to: Complex64) -> Edge {
        Edge {
            id: id.to_string(),
            from,
            to,
            q_from,
            q_to,
            rho_from: 1.0,
            rho_to: 1.0,
        }
    }

    fn mark_zeros(curve: &mut StableCurve, v: usize, xi: &RationalDifferential) {
        for z in xi.zeros() {
            curve.marked.push(MarkedPoint {
                vertex: v,
                point: z,
                order: 1,
            });
        }
    }

    fn limit(twisted: &TwistedData) -> Vec<RationalDifferential> {
        let top = twisted.top_level();
        twisted
            .differentials
            .iter()
            .zip(&twisted.levels)
            .map(|(x, &l)| if l == top { x.clone() } else { RationalDifferential::zero() })
            .collect()
    }

    /// Lower differential with prescribed double poles `c_i/(w - p_i)^2`
    /// matched to the upper values `f_i` (`c_i = -ρρ' f_i`) plus simple
    /// poles with the given residues.
    fn matched_lower(
        points: &[Complex64],
        upper_values: &[Complex64],
        residues: &[Complex64],
    ) -> RationalDifferential {
        points
            .iter()
            .zip(upper_values)
            .zip(residues)
            .map(|((&p, &f), &r)| {
                RationalDifferential::monomial(p, 2, -f) + RationalDifferential::monomial(p, 1, r)
            })
            .sum()
    }

    /// Top component `top` (level 0) with a self-loop and two edges down to
    /// `bottom` (level -1). All node orders are `(0, -2)` or `(-1, -1)`;
    /// the bottom differential is prong-matched to the top one.
    pub fn two_level() -> TwistedScenario {
        let mut curve = StableCurve {
            vertex_names: vec!["top".into(), "bottom".into()],
            edges: vec![
                edge("loop", 0, 0, c(2.0, 0.0), c(-2.0, 0.0)),
                edge("d1", 0, 1, c(0.0, 2.0), c(2.5, 0.0)),
                edge("d2", 0, 1, c(0.0, -2.0), c(-2.5, 0.0)),
            ],
            marked: Vec::new(),
        };
        let top = RationalDifferential::third_kind(c(2.0, 0.0), c(-2.0, 0.0));
        let f: Vec<Complex64> = [c(0.0, 2.0), c(0.0, -2.0)]
            .iter()
            .map(|&q| top.eval(q).expect("regular"))
            .collect();
        let r = c(0.25, 0.1);
        let bottom = matched_lower(&[c(2.5, 0.0), c(-2.5, 0.0)], &f, &[r, -r]);
        mark_zeros(&mut curve, 1, &bottom);
        let twisted = TwistedData::new(vec![top, bottom], vec![0, -1]).expect("sizes");
        TwistedScenario {
            omega: limit(&twisted),
            curve,
            twisted,
        }
    }

    /// Two self-loops on top and two edges down with upper orders 0 and 1,
    /// so the induced parameters are `t` and `t^{1/2}`.
    pub fn mixed_orders() -> TwistedScenario {
        let loops = [c(3.0, 0.0), c(-3.0, 0.0), c(0.0, 3.0), c(0.0, -3.0)];
        let (q1, q2) = (c(-1.5, 1.5), c(-1.5, -1.5));
        let (p1, p2) = (c(2.5, 0.0), c(-2.5, 0.0));
        let mut curve = StableCurve {
            vertex_names: vec!["top".into(), "bottom".into()],
            edges: vec![
                edge("l1", 0, 0, loops[0], loops[1]),
                edge("l2", 0, 0, loops[2], loops[3]),
                edge("d1", 0, 1, q1, p1),
                edge("d2", 0, 1, q2, p2),
            ],
            marked: Vec::new(),
        };
        // Ξ_top = (z - q2)(z - x) / Π(z - loop points); the free zero x makes
        // the residues on the first loop opposite (the second follows).
        let cofactor = |a: Complex64| {
            let others: Complex64 = loops.iter().filter(|&&b| b != a).map(|&b| a - b).product();
            (a - q2) / others
        };
        let (ca, cb) = (cofactor(loops[0]), cofactor(loops[1]));
        let x = (loops[0] * ca + loops[1] * cb) / (ca + cb);
        let simple: Vec<(Complex64, u32)> = loops.iter().map(|&p| (p, 1)).collect();
        let top = RationalDifferential::from_factored(c(1.0, 0.0), &[q2, x], &simple)
            .expect("degree");
        curve.marked.push(MarkedPoint {
            vertex: 0,
            point: x,
            order: 1,
        });
        let f1 = top.eval(q1).expect("regular");
        let df2 = top.eval_derivative(q2).expect("regular");
        let r = c(0.01, 0.0);
        let bottom = RationalDifferential::monomial(p1, 2, -f1)
            + RationalDifferential::monomial(p1, 1, r)
            + RationalDifferential::monomial(p2, 3, -df2)
            + RationalDifferential::monomial(p2, 1, -r);
        mark_zeros(&mut curve, 1, &bottom);
        let twisted = TwistedData::new(vec![top, bottom], vec![0, -1]).expect("sizes");
        TwistedScenario {
            omega: limit(&twisted),
            curve,
            twisted,
        }
    }

    /// Two top components, each with a self-loop and two edges to one
    /// bottom component. Bottom residues are `r_a ± δ`-perturbed on the
    /// first top's edges: `δ = 0` satisfies the residue condition.
    pub fn v_shape(delta: f64) -> TwistedScenario {
        let mut edges = Vec::new();
        let bottom_points = [c(2.5, 0.0), c(-2.5, 0.0), c(0.0, 2.5), c(0.0, -2.5)];
        for (v, id) in [(0usize, "a"), (1, "b")] {
            edges.push(edge(&format!("loop_{id}"), v, v, c(2.0, 0.0), c(-2.0, 0.0)));
            edges.push(edge(&format!("{id}1"), v, 2, c(0.0, 2.0), bottom_points[2 * v]));
            edges.push(edge(&format!("{id}2"), v, 2, c(0.0, -2.0), bottom_points[2 * v + 1]));
        }
        let mut curve = StableCurve {
            vertex_names: vec!["top_a".into(), "top_b".into(), "bottom".into()],
            edges,
            marked: Vec::new(),
        };
        let top = RationalDifferential::third_kind(c(2.0, 0.0), c(-2.0, 0.0));
        let f = top.eval(c(0.0, 2.0)).expect("regular");
        let g = top.eval(c(0.0, -2.0)).expect("regular");
        let (ra, rb) = (c(0.2, 0.0), c(-0.1, 0.15));
        let d = c(delta, 0.0);
        let bottom = matched_lower(
            &bottom_points,
            &[f, g, f, g],
            &[ra + d, -ra, rb - d, -rb],
        );
        mark_zeros(&mut curve, 2, &bottom);
        let twisted =
            TwistedData::new(vec![top.clone(), top, bottom], vec![0, 0, -1]).expect("sizes");
        TwistedScenario {
            omega: limit(&twisted),
            curve,
            twisted,
        }
    }

    /// Two components on the same level joined by two nodes whose residues
    /// agree instead of being opposite; each carries a self-loop.
    pub fn equal_residues() -> TwistedScenario {
        let mut curve = StableCurve {
            vertex_names: vec!["left".into(), "right".into()],
            edges: vec![
                edge("loop_l", 0, 0, c(2.0, 0.0), c(-2.0, 0.0)),
                edge("loop_r", 1, 1, c(2.0, 0.0), c(-2.0, 0.0)),
                edge("h1", 0, 1, c(0.0, 2.0), c(0.0, 2.0)),
                edge("h2", 0, 1, c(0.0, -2.0), c(0.0, -2.0)),
            ],
            marked: Vec::new(),
        };
        let r = c(0.0, 0.5);
        let side = |loop_res: Complex64| {
            RationalDifferential::third_kind(c(2.0, 0.0), c(-2.0, 0.0)) * loop_res
                + RationalDifferential::third_kind(c(0.0, 2.0), c(0.0, -2.0)) * r
        };
        let (left, right) = (side(c(1.0, 0.0)), side(c(0.7, 0.2)));
        mark_zeros(&mut curve, 0, &left);
        mark_zeros(&mut curve, 1, &right);
        let twisted = TwistedData::new(vec![left, right], vec![0, 0]).expect("sizes");
        TwistedScenario {
            omega: limit(&twisted),
            curve,
            twisted,
        }
    }

    /// Seven violations, each designed to break exactly one condition.
    pub fn faults() -> Vec<(Condition, TwistedScenario)> {
        let base = two_level();
        let mut out = Vec::new();

        let mut s = base.clone();
        s.curve.marked[0].point += c(0.05, 0.0);
        out.push((Condition::MarkedOrders, s));

        let mut s = base.clone();
        let extra = RationalDifferential::monomial(c(0.3, 0.4), 2, c(1e-2, 0.0));
        s.twisted.differentials[0] = &s.twisted.differentials[0] + &extra;
        s.omega[0] = s.twisted.differentials[0].clone();
        out.push((Condition::PolesAtNodes, s));

        // Multiply the bottom differential by (w - b)/(w - p): the pole at p
        // becomes triple while the marked zeros stay put.
        let mut s = base.clone();
        let bottom = &s.twisted.differentials[1];
        let p = s.curve.edges[1].q_to;
        let other = s.curve.edges[2].q_to;
        let zeros: Vec<Complex64> = s.curve.marked.iter().map(|m| m.point).collect();
        let probe = c(0.3, -1.1);
        let lead = bottom.eval(probe).expect("regular")
            * (probe - p).powi(2)
            * (probe - other).powi(2)
            / zeros.iter().map(|&z| probe - z).product::<Complex64>();
        let mut all_zeros = zeros;
        all_zeros.push(c(0.0, 1.5));
        s.twisted.differentials[1] =
            RationalDifferential::from_factored(lead, &all_zeros, &[(p, 3), (other, 2)])
                .expect("degree");
        out.push((Condition::OrderSum, s));

        out.push((Condition::OppositeResidues, equal_residues()));

        let mut s = base.clone();
        s.twisted.levels = vec![-1, 0];
        s.omega = limit(&s.twisted);
        out.push((Condition::LevelOrder, s));

        out.push((Condition::GlobalResidue, v_shape(0.05)));

        let mut s = base;
        s.omega[0] = s.omega[0].scaled(c(2.0, 0.0));
        out.push((Condition::Maxima, s));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn presets_are_admissible_and_compatible() {
        for s in [two_level(), mixed_orders(), v_shape(0.0)] {
            assert!(s.curve.validate().is_empty(), "{:?}", s.curve.validate());
            let report = check_compatibility(&s.curve, &s.twisted, &s.omega).unwrap();
            assert!(report.is_clean(), "{:?}", report);
        }
    }

    #[test]
    fn two_level_orders() {
        let s = two_level();
        let d1 = OrientedEdge::forward(1);
        assert_eq!(s.twisted.node_order(&s.curve, d1), Some(0));
        assert_eq!(s.twisted.node_order(&s.curve, d1.reversed()), Some(-2));
        assert_eq!(s.twisted.upper_end(&s.curve, 1), Some(d1));
        assert_eq!(s.twisted.upper_end(&s.curve, 0), None);
    }

    #[test]
    fn each_fault_breaks_only_its_condition() {
        for (condition, s) in faults() {
            assert!(s.curve.validate().is_empty(), "{condition:?}: {:?}", s.curve.validate());
            let report = check_compatibility(&s.curve, &s.twisted, &s.omega).unwrap();
            assert_eq!(report.failed(), vec![condition], "{report:#?}");
        }
    }

    #[test]
    fn modification_differentials() {
        let s = two_level();
        let phi = modification_differential(&s.curve, &s.twisted, 0, -1).unwrap();
        // Residues -r at q_{d1}, +r at q_{d2}.
        let r = c(0.25, 0.1);
        assert!((phi.residue(c(0.0, 2.0)) + r).norm() < 1e-15);
        assert!((phi.residue(c(0.0, -2.0)) - r).norm() < 1e-15);
        assert_eq!(phi.len(), 2);
        // Nothing faces a lower level from the bottom.
        assert!(modification_differential(&s.curve, &s.twisted, 1, -2)
            .unwrap()
            .is_zero());

        let v = v_shape(0.0);
        for top in 0..2 {
            let phi = modification_differential(&v.curve, &v.twisted, top, -1).unwrap();
            assert_eq!(phi.poles().len(), 2);
            assert!(phi.is_holomorphic_at_infinity(1e-14));
        }
        let bad = v_shape(0.05);
        assert!(matches!(
            modification_differential(&bad.curve, &bad.twisted, 0, -1),
            Err(TwistedError::ResidueCondition { .. })
        ));
    }

    #[test]
    fn scaling_single_drop_and_mixed_orders() {
        let s = two_level();
        let t = ScalingParams::new(vec![c(1e-3, 2e-4)]);
        let (p, audit) = scaling_to_plumbing(&s.curve, &s.twisted, &t, &Default::default()).unwrap();
        assert_eq!(p.s[1], t.t[0]);
        assert_eq!(p.s[2], t.t[0]);
        assert!((p.s[0].norm() - t.t[0].norm()).abs() < 1e-18);
        assert!(audit.max() < 1e-14, "{audit:?}");

        let m = mixed_orders();
        let t = ScalingParams::uniform(1, 1e-4);
        let (p, audit) = scaling_to_plumbing(&m.curve, &m.twisted, &t, &Default::default()).unwrap();
        assert_eq!(p.s[2], c(1e-4, 0.0));
        assert!((p.s[3] - c(1e-2, 0.0)).norm() < 1e-17);
        assert!(audit.max() < 1e-14, "{audit:?}");
        // The other square root is also consistent.
        let opts = ScalingOptions {
            branches: vec![(3, 1)],
            ..Default::default()
        };
        let (p, audit) = scaling_to_plumbing(&m.curve, &m.twisted, &t, &opts).unwrap();
        assert!((p.s[3] + c(1e-2, 0.0)).norm() < 1e-17);
        assert!(audit.max() < 1e-14);
    }

    #[test]
    fn path_products_over_three_levels() {
        // a (0) -> b (-1) -> c (-2) and a -> c directly.
        let scenario = three_level();
        let t = ScalingParams::new(vec![c(1e-2, 0.0), c(3e-3, 1e-3)]);
        assert_eq!(t.between(0, -2), t.t[0] * t.t[1]);
        let (p, audit) =
            scaling_to_plumbing(&scenario.curve, &scenario.twisted, &t, &Default::default()).unwrap();
        assert!(audit.n_paths >= 3);
        assert!(audit.max() < 1e-14, "{audit:?}");
        assert!((p.s[1] * p.s[2] - p.s[3]).norm() < 1e-16);
    }

    /// Only the orders matter for scaling; the differentials here are
    /// generic with the right node orders.
    fn three_level() -> TwistedScenario {
        let edge = |id: &str, from, to, a: Complex64, b: Complex64| crate::curve::Edge {
            id: id.into(),
            from,
            to,
            q_from: a,
            q_to: b,
            rho_from: 1.0,
            rho_to: 1.0,
        };
        let curve = StableCurve {
            vertex_names: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![
                edge("loop", 0, 0, c(3.0, 0.0), c(-3.0, 0.0)),
                edge("ab", 0, 1, c(0.0, 3.0), c(0.0, 3.0)),
                edge("bc", 1, 2, c(0.0, -3.0), c(0.0, -3.0)),
                edge("ac", 0, 2, c(0.0, -3.0), c(0.0, 3.0)),
            ],
            marked: Vec::new(),
        };
        let a = RationalDifferential::third_kind(c(3.0, 0.0), c(-3.0, 0.0));
        let b = RationalDifferential::monomial(c(0.0, 3.0), 2, c(1.0, 0.0));
        let cc = RationalDifferential::monomial(c(0.0, -3.0), 2, c(1.0, 0.0))
            + RationalDifferential::monomial(c(0.0, 3.0), 2, c(1.0, 0.0));
        let twisted = TwistedData::new(vec![a, b, cc], vec![0, -1, -2]).unwrap();
        TwistedScenario {
            omega: Vec::new(),
            curve,
            twisted,
        }
    }

    #[test]
    fn single_level_reduces_to_stable_solve() {
        use crate::jump::{initial_data, DataMode};
        let curve = crate::curve::presets::genus_two();
        let omega = vec![
            RationalDifferential::third_kind(c(2.0, 0.0), c(-2.0, 0.0))
                + RationalDifferential::third_kind(c(3.0, 5.0), c(-1.0, 5.0)) * c(0.5, 0.0),
        ];
        let twisted = TwistedData::new(omega.clone(), vec![0]).unwrap();
        let opts = ScalingOptions {
            horizontal_default: Some(c(1e-3, 0.0)),
            ..Default::default()
        };
        let fam = build_twisted_family(
            &curve,
            &twisted,
            &ScalingParams::new(Vec::new()),
            &opts,
            &SolverSettings::default(),
        )
        .unwrap();
        let data = initial_data(&omega, &curve, DataMode::Stable).unwrap();
        let plain = iterate(&data, &curve, &PlumbingParams::uniform(2, 1e-3), &SolverSettings::default())
            .unwrap();
        let z = c(0.3, 1.7);
        let a = fam.solution.eval_glued(0, z).unwrap();
        let b = plain.eval_glued(0, z).unwrap();
        assert!((a - b).norm() < 1e-15 * a.norm().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn initial_data_is_holomorphic_and_consistent() {
        let s = mixed_orders();
        let t = ScalingParams::uniform(1, 1e-3);
        let (params, _) = scaling_to_plumbing(&s.curve, &s.twisted, &t, &Default::default()).unwrap();
        let (data, modified, scale) = twisted_initial_data(&s.curve, &s.twisted, &t, &params).unwrap();
        for e in s.curve.oriented_edges() {
            let q = s.curve.node_point(e);
            let lau = data.xi0(e).chart_expansion(q, s.curve.radius(e), 4).unwrap();
            assert!(lau.min_index >= 0, "{}", s.curve.end_label(e));
            // ξ_e - I_e^* ξ_{-e} = t_{0,i} Ξ̂_v - t_{0,j} I_e^* Ξ̂_{v(-e)} near the seam.
            let map = s.curve.gluing_map(e, params.get(e));
            let v = s.curve.source(e);
            let w = s.curve.source(e.reversed());
            let z = q + Complex64::from_polar(0.7 * s.curve.radius(e), 0.4);
            let lhs = data.xi0(e).eval(z).unwrap()
                - data.xi0(e.reversed()).eval(map.apply(z)).unwrap() * map.derivative(z);
            let rhs = modified[v].eval(z).unwrap() * scale[v]
                - modified[w].eval(map.apply(z)).unwrap() * map.derivative(z) * scale[w];
            assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()), "{lhs} vs {rhs}");
        }
    }
}
