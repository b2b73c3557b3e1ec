//! Stable curves with rational components: dual graph, node points, affine
//! charts, plumbing parameters and a symplectic basis of cycles.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratdiff::GluingMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("dual graph is disconnected")]
    Disconnected,
    #[error("expected {expected} plumbing parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("plumbing parameter for edge {edge} has |s| = {modulus}, outside (0, 1)")]
    ParamRange { edge: String, modulus: f64 },
}

/// One end of a node. `flipped == false` is the `from` end of the edge as
/// listed in the curve description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrientedEdge {
    pub edge: usize,
    pub flipped: bool,
}

impl OrientedEdge {
    pub fn new(edge: usize, flipped: bool) -> Self {
        Self { edge, flipped }
    }

    pub fn forward(edge: usize) -> Self {
        Self::new(edge, false)
    }

    /// The opposite end `-e`.
    pub fn reversed(self) -> Self {
        Self::new(self.edge, !self.flipped)
    }

    /// Dense index in `0..2 * n_edges`.
    pub fn slot(self) -> usize {
        2 * self.edge + usize::from(self.flipped)
    }

    pub fn from_slot(slot: usize) -> Self {
        Self::new(slot / 2, slot % 2 == 1)
    }

    pub fn sign(self) -> i32 {
        if self.flipped {
            -1
        } else {
            1
        }
    }
}

/// A node: the edge `from -> to` with its two preimages and chart radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub q_from: Complex64,
    pub q_to: Complex64,
    pub rho_from: f64,
    pub rho_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub vertex: usize,
    pub point: Complex64,
    pub order: u32,
}

/// The dual graph: vertices `0..n_vertices`, edges with a `from` and a `to`
/// end. Self-loops have `from == to`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGraph {
    pub n_vertices: usize,
    pub ends: Vec<(usize, usize)>,
}

impl DualGraph {
    pub fn source(&self, e: OrientedEdge) -> usize {
        let (a, b) = self.ends[e.edge];
        if e.flipped {
            b
        } else {
            a
        }
    }

    pub fn n_edges(&self) -> usize {
        self.ends.len()
    }

    pub fn is_connected(&self) -> bool {
        if self.n_vertices == 0 {
            return true;
        }
        let mut seen = vec![false; self.n_vertices];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(a, b) in &self.ends {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// First Betti number `#edges - #vertices + 1`.
    pub fn betti(&self) -> Result<usize, CurveError> {
        if !self.is_connected() {
            return Err(CurveError::Disconnected);
        }
        Ok(self.n_edges() + 1 - self.n_vertices)
    }
}

/// A stable curve all of whose components are Riemann spheres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableCurve {
    pub vertex_names: Vec<String>,
    pub edges: Vec<Edge>,
    pub marked: Vec<MarkedPoint>,
}

impl StableCurve {
    pub fn graph(&self) -> DualGraph {
        DualGraph {
            n_vertices: self.vertex_names.len(),
            ends: self.edges.iter().map(|e| (e.from, e.to)).collect(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_index(&self, name: &str) -> Result<usize, CurveError> {
        self.vertex_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CurveError::UnknownVertex(name.to_string()))
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn source(&self, e: OrientedEdge) -> usize {
        let edge = &self.edges[e.edge];
        if e.flipped {
            edge.to
        } else {
            edge.from
        }
    }

    /// `q_e`.
    pub fn node_point(&self, e: OrientedEdge) -> Complex64 {
        let edge = &self.edges[e.edge];
        if e.flipped {
            edge.q_to
        } else {
            edge.q_from
        }
    }

    /// `rho_e`.
    pub fn radius(&self, e: OrientedEdge) -> f64 {
        let edge = &self.edges[e.edge];
        if e.flipped {
            edge.rho_to
        } else {
            edge.rho_from
        }
    }

    pub fn oriented_edges(&self) -> impl Iterator<Item = OrientedEdge> + '_ {
        (0..2 * self.n_edges()).map(OrientedEdge::from_slot)
    }

    /// `E_v`: edge ends lying on vertex `v`.
    pub fn ends_at(&self, v: usize) -> Vec<OrientedEdge> {
        self.oriented_edges().filter(|&e| self.source(e) == v).collect()
    }

    /// Chart coordinate `z_e = (z - q_e) / rho_e`.
    pub fn to_chart(&self, e: OrientedEdge, z: Complex64) -> Complex64 {
        (z - self.node_point(e)) / self.radius(e)
    }

    pub fn from_chart(&self, e: OrientedEdge, ze: Complex64) -> Complex64 {
        self.node_point(e) + ze * self.radius(e)
    }

    /// The plumbing map from the chart at `e` to the chart at `-e`,
    /// `z_{-e} = s_e / z_e`, written in global coordinates.
    pub fn gluing_map(&self, e: OrientedEdge, s: Complex64) -> GluingMap {
        let back = e.reversed();
        GluingMap {
            source: self.node_point(e),
            target: self.node_point(back),
            scale: s * self.radius(e) * self.radius(back),
        }
    }

    /// Radius of the seam circle around `q_e` in global coordinates.
    pub fn seam_radius(&self, e: OrientedEdge, s: Complex64) -> f64 {
        self.radius(e) * s.norm().sqrt()
    }

    /// Admissibility report; empty iff the curve is admissible.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let nv = self.n_vertices();
        for e in &self.edges {
            if e.from >= nv || e.to >= nv {
                issues.push(format!("edge {} references a missing vertex", e.id));
            }
            if !(e.rho_from > 0.0 && e.rho_to > 0.0) {
                issues.push(format!("edge {} has a non-positive chart radius", e.id));
            }
            if !(e.q_from.is_finite() && e.q_to.is_finite()) {
                issues.push(format!("edge {} has a non-finite node point", e.id));
            }
        }
        if !issues.is_empty() {
            return issues;
        }
        for m in &self.marked {
            if m.vertex >= nv {
                issues.push("marked point on a missing vertex".to_string());
            }
        }
        if !self.graph().is_connected() {
            issues.push("dual graph is disconnected".to_string());
        }
        for v in 0..nv {
            let ends = self.ends_at(v);
            for (i, &a) in ends.iter().enumerate() {
                for &b in &ends[i + 1..] {
                    let gap = (self.node_point(a) - self.node_point(b)).norm();
                    if gap <= self.radius(a) + self.radius(b) {
                        issues.push(format!(
                            "charts overlap at vertex {} ({} and {})",
                            self.vertex_names[v],
                            self.end_label(a),
                            self.end_label(b)
                        ));
                    }
                }
                for m in self.marked.iter().filter(|m| m.vertex == v) {
                    if (m.point - self.node_point(a)).norm() <= self.radius(a) {
                        issues.push(format!(
                            "marked point {} lies in the chart of {}",
                            m.point,
                            self.end_label(a)
                        ));
                    }
                }
            }
            let special = ends.len() + self.marked.iter().filter(|m| m.vertex == v).count();
            if special < 3 {
                issues.push(format!(
                    "component {} has < 3 special points",
                    self.vertex_names[v]
                ));
            }
        }
        issues
    }

    /// Human-readable name of an edge end, `e1` or `-e1`.
    pub fn end_label(&self, e: OrientedEdge) -> String {
        let id = &self.edges[e.edge].id;
        if e.flipped {
            format!("-{id}")
        } else {
            id.clone()
        }
    }

    pub fn betti(&self) -> Result<usize, CurveError> {
        self.graph().betti()
    }

    /// Spanning tree by Kruskal over edges sorted by id, then one B-cycle per
    /// non-tree edge: the edge itself followed by the tree path back.
    pub fn symplectic_basis(&self) -> Result<SymplecticBasis, CurveError> {
        let graph = self.graph();
        if !graph.is_connected() {
            return Err(CurveError::Disconnected);
        }
        let mut order: Vec<usize> = (0..self.n_edges()).collect();
        order.sort_by(|&a, &b| self.edges[a].id.cmp(&self.edges[b].id));
        let mut parent: Vec<usize> = (0..self.n_vertices()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut tree = Vec::new();
        let mut cotree = Vec::new();
        for &e in &order {
            let (a, b) = graph.ends[e];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                tree.push(e);
            } else {
                cotree.push(e);
            }
        }
        let b_cycles: Vec<CyclePath> = cotree
            .iter()
            .map(|&e| {
                let first = OrientedEdge::forward(e);
                let mut edges = vec![first];
                edges.extend(self.tree_path(
                    &tree,
                    self.source(first.reversed()),
                    self.source(first),
                ));
                CyclePath { edges }
            })
            .collect();
        let intersections = (0..self.n_edges())
            .map(|e| b_cycles.iter().map(|b| b.crossings(e)).collect())
            .collect();
        Ok(SymplecticBasis {
            tree_edges: tree,
            a_cycles: cotree.iter().map(|&e| OrientedEdge::forward(e)).collect(),
            b_cycles,
            intersections,
        })
    }

    /// Oriented edges of the unique tree path from `from` to `to`.
    fn tree_path(&self, tree: &[usize], from: usize, to: usize) -> Vec<OrientedEdge> {
        let mut prev: Vec<Option<OrientedEdge>> = vec![None; self.n_vertices()];
        let mut seen = vec![false; self.n_vertices()];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for &t in tree {
                for e in [OrientedEdge::forward(t), OrientedEdge::new(t, true)] {
                    if self.source(e) == v {
                        let w = self.source(e.reversed());
                        if !seen[w] {
                            seen[w] = true;
                            prev[w] = Some(e);
                            queue.push_back(w);
                        }
                    }
                }
            }
        }
        let mut path = Vec::new();
        let mut v = to;
        while v != from {
            let e = prev[v].expect("tree spans the graph");
            path.push(e);
            v = self.source(e);
        }
        path.reverse();
        path
    }
}

/// Plumbing parameters, one per unoriented edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlumbingParams {
    pub s: Vec<Complex64>,
}

impl PlumbingParams {
    pub fn new(s: Vec<Complex64>) -> Self {
        Self { s }
    }

    pub fn uniform(n_edges: usize, s: f64) -> Self {
        Self {
            s: vec![Complex64::new(s, 0.0); n_edges],
        }
    }

    pub fn get(&self, e: OrientedEdge) -> Complex64 {
        self.s[e.edge]
    }

    /// `max |s_e|`.
    pub fn norm(&self) -> f64 {
        self.s.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn check(&self, curve: &StableCurve) -> Result<(), CurveError> {
        if self.s.len() != curve.n_edges() {
            return Err(CurveError::ParamCount {
                expected: curve.n_edges(),
                got: self.s.len(),
            });
        }
        for (edge, s) in curve.edges.iter().zip(&self.s) {
            let modulus = s.norm();
            if !(modulus > 0.0 && modulus < 1.0) {
                return Err(CurveError::ParamRange {
                    edge: edge.id.clone(),
                    modulus,
                });
            }
        }
        Ok(())
    }
}

/// A closed path in the plumbed surface, recorded by the nodes it crosses:
/// it leaves component `v(e_i)` through `e_i` and enters `v(-e_i)`, which
/// must be `v(e_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePath {
    pub edges: Vec<OrientedEdge>,
}

impl CyclePath {
    pub fn is_closed(&self, curve: &StableCurve) -> bool {
        let n = self.edges.len();
        (0..n).all(|i| {
            curve.source(self.edges[i].reversed()) == curve.source(self.edges[(i + 1) % n])
        })
    }

    /// Signed number of times the path crosses the seam of `edge`.
    pub fn crossings(&self, edge: usize) -> i32 {
        self.edges
            .iter()
            .filter(|e| e.edge == edge)
            .map(|e| e.sign())
            .sum()
    }

    /// Traversal with the orientation reversed.
    pub fn reversed(&self) -> Self {
        Self {
            edges: self.edges.iter().rev().map(|e| e.reversed()).collect(),
        }
    }
}

/// A-cycles are the seams of the non-tree edges (oriented counter-clockwise
/// around the `from` end); B-cycles are their fundamental cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticBasis {
    pub tree_edges: Vec<usize>,
    pub a_cycles: Vec<OrientedEdge>,
    pub b_cycles: Vec<CyclePath>,
    /// `intersections[edge][k]`: signed crossings of the seam of `edge` by
    /// `B_k`.
    pub intersections: Vec<Vec<i32>>,
}

impl SymplecticBasis {
    pub fn genus(&self) -> usize {
        self.b_cycles.len()
    }

    /// `A_h . B_k`.
    pub fn a_dot_b(&self, h: usize, k: usize) -> i32 {
        self.intersections[self.a_cycles[h].edge][k]
    }
}

/// Stock curves used by the examples and the test-suite.
pub mod presets {
    use super::*;

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

    /// One rational component with `g` self-loops; loop `i` joins
    /// `q_i = pairs[i].0` to `q_{-i} = pairs[i].1`. Unit chart radii.
    pub fn totally_degenerate(pairs: &[(Complex64, Complex64)]) -> StableCurve {
        StableCurve {
            vertex_names: vec!["c".to_string()],
            edges: pairs
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| edge(&format!("e{}", i + 1), 0, 0, a, b))
                .collect(),
            marked: Vec::new(),
        }
    }

    /// `q = ±2`, with a marked point at the origin so that the component
    /// has three special points.
    pub fn genus_one() -> StableCurve {
        let mut curve =
            totally_degenerate(&[(Complex64::new(2.0, 0.0), Complex64::new(-2.0, 0.0))]);
        curve.marked.push(MarkedPoint {
            vertex: 0,
            point: Complex64::new(0.0, 0.0),
            order: 1,
        });
        curve
    }

    /// Two loops whose node pairs have a complex cross-ratio.
    pub fn genus_two() -> StableCurve {
        totally_degenerate(&[
            (Complex64::new(2.0, 0.0), Complex64::new(-2.0, 0.0)),
            (Complex64::new(3.0, 5.0), Complex64::new(-1.0, 5.0)),
        ])
    }

    pub fn genus_three() -> StableCurve {
        totally_degenerate(&[
            (Complex64::new(2.0, 0.0), Complex64::new(-2.0, 0.0)),
            (Complex64::new(3.0, 5.0), Complex64::new(-1.0, 5.0)),
            (Complex64::new(1.0, -5.0), Complex64::new(-3.0, -5.0)),
        ])
    }

    /// Two rational components `a`, `b` joined by two nodes, one marked
    /// point on each to make them stable.
    pub fn banana() -> StableCurve {
        let two = Complex64::new(2.0, 0.0);
        StableCurve {
            vertex_names: vec!["a".to_string(), "b".to_string()],
            edges: vec![edge("e1", 0, 1, two, two), edge("e2", 0, 1, -two, -two)],
            marked: vec![
                MarkedPoint {
                    vertex: 0,
                    point: Complex64::new(0.0, 3.0),
                    order: 1,
                },
                MarkedPoint {
                    vertex: 1,
                    point: Complex64::new(0.0, 3.0),
                    order: 1,
                },
            ],
        }
    }

    /// Two rational components joined by three nodes.
    pub fn theta() -> StableCurve {
        let pts = [
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.5, 2.5),
            Complex64::new(-1.5, -2.5),
        ];
        StableCurve {
            vertex_names: vec!["a".to_string(), "b".to_string()],
            edges: (0..3)
                .map(|i| edge(&format!("e{}", i + 1), 0, 1, pts[i], pts[i].conj()))
                .collect(),
            marked: Vec::new(),
        }
    }
}
