//! JSON scenario files: a curve, optional differentials, plumbing or
//! scaling parameters, parameter grids and solver tolerances.
//!
//! Vertices and edges are referred to by name; complex numbers are
//! `[re, im]` pairs. Unknown fields are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CyclePath, Edge, MarkedPoint, OrientedEdge, PlumbingParams, StableCurve};
use crate::jump::SolverSettings;
use crate::numerics::logspace;
use crate::ratdiff::{RationalDifferential, Term};
use crate::twisted::{ScalingOptions, ScalingParams, TwistedData};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("duplicate name `{0}`")]
    Duplicate(String),
    #[error("missing section: {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub marked: Vec<MarkedSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub q_from: Complex64,
    pub q_to: Complex64,
    #[serde(default = "unit")]
    pub rho_from: f64,
    #[serde(default = "unit")]
    pub rho_to: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkedSpec {
    pub vertex: String,
    pub point: Complex64,
    pub order: u32,
}

/// Plumbing parameters: a common value, per-edge values, or both (per-edge
/// entries override the common one).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub uniform: Option<Complex64>,
    #[serde(default)]
    pub edges: BTreeMap<String, Complex64>,
}

/// `points` values `10^from, ..., 10^to`, evenly spaced in the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        logspace(self.from, self.to, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistedSpec {
    pub levels: BTreeMap<String, i32>,
    pub differentials: BTreeMap<String, Vec<Term>>,
    /// Limit differential `Ω`; defaults to `Ξ` on the top level and zero below.
    pub omega: Option<BTreeMap<String, Vec<Term>>>,
    /// `t_{-1}, t_{-2}, ...`.
    #[serde(default)]
    pub t: Vec<Complex64>,
    /// Common real value of every `t_i`, swept over the grid.
    pub t_grid: Option<GridSpec>,
    #[serde(default)]
    pub horizontal: BTreeMap<String, Complex64>,
    pub horizontal_default: Option<Complex64>,
}

/// Solver and harness settings, with their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol: f64,
    pub k_max: usize,
    pub quad_points: usize,
    pub schottky_len: usize,
    pub seam_samples: usize,
    pub max_ratio: f64,
    /// Levels compared between the two backends.
    pub backend_levels: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            k_max: 32,
            quad_points: 64,
            schottky_len: 8,
            seam_samples: 32,
            max_ratio: 0.5,
            backend_levels: 4,
        }
    }
}

impl Tolerances {
    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            k_max: self.k_max,
            seam_samples: self.seam_samples,
            max_ratio: self.max_ratio,
            ..SolverSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub curve: CurveSpec,
    /// Per-vertex stable differential; vertices left out carry zero.
    pub differential: Option<BTreeMap<String, Vec<Term>>>,
    #[serde(default)]
    pub params: ParamsSpec,
    /// Grid for `sweep`: every edge gets the same real `s`.
    pub grid: Option<GridSpec>,
    /// Cycles for `period`, as lists of edge ends such as `"e1"`, `"-e2"`.
    #[serde(default)]
    pub cycles: Vec<Vec<String>>,
    pub twisted: Option<TwistedSpec>,
    /// Subcommands this scenario is meant for; informational.
    #[serde(default)]
    pub computations: Vec<String>,
    /// Default output directory.
    pub output: Option<String>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn curve(&self) -> Result<StableCurve, ScenarioError> {
        let spec = &self.curve;
        for (i, name) in spec.vertices.iter().enumerate() {
            if spec.vertices[..i].contains(name) {
                return Err(ScenarioError::Duplicate(name.clone()));
            }
        }
        let vertex = |name: &str| {
            spec.vertices
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| ScenarioError::UnknownVertex(name.to_string()))
        };
        let mut edges = Vec::with_capacity(spec.edges.len());
        for (i, e) in spec.edges.iter().enumerate() {
            if spec.edges[..i].iter().any(|o| o.id == e.id) {
                return Err(ScenarioError::Duplicate(e.id.clone()));
            }
            edges.push(Edge {
                id: e.id.clone(),
                from: vertex(&e.from)?,
                to: vertex(&e.to)?,
                q_from: e.q_from,
                q_to: e.q_to,
                rho_from: e.rho_from,
                rho_to: e.rho_to,
            });
        }
        let marked = spec
            .marked
            .iter()
            .map(|m| {
                Ok(MarkedPoint {
                    vertex: vertex(&m.vertex)?,
                    point: m.point,
                    order: m.order,
                })
            })
            .collect::<Result<_, ScenarioError>>()?;
        Ok(StableCurve {
            vertex_names: spec.vertices.clone(),
            edges,
            marked,
        })
    }

    fn per_vertex(
        curve: &StableCurve,
        map: &BTreeMap<String, Vec<Term>>,
    ) -> Result<Vec<RationalDifferential>, ScenarioError> {
        for name in map.keys() {
            curve
                .vertex_index(name)
                .map_err(|_| ScenarioError::UnknownVertex(name.clone()))?;
        }
        Ok(curve
            .vertex_names
            .iter()
            .map(|name| {
                map.get(name)
                    .map(|terms| RationalDifferential::from_terms(terms.iter().copied()))
                    .unwrap_or_else(RationalDifferential::zero)
            })
            .collect())
    }

    pub fn differential(
        &self,
        curve: &StableCurve,
    ) -> Result<Option<Vec<RationalDifferential>>, ScenarioError> {
        self.differential
            .as_ref()
            .map(|map| Self::per_vertex(curve, map))
            .transpose()
    }

    pub fn plumbing(&self, curve: &StableCurve) -> Result<PlumbingParams, ScenarioError> {
        for id in self.params.edges.keys() {
            curve
                .edge_index(id)
                .ok_or_else(|| ScenarioError::UnknownEdge(id.clone()))?;
        }
        let s = curve
            .edges
            .iter()
            .map(|e| {
                self.params
                    .edges
                    .get(&e.id)
                    .copied()
                    .or(self.params.uniform)
                    .ok_or(ScenarioError::Missing("params (no value for some edge)"))
            })
            .collect::<Result<_, _>>()?;
        Ok(PlumbingParams::new(s))
    }

    pub fn cycles(&self, curve: &StableCurve) -> Result<Vec<CyclePath>, ScenarioError> {
        self.cycles
            .iter()
            .map(|labels| {
                let edges = labels
                    .iter()
                    .map(|label| {
                        let (flipped, id) = match label.strip_prefix('-') {
                            Some(rest) => (true, rest),
                            None => (false, label.as_str()),
                        };
                        curve
                            .edge_index(id)
                            .map(|i| OrientedEdge::new(i, flipped))
                            .ok_or_else(|| ScenarioError::UnknownEdge(label.clone()))
                    })
                    .collect::<Result<_, _>>()?;
                Ok(CyclePath { edges })
            })
            .collect()
    }

    /// Twisted data, the limit differential and the scaling choices.
    pub fn twisted(
        &self,
        curve: &StableCurve,
    ) -> Result<(TwistedData, Vec<RationalDifferential>, ScalingOptions), ScenarioError> {
        let spec = self.twisted.as_ref().ok_or(ScenarioError::Missing("twisted"))?;
        let mut levels = Vec::with_capacity(curve.n_vertices());
        for name in &curve.vertex_names {
            levels.push(
                *spec
                    .levels
                    .get(name)
                    .ok_or_else(|| ScenarioError::Invalid(format!("no level for vertex `{name}`")))?,
            );
        }
        for name in spec.levels.keys() {
            curve
                .vertex_index(name)
                .map_err(|_| ScenarioError::UnknownVertex(name.clone()))?;
        }
        let differentials = Self::per_vertex(curve, &spec.differentials)?;
        let data = TwistedData::new(differentials, levels)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if data.top_level() != 0 {
            return Err(ScenarioError::Invalid("the top level must be 0".into()));
        }
        let omega = match &spec.omega {
            Some(map) => Self::per_vertex(curve, map)?,
            None => (0..curve.n_vertices())
                .map(|v| {
                    if data.level(v) == 0 {
                        data.differentials[v].clone()
                    } else {
                        RationalDifferential::zero()
                    }
                })
                .collect(),
        };
        let mut horizontal = Vec::new();
        for (id, &s) in &spec.horizontal {
            let i = curve
                .edge_index(id)
                .ok_or_else(|| ScenarioError::UnknownEdge(id.clone()))?;
            horizontal.push((i, s));
        }
        let options = ScalingOptions {
            horizontal,
            horizontal_default: spec.horizontal_default,
            branches: Vec::new(),
        };
        Ok((data, omega, options))
    }

    /// Scaling parameters to build: the explicit `t`, or one point per grid
    /// value.
    pub fn scaling_points(&self, n_drops: usize) -> Result<Vec<ScalingParams>, ScenarioError> {
        let spec = self.twisted.as_ref().ok_or(ScenarioError::Missing("twisted"))?;
        if let Some(grid) = spec.t_grid {
            return Ok(grid
                .values()
                .into_iter()
                .map(|t| ScalingParams::uniform(n_drops, t))
                .collect());
        }
        if spec.t.len() != n_drops {
            return Err(ScenarioError::Invalid(format!(
                "expected {n_drops} scaling parameters, got {}",
                spec.t.len()
            )));
        }
        Ok(vec![ScalingParams::new(spec.t.clone())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GENUS_ONE: &str = r#"{
        "name": "g1",
        "curve": {
            "vertices": ["c"],
            "edges": [{"id": "e1", "from": "c", "to": "c", "q_from": [2, 0], "q_to": [-2, 0]}],
            "marked": [{"vertex": "c", "point": [0, 0], "order": 1}]
        },
        "differential": {"c": [
            {"pole": [2, 0], "order": 1, "coeff": [1, 0]},
            {"pole": [-2, 0], "order": 1, "coeff": [-1, 0]}
        ]},
        "params": {"uniform": [1e-4, 0]},
        "cycles": [["e1"]]
    }"#;

    #[test]
    fn parses_and_resolves_names() {
        let sc = Scenario::from_json(GENUS_ONE).unwrap();
        let curve = sc.curve().unwrap();
        assert_eq!(curve, crate::curve::presets::genus_one());
        let omega = sc.differential(&curve).unwrap().unwrap();
        assert_eq!(omega[0].residue(Complex64::new(2.0, 0.0)), Complex64::new(1.0, 0.0));
        assert_eq!(sc.plumbing(&curve).unwrap().s, vec![Complex64::new(1e-4, 0.0)]);
        assert_eq!(sc.cycles(&curve).unwrap()[0].edges, vec![OrientedEdge::forward(0)]);
        assert_eq!(sc.tolerances, Tolerances::default());
    }

    #[test]
    fn rejects_bad_references_and_fields() {
        let bad_vertex = GENUS_ONE.replace(r#""to": "c""#, r#""to": "x""#);
        let sc = Scenario::from_json(&bad_vertex).unwrap();
        assert!(matches!(sc.curve(), Err(ScenarioError::UnknownVertex(_))));

        let extra = GENUS_ONE.replace(r#""name": "g1","#, r#""name": "g1", "colour": 3,"#);
        assert!(matches!(Scenario::from_json(&extra), Err(ScenarioError::Json(_))));

        let bad_edge = GENUS_ONE.replace(r#"[["e1"]]"#, r#"[["e7"]]"#);
        let sc = Scenario::from_json(&bad_edge).unwrap();
        assert!(sc.cycles(&sc.curve().unwrap()).is_err());
    }
}
