//! Command-line driver: read a scenario, run one computation, write JSON
//! (and CSV for tables) to `--out` or stdout.
//!
//! Exit codes: 2 for malformed or inconsistent input, 3 when the solver does
//! not converge, 4 when a computed result breaks an identity it must
//! satisfy, 1 for anything else.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::closed_form::{Banana, TotallyDegenerate};
use crate::curve::{CurveError, OrientedEdge, PlumbingParams, StableCurve};
use crate::jump::{
    initial_data, iterate, quadrature, DataMode, JumpError, JumpSolution, SolverSettings,
};
use crate::kernel::Genus0Kernel;
use crate::numerics::{dist_mod_2pi_i, fit_slope};
use crate::period::{
    normalized_basis, period_expansion, period_matrix_expansion, period_matrix_numeric,
    period_numeric, PeriodError,
};
use crate::ratdiff::{RatDiffError, RationalDifferential};
use crate::scenario::{Scenario, ScenarioError};
use crate::schottky::{oracle_tau, OracleError};
use crate::twisted::{
    build_twisted_family, check_compatibility, cluster_radius, compact_samples, TwistedError,
};

#[derive(Debug, Parser)]
#[command(name = "plumb", version, about = "Plumbed nodal curves: jump problems, periods, twisted families")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the scenario and check the curve, differential and parameters.
    Validate(Common),
    /// Solve the jump problem; print the corrections and a residual table.
    Solve(Common),
    /// Periods over the scenario's cycles (B-cycles by default).
    Period(Common),
    /// Numeric period matrix next to its small-s expansion.
    PeriodMatrix(Common),
    /// Period matrix from the jump solver and from the Schottky group.
    OracleCompare(Common),
    /// Closed-form period matrix of a totally degenerate or banana curve.
    ClosedForm(Common),
    /// Compatibility report of the twisted differential.
    TwistedCheck(Common),
    /// Build the twisted family at each scaling point.
    TwistedBuild(Common),
    /// Norm of the correction over a grid of `s`, with the log-log slope.
    Sweep(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Directory for output files; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Backend::Residue)]
    pub backend: Backend,
    /// Seed for randomly placed evaluation points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Residue,
    Quadrature,
    Both,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<RatDiffError> for CliError {
    fn from(e: RatDiffError) -> Self {
        CliError::Other(e.into())
    }
}

impl From<JumpError> for CliError {
    fn from(e: JumpError) -> Self {
        match e {
            JumpError::NonConvergence { .. } | JumpError::TruncationCap { .. } => {
                CliError::NonConvergence(e.to_string())
            }
            JumpError::Curve(e) => e.into(),
            JumpError::VertexCount { .. }
            | JumpError::ResidueMismatch { .. }
            | JumpError::HigherOrderPole { .. } => CliError::Schema(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<PeriodError> for CliError {
    fn from(e: PeriodError) -> Self {
        match e {
            PeriodError::Jump(e) => e.into(),
            PeriodError::Curve(e) => e.into(),
            PeriodError::OpenCycle => CliError::Schema(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NotTotallyDegenerate | OracleError::ZeroLength => {
                CliError::Schema(e.to_string())
            }
            OracleError::NotLoxodromic { .. } => CliError::NonConvergence(e.to_string()),
        }
    }
}

impl From<TwistedError> for CliError {
    fn from(e: TwistedError) -> Self {
        match e {
            TwistedError::Jump(e) => e.into(),
            TwistedError::Curve(e) => e.into(),
            TwistedError::RatDiff(e) => e.into(),
            other => CliError::Schema(other.to_string()),
        }
    }
}

/// Files produced by one run, keyed by file name.
#[derive(Debug, Default)]
pub struct Output {
    pub json: Value,
    pub csv: Vec<(String, String)>,
}

/// Run a parsed command and write its output.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Validate(c) => ("validate", c),
        Command::Solve(c) => ("solve", c),
        Command::Period(c) => ("period", c),
        Command::PeriodMatrix(c) => ("period-matrix", c),
        Command::OracleCompare(c) => ("oracle-compare", c),
        Command::ClosedForm(c) => ("closed-form", c),
        Command::TwistedCheck(c) => ("twisted-check", c),
        Command::TwistedBuild(c) => ("twisted-build", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let scenario = Scenario::load(&common.scenario)?;
    let out_dir = common
        .out
        .clone()
        .or_else(|| scenario.output.as_ref().map(PathBuf::from));
    let result = execute(name, &scenario, common);
    // Reports are written even when an invariant fails, so that the
    // offending numbers can be inspected.
    let (output, status) = match result {
        Ok(output) => (output, Ok(())),
        Err((Some(output), err)) => (output, Err(err)),
        Err((None, err)) => return Err(err),
    };
    write_output(name, &output, out_dir.as_deref())?;
    status
}

type Outcome = Result<Output, (Option<Output>, CliError)>;

fn bare<T>(r: Result<T, impl Into<CliError>>) -> Result<T, (Option<Output>, CliError)> {
    r.map_err(|e| (None, e.into()))
}

/// Dispatch by subcommand name.
pub fn execute(name: &str, scenario: &Scenario, common: &Common) -> Outcome {
    let curve = bare(scenario.curve())?;
    let issues = curve.validate();
    if !issues.is_empty() {
        return Err((None, CliError::Schema(issues.join("; "))));
    }
    match name {
        "validate" => bare(validate(scenario, &curve)),
        "solve" => solve(scenario, &curve, common),
        "period" => bare(period(scenario, &curve)),
        "period-matrix" => bare(period_matrix(scenario, &curve)),
        "oracle-compare" => bare(oracle_compare(scenario, &curve)),
        "closed-form" => bare(closed_form(scenario, &curve)),
        "twisted-check" => bare(twisted_check(scenario, &curve)),
        "twisted-build" => twisted_build(scenario, &curve),
        "sweep" => bare(sweep(scenario, &curve)),
        other => Err((None, CliError::Schema(format!("unknown subcommand `{other}`")))),
    }
}

fn write_output(name: &str, output: &Output, dir: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&output.json).map_err(anyhow::Error::from)?;
    match dir {
        None => println!("{text}"),
        Some(dir) => {
            let io = |e: std::io::Error| CliError::Other(anyhow::anyhow!("{}: {e}", dir.display()));
            fs::create_dir_all(dir).map_err(io)?;
            fs::write(dir.join(format!("{name}.json")), text + "\n").map_err(io)?;
            for (file, body) in &output.csv {
                fs::write(dir.join(file), body).map_err(io)?;
            }
        }
    }
    Ok(())
}

fn to_csv<R: Serialize>(rows: &[R]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(anyhow::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes).map_err(anyhow::Error::from)?)
}

/// The scenario's differential, else the normalized basis.
fn differentials(
    scenario: &Scenario,
    curve: &StableCurve,
) -> Result<Vec<Vec<RationalDifferential>>, CliError> {
    match scenario.differential(curve)? {
        Some(omega) => Ok(vec![omega]),
        None => Ok(normalized_basis(curve, &curve.symplectic_basis()?)),
    }
}

fn params(scenario: &Scenario, curve: &StableCurve) -> Result<PlumbingParams, CliError> {
    let params = scenario.plumbing(curve)?;
    params.check(curve)?;
    Ok(params)
}

fn terms_json(w: &RationalDifferential) -> Value {
    json!(w.terms())
}

fn validate(scenario: &Scenario, curve: &StableCurve) -> Result<Output, CliError> {
    let mut report = json!({
        "name": scenario.name,
        "vertices": curve.n_vertices(),
        "edges": curve.n_edges(),
        "marked": curve.marked.len(),
        "genus": curve.betti()?,
    });
    if let Some(omega) = scenario.differential(curve)? {
        initial_data(&omega, curve, DataMode::Stable)?;
        report["differential"] = json!("stable");
    }
    if scenario.params.uniform.is_some() || !scenario.params.edges.is_empty() {
        report["params"] = json!(params(scenario, curve)?.s);
    }
    if scenario.twisted.is_some() {
        let (data, _, _) = scenario.twisted(curve)?;
        report["levels"] = json!(data.n_levels());
    }
    report["valid"] = json!(true);
    Ok(Output {
        json: report,
        csv: Vec::new(),
    })
}

#[derive(Serialize)]
struct ResidualRow {
    form: usize,
    end: String,
    jump_residual: f64,
    a_period: f64,
}

#[derive(Serialize)]
struct BackendRow {
    form: usize,
    level: usize,
    vertex: String,
    re: f64,
    im: f64,
    residue_re: Option<f64>,
    residue_im: Option<f64>,
    difference: Option<f64>,
}

/// Random points on component `v`, inside chart annuli and outside caps.
fn sample_points(
    curve: &StableCurve,
    params: &PlumbingParams,
    v: usize,
    rng: &mut ChaCha8Rng,
    n: usize,
) -> Vec<Complex64> {
    let ends = curve.ends_at(v);
    (0..n)
        .map(|j| {
            let e = ends[j % ends.len()];
            let inner = 2.0 * curve.seam_radius(e, params.get(e));
            let outer = curve.radius(e);
            let r = inner + (outer - inner) * rng.gen::<f64>();
            let theta = std::f64::consts::TAU * rng.gen::<f64>();
            curve.node_point(e) + Complex64::from_polar(r, theta)
        })
        .collect()
}

/// Largest jump residual tolerated against the solver's own error budget.
fn jump_budget(sol: &JumpSolution, samples: usize) -> f64 {
    10.0 * (sol.tail_bound + sol.jump_roundoff(samples))
}

fn solve(scenario: &Scenario, curve: &StableCurve, common: &Common) -> Outcome {
    let tol = scenario.tolerances;
    let params = bare(params(scenario, curve))?;
    let forms = bare(differentials(scenario, curve))?;
    let settings = tol.solver();
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let mut entries = Vec::new();
    let mut residual_rows = Vec::new();
    let mut backend_rows = Vec::new();
    let mut breaches = Vec::new();
    for (i, omega) in forms.iter().enumerate() {
        let data = bare(initial_data(omega, curve, DataMode::Stable))?;
        let mut entry = json!({ "form": i });
        if common.backend != Backend::Quadrature {
            let sol = bare(iterate(&data, curve, &params, &settings))?;
            let mut worst: f64 = 0.0;
            for e in curve.oriented_edges() {
                let r = bare(sol.jump_residual(e, tol.seam_samples))?;
                worst = worst.max(r);
                let q = curve.node_point(e);
                let seam = curve.seam_radius(e, params.get(e));
                let a = (sol.eta_total(curve.source(e)).residues_inside(q, seam)
                    * Complex64::new(0.0, std::f64::consts::TAU))
                .norm();
                residual_rows.push(ResidualRow {
                    form: i,
                    end: curve.end_label(e),
                    jump_residual: r,
                    a_period: a,
                });
            }
            let budget = jump_budget(&sol, tol.seam_samples);
            if worst > budget {
                breaches.push(format!(
                    "form {i}: jump residual {worst:.3e} exceeds the error budget {budget:.3e}"
                ));
            }
            let levels: Vec<Value> = sol
                .eta
                .iter()
                .map(|per_vertex| {
                    Value::Object(
                        curve
                            .vertex_names
                            .iter()
                            .zip(per_vertex)
                            .map(|(name, w)| (name.clone(), terms_json(w)))
                            .collect(),
                    )
                })
                .collect();
            entry["order"] = json!(sol.order());
            entry["norms"] = json!(sol.norms);
            entry["ratios"] = json!(sol.ratios);
            entry["tail_bound"] = json!(sol.tail_bound);
            entry["roundoff_floor"] = json!(sol.roundoff_floor);
            entry["max_jump_residual"] = json!(worst);
            entry["eta"] = Value::Array(levels);
        }
        if common.backend != Backend::Residue {
            let levels = tol.backend_levels;
            let quad = bare(quadrature::solve(
                &data,
                curve,
                &params,
                &Genus0Kernel,
                levels,
                tol.quad_points,
            ))?;
            let fixed = match common.backend {
                Backend::Both => Some(bare(iterate(
                    &data,
                    curve,
                    &params,
                    &SolverSettings {
                        fixed_order: Some(levels),
                        force: true,
                        ..settings
                    },
                ))?),
                _ => None,
            };
            let mut worst: f64 = 0.0;
            for v in 0..curve.n_vertices() {
                let points = sample_points(curve, &params, v, &mut rng, 8);
                for k in 1..=levels {
                    for &z in &points {
                        let q = quad.eta_level(k, v, z);
                        let r = match &fixed {
                            Some(sol) => Some(bare(sol.eta_level(k, v).eval(z))?),
                            None => None,
                        };
                        let d = r.map(|r| (r - q).norm());
                        worst = worst.max(d.unwrap_or(0.0));
                        backend_rows.push(BackendRow {
                            form: i,
                            level: k,
                            vertex: curve.vertex_names[v].clone(),
                            re: z.re,
                            im: z.im,
                            residue_re: r.map(|r| r.re),
                            residue_im: r.map(|r| r.im),
                            difference: d,
                        });
                    }
                }
            }
            entry["quadrature_levels"] = json!(levels);
            if fixed.is_some() {
                entry["backend_difference"] = json!(worst);
            }
        }
        entries.push(entry);
    }
    let mut csv = vec![("solve_residuals.csv".to_string(), bare(to_csv(&residual_rows))?)];
    if !backend_rows.is_empty() {
        csv.push(("solve_backends.csv".to_string(), bare(to_csv(&backend_rows))?));
    }
    let output = Output {
        json: json!({
            "name": scenario.name,
            "params": params.s,
            "backend": format!("{:?}", common.backend).to_lowercase(),
            "seed": common.seed,
            "forms": entries,
            "residuals": residual_rows,
        }),
        csv,
    };
    if breaches.is_empty() {
        Ok(output)
    } else {
        Err((Some(output), CliError::Invariant(breaches.join("; "))))
    }
}

fn has_params(scenario: &Scenario) -> bool {
    scenario.params.uniform.is_some() || !scenario.params.edges.is_empty()
}

fn cycle_labels(curve: &StableCurve, edges: &[OrientedEdge]) -> Vec<String> {
    edges.iter().map(|&e| curve.end_label(e)).collect()
}

fn period(scenario: &Scenario, curve: &StableCurve) -> Result<Output, CliError> {
    let forms = differentials(scenario, curve)?;
    let cycles = if scenario.cycles.is_empty() {
        curve.symplectic_basis()?.b_cycles
    } else {
        scenario.cycles(curve)?
    };
    let params = has_params(scenario).then(|| params(scenario, curve)).transpose()?;
    let settings = scenario.tolerances.solver();
    let mut rows = Vec::new();
    for (i, omega) in forms.iter().enumerate() {
        let solution = match &params {
            Some(p) => Some(iterate(
                &initial_data(omega, curve, DataMode::Stable)?,
                curve,
                p,
                &settings,
            )?),
            None => None,
        };
        for cycle in &cycles {
            let expansion = period_expansion(curve, omega, cycle)?;
            let mut row = json!({
                "form": i,
                "cycle": cycle_labels(curve, &cycle.edges),
                "expansion": expansion,
            });
            if let (Some(sol), Some(p)) = (&solution, &params) {
                let numeric = period_numeric(sol, cycle)?;
                let predicted = expansion.evaluate(p);
                row["numeric"] = json!(numeric);
                row["expansion_value"] = json!(predicted);
                row["difference"] = json!(dist_mod_2pi_i(numeric, predicted));
                row["tail_bound"] = json!(sol.tail_bound);
            }
            rows.push(row);
        }
    }
    Ok(Output {
        json: json!({ "name": scenario.name, "periods": rows }),
        csv: Vec::new(),
    })
}

fn period_matrix(scenario: &Scenario, curve: &StableCurve) -> Result<Output, CliError> {
    let expansion = period_matrix_expansion(curve)?;
    let mut report = json!({
        "name": scenario.name,
        "genus": expansion.len(),
        "expansion": expansion,
    });
    if has_params(scenario) {
        let p = params(scenario, curve)?;
        let (tau, _) = period_matrix_numeric(curve, &p, &scenario.tolerances.solver())?;
        let predicted: Vec<Vec<Complex64>> = expansion
            .iter()
            .map(|row| row.iter().map(|x| x.evaluate(&p)).collect())
            .collect();
        let difference: Vec<Vec<f64>> = tau
            .entries
            .iter()
            .zip(&predicted)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| dist_mod_2pi_i(x, y)).collect())
            .collect();
        report["params"] = json!(p.s);
        report["numeric"] = json!(tau.entries);
        report["tail_bound"] = json!(tau.tail_bound);
        report["orders"] = json!(tau.orders);
        report["asymmetry"] = json!(tau.asymmetry());
        report["expansion_value"] = json!(predicted);
        report["difference"] = json!(difference);
    }
    Ok(Output {
        json: report,
        csv: Vec::new(),
    })
}

fn oracle_compare(scenario: &Scenario, curve: &StableCurve) -> Result<Output, CliError> {
    let p = params(scenario, curve)?;
    let oracle = oracle_tau(curve, &p, scenario.tolerances.schottky_len)?;
    let (tau, _) = period_matrix_numeric(curve, &p, &scenario.tolerances.solver())?;
    let difference: Vec<Vec<f64>> = tau
        .entries
        .iter()
        .zip(&oracle.tau)
        .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| dist_mod_2pi_i(x, y)).collect())
        .collect();
    let max = difference.iter().flatten().copied().fold(0.0, f64::max);
    Ok(Output {
        json: json!({
            "name": scenario.name,
            "params": p.s,
            "word_length": scenario.tolerances.schottky_len,
            "solver": tau.entries,
            "oracle": oracle.tau,
            "difference": difference,
            "max_difference": max,
            "solver_tail_bound": tau.tail_bound,
            "oracle_shells": oracle.shells,
        }),
        csv: Vec::new(),
    })
}

/// Effective parameter for unit charts: `s ρ_e ρ_{-e}`.
fn unit_chart_s(curve: &StableCurve, p: &PlumbingParams, edge: usize) -> Complex64 {
    let e = OrientedEdge::forward(edge);
    p.get(e) * curve.radius(e) * curve.radius(e.reversed())
}

fn closed_form(scenario: &Scenario, curve: &StableCurve) -> Result<Output, CliError> {
    let p = params(scenario, curve)?;
    let s: Vec<Complex64> = (0..curve.n_edges()).map(|i| unit_chart_s(curve, &p, i)).collect();
    let loops_only = curve.edges.iter().all(|e| e.from == e.to);
    let report = if curve.n_vertices() == 1 && loops_only {
        let td = TotallyDegenerate {
            pairs: curve.edges.iter().map(|e| (e.q_from, e.q_to)).collect(),
        };
        json!({ "kind": "totally_degenerate", "tau": td.tau(&s) })
    } else if curve.n_vertices() == 2
        && curve.n_edges() == 2
        && curve.edges.iter().all(|e| e.from != e.to)
    {
        // Orient both edges from the first component.
        let ends: Vec<(Complex64, Complex64)> = curve
            .edges
            .iter()
            .map(|e| if e.from == 0 { (e.q_from, e.q_to) } else { (e.q_to, e.q_from) })
            .collect();
        let banana = Banana {
            on_a: [ends[0].0, ends[1].0],
            on_b: [ends[0].1, ends[1].1],
        };
        json!({ "kind": "banana", "tau11": banana.tau11([s[0], s[1]]) })
    } else {
        return Err(CliError::Schema(
            "closed forms need one component with self-nodes or two components joined twice"
                .into(),
        ));
    };
    let mut report = report;
    report["name"] = json!(scenario.name);
    report["params"] = json!(p.s);
    Ok(Output {
        json: report,
        csv: Vec::new(),
    })
}

fn twisted_check(scenario: &Scenario, curve: &StableCurve) -> Result<Output, CliError> {
    let (data, omega, _) = scenario.twisted(curve)?;
    let report = check_compatibility(curve, &data, &omega)?;
    Ok(Output {
        json: json!({
            "name": scenario.name,
            "levels": data.levels,
            "compatible": report.is_clean(),
            "failed": report.failed(),
            "checks": report.checks,
        }),
        csv: Vec::new(),
    })
}

#[derive(Serialize)]
struct ClusterRow {
    marked: usize,
    vertex: String,
    expected: u32,
    radius: f64,
    zeros: i64,
}

fn twisted_build(scenario: &Scenario, curve: &StableCurve) -> Outcome {
    let (data, _, options) = bare(scenario.twisted(curve))?;
    let points = bare(scenario.scaling_points(data.n_levels() - 1))?;
    let tol = scenario.tolerances;
    let settings = tol.solver();
    let results: Vec<(Value, Option<String>)> = bare(
        points
            .par_iter()
            .map(|t| -> Result<(Value, Option<String>), CliError> {
                let fam = build_twisted_family(curve, &data, t, &options, &settings)?;
                let sol = &fam.solution;
                let jump = sol.max_jump_residual(tol.seam_samples)?;
                let budget = jump_budget(sol, tol.seam_samples);
                let errors = (0..curve.n_vertices())
                    .map(|v| fam.rescaled_error(v, &compact_samples(curve, v, tol.seam_samples)))
                    .collect::<Result<Vec<f64>, _>>()?;
                let clusters: Vec<ClusterRow> = fam
                    .zero_clusters(256)
                    .into_iter()
                    .map(|(k, zeros)| ClusterRow {
                        marked: k,
                        vertex: curve.vertex_names[curve.marked[k].vertex].clone(),
                        expected: curve.marked[k].order,
                        radius: cluster_radius(curve, k),
                        zeros,
                    })
                    .collect();
                let breach = (jump > budget).then(|| {
                    format!("t = {:?}: jump residual {jump:.3e} exceeds {budget:.3e}", t.t)
                });
                Ok((
                    json!({
                        "t": t.t,
                        "s": fam.params().s,
                        "order": sol.order(),
                        "tail_bound": sol.tail_bound,
                        "roundoff_floor": sol.roundoff_floor,
                        "max_jump_residual": jump,
                        "scaling_audit": fam.audit,
                        "rescaled_error": errors,
                        "zero_clusters": clusters,
                    }),
                    breach,
                ))
            })
            .collect::<Result<Vec<_>, CliError>>(),
    )?;
    let breaches: Vec<String> = results.iter().filter_map(|r| r.1.clone()).collect();
    let output = Output {
        json: json!({
            "name": scenario.name,
            "levels": data.levels,
            "points": results.into_iter().map(|r| r.0).collect::<Vec<_>>(),
        }),
        csv: Vec::new(),
    };
    if breaches.is_empty() {
        Ok(output)
    } else {
        Err((Some(output), CliError::Invariant(breaches.join("; "))))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
struct SweepRow {
    s: f64,
    ln_s: f64,
    eta_l2: f64,
    ln_eta: f64,
    order: usize,
    tail_bound: f64,
}

fn sweep(scenario: &Scenario, curve: &StableCurve) -> Result<Output, CliError> {
    let grid = scenario.grid.ok_or(ScenarioError::Missing("grid"))?;
    let omega = differentials(scenario, curve)?.swap_remove(0);
    let data = initial_data(&omega, curve, DataMode::Stable)?;
    let tol = scenario.tolerances;
    let settings = tol.solver();
    let rows: Vec<SweepRow> = grid
        .values()
        .par_iter()
        .map(|&s| -> Result<SweepRow, CliError> {
            let p = PlumbingParams::uniform(curve.n_edges(), s);
            p.check(curve)?;
            let sol = iterate(&data, curve, &p, &settings)?;
            let mut sq = 0.0;
            for v in 0..curve.n_vertices() {
                sq += sol.l2_norm(v, tol.quad_points)?.powi(2);
            }
            let eta = sq.sqrt();
            Ok(SweepRow {
                s,
                ln_s: s.ln(),
                eta_l2: eta,
                ln_eta: eta.ln(),
                order: sol.order(),
                tail_bound: sol.tail_bound,
            })
        })
        .collect::<Result<_, _>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.ln_s).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.ln_eta).collect();
    let slope = fit_slope(&x, &y);
    Ok(Output {
        json: json!({
            "name": scenario.name,
            "slope": slope,
            "rows": rows,
        }),
        csv: vec![("sweep.csv".to_string(), to_csv(&rows)?)],
    })
}
