use std::f64::consts::{PI, TAU};

use nodal_plumbing::curve::{presets, OrientedEdge, PlumbingParams, StableCurve};
use nodal_plumbing::jump::{initial_data, iterate, DataMode, SolverSettings};
use nodal_plumbing::kernel::{Genus0Kernel, KernelEvaluator};
use nodal_plumbing::numerics::{circle_points, dist_mod_2pi_i, winding_number};
use nodal_plumbing::period::{a_periods, normalized_basis, period_matrix_expansion, period_matrix_numeric};
use nodal_plumbing::ratdiff::{GluingMap, RationalDifferential, Term};
use nodal_plumbing::schottky::oracle_tau;
use nodal_plumbing::{c64, Complex64};
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn complex_in(r: f64) -> impl Strategy<Value = Complex64> {
    (-r..r, -r..r).prop_map(|(a, b)| c64(a, b))
}

/// Complex `s` with modulus in `[lo, hi]` (log-uniform) and any argument.
fn small_s(lo: f64, hi: f64) -> impl Strategy<Value = Complex64> {
    (lo.ln()..hi.ln(), -PI..PI).prop_map(|(l, a)| Complex64::from_polar(l.exp(), a))
}

/// Genus-two curve with the second loop moved by `shift`.
fn genus_two_moved(shift: Complex64) -> StableCurve {
    presets::totally_degenerate(&[
        (c64(2.0, 0.0), c64(-2.0, 0.0)),
        (c64(3.0, 5.0) + shift, c64(-1.0, 5.0) + shift),
    ])
}

fn random_terms() -> impl Strategy<Value = Vec<Term>> {
    prop::collection::vec((complex_in(6.0), 1i32..4, complex_in(2.0)), 1..6)
        .prop_map(|v| v.into_iter().map(|(p, n, c)| Term::new(p, n, c)).collect())
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn validate_is_idempotent_and_basis_is_symplectic(shift in complex_in(1.0)) {
        let curve = genus_two_moved(shift);
        prop_assert_eq!(curve.validate(), curve.validate());
        prop_assert!(curve.validate().is_empty());
        let basis = curve.symplectic_basis().unwrap();
        prop_assert_eq!(basis.genus(), curve.betti().unwrap());
        prop_assert_eq!(basis.a_cycles.len(), basis.b_cycles.len());
        for h in 0..basis.genus() {
            for k in 0..basis.genus() {
                prop_assert_eq!(basis.a_dot_b(h, k), i32::from(h == k));
            }
        }
    }

    #[test]
    fn pullback_twice_is_identity(
        terms in random_terms(),
        source in complex_in(1.0),
        target in complex_in(1.0),
        scale in small_s(1e-4, 1e-1),
    ) {
        let w = RationalDifferential::from_terms(terms);
        let g = GluingMap { source: source + c64(20.0, 0.0), target: target - c64(20.0, 0.0), scale };
        let back = w.pullback(&g.inverse()).pullback(&g);
        for z in circle_points(c64(0.0, 0.0), 9.0, 7) {
            let (a, b) = (w.eval(z).unwrap(), back.eval(z).unwrap());
            prop_assert!((a - b).norm() <= 1e-9 * (1.0 + a.norm()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn factored_differentials_have_zero_residue_sum(
        zeros in prop::collection::vec(complex_in(3.0), 0..4),
        poles in prop::collection::vec(complex_in(3.0), 3),
    ) {
        let order = (zeros.len() as u32 + 2).div_ceil(3).max(1);
        let spec: Vec<(Complex64, u32)> = poles.iter().map(|&p| (p, order)).collect();
        prop_assume!(poles.iter().enumerate().all(|(i, p)| poles[..i].iter().all(|q| (p - q).norm() > 0.3)));
        prop_assume!(zeros.iter().all(|z| poles.iter().all(|p| (z - p).norm() > 0.3)));
        let w = RationalDifferential::from_factored(c64(1.0, 0.0), &zeros, &spec).unwrap();
        prop_assert!(w.residue_sum().norm() <= 1e-9 * w.scale());
        prop_assert!(w.is_holomorphic_at_infinity(1e-9));
    }

    #[test]
    fn closed_contour_integral_counts_enclosed_residues(
        terms in random_terms(),
        center in complex_in(3.0),
        radius in 0.5f64..4.0,
    ) {
        let w = RationalDifferential::from_terms(terms);
        prop_assume!(w.poles().iter().all(|p| ((p - center).norm() - radius).abs() > 0.05));
        let loop_pts: Vec<Complex64> = (0..=128)
            .map(|j| center + Complex64::from_polar(radius, TAU * j as f64 / 128.0))
            .collect();
        let integral = w.integrate_along(&loop_pts).unwrap();
        let enclosed = c64(0.0, TAU) * w.residues_inside(center, radius);
        prop_assert!((integral - enclosed).norm() <= 1e-9 * (1.0 + w.scale()), "{} vs {}", integral, enclosed);
    }

    #[test]
    fn bidifferential_is_symmetric_and_derivative_of_kernel(z in complex_in(4.0), w in complex_in(4.0)) {
        prop_assume!((z - w).norm() > 0.1);
        let k = Genus0Kernel;
        prop_assert!((k.bidifferential(z, w) - k.bidifferential(w, z)).norm() <= 1e-12 * k.bidifferential(z, w).norm());
        let h = 1e-4 * (z - w).norm();
        let dw = (k.cauchy(z, w + h) - k.cauchy(z, w - h)) / (2.0 * h);
        let lhs = c64(0.0, TAU) * dw;
        prop_assert!((lhs - k.bidifferential(z, w)).norm() <= 1e-6 * k.bidifferential(z, w).norm());
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn jump_solution_invariants(shift in complex_in(0.8), s1 in small_s(1e-5, 1e-2), s2 in small_s(1e-5, 1e-2)) {
        let curve = genus_two_moved(shift);
        let params = PlumbingParams::new(vec![s1, s2]);
        let forms = normalized_basis(&curve, &curve.symplectic_basis().unwrap());
        let omega = vec![&forms[0][0] + &forms[1][0].scaled(c64(0.3, -0.7))];
        let data = initial_data(&omega, &curve, DataMode::Stable).unwrap();
        let sol = iterate(&data, &curve, &params, &SolverSettings::default()).unwrap();

        // Corrections have no period around their own seam.
        prop_assert!(sol.zeroseam_residual() <= 1e-12 * sol.norms[0]);
        for k in 1..=sol.order() {
            prop_assert!(sol.local_identity_residual(k, 16).unwrap() <= 1e-12 * sol.norms[0].max(1.0));
        }
        // Truncation: extra steps move the glued form by no more than the
        // tail bound plus rounding.
        let longer = iterate(&data, &curve, &params, &SolverSettings::fixed(sol.order() + 3)).unwrap();
        let budget = sol.tail_bound + sol.jump_roundoff(32);
        for e in curve.oriented_edges() {
            let q = curve.node_point(e);
            let r = curve.seam_radius(e, params.get(e));
            for z in circle_points(q, r, 16) {
                let d = sol.eta_total(0).eval(z).unwrap() - longer.eta_total(0).eval(z).unwrap();
                prop_assert!(d.norm() * curve.radius(e) <= 10.0 * budget, "{} > {}", d.norm(), budget);
            }
        }
    }

    #[test]
    fn period_matrix_symmetric_and_normalized(shift in complex_in(0.8), s1 in small_s(1e-5, 1e-2), s2 in small_s(1e-5, 1e-2)) {
        let curve = genus_two_moved(shift);
        let params = PlumbingParams::new(vec![s1, s2]);
        let (tau, sols) = period_matrix_numeric(&curve, &params, &SolverSettings::default()).unwrap();
        prop_assert!(tau.asymmetry() <= 1e-10);
        let basis = curve.symplectic_basis().unwrap();
        for (h, row) in a_periods(&sols, &basis).iter().enumerate() {
            for (k, a) in row.iter().enumerate() {
                let want = if h == k { c64(0.0, TAU) } else { c64(0.0, 0.0) };
                prop_assert!((a - want).norm() <= 1e-10);
            }
        }
        for row in period_matrix_expansion(&curve).unwrap() {
            for entry in row {
                // Log coefficients are integers: sums of unit residues.
                for c in entry.log_coeffs {
                    prop_assert_eq!(c, c64(c.re.round(), 0.0));
                }
            }
        }
    }

    #[test]
    fn oracle_within_its_error_budget(shift in complex_in(0.8), s in 1e-5f64..1e-3) {
        let curve = genus_two_moved(shift);
        let params = PlumbingParams::uniform(2, s);
        let oracle = oracle_tau(&curve, &params, 6).unwrap();
        let (tau, _) = period_matrix_numeric(&curve, &params, &SolverSettings::default()).unwrap();
        let budget = tau.tail_bound + oracle.shell + 1e-12;
        for h in 0..2 {
            for k in 0..2 {
                prop_assert!(dist_mod_2pi_i(tau.entries[h][k], oracle.tau[h][k]) <= budget);
            }
        }
        prop_assert!(dist_mod_2pi_i(oracle.tau[0][1], oracle.tau[1][0]) <= oracle.shell + 1e-12);
    }
}

/// `ratio_k / |s|` settles to an `s`-independent constant. Only early steps
/// are used: later norms reach rounding level at small `s`.
#[test]
fn contraction_ratio_scales_with_s() {
    let curve = presets::genus_two();
    let forms = normalized_basis(&curve, &curve.symplectic_basis().unwrap());
    let data = initial_data(&forms[0], &curve, DataMode::Stable).unwrap();
    let constants: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&s| {
            let sol = iterate(&data, &curve, &PlumbingParams::uniform(2, s), &SolverSettings::fixed(2)).unwrap();
            sol.ratios[1] / s
        })
        .collect();
    let (lo, hi) = constants
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
    assert!(hi / lo < 1.1, "{constants:?}");
}

/// `τ - Σ (log coefficient) Log s` converges as `s -> 0` along a real ray.
#[test]
fn holomorphic_part_is_cauchy() {
    let curve = presets::genus_two();
    let expansion = period_matrix_expansion(&curve).unwrap();
    let h = |s: f64| -> Vec<Complex64> {
        let params = PlumbingParams::uniform(2, s);
        let (tau, _) = period_matrix_numeric(&curve, &params, &SolverSettings::default()).unwrap();
        let mut out = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                let logs: Complex64 = expansion[a][b]
                    .log_coeffs
                    .iter()
                    .map(|c| c * s.ln())
                    .sum();
                out.push(tau.entries[a][b] - logs);
            }
        }
        out
    };
    let values: Vec<Vec<Complex64>> = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6].iter().map(|&s| h(s)).collect();
    let steps: Vec<f64> = values
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| dist_mod_2pi_i(*a, *b))
                .fold(0.0, f64::max)
        })
        .collect();
    for pair in steps.windows(2) {
        assert!(pair[1] < 0.2 * pair[0] + 1e-13, "{steps:?}");
    }
    assert!(values.iter().flatten().all(|v| v.norm() < 50.0));
}

#[test]
fn seam_circle_winds_once_around_node() {
    // The glued form of a normalized differential has residue 1 inside
    // each forward seam of its own loop.
    let curve = presets::genus_one();
    let forms = normalized_basis(&curve, &curve.symplectic_basis().unwrap());
    let data = initial_data(&forms[0], &curve, DataMode::Stable).unwrap();
    let params = PlumbingParams::uniform(1, 1e-3);
    let sol = iterate(&data, &curve, &params, &SolverSettings::default()).unwrap();
    let e = OrientedEdge::forward(0);
    let glued = sol.glued(0);
    let r = sol.curve.seam_radius(e, params.get(e));
    let winding = winding_number(
        |z| glued.eval(z).map(|v| 1.0 / v).unwrap_or(c64(f64::NAN, 0.0)),
        curve.node_point(e),
        2.0 * r,
        256,
    );
    assert_eq!(winding, 1);
}
