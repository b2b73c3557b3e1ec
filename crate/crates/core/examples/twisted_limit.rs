//! Rescaled restriction error and zero clusters of twisted families as t -> 0.

use nodal_plumbing::jump::SolverSettings;
use nodal_plumbing::twisted::{build_twisted_family, compact_samples, presets, ScalingParams};

fn main() -> anyhow::Result<()> {
    for (name, scenario) in [
        ("two-level", presets::two_level()),
        ("mixed orders", presets::mixed_orders()),
        ("v-shape", presets::v_shape(0.0)),
    ] {
        println!("{name}");
        for t in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let fam = match build_twisted_family(
                &scenario.curve,
                &scenario.twisted,
                &ScalingParams::uniform(1, t),
                &Default::default(),
                &SolverSettings::default(),
            ) {
                Ok(fam) => fam,
                Err(err) => {
                    println!("  t={t:.0e} {err}");
                    continue;
                }
            };
            let errors: Vec<String> = (0..scenario.curve.n_vertices())
                .map(|v| {
                    let samples = compact_samples(&scenario.curve, v, 32);
                    fam.rescaled_error(v, &samples)
                        .map(|e| format!("{e:.3e}"))
                        .unwrap_or_else(|e| e.to_string())
                })
                .collect();
            let clusters: Vec<i64> = fam.zero_clusters(256).into_iter().map(|c| c.1).collect();
            println!(
                "  t={t:.0e} K={} tail={:.2e} jump={:.2e} floor={:.2e} errors={errors:?} clusters={clusters:?}",
                fam.solution.order(),
                fam.solution.tail_bound,
                fam.solution.max_jump_residual(32)?,
                fam.solution.jump_roundoff(32),
            );
        }
    }
    Ok(())
}
