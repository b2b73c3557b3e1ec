//! Period matrix of a bundled genus-two scenario as the plumbing parameter
//! shrinks, next to the value predicted by its log expansion.

use std::path::PathBuf;

use nodal_plumbing::curve::PlumbingParams;
use nodal_plumbing::period::{period_matrix_expansion, period_matrix_numeric};
use nodal_plumbing::scenario::Scenario;

fn main() -> anyhow::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/genus_two.json");
    let scenario = Scenario::load(&path)?;
    let curve = scenario.curve()?;
    let settings = scenario.tolerances.solver();
    let expansion = period_matrix_expansion(&curve)?;

    for s in [1e-2, 1e-3, 1e-4, 1e-5] {
        let params = PlumbingParams::uniform(curve.n_edges(), s);
        let (matrix, _) = period_matrix_numeric(&curve, &params, &settings)?;
        let mut gap: f64 = 0.0;
        for (row, exp_row) in matrix.entries.iter().zip(&expansion) {
            for (entry, exp) in row.iter().zip(exp_row) {
                gap = gap.max((entry - exp.evaluate(&params)).norm());
            }
        }
        println!(
            "s={s:.0e} tau00={:.10} tau01={:.10} K={:?} gap={gap:.2e} asym={:.1e}",
            matrix.entries[0][0],
            matrix.entries[0][1],
            matrix.orders,
            matrix.asymmetry()
        );
    }
    Ok(())
}
