//! Exact finite-N identities and solver invariants on the default model.

use atlas_meanfield::harness::{run_property_suite, ExperimentConfig};

fn main() -> atlas_meanfield::Result<()> {
    let report = run_property_suite(&ExperimentConfig::default())?;
    for c in &report.checks {
        println!(
            "{:<5} {:<55} {:.2e} (limit {:.0e})",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
    Ok(())
}
