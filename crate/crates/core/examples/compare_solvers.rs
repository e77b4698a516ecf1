//! Mean-field boundary, PDE front and particle barrier side by side.

use atlas_meanfield::harness::{compare_boundaries, ExperimentConfig};

fn main() -> atlas_meanfield::Result<()> {
    let text = "
[discretization]
dt = 0.00390625
paths = 20000
particles = [1000]
time_bin_steps = 16
dy = 0.004
dt_pde = 0.00004

[mc]
replicas = 4
";
    let cfg = ExperimentConfig::from_toml(text, "inline", None)?;
    let report = compare_boundaries(&cfg, None)?;
    print!("{}", report.to_csv());
    print!("{}", report.matrix_csv());
    println!("within {}: {}", report.tolerance, report.passed);
    Ok(())
}
