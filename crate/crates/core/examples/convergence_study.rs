//! Particle-to-mean-field convergence table for a few system sizes.

use atlas_meanfield::harness::{run_convergence_study, ExperimentConfig};

fn main() -> atlas_meanfield::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.discretization.dt = 1.0 / 256.0;
    cfg.discretization.paths = 20_000;
    cfg.discretization.particles = vec![50, 200, 800];
    cfg.mc.replicas = 6;
    let study = run_convergence_study(&cfg)?;
    println!(
        "boundary: {} iterations, b(1) = {:.4}",
        study.boundary.iterations,
        study.boundary.barrier().values()[256]
    );
    print!("{}", study.table.to_csv());
    Ok(())
}
