//! Mean-field boundary for Uniform[0, 2] initial data and gamma = 0.5, checked on a fresh ensemble.

use atlas_meanfield::*;

fn main() -> Result<()> {
    let mu0 = PiecewiseDensity::uniform(2.0)?;
    let params = ModelParams::new(0.5, 1.0, 1.0 / 256.0)?;
    let m = build_from_initial_density(&mu0, params.alpha())?;
    println!("m = {:?} ({:?})", m.atoms(), m.criticality());

    let paths = PathEnsemble::new(1, 20_000, params.grid())?;
    let opts = SolverOptions {
        monitoring: Monitoring::BrownianBridge,
        ..SolverOptions::default()
    };
    let report = solve_boundary_fixed_point(&m, &paths, &opts)?;
    println!(
        "converged = {} after {} iterations, residuals {:?}",
        report.converged, report.iterations, report.residuals
    );

    let check = validate_mean_local_time(
        &report.solution,
        &mu0,
        params.alpha(),
        &paths.independent(2),
        opts.monitoring,
    )?;
    println!("{:>6} {:>8} {:>8} {:>10}", "t", "b", "E[L]", "stderr");
    for k in (0..=256).step_by(32) {
        let t = params.grid().node(k);
        println!(
            "{t:>6.3} {:>8.4} {:>8.4} {:>10.5}",
            report.barrier().values()[k],
            check.mean[k],
            check.stderr[k]
        );
    }
    Ok(())
}
