//! Front-fixing solve of the moving-boundary problem and its Stefan form.

use atlas_meanfield::stefan::{check_conservation, transform_to_stefan};
use atlas_meanfield::*;

fn main() -> Result<()> {
    let mu0 = PiecewiseDensity::uniform(2.0)?;
    let mut opts = PdeOptions::new(4e-5, 4e-3);
    opts.snapshot_times = vec![0.25, 0.5, 1.0];
    let sol = solve_fpe_front_fixed(&mu0, 1.0, 1.0, &opts)?;
    println!(
        "max mass drift {:.2e}",
        check_conservation(&sol.snapshots).max(sol.max_mass_drift())
    );
    for s in &sol.snapshots {
        let nu = transform_to_stefan(s);
        let near: Vec<String> = [0.0, 0.25, 0.5, 1.0, 2.0]
            .iter()
            .map(|d| format!("{:.3}", s.eval_at_x(s.b + d)))
            .collect();
        println!(
            "t = {:.2}: b = {:.4}, mass = {:.5}, mu(b + [0, .25, .5, 1, 2]) = [{}], nu(b) = {}",
            s.t,
            s.b,
            s.mass(),
            near.join(", "),
            nu.values[0]
        );
    }
    Ok(())
}
