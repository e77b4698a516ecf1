//! One run of the N-particle Atlas system with the barrier histogram.

use atlas_meanfield::particles::{check_regulator_constraint, sample_initial};
use atlas_meanfield::*;

fn main() -> Result<()> {
    let n = 1000;
    let params = ModelParams::new(0.5, 1.0, 1.0 / 512.0)?;
    let mu0 = PiecewiseDensity::uniform(2.0)?;
    let mut cfg = AtlasConfig::new(n, params);
    cfg.scheme = AtlasScheme::ReflectedBridge;
    cfg.tracked = vec![0, 1, 2];
    cfg.time_bin_steps = 64;
    let rec = simulate_atlas(&cfg, &sample_initial(&mu0, n, 3), 3)?;

    println!("max |mean L - gamma t| = {:.2e}", check_regulator_constraint(&rec));
    for k in (0..=512).step_by(64) {
        let tracked: Vec<String> = rec.tracked.iter().map(|t| format!("{:.3}", t.path[k])).collect();
        println!(
            "t = {:.3}  B = {:.4}  I = {:.4}  L = [{}]",
            rec.grid.node(k),
            rec.barrier[k],
            rec.integrated_barrier[k],
            tracked.join(", ")
        );
    }
    let bm = &rec.boundary_measure;
    for j in 0..bm.n_slabs() {
        let (i, mass) = bm
            .slab(j)
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, m)| if *m > best.1 { (i, *m) } else { best });
        println!(
            "slab {j}: modal barrier bin {:.3} holds {:.4} of {:.4}",
            bm.bin_center(i),
            mass,
            bm.slab_width
        );
    }
    Ok(())
}
