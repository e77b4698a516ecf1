//! Reflects a random walk at zero and against a moving barrier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atlas_meanfield::{reflect_against_barrier, reflect_at_zero};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut f = vec![0.2];
    for _ in 0..20 {
        let last = f[f.len() - 1];
        f.push(last + rng.random_range(-0.15..0.15));
    }
    let pair = reflect_at_zero(&f).unwrap();
    println!("{:>3} {:>9} {:>9} {:>9}", "k", "f", "x", "z");
    for k in 0..f.len() {
        println!("{k:>3} {:>9.4} {:>9.4} {:>9.4}", f[k], pair.path[k], pair.regulator[k]);
    }

    let w: Vec<f64> = f.iter().map(|v| v - 0.2).collect();
    let barrier: Vec<f64> = (0..w.len()).map(|k| 0.02 * k as f64).collect();
    let pair = reflect_against_barrier(0.1, &w, &barrier).unwrap();
    println!(
        "against b_k = 0.02 k from xi = 0.1: L_T = {:.4}, X_T - b_T = {:.4}",
        pair.regulator[w.len() - 1],
        pair.path[w.len() - 1] - barrier[w.len() - 1]
    );
}
