//! Frozen Brownian ensembles.
//!
//! Path `i` of an ensemble is generated from its own ChaCha8 stream keyed by the
//! ensemble seed, so a path can be regenerated on demand, in any order, on any
//! thread, and always comes out bit-identical. Nothing is stored: a `(seed, M, grid)`
//! triple fully determines the ensemble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::params::TimeGrid;

// Distinct keys for the independent families of draws attached to each path.
const BRIDGE_KEY: u64 = 0x6a09_e667_f3bc_c908;
const START_KEY: u64 = 0xbb67_ae85_84ca_a73b;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    /// Paths are generated on a grid `stride` times finer than `grid` and subsampled.
    stride: usize,
}

impl PathEnsemble {
    pub fn new(seed: u64, n_paths: usize, grid: TimeGrid) -> Result<Self> {
        if n_paths == 0 {
            return Err(invalid("paths", "ensemble needs at least one path"));
        }
        let ens = Self {
            grid,
            n_paths,
            seed,
            stride: 1,
        };
        #[cfg(debug_assertions)]
        ens.debug_check_moments();
        Ok(ens)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same Brownian paths observed on a grid `factor` times coarser.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.n_steps().is_multiple_of(factor) {
            return Err(invalid(
                "factor",
                format!("{factor} does not divide {} steps", self.grid.n_steps()),
            ));
        }
        Ok(Self {
            grid: TimeGrid::new(self.grid.n_steps() / factor, self.grid.dt() * factor as f64)?,
            n_paths: self.n_paths,
            seed: self.seed,
            stride: self.stride * factor,
        })
    }

    /// An independent ensemble on the same grid.
    pub fn independent(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    fn stream(&self, key: u64, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ key);
        rng.set_stream(i as u64);
        rng
    }

    /// Writes `W_{t_k}` for `k = 0..=n_steps` of path `i` into `w`.
    pub fn fill_path(&self, i: usize, w: &mut [f64]) {
        assert!(i < self.n_paths, "path index {i} out of range");
        assert_eq!(w.len(), self.grid.n_nodes());
        let mut rng = self.stream(0, i);
        let fine_sd = (self.grid.dt() / self.stride as f64).sqrt();
        let mut acc = 0.0;
        w[0] = 0.0;
        for slot in w.iter_mut().skip(1) {
            for _ in 0..self.stride {
                let z: f64 = rng.sample(StandardNormal);
                acc += fine_sd * z;
            }
            *slot = acc;
        }
    }

    pub fn path(&self, i: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.grid.n_nodes()];
        self.fill_path(i, &mut w);
        w
    }

    /// `ΔW_k = W_{t_{k+1}} - W_{t_k}`.
    pub fn increments(&self, i: usize) -> Vec<f64> {
        self.path(i).windows(2).map(|p| p[1] - p[0]).collect()
    }

    /// One uniform per step, used to sample the minimum of the Brownian bridge inside each step.
    pub fn fill_bridge_uniforms(&self, i: usize, u: &mut [f64]) {
        assert_eq!(u.len(), self.grid.n_steps());
        let mut rng = self.stream(BRIDGE_KEY ^ self.stride as u64, i);
        for slot in u.iter_mut() {
            // (0, 1]: keeps ln(u) finite
            *slot = 1.0 - rng.random::<f64>();
        }
    }

    /// A uniform on `[0, 1)` attached to path `i`, used to draw its starting point.
    pub fn start_uniform(&self, i: usize) -> f64 {
        self.stream(START_KEY, i).random::<f64>()
    }

    #[cfg(debug_assertions)]
    fn debug_check_moments(&self) {
        let n_check = self.n_paths.min(64);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for i in 0..n_check {
            for dw in self.increments(i) {
                sum += dw;
                sum_sq += dw * dw;
                count += 1;
            }
        }
        let n = count as f64;
        let dt = self.grid.dt();
        let mean = sum / n;
        let var = sum_sq / n - mean * mean;
        debug_assert!(
            mean.abs() < 6.0 * (dt / n).sqrt(),
            "increment mean {mean} inconsistent with 0"
        );
        debug_assert!(
            (var / dt - 1.0).abs() < 6.0 * (2.0 / n).sqrt(),
            "increment variance {var} inconsistent with dt = {dt}"
        );
    }
}
