//! Particle-to-mean-field convergence study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::PiecewiseDensity;
use crate::error::{Error, Result};
use crate::fixed_point::FixedPointReport;
use crate::harness::config::ExperimentConfig;
use crate::harness::solve_boundary;
use crate::params::{BoundaryPath, ModelParams};
use crate::particles::{replica_seed, sample_initial, simulate_atlas, AtlasConfig, ParticleRecord};

/// Column identifiers of a [`ConvergenceTable`].
pub const METRICS: [&str; 3] = [
    "integrated_barrier_distance",
    "tracked_regulator_error",
    "boundary_measure_w1",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub replicas: usize,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub metrics: Vec<String>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn row(&self, n: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,replicas");
        for m in &self.metrics {
            out.push_str(&format!(",{m},{m}_stderr"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{}", r.n, r.replicas));
            for (v, s) in r.values.iter().zip(&r.stderr) {
                out.push_str(&format!(",{v},{s}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-replica metrics of one particle run against the mean-field boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaMetrics {
    /// (a) `sup_k |I^N(t_k) - int_0^{t_k} alpha ell ds|`.
    pub integrated_distance: f64,
    /// `L^{N,1}_T` of the first tracked particle.
    pub tracked_regulator: f64,
    /// (c) time-bin average of `W1(beta^N_bin, delta_{alpha ell})`.
    pub boundary_w1: f64,
}

impl ReplicaMetrics {
    pub fn from_record(rec: &ParticleRecord, ell: &BoundaryPath, alpha: f64) -> Self {
        let b = ell.scaled(alpha);
        let integrated = b.integrated();
        let integrated_distance = rec
            .integrated_barrier
            .iter()
            .zip(&integrated)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let bm = &rec.boundary_measure;
        let n_slabs = bm.n_slabs();
        let boundary_w1 = (0..n_slabs)
            .map(|j| bm.w1_to_point(j, b.value_at((j as f64 + 0.5) * bm.slab_width)))
            .sum::<f64>()
            / n_slabs as f64;
        Self {
            integrated_distance,
            tracked_regulator: rec.tracked.first().map_or(f64::NAN, |t| t.path[t.path.len() - 1]),
            boundary_w1,
        }
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub boundary: FixedPointReport,
    pub table: ConvergenceTable,
}

/// Solves the mean-field boundary, then runs every `(N, replica)` particle system against it.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceStudy> {
    let boundary = solve_boundary(cfg)?;
    if !boundary.converged {
        return Err(Error::NotConverged {
            iterations: boundary.iterations,
            residual: boundary.final_residual(),
        });
    }
    let table = convergence_table(cfg, &boundary.solution)?;
    Ok(ConvergenceStudy { boundary, table })
}

/// The table for a given boundary `ell`.
pub fn convergence_table(cfg: &ExperimentConfig, ell: &BoundaryPath) -> Result<ConvergenceTable> {
    let params = cfg.params()?;
    let mu0 = cfg.initial_density()?;
    let mut sizes = cfg.discretization.particles.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let replicas = cfg.mc.replicas;
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..replicas).map(move |r| (n, r))).collect();
    let results: Vec<ReplicaMetrics> = jobs
        .par_iter()
        .map(|&(n, r)| run_replica(cfg, params, &mu0, ell, n, r))
        .collect::<Result<_>>()?;
    let gamma_t = params.gamma() * params.horizon();
    let rows = sizes
        .iter()
        .zip(results.chunks(replicas))
        .map(|(&n, chunk)| {
            let col = |f: fn(&ReplicaMetrics) -> f64| chunk.iter().map(f).collect::<Vec<_>>();
            let (a, a_se) = mean_stderr(&col(|m| m.integrated_distance));
            let (l, l_se) = mean_stderr(&col(|m| m.tracked_regulator));
            let (c, c_se) = mean_stderr(&col(|m| m.boundary_w1));
            ConvergenceRow {
                n,
                replicas,
                values: vec![a, (l - gamma_t).abs(), c],
                stderr: vec![a_se, l_se, c_se],
            }
        })
        .collect();
    Ok(ConvergenceTable {
        metrics: METRICS.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

fn run_replica(
    cfg: &ExperimentConfig,
    params: ModelParams,
    mu0: &PiecewiseDensity,
    ell: &BoundaryPath,
    n: usize,
    r: usize,
) -> Result<ReplicaMetrics> {
    let seed = replica_seed(cfg.mc.seed ^ (n as u64).rotate_left(32), r);
    let mut acfg = AtlasConfig::new(n, params);
    acfg.scheme = cfg.discretization.scheme;
    acfg.space_bin_width = cfg.discretization.space_bin;
    acfg.time_bin_steps = cfg.discretization.time_bin_steps;
    let init = sample_initial(mu0, n, seed);
    let rec = simulate_atlas(&acfg, &init, seed)?;
    Ok(ReplicaMetrics::from_record(&rec, ell, params.alpha()))
}
