//! Cross-solver comparison of the three boundary estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::FixedPointReport;
use crate::harness::config::ExperimentConfig;
use crate::harness::solve_boundary;
use crate::harness::study::mean_stderr;
use crate::particles::{replica_seed, sample_initial, simulate_atlas, AtlasConfig};
use crate::stefan::{solve_fpe_front_fixed, PdeSolution};

pub const LABELS: [&str; 3] = ["mean_field", "pde", "particles"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    /// Bin midpoints.
    pub times: Vec<f64>,
    /// Bin-averaged boundary per estimate, in the order of `labels`.
    pub series: Vec<Vec<f64>>,
    /// Replica standard error of the particle series.
    pub particle_stderr: Vec<f64>,
    /// `matrix[i][j] = max over bins |series_i - series_j|`.
    pub matrix: Vec<Vec<f64>>,
    pub tolerance: f64,
    pub passed: bool,
    pub n_particles: usize,
    pub pde_mass_drift: f64,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{},particles_stderr\n", self.labels.join(","));
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t, self.series[0][i], self.series[1][i], self.series[2][i], self.particle_stderr[i]
            ));
        }
        out
    }

    pub fn matrix_csv(&self) -> String {
        let mut out = format!("estimate,{}\n", self.labels.join(","));
        for (label, row) in self.labels.iter().zip(&self.matrix) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{label},{}\n", cells.join(",")));
        }
        out
    }
}

/// Checks that a boundary report was produced for the configured model.
pub fn check_boundary_matches(cfg: &ExperimentConfig, report: &FixedPointReport) -> Result<()> {
    let alpha = cfg.alpha();
    if (report.alpha - alpha).abs() > 1e-12 * alpha {
        return Err(Error::Validation(format!(
            "boundary was solved for gamma = {} but the configuration has gamma = {}",
            1.0 / (2.0 * report.alpha),
            cfg.model.gamma
        )));
    }
    let grid = cfg.params()?.grid();
    if report.solution.grid() != grid {
        return Err(Error::Validation(format!(
            "boundary grid ({} steps of {}) differs from the configured grid ({} steps of {})",
            report.solution.grid().n_steps(),
            report.solution.grid().dt(),
            grid.n_steps(),
            grid.dt()
        )));
    }
    Ok(())
}

/// Compares `alpha * ell`, the PDE front and the replica-averaged particle barrier (largest `N`),
/// each averaged over time bins of `time_bin_steps` steps.
pub fn compare_boundaries(cfg: &ExperimentConfig, boundary: Option<FixedPointReport>) -> Result<ComparisonReport> {
    let boundary = match boundary {
        Some(b) => {
            check_boundary_matches(cfg, &b)?;
            b
        }
        None => solve_boundary(cfg)?,
    };
    let pde = solve_fpe_front_fixed(
        &cfg.initial_density()?,
        cfg.alpha(),
        cfg.model.horizon,
        &cfg.pde_options(),
    )?;
    compare_with(cfg, &boundary, &pde)
}

pub fn compare_with(
    cfg: &ExperimentConfig,
    boundary: &FixedPointReport,
    pde: &PdeSolution,
) -> Result<ComparisonReport> {
    let params = cfg.params()?;
    let grid = params.grid();
    let alpha = params.alpha();
    let mu0 = cfg.initial_density()?;
    let bin = cfg.discretization.time_bin_steps;
    let n_bins = grid.n_steps() / bin;
    let n = *cfg.discretization.particles.iter().max().expect("validated nonempty");

    let bin_mean = |f: &dyn Fn(usize) -> f64, j: usize| (j * bin..(j + 1) * bin).map(f).sum::<f64>() / bin as f64;
    let ell = boundary.solution.values();
    let mean_field: Vec<f64> = (0..n_bins).map(|j| bin_mean(&|k| alpha * ell[k], j)).collect();
    let front: Vec<f64> = (0..n_bins)
        .map(|j| bin_mean(&|k| pde.boundary_at(grid.node(k)), j))
        .collect();

    let mut acfg = AtlasConfig::new(n, params);
    acfg.scheme = cfg.discretization.scheme;
    let mut per_replica = Vec::with_capacity(cfg.mc.replicas);
    for r in 0..cfg.mc.replicas {
        let seed = replica_seed(cfg.mc.seed, r);
        let rec = simulate_atlas(&acfg, &sample_initial(&mu0, n, seed), seed)?;
        per_replica.push(
            (0..n_bins)
                .map(|j| bin_mean(&|k| rec.barrier[k], j))
                .collect::<Vec<_>>(),
        );
    }
    let (particles, particle_stderr): (Vec<f64>, Vec<f64>) = (0..n_bins)
        .map(|j| mean_stderr(&per_replica.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .unzip();

    let series = vec![mean_field, front, particles];
    let matrix: Vec<Vec<f64>> = series
        .iter()
        .map(|a| {
            series
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
                .collect()
        })
        .collect();
    let tolerance = cfg.mc.compare_tolerance;
    let passed = matrix.iter().flatten().all(|d| *d <= tolerance);
    Ok(ComparisonReport {
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
        times: (0..n_bins).map(|j| (j as f64 + 0.5) * bin as f64 * grid.dt()).collect(),
        series,
        particle_stderr,
        matrix,
        tolerance,
        passed,
        n_particles: n,
        pde_mass_drift: pde.max_mass_drift(),
    })
}
