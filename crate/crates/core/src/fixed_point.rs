//! Mean-field boundary by fixed-point iteration.
//!
//! The boundary is `b = alpha * ell`, where `ell` solves `ell = Λ(ell)` with
//!
//! ```text
//! Λ_t(f) = ∫ E[ sup_{s<=t} (x + W_s - alpha f_s)_- ] dm(x).
//! ```
//!
//! Every `x`-indexed process is driven by the same Brownian path, so
//! `sup_{s<=t} (x + W_s - alpha f_s)_- = (R_t - x)_+` with `R` the regulator of
//! `W - alpha f` reflected at zero. One regulator per path therefore gives the
//! whole `x`-integral in closed form. The hitting-time form uses
//! `{tau_x <= t} = {R_t >= x}` and integrates `v = m([0, ·])` up to `R_t` instead.
//!
//! The Brownian ensemble is frozen across iterations (common random numbers),
//! which makes the iterated map deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::PiecewiseDensity;
use crate::ensemble::PathEnsemble;
use crate::error::Result;
use crate::measure::{Criticality, SignedMeasureProfile};
use crate::params::{BoundaryPath, TimeGrid};
use crate::skorokhod::{reflect_against_barrier, running_regulator_bridge_into, running_regulator_into, Monitoring};

const CHUNK: usize = 512;

/// Nodewise Monte-Carlo mean with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Which of the two equivalent integrands is used for `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// `∫ (R - x)_+ dm(x)`
    LocalTime,
    /// `∫_0^R v(x) dx`
    HittingTime,
}

struct Scratch {
    w: Vec<f64>,
    r: Vec<f64>,
    u: Vec<f64>,
    out: Vec<f64>,
}

impl Scratch {
    fn new(grid: TimeGrid, n_out: usize) -> Self {
        Self {
            w: vec![0.0; grid.n_nodes()],
            r: vec![0.0; grid.n_nodes()],
            u: vec![0.0; grid.n_steps()],
            out: vec![0.0; n_out],
        }
    }

    /// Fills `w` with path `i` and `r` with the regulator of `w - alpha f`.
    fn regulator(&mut self, paths: &PathEnsemble, i: usize, f: &[f64], alpha: f64, monitoring: Monitoring) {
        paths.fill_path(i, &mut self.w);
        match monitoring {
            Monitoring::Nodes => running_regulator_into(&self.w, f, alpha, &mut self.r),
            Monitoring::BrownianBridge => {
                paths.fill_bridge_uniforms(i, &mut self.u);
                running_regulator_bridge_into(&self.w, f, alpha, &self.u, paths.grid().dt(), &mut self.r)
            }
        }
    }
}

/// Averages a per-path vector of length `n_out` over the ensemble.
///
/// Paths are processed in fixed chunks whose partial sums are added in chunk
/// order, so the result does not depend on the number of worker threads.
fn ensemble_average<K>(paths: &PathEnsemble, n_out: usize, kernel: K) -> Estimate
where
    K: Fn(usize, &mut Scratch) + Sync,
{
    let n = paths.n_paths();
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = Scratch::new(paths.grid(), n_out);
            let mut sum = vec![0.0; n_out];
            let mut sum_sq = vec![0.0; n_out];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                kernel(i, &mut scratch);
                for ((s, q), v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&scratch.out) {
                    *s += v;
                    *q += v * v;
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = vec![0.0; n_out];
    let mut sum_sq = vec![0.0; n_out];
    for (s, q) in partials {
        for k in 0..n_out {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let stderr = if n > 1 {
        sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| ((q / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt())
            .collect()
    } else {
        vec![0.0; n_out]
    };
    Estimate { mean, stderr }
}

/// `Λ(f)` on the ensemble, with per-node standard errors.
pub fn evaluate_lambda(
    f: &BoundaryPath,
    m: &SignedMeasureProfile,
    paths: &PathEnsemble,
    representation: Representation,
    monitoring: Monitoring,
) -> Result<LambdaEstimate> {
    let grid = paths.grid();
    grid.check_len(f.values().len())?;
    let alpha = m.alpha();
    let fv = f.values();
    let integrand = |r: f64| match representation {
        Representation::LocalTime => m.integrate_hinge(r),
        Representation::HittingTime => m.integrate_cdf(r),
    };
    let est = ensemble_average(paths, grid.n_nodes(), |i, s| {
        s.regulator(paths, i, fv, alpha, monitoring);
        // R is nondecreasing and often flat: reuse the last integral
        let (mut last_r, mut last_c) = (0.0, integrand(0.0));
        for (o, &r) in s.out.iter_mut().zip(&s.r) {
            if r != last_r {
                last_r = r;
                last_c = integrand(r);
            }
            *o = last_c;
        }
    });
    Ok(LambdaEstimate {
        values: BoundaryPath::new(grid, est.mean)?,
        stderr: est.stderr,
    })
}

/// `Λ(f)` as a boundary path together with its Monte-Carlo standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaEstimate {
    pub values: BoundaryPath,
    pub stderr: Vec<f64>,
}

/// Local-time form `∫ E[(R_t - x)_+] dm(x)` with node monitoring.
pub fn lambda_map(f: &BoundaryPath, m: &SignedMeasureProfile, paths: &PathEnsemble) -> Result<LambdaEstimate> {
    evaluate_lambda(f, m, paths, Representation::LocalTime, Monitoring::Nodes)
}

/// Hitting-time form `∫ P(tau_x <= t) v(x) dx` with node monitoring.
pub fn lambda_map_hitting(f: &BoundaryPath, m: &SignedMeasureProfile, paths: &PathEnsemble) -> Result<LambdaEstimate> {
    evaluate_lambda(f, m, paths, Representation::HittingTime, Monitoring::Nodes)
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stopping threshold on `sup_k |Λ(f)_k - f_k|`. `None` means `1e-3 (1 + sup ell*)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Relaxation `theta` in `f <- (1 - theta) f + theta Λ(f)`.
    pub damping: f64,
    /// Halve `theta` whenever the residual grows.
    pub auto_damping: bool,
    pub monitoring: Monitoring,
    /// Starting point; zero when absent.
    pub initial: Option<BoundaryPath>,
    /// Also solve for the envelope boundary `ell*` of `m*` and compare.
    pub envelope: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 200,
            damping: 1.0,
            auto_damping: true,
            monitoring: Monitoring::Nodes,
            initial: None,
            envelope: true,
        }
    }
}

const RELATIVE_TOL: f64 = 1e-3;
const MIN_DAMPING: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub solution: BoundaryPath,
    pub stderr: Vec<f64>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
    pub damping: f64,
    pub criticality: Criticality,
    pub alpha: f64,
    /// Boundary `ell*` of the monotone envelope, when requested.
    pub envelope: Option<BoundaryPath>,
    /// `max_k (ell_k - ell*_k - 3 stderr_k)`, positive when the envelope bound is violated.
    pub envelope_excess: Option<f64>,
}

impl FixedPointReport {
    /// `b = alpha * ell`.
    pub fn barrier(&self) -> BoundaryPath {
        self.solution.scaled(self.alpha)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Iterates `f <- (1 - theta) f + theta Λ(f)` until the sup-norm residual drops below the tolerance.
///
/// Non-convergence is reported through `converged = false`, never as an error.
pub fn solve_boundary_fixed_point(
    m: &SignedMeasureProfile,
    paths: &PathEnsemble,
    opts: &SolverOptions,
) -> Result<FixedPointReport> {
    let envelope = if opts.envelope {
        let env = m.monotone_envelope();
        if same_measure(&env, m) {
            None
        } else {
            let inner = SolverOptions {
                initial: None,
                envelope: false,
                ..opts.clone()
            };
            Some(picard(&env, paths, &inner, None)?)
        }
    } else {
        None
    };
    let tol = opts
        .tol
        .or_else(|| envelope.as_ref().map(|e| RELATIVE_TOL * (1.0 + e.solution.sup())));
    let mut report = picard(m, paths, opts, tol)?;
    if opts.envelope {
        let (env_path, env_se) = match &envelope {
            Some(e) => (e.solution.clone(), e.stderr.clone()),
            None => (report.solution.clone(), report.stderr.clone()),
        };
        let excess = report
            .solution
            .values()
            .iter()
            .zip(env_path.values())
            .zip(report.stderr.iter().zip(&env_se))
            .map(|((l, e), (s1, s2))| l - e - 3.0 * (s1 * s1 + s2 * s2).sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        report.envelope = Some(env_path);
        report.envelope_excess = Some(excess);
    }
    Ok(report)
}

fn picard(
    m: &SignedMeasureProfile,
    paths: &PathEnsemble,
    opts: &SolverOptions,
    tol: Option<f64>,
) -> Result<FixedPointReport> {
    let grid = paths.grid();
    let mut f = match &opts.initial {
        Some(init) => {
            grid.check_len(init.values().len())?;
            init.clone()
        }
        None => BoundaryPath::zeros(grid),
    };
    let mut theta = opts.damping.clamp(MIN_DAMPING, 1.0);
    let mut residuals = Vec::new();
    let mut last = None;
    let mut converged = false;
    let mut tolerance = tol.unwrap_or(RELATIVE_TOL);
    for _ in 0..opts.max_iter.max(1) {
        let next = evaluate_lambda(&f, m, paths, Representation::LocalTime, opts.monitoring)?;
        let res = next.values.sup_distance(&f);
        if tol.is_none() {
            tolerance = RELATIVE_TOL * (1.0 + next.values.sup().max(0.0));
        }
        if opts.auto_damping && residuals.last().is_some_and(|prev| res > *prev) {
            theta = (theta * 0.5).max(MIN_DAMPING);
        }
        residuals.push(res);
        if res < tolerance {
            converged = true;
            last = Some(next);
            break;
        }
        let blended: Vec<f64> = f
            .values()
            .iter()
            .zip(next.values.values())
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        f = BoundaryPath::new(grid, blended)?;
        last = Some(next);
    }
    let last = last.expect("at least one iteration");
    Ok(FixedPointReport {
        solution: last.values,
        stderr: last.stderr,
        iterations: residuals.len(),
        residuals,
        converged,
        tolerance,
        damping: theta,
        criticality: m.criticality(),
        alpha: m.alpha(),
        envelope: None,
        envelope_excess: None,
    })
}

fn same_measure(a: &SignedMeasureProfile, b: &SignedMeasureProfile) -> bool {
    a.atoms() == b.atoms() && a.cells().eq(b.cells())
}

/// Monte-Carlo estimate of `E[L_t]` for a particle started from `mu0` and reflected at `alpha * ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanLocalTime {
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl MeanLocalTime {
    /// `|E[L_{t_k}] - gamma t_k|` per node.
    pub fn deviation(&self, gamma: f64) -> Vec<f64> {
        self.mean
            .iter()
            .enumerate()
            .map(|(k, m)| (m - gamma * self.grid.node(k)).abs())
            .collect()
    }

    /// `max_k (|E[L_{t_k}] - gamma t_k| - z stderr_k)`; nonpositive when every node is within `z` standard errors.
    pub fn max_excess(&self, gamma: f64, z: f64) -> f64 {
        self.deviation(gamma)
            .iter()
            .zip(&self.stderr)
            .map(|(d, s)| d - z * s)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Reflects `xi + W` at `b = alpha * ell` with `xi ~ mu0` on every path of `paths`.
///
/// Use an ensemble independent of the one the boundary was solved on.
pub fn validate_mean_local_time(
    ell: &BoundaryPath,
    mu0: &PiecewiseDensity,
    alpha: f64,
    paths: &PathEnsemble,
    monitoring: Monitoring,
) -> Result<MeanLocalTime> {
    let grid = paths.grid();
    grid.check_len(ell.values().len())?;
    let barrier = ell.scaled(alpha);
    let b = barrier.values();
    let est = ensemble_average(paths, grid.n_nodes(), |i, s| {
        let xi = mu0.quantile(paths.start_uniform(i));
        match monitoring {
            Monitoring::Nodes => {
                paths.fill_path(i, &mut s.w);
                let pair = reflect_against_barrier(xi, &s.w, b).expect("xi >= 0 = b_0");
                s.out.copy_from_slice(&pair.regulator);
            }
            Monitoring::BrownianBridge => {
                s.regulator(paths, i, ell.values(), alpha, monitoring);
                for (o, r) in s.out.iter_mut().zip(&s.r) {
                    *o = (r - xi).max(0.0);
                }
            }
        }
    });
    Ok(MeanLocalTime {
        grid,
        mean: est.mean,
        stderr: est.stderr,
    })
}

/// Density of the mean-field law at distance `x >= 0` above the boundary at node `k`:
///
/// `mu_t(x) = (1/alpha) P(X0_t > x) + E[1{X0_t <= x} mu0(x + alpha ell_t - W_t)]`,
///
/// where `X0 = W - alpha ell + R` is the driving process reflected at zero.
/// Returns one `(estimate, stderr)` pair per entry of `xs`.
pub fn mean_field_density(
    ell: &BoundaryPath,
    mu0: &PiecewiseDensity,
    alpha: f64,
    k: usize,
    xs: &[f64],
    paths: &PathEnsemble,
) -> Result<Vec<(f64, f64)>> {
    let grid = paths.grid();
    grid.check_len(ell.values().len())?;
    let shift = alpha * ell.values()[k];
    let est = ensemble_average(paths, xs.len(), |i, s| {
        s.regulator(paths, i, ell.values(), alpha, Monitoring::Nodes);
        let wk = s.w[k];
        let x0 = wk - shift + s.r[k];
        for (o, &x) in s.out.iter_mut().zip(xs) {
            *o = if x0 > x { 1.0 / alpha } else { mu0.eval(x + shift - wk) };
        }
    });
    Ok(est.mean.into_iter().zip(est.stderr).collect())
}

/// Reflection-corrected Gaussian kernel estimate of the mean-field density at the boundary,
/// from particles `xi + W` (with `xi ~ mu0`) reflected at `alpha * ell`, observed at node `k`.
pub fn boundary_density_kde(
    ell: &BoundaryPath,
    mu0: &PiecewiseDensity,
    alpha: f64,
    k: usize,
    bandwidth: f64,
    paths: &PathEnsemble,
    monitoring: Monitoring,
) -> Result<(f64, f64)> {
    let grid = paths.grid();
    grid.check_len(ell.values().len())?;
    let shift = alpha * ell.values()[k];
    let norm = 2.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let est = ensemble_average(paths, 1, |i, s| {
        let xi = mu0.quantile(paths.start_uniform(i));
        s.regulator(paths, i, ell.values(), alpha, monitoring);
        let local_time = (s.r[k] - xi).max(0.0);
        let gap = xi + s.w[k] - shift + local_time;
        let u = gap / bandwidth;
        s.out[0] = norm * (-0.5 * u * u).exp();
    });
    Ok((est.mean[0], est.stderr[0]))
}
