//! Exact finite-`N` identities and solver invariants, reported rather than thrown.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::PiecewiseDensity;
use crate::ensemble::PathEnsemble;
use crate::error::Result;
use crate::fixed_point::{lambda_map, lambda_map_hitting};
use crate::harness::config::ExperimentConfig;
use crate::measure::{Atom, Cell, SignedMeasureProfile};
use crate::params::{BoundaryPath, ModelParams, TimeGrid};
use crate::particles::{
    check_regulator_constraint, replica_seed, sample_initial, simulate_atlas, simulate_atlas_observed,
    simulate_coupled_pair, AtlasConfig, StepObserver, StepView,
};
use crate::skorokhod::reflect_at_zero;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    /// The measured quantity; the check passes when `value <= limit`.
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    fn push(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.checks.push(PropertyCheck {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value,limit,passed\n");
        for c in &self.checks {
            out.push_str(&format!("{},{},{},{}\n", c.name, c.value, c.limit, c.passed));
        }
        out
    }
}

/// `phi(t, x) = clip(slope x + offset, lo, hi) * 1{t in [t0, t1]}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub slope: f64,
    pub offset: f64,
    pub lo: f64,
    pub hi: f64,
    pub t0: f64,
    pub t1: f64,
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        Self {
            slope: 0.0,
            offset: c,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            t0: f64::NEG_INFINITY,
            t1: f64::INFINITY,
        }
    }

    pub fn clipped_identity(lo: f64, hi: f64) -> Self {
        Self {
            slope: 1.0,
            offset: 0.0,
            lo,
            hi,
            ..Self::constant(0.0)
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        if t < self.t0 || t > self.t1 {
            return 0.0;
        }
        (self.slope * x + self.offset).clamp(self.lo, self.hi)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.slope >= 0.0
    }

    /// The fixed family: constants, clipped linear functions in `x`, and their products with time windows.
    /// Draws with `slope < 0` are included only when `monotone` is false.
    pub fn family(n: usize, horizon: f64, monotone: bool, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![Self::constant(1.0), Self::clipped_identity(0.0, 10.0)];
        while out.len() < n {
            let slope = if monotone {
                rng.random_range(0.0..3.0)
            } else {
                rng.random_range(-3.0..3.0)
            };
            let lo = rng.random_range(-1.0..0.5);
            let mut f = Self {
                slope,
                offset: rng.random_range(-1.0..1.0),
                lo,
                hi: lo + rng.random_range(0.1..3.0),
                ..Self::constant(0.0)
            };
            if out.len() % 2 == 0 {
                let a = rng.random_range(0.0..horizon);
                f.t0 = a;
                f.t1 = rng.random_range(a..=horizon);
            }
            out.push(f);
        }
        out.truncate(n);
        out
    }
}

/// Accumulates both sides of the finite-`N` boundary identities for a set of test functions.
///
/// * property (i): `(1/N) sum_j sum_k phi(t, X^j) ΔL^j = gamma sum_k phi(t, B) dt`;
/// * property (ii): `(1/N) sum_j sum_k phi(t, X^j) gamma dt >= gamma sum_k phi(t, B) dt` for `phi` nondecreasing in `x`,
///   tracked through the termwise-nonnegative gap so that rounding cannot flip its sign.
pub struct IdentityObserver {
    pub functions: Vec<TestFunction>,
    n: f64,
    gamma: f64,
    pub regulator_side: Vec<f64>,
    pub barrier_side: Vec<f64>,
    pub barrier_abs: Vec<f64>,
    pub minimality_gap: Vec<f64>,
}

impl IdentityObserver {
    pub fn new(functions: Vec<TestFunction>, n_particles: usize, gamma: f64) -> Self {
        let k = functions.len();
        Self {
            functions,
            n: n_particles as f64,
            gamma,
            regulator_side: vec![0.0; k],
            barrier_side: vec![0.0; k],
            barrier_abs: vec![0.0; k],
            minimality_gap: vec![0.0; k],
        }
    }

    /// `max |lhs - rhs| / sum |rhs terms|` for property (i).
    pub fn identity_residual(&self) -> f64 {
        self.regulator_side
            .iter()
            .zip(&self.barrier_side)
            .zip(&self.barrier_abs)
            .map(|((l, r), a)| (l - r).abs() / a.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

impl StepObserver for IdentityObserver {
    fn observe(&mut self, view: &StepView<'_>) {
        for (i, phi) in self.functions.iter().enumerate() {
            let pb = phi.eval(view.t, view.barrier);
            let lifted: f64 = view.lifted.iter().map(|(_, dl)| pb * dl).sum();
            self.regulator_side[i] += lifted / self.n;
            self.barrier_side[i] += self.gamma * pb * view.dt;
            self.barrier_abs[i] += (self.gamma * pb * view.dt).abs();
            let gap: f64 = view.positions.iter().map(|x| phi.eval(view.t, *x) - pb).sum();
            self.minimality_gap[i] += gap * self.gamma * view.dt / self.n;
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertySuiteOptions {
    pub n_particles: usize,
    pub coupled_seeds: usize,
    pub test_functions: usize,
    pub fubini_profiles: usize,
    pub fubini_paths: usize,
    pub skorokhod_paths: usize,
}

impl Default for PropertySuiteOptions {
    fn default() -> Self {
        Self {
            n_particles: 500,
            coupled_seeds: 10,
            test_functions: 20,
            fubini_profiles: 5,
            fubini_paths: 2000,
            skorokhod_paths: 200,
        }
    }
}

/// A random atomic-plus-cells profile on `[0, 3]` that stays subcritical.
pub fn random_profile(rng: &mut impl Rng, alpha: f64) -> Result<SignedMeasureProfile> {
    loop {
        let atoms: Vec<Atom> = (0..rng.random_range(1..4))
            .map(|i| Atom {
                x: if i == 0 { 0.0 } else { rng.random_range(0.0..3.0) },
                mass: rng.random_range(-0.3..0.4) / alpha,
            })
            .collect();
        let a = rng.random_range(0.0..2.0);
        let cells = vec![Cell {
            a,
            b: a + rng.random_range(0.1..1.0),
            density: rng.random_range(-0.3..0.3) / alpha,
        }];
        if let Ok(m) = SignedMeasureProfile::new(atoms, cells, alpha) {
            return Ok(m);
        }
    }
}

/// Runs every check on the configured model.
pub fn run_property_suite(cfg: &ExperimentConfig) -> Result<PropertyReport> {
    run_property_suite_with(cfg, &PropertySuiteOptions::default())
}

pub fn run_property_suite_with(cfg: &ExperimentConfig, opts: &PropertySuiteOptions) -> Result<PropertyReport> {
    let params = cfg.params()?;
    let mu0 = cfg.initial_density()?;
    let seed = cfg.mc.seed;
    let mut report = PropertyReport::default();
    particle_checks(&mut report, params, &mu0, cfg, opts, seed)?;
    skorokhod_checks(&mut report, opts.skorokhod_paths, seed);
    measure_checks(&mut report, cfg.alpha(), seed)?;
    fubini_check(&mut report, cfg.alpha(), params.grid(), opts, seed)?;
    Ok(report)
}

fn particle_checks(
    report: &mut PropertyReport,
    params: ModelParams,
    mu0: &PiecewiseDensity,
    cfg: &ExperimentConfig,
    opts: &PropertySuiteOptions,
    seed: u64,
) -> Result<()> {
    let n = opts.n_particles;
    let mut acfg = AtlasConfig::new(n, params);
    acfg.scheme = cfg.discretization.scheme;
    acfg.store_all_regulators = true;
    let gamma = params.gamma();
    let gt = gamma * params.horizon();
    let init = sample_initial(mu0, n, seed);

    let any = TestFunction::family(opts.test_functions, params.horizon(), false, seed);
    let monotone = TestFunction::family(opts.test_functions, params.horizon(), true, seed ^ 1);
    let mut obs_any = IdentityObserver::new(any, n, gamma);
    let mut obs_mono = IdentityObserver::new(monotone, n, gamma);
    let rec = simulate_atlas_observed(&acfg, &init, seed, &mut [&mut obs_any, &mut obs_mono])?;

    report.push(
        "regulator constraint (relative to gamma T)",
        check_regulator_constraint(&rec) / gt,
        1e-9,
    );
    let direct = rec
        .mean_regulator
        .iter()
        .enumerate()
        .map(|(k, m)| (m - gamma * rec.grid.node(k)).abs())
        .fold(0.0, f64::max);
    report.push("running mean regulator (relative to gamma T)", direct / gt, 1e-9);
    let residual = obs_any.identity_residual().max(obs_mono.identity_residual());
    report.push("property (i) identity residual (relative)", residual, 1e-9);
    let worst_gap = obs_mono.minimality_gap.iter().copied().fold(f64::INFINITY, f64::min);
    report.push(
        "property (ii) violation for nondecreasing phi",
        (-worst_gap).max(0.0),
        0.0,
    );
    let below = rec
        .final_positions
        .iter()
        .map(|x| rec.barrier[rec.barrier.len() - 1] - x)
        .fold(f64::NEG_INFINITY, f64::max);
    report.push("barrier below every particle", below.max(0.0), 0.0);

    let again = simulate_atlas(&acfg, &init, seed)?;
    let same = again.barrier == rec.barrier && again.final_positions == rec.final_positions;
    report.push("identical seed reproduces the run", if same { 0.0 } else { 1.0 }, 0.0);

    acfg.store_all_regulators = false;
    let mut worst = 0.0_f64;
    for r in 0..opts.coupled_seeds {
        let s = replica_seed(seed, r);
        let low = sample_initial(mu0, n, s);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let high: Vec<f64> = low.iter().map(|x| x + rng.random::<f64>()).collect();
        let run = simulate_coupled_pair(&acfg, &low, &high, s)?;
        worst = worst.max(run.position_violation).max(run.barrier_violation);
    }
    report.push("comparison ordering violation over coupled seeds", worst, 0.0);
    Ok(())
}

fn skorokhod_checks(report: &mut PropertyReport, n_paths: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst = 0.0_f64;
    for _ in 0..n_paths {
        let mut f = vec![rng.random_range(0.0..0.5)];
        for _ in 0..256 {
            let last = f[f.len() - 1];
            f.push(last + rng.random_range(-0.1..0.1));
        }
        let pair = reflect_at_zero(&f).expect("f_0 >= 0");
        let (x, z) = (&pair.path, &pair.regulator);
        worst = worst.max(z[0].abs());
        for k in 0..f.len() {
            worst = worst.max((-x[k]).max(0.0));
            if k > 0 {
                worst = worst.max(z[k - 1] - z[k]);
                if z[k] > z[k - 1] {
                    worst = worst.max(x[k].abs());
                }
            }
        }
    }
    report.push("skorokhod: x >= 0, z nondecreasing, z grows only at 0", worst, 0.0);
}

fn measure_checks(report: &mut PropertyReport, alpha: f64, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
    let mut fubini = 0.0_f64;
    let mut envelope = 0.0_f64;
    for _ in 0..50 {
        let m = random_profile(&mut rng, alpha)?;
        for _ in 0..20 {
            let r = rng.random_range(0.0..4.0);
            let (h, c) = (m.integrate_hinge(r), m.integrate_cdf(r));
            fubini = fubini.max((h - c).abs() / h.abs().max(c.abs()).max(1.0));
        }
        let env = m.monotone_envelope();
        let mut prev = 0.0;
        for j in 0..400 {
            let x = j as f64 * 0.01;
            let (e, v) = (env.cdf_at(x), m.cdf_at(x));
            envelope = envelope.max(prev - e).max(-e).max(v - e).max(e - 1.0 / alpha - 1e-12);
            prev = e;
        }
    }
    report.push("hinge and cdf integrals agree (relative)", fubini, 1e-12);
    report.push(
        "envelope nondecreasing, >= max(v, 0), <= 1/alpha",
        envelope.max(0.0),
        1e-12,
    );

    let mu0 = PiecewiseDensity::new(vec![0.0, 0.5, 1.5], vec![0.4, 0.8])?;
    let m = crate::measure::build_from_initial_density(&mu0, alpha)?;
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let x = rng.random_range(0.0..2.0);
        worst = worst.max((m.cdf_at(x) - (1.0 / alpha - mu0.eval(x))).abs());
    }
    report.push("m([0, x]) reproduces 1/alpha - mu0(x)", worst, 1e-12);
    Ok(())
}

fn fubini_check(
    report: &mut PropertyReport,
    alpha: f64,
    grid: TimeGrid,
    opts: &PropertySuiteOptions,
    seed: u64,
) -> Result<()> {
    let paths = PathEnsemble::new(seed, opts.fubini_paths, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf00d);
    let mut worst = 0.0_f64;
    for _ in 0..opts.fubini_profiles {
        let m = random_profile(&mut rng, alpha)?;
        let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(-0.5..0.5));
        let f = BoundaryPath::from_fn(grid, |t| a * t.sqrt() + b * t)?;
        let local = lambda_map(&f, &m, &paths)?;
        let hitting = lambda_map_hitting(&f, &m, &paths)?;
        worst = worst.max(local.values.sup_distance(&hitting.values));
    }
    report.push("lambda_map equals lambda_map_hitting", worst, 1e-10);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_members() {
        let fam = TestFunction::family(20, 1.0, true, 3);
        assert_eq!(fam.len(), 20);
        assert!(fam.iter().all(TestFunction::is_nondecreasing));
        assert_eq!(fam[1].eval(0.5, 12.0), 10.0);
        assert_eq!(fam[1].eval(0.5, -1.0), 0.0);
    }

    #[test]
    fn small_suite_passes() {
        let mut cfg = ExperimentConfig::default();
        cfg.discretization.dt = 1.0 / 128.0;
        cfg.discretization.time_bin_steps = 1;
        let opts = PropertySuiteOptions {
            n_particles: 50,
            coupled_seeds: 2,
            test_functions: 5,
            fubini_profiles: 2,
            fubini_paths: 100,
            skorokhod_paths: 20,
        };
        let report = run_property_suite_with(&cfg, &opts).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
