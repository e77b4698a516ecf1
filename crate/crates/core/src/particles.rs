//! The finite Atlas system: `N` Brownian particles, the lowest of which receives drift `gamma N`.
//!
//! Equivalently each particle is reflected at the common barrier `B^N`, with regulators
//! `L^i` constrained by `(1/N) sum_i L^i_t = gamma t`. Two time-stepping schemes are provided:
//!
//! * [`AtlasScheme::ReflectedLevel`] (default) moves every particle by its Gaussian increment and
//!   then raises the barrier to the level `B` at which lifting all particles below `B` up to `B`
//!   costs exactly `gamma N dt`. This is the node-monitored Skorokhod map against `B^N`; it keeps
//!   the regulator constraint, the boundary identities and the comparison principle exact.
//! * [`AtlasScheme::ArgminEuler`] adds `gamma N dt` to the current lowest particle (ties go to the
//!   lowest index) before the Gaussian step. It is the literal Euler scheme for the drift form.
//!   Its deposit grows with `N`, and for large `gamma N dt` it does not preserve the ordering of
//!   coupled systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::PiecewiseDensity;
use crate::error::{invalid, Error, Result};
use crate::params::{left_riemann, ModelParams, TimeGrid};
use crate::skorokhod::bridge_minimum;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtlasScheme {
    /// Move every particle, then lift those below a common level until the lifts add up to `gamma N dt`.
    #[default]
    ReflectedLevel,
    /// As `ReflectedLevel`, with the level set against each particle's sampled Brownian-bridge
    /// minimum over the step instead of its end point. Removes the `O(sqrt(dt))` bias of node reflection.
    ReflectedBridge,
    /// Deposit `gamma N dt` into the current lowest particle, then move every particle.
    ArgminEuler,
}

#[derive(Debug, Clone)]
pub struct AtlasConfig {
    pub n_particles: usize,
    pub params: ModelParams,
    pub scheme: AtlasScheme,
    /// Particles whose regulator paths are kept.
    pub tracked: Vec<usize>,
    /// Keep every regulator path (memory `N x steps`).
    pub store_all_regulators: bool,
    pub space_bin_width: f64,
    /// Number of time steps per time bin of the empirical boundary measure.
    pub time_bin_steps: usize,
}

impl AtlasConfig {
    pub fn new(n_particles: usize, params: ModelParams) -> Self {
        Self {
            n_particles,
            params,
            scheme: AtlasScheme::default(),
            tracked: vec![0],
            store_all_regulators: false,
            space_bin_width: 0.01,
            time_bin_steps: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(invalid("n_particles", "need at least one particle"));
        }
        if let Some(i) = self.tracked.iter().find(|i| **i >= self.n_particles) {
            return Err(invalid("tracked", format!("particle {i} out of range")));
        }
        if !(self.space_bin_width > 0.0) {
            return Err(invalid("space_bin_width", "must be positive"));
        }
        if self.time_bin_steps == 0 || !self.params.grid().n_steps().is_multiple_of(self.time_bin_steps) {
            return Err(invalid("time_bin_steps", "must divide the number of steps"));
        }
        Ok(())
    }
}

/// What an observer sees at each step.
///
/// For the reflected schemes `positions` are the post-step positions at time `t = t_{k+1}` and
/// `barrier` is the new level. For the Euler scheme they are the pre-deposit positions at
/// `t = t_k`. Every increment in `lifted` is taken at `barrier`: the particle ends there
/// (level and Euler schemes) or touches it inside the step (bridge scheme).
#[derive(Debug)]
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub positions: &'a [f64],
    pub barrier: f64,
    /// `(particle, ΔL)` pairs with `ΔL > 0`.
    pub lifted: &'a [(usize, f64)],
}

pub trait StepObserver {
    fn observe(&mut self, view: &StepView<'_>);
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackedRegulator {
    pub particle: usize,
    pub path: Vec<f64>,
}

/// Time-space histogram of `dβ^N = δ_{B^N_t}(dx) dt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalBoundaryMeasure {
    pub slab_width: f64,
    pub x_origin: f64,
    pub x_width: f64,
    pub n_x: usize,
    /// Row-major `[slab][x bin]`.
    pub masses: Vec<f64>,
}

impl EmpiricalBoundaryMeasure {
    fn from_barrier(barrier: &[f64], dt: f64, steps_per_slab: usize, x_width: f64) -> Self {
        let steps = &barrier[..barrier.len() - 1];
        let lo = steps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = steps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let x_origin = (lo / x_width).floor() * x_width;
        let n_x = (((hi - x_origin) / x_width).floor() as usize) + 1;
        let n_slabs = steps.len() / steps_per_slab;
        let mut masses = vec![0.0; n_slabs * n_x];
        for (k, b) in steps.iter().enumerate() {
            let slab = k / steps_per_slab;
            let bin = (((b - x_origin) / x_width).floor() as usize).min(n_x - 1);
            masses[slab * n_x + bin] += dt;
        }
        Self {
            slab_width: dt * steps_per_slab as f64,
            x_origin,
            x_width,
            n_x,
            masses,
        }
    }

    pub fn n_slabs(&self) -> usize {
        self.masses.len() / self.n_x
    }

    pub fn slab(&self, j: usize) -> &[f64] {
        &self.masses[j * self.n_x..(j + 1) * self.n_x]
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.x_origin + (i as f64 + 0.5) * self.x_width
    }

    /// `β([0, t_end of slab j] x R)`.
    pub fn mass_through_slab(&self, j: usize) -> f64 {
        self.masses[..(j + 1) * self.n_x].iter().sum()
    }

    /// Wasserstein-1 distance between the normalised time marginal of slab `j` and `δ_c`.
    pub fn w1_to_point(&self, j: usize, c: f64) -> f64 {
        let slab = self.slab(j);
        let total: f64 = slab.iter().sum();
        slab.iter()
            .enumerate()
            .map(|(i, m)| m * (self.bin_center(i) - c).abs())
            .sum::<f64>()
            / total
    }

    /// CSV with columns `t_bin, x_bin, mass` (nonzero bins only; bin left edges).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_bin,x_bin,mass\n");
        for j in 0..self.n_slabs() {
            for (i, m) in self.slab(j).iter().enumerate() {
                if *m > 0.0 {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        j as f64 * self.slab_width,
                        self.x_origin + i as f64 * self.x_width,
                        m
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub n_particles: usize,
    pub gamma: f64,
    pub grid: TimeGrid,
    pub scheme: AtlasScheme,
    /// `B^N_k = min_i X^i_k`.
    pub barrier: Vec<f64>,
    /// `I^N(t_k) = sum_{j<k} B^N_j dt`.
    pub integrated_barrier: Vec<f64>,
    /// `(1/N) sum_i L^i_k`, summed directly from the regulator accumulators.
    pub mean_regulator: Vec<f64>,
    pub tracked: Vec<TrackedRegulator>,
    /// `regulators[i][k]` when full storage was requested.
    pub regulators: Option<Vec<Vec<f64>>>,
    /// Experimental: `2 (gamma N t + W~_t - (B_t - B_0))`, with `W~` the noise of the
    /// lowest-ranked particle, an estimate of the local time of the first gap.
    pub gap_local_time: Vec<f64>,
    pub final_positions: Vec<f64>,
    pub boundary_measure: EmpiricalBoundaryMeasure,
}

impl ParticleRecord {
    /// CSV with columns `t, barrier, integrated_barrier, L_tracked, mean_L` (first tracked particle).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,barrier,integrated_barrier,L_tracked,mean_L\n");
        let tracked = self.tracked.first().map(|t| t.path.as_slice());
        for k in 0..self.grid.n_nodes() {
            let lt = tracked.map_or(f64::NAN, |p| p[k]);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.grid.node(k),
                self.barrier[k],
                self.integrated_barrier[k],
                lt,
                self.mean_regulator[k]
            ));
        }
        out
    }
}

struct System {
    x: Vec<f64>,
    l: Vec<f64>,
    lifted: Vec<(usize, f64)>,
    candidates: Vec<(f64, usize)>,
    lows: Vec<f64>,
}

impl System {
    fn new(initial: &[f64]) -> Self {
        Self {
            x: initial.to_vec(),
            l: vec![0.0; initial.len()],
            lifted: Vec::new(),
            candidates: Vec::new(),
            lows: Vec::new(),
        }
    }

    fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.x.iter().enumerate() {
            if *v < self.x[best] {
                best = i;
            }
        }
        best
    }

    /// Moves by `dw`, then raises the barrier until the total lift equals `budget`.
    fn step_reflected(&mut self, dw: &[f64], budget: f64) -> f64 {
        for (x, d) in self.x.iter_mut().zip(dw) {
            *x += d;
        }
        let level = self.fill_level(budget, |_, y| y);
        for &(i, _) in &self.lifted {
            self.x[i] = level;
        }
        level
    }

    /// Moves by `dw` and lifts each particle by `(level - m_i)_+`, where `m_i` is its bridge minimum over the step.
    fn step_bridge(&mut self, dw: &[f64], uniforms: &[f64], dt: f64, budget: f64) -> f64 {
        self.lows.clear();
        for ((x, d), u) in self.x.iter_mut().zip(dw).zip(uniforms) {
            self.lows.push(bridge_minimum(*x, *x + d, dt, *u));
            *x += d;
        }
        let lows = std::mem::take(&mut self.lows);
        let level = self.fill_level(budget, |i, _| lows[i]);
        self.lows = lows;
        level
    }

    /// Finds the level `B` with `sum_i (B - low_i)_+ = budget` and lifts every particle with `low_i < B` by `B - low_i`.
    fn fill_level(&mut self, budget: f64, low: impl Fn(usize, f64) -> f64) -> f64 {
        let min = self
            .x
            .iter()
            .enumerate()
            .map(|(i, y)| low(i, *y))
            .fold(f64::INFINITY, f64::min);
        // the level never exceeds min + budget
        let cutoff = min + budget;
        self.candidates.clear();
        for (i, y) in self.x.iter().enumerate() {
            let v = low(i, *y);
            if v < cutoff {
                self.candidates.push((v, i));
            }
        }
        self.candidates
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut sum = 0.0;
        let mut level = cutoff;
        for j in 0..self.candidates.len() {
            sum += self.candidates[j].0;
            let trial = (budget + sum) / (j + 1) as f64;
            if self.candidates.get(j + 1).is_none_or(|next| trial <= next.0) {
                level = trial;
                break;
            }
        }
        self.lifted.clear();
        for &(y, i) in &self.candidates {
            if y >= level {
                break;
            }
            let dl = level - y;
            self.x[i] = (self.x[i] + dl).max(level);
            self.l[i] += dl;
            self.lifted.push((i, dl));
        }
        level
    }
}

fn validate_initial(initial: &[f64], n: usize) -> Result<()> {
    if initial.len() != n {
        return Err(Error::InvalidInitialCondition(format!(
            "expected {n} initial positions, got {}",
            initial.len()
        )));
    }
    if let Some(v) = initial.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidInitialCondition(format!(
            "initial positions must be finite and nonnegative, found {v}"
        )));
    }
    Ok(())
}

/// Draws `n` i.i.d. starting points from `mu0`.
pub fn sample_initial(mu0: &PiecewiseDensity, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..n).map(|_| mu0.sample(&mut rng)).collect()
}

/// Seed for replica `r` of a study seeded with `seed`.
pub fn replica_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

struct Recorder {
    barrier: Vec<f64>,
    mean_regulator: Vec<f64>,
    tracked: Vec<TrackedRegulator>,
    regulators: Option<Vec<Vec<f64>>>,
    gap_noise: Vec<f64>,
}

impl Recorder {
    fn new(cfg: &AtlasConfig, sys: &System) -> Self {
        let nodes = cfg.params.grid().n_nodes();
        let mut r = Self {
            barrier: Vec::with_capacity(nodes),
            mean_regulator: Vec::with_capacity(nodes),
            tracked: cfg
                .tracked
                .iter()
                .map(|&particle| TrackedRegulator {
                    particle,
                    path: Vec::with_capacity(nodes),
                })
                .collect(),
            regulators: cfg
                .store_all_regulators
                .then(|| vec![Vec::with_capacity(nodes); cfg.n_particles]),
            gap_noise: vec![0.0],
        };
        r.record_regulators(sys);
        r
    }

    fn record_regulators(&mut self, sys: &System) {
        let n = sys.l.len() as f64;
        self.mean_regulator.push(sys.l.iter().sum::<f64>() / n);
        for t in &mut self.tracked {
            t.path.push(sys.l[t.particle]);
        }
        if let Some(all) = &mut self.regulators {
            for (path, l) in all.iter_mut().zip(&sys.l) {
                path.push(*l);
            }
        }
    }

    fn finish(self, cfg: &AtlasConfig, sys: System) -> ParticleRecord {
        let grid = cfg.params.grid();
        let dt = grid.dt();
        let n = cfg.n_particles as f64;
        let gamma = cfg.params.gamma();
        let b0 = self.barrier[0];
        let gap_local_time = self
            .barrier
            .iter()
            .zip(&self.gap_noise)
            .enumerate()
            .map(|(k, (b, w))| 2.0 * (gamma * n * grid.node(k) + w - (b - b0)))
            .collect();
        ParticleRecord {
            n_particles: cfg.n_particles,
            gamma,
            grid,
            scheme: cfg.scheme,
            integrated_barrier: left_riemann(&self.barrier, dt),
            boundary_measure: EmpiricalBoundaryMeasure::from_barrier(
                &self.barrier,
                dt,
                cfg.time_bin_steps,
                cfg.space_bin_width,
            ),
            barrier: self.barrier,
            mean_regulator: self.mean_regulator,
            tracked: self.tracked,
            regulators: self.regulators,
            gap_local_time,
            final_positions: sys.x,
        }
    }
}

/// Simulates the Atlas system from the given starting points.
pub fn simulate_atlas(cfg: &AtlasConfig, initial: &[f64], seed: u64) -> Result<ParticleRecord> {
    simulate_atlas_observed(cfg, initial, seed, &mut [])
}

/// [`simulate_atlas`] with observers called once per step.
pub fn simulate_atlas_observed(
    cfg: &AtlasConfig,
    initial: &[f64],
    seed: u64,
    observers: &mut [&mut dyn StepObserver],
) -> Result<ParticleRecord> {
    let mut out = run_systems(cfg, &[initial], seed, &mut [observers], &mut |_: &[System]| {})?;
    Ok(out.pop().expect("one system"))
}

/// Output of [`simulate_coupled_pair`].
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub low: ParticleRecord,
    pub high: ParticleRecord,
    /// `max_{k, i} (X^{1,i}_k - X^{2,i}_k)_+`; zero when the ordering holds at every node.
    pub position_violation: f64,
    /// `max_k (B^1_k - B^2_k)_+`.
    pub barrier_violation: f64,
}

/// Two systems started from ordered initial conditions and driven by identical noise.
pub fn simulate_coupled_pair(cfg: &AtlasConfig, low: &[f64], high: &[f64], seed: u64) -> Result<CoupledRun> {
    validate_initial(low, cfg.n_particles)?;
    validate_initial(high, cfg.n_particles)?;
    if let Some(i) = low.iter().zip(high).position(|(a, b)| a > b) {
        return Err(Error::InvalidInitialCondition(format!(
            "coupling not ordered at particle {i}: {} > {}",
            low[i], high[i]
        )));
    }
    let mut position_violation = low.iter().zip(high).map(|(a, b)| (a - b).max(0.0)).fold(0.0, f64::max);
    let mut check = |systems: &[System]| {
        for (a, b) in systems[0].x.iter().zip(&systems[1].x) {
            position_violation = position_violation.max(a - b);
        }
    };
    let mut out = run_systems(cfg, &[low, high], seed, &mut [&mut [], &mut []], &mut check)?;
    let high = out.pop().expect("two systems");
    let low = out.pop().expect("two systems");
    let barrier_violation = low
        .barrier
        .iter()
        .zip(&high.barrier)
        .map(|(a, b)| (a - b).max(0.0))
        .fold(0.0, f64::max);
    Ok(CoupledRun {
        low,
        high,
        position_violation,
        barrier_violation,
    })
}

fn run_systems(
    cfg: &AtlasConfig,
    initials: &[&[f64]],
    seed: u64,
    observers: &mut [&mut [&mut dyn StepObserver]],
    after_step: &mut dyn FnMut(&[System]),
) -> Result<Vec<ParticleRecord>> {
    cfg.validate()?;
    for init in initials {
        validate_initial(init, cfg.n_particles)?;
    }
    let grid = cfg.params.grid();
    let dt = grid.dt();
    let sd = dt.sqrt();
    let n = cfg.n_particles;
    let budget = cfg.params.gamma() * n as f64 * dt;

    let mut systems: Vec<System> = initials.iter().map(|i| System::new(i)).collect();
    let mut recorders: Vec<Recorder> = systems.iter().map(|s| Recorder::new(cfg, s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dw = vec![0.0; n];
    let mut uniforms = vec![0.0; n];

    for k in 0..grid.n_steps() {
        for d in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *d = sd * z;
        }
        if cfg.scheme == AtlasScheme::ReflectedBridge {
            for u in uniforms.iter_mut() {
                *u = 1.0 - rng.random::<f64>();
            }
        }
        for ((sys, rec), obs) in systems.iter_mut().zip(recorders.iter_mut()).zip(observers.iter_mut()) {
            let lowest = sys.argmin();
            let noise = rec.gap_noise.last().copied().unwrap_or(0.0) + dw[lowest];
            match cfg.scheme {
                AtlasScheme::ReflectedLevel | AtlasScheme::ReflectedBridge => {
                    if k == 0 {
                        rec.barrier.push(sys.x[lowest]);
                    }
                    let level = if cfg.scheme == AtlasScheme::ReflectedBridge {
                        sys.step_bridge(&dw, &uniforms, dt, budget)
                    } else {
                        sys.step_reflected(&dw, budget)
                    };
                    rec.barrier.push(level);
                    let view = StepView {
                        step: k,
                        t: grid.node(k + 1),
                        dt,
                        positions: &sys.x,
                        barrier: level,
                        lifted: &sys.lifted,
                    };
                    for o in obs.iter_mut() {
                        o.observe(&view);
                    }
                }
                AtlasScheme::ArgminEuler => {
                    let b = sys.x[lowest];
                    rec.barrier.push(b);
                    sys.lifted.clear();
                    sys.lifted.push((lowest, budget));
                    let view = StepView {
                        step: k,
                        t: grid.node(k),
                        dt,
                        positions: &sys.x,
                        barrier: b,
                        lifted: &sys.lifted,
                    };
                    for o in obs.iter_mut() {
                        o.observe(&view);
                    }
                    sys.x[lowest] += budget;
                    sys.l[lowest] += budget;
                    for (x, d) in sys.x.iter_mut().zip(&dw) {
                        *x += d;
                    }
                    if k + 1 == grid.n_steps() {
                        let last = sys.argmin();
                        rec.barrier.push(sys.x[last]);
                    }
                }
            }
            rec.gap_noise.push(noise);
            rec.record_regulators(sys);
        }
        after_step(&systems);
    }
    Ok(systems
        .into_iter()
        .zip(recorders)
        .map(|(sys, rec)| rec.finish(cfg, sys))
        .collect())
}

/// `max_k |(1/N) sum_i L^i_{t_k} - gamma t_k|`, from the full regulator paths when stored.
pub fn check_regulator_constraint(record: &ParticleRecord) -> f64 {
    let n_nodes = record.grid.n_nodes();
    let mean: Vec<f64> = match &record.regulators {
        Some(all) => (0..n_nodes)
            .map(|k| all.iter().map(|p| p[k]).sum::<f64>() / record.n_particles as f64)
            .collect(),
        None => record.mean_regulator.clone(),
    };
    mean.iter()
        .enumerate()
        .map(|(k, m)| (m - record.gamma * record.grid.node(k)).abs())
        .fold(0.0, f64::max)
}
