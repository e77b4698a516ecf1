//! Model parameters, the uniform time grid and sampled boundary paths.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Drift intensity, horizon and time step of a run.
///
/// The feedback coefficient `alpha = 1/(2 gamma)` is always derived from
/// `gamma` and cannot be set on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    gamma: f64,
    horizon: f64,
    dt: f64,
}

impl ModelParams {
    pub fn new(gamma: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", format!("must be finite and positive, got {gamma}")));
        }
        // validates dt and horizon
        TimeGrid::from_horizon(horizon, dt)?;
        Ok(Self { gamma, horizon, dt })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        alpha_from_gamma(self.gamma)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::from_horizon(self.horizon, self.dt).expect("validated at construction")
    }
}

/// `alpha = 1/(2 gamma)`.
pub fn alpha_from_gamma(gamma: f64) -> f64 {
    1.0 / (2.0 * gamma)
}

/// Uniform grid `t_k = k dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("n_steps", "grid needs at least one step"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be finite and positive, got {dt}")));
        }
        Ok(Self { n_steps, dt })
    }

    /// Grid on `[0, horizon]`; `horizon / dt` must be an integer up to rounding.
    pub fn from_horizon(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be finite and positive, got {dt}")));
        }
        if !(horizon.is_finite() && horizon >= dt) {
            return Err(invalid(
                "horizon",
                format!("must satisfy T >= dt, got T = {horizon}, dt = {dt}"),
            ));
        }
        let ratio = horizon / dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid("dt", format!("T/dt = {ratio} is not an integer")));
        }
        Self::new(n as usize, dt)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Index of the node closest to `t` (clamped to the grid).
    pub fn nearest_node(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.n_steps)
    }

    /// Grid with half the step on the same horizon.
    pub fn refined(&self) -> Self {
        Self {
            n_steps: 2 * self.n_steps,
            dt: self.dt / 2.0,
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n_nodes() {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.n_nodes(),
                found: len,
            })
        }
    }
}

/// A continuous path sampled at the grid nodes, linear in between, starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl BoundaryPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        if values[0] != 0.0 {
            return Err(invalid("boundary", format!("path must start at 0, got {}", values[0])));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("boundary", format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    /// Samples `f` at the nodes; `f(0)` is forced to zero.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = grid.nodes().map(f).collect();
        values[0] = 0.0;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation; constant extrapolation past the horizon.
    pub fn value_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let s = t / self.grid.dt;
        let k = s.floor() as usize;
        if k >= self.grid.n_steps {
            return self.values[self.grid.n_steps];
        }
        let w = s - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Nodewise minimum with `cap`.
    pub fn min_with(&self, cap: &Self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&cap.values).map(|(a, b)| a.min(*b)).collect(),
        }
    }

    /// Left Riemann sums `sum_{j<k} values_j dt`.
    pub fn integrated(&self) -> Vec<f64> {
        left_riemann(&self.values, self.grid.dt)
    }
}

pub(crate) fn left_riemann(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for v in values {
        out.push(acc);
        acc += v * dt;
    }
    out
}
