//! Front-fixing finite differences for the moving-boundary Fokker-Planck system
//!
//! ```text
//! d_t mu = 1/2 d_xx mu  on x > b_t,   mu_t(b_t) = 1/alpha,   b'_t = -(alpha/2) d_x mu_t(b_t).
//! ```
//!
//! In the coordinate `y = x - b_t` the density `u(t, y) = mu_t(b_t + y)` solves
//! `u_t = 1/2 u_yy + b' u_y` on the fixed half-line with `u(t, 0) = 1/alpha`.
//! The boundary speed is read off a one-sided second-order gradient at `y = 0` and the
//! density is advanced by a backward-Euler step with central differences.
//! The far field is truncated at `y_max` with a homogeneous Neumann condition.

use serde::{Deserialize, Serialize};

use crate::density::PiecewiseDensity;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeStepping {
    #[default]
    Implicit,
    /// Forward Euler; requires `dt <= dy^2`.
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeOptions {
    pub dt: f64,
    pub dy: f64,
    /// Defaults to `10 sqrt(T) + support width of mu0`.
    pub y_max: Option<f64>,
    pub snapshot_times: Vec<f64>,
    pub stepping: TimeStepping,
    /// Largest tolerated `|mass - 1|`.
    pub mass_tolerance: f64,
    /// When set, steps are split so that the front moves at most this many cells per substep.
    /// The singular start (a jump between `mu0(0)` and `1/alpha`) otherwise moves it several
    /// cells in the first steps.
    pub front_cfl: Option<f64>,
}

impl PdeOptions {
    pub fn new(dt: f64, dy: f64) -> Self {
        Self {
            dt,
            dy,
            y_max: None,
            snapshot_times: Vec::new(),
            stepping: TimeStepping::Implicit,
            mass_tolerance: 1e-2,
            front_cfl: Some(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    /// The density `mu`.
    Density,
    /// `nu = 1/alpha - mu`, the supercooled Stefan unknown.
    Stefan,
}

/// A field on the front-fixed grid `y_j = j dy` at time `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub t: f64,
    pub b: f64,
    pub dy: f64,
    pub alpha: f64,
    pub field: Field,
    pub values: Vec<f64>,
}

impl DensitySnapshot {
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }

    /// Trapezoidal integral of the density (of `mu`, whichever field is stored).
    pub fn mass(&self) -> f64 {
        let mu = match self.field {
            Field::Density => self.clone(),
            Field::Stefan => transform_to_stefan(self),
        };
        trapezoid(&mu.values, self.dy)
    }

    /// Density at `x` in original coordinates; `0` outside the grid.
    pub fn eval_at_x(&self, x: f64) -> f64 {
        let y = (x - self.b) / self.dy;
        if y < 0.0 || y > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let j = (y.floor() as usize).min(self.values.len() - 2);
        let w = y - j as f64;
        self.values[j] * (1.0 - w) + self.values[j + 1] * w
    }
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
}

/// Swaps between `mu` and `nu = 1/alpha - mu`. Applying it twice returns the input.
pub fn transform_to_stefan(snapshot: &DensitySnapshot) -> DensitySnapshot {
    let inv = 1.0 / snapshot.alpha;
    DensitySnapshot {
        values: snapshot.values.iter().map(|v| inv - v).collect(),
        field: match snapshot.field {
            Field::Density => Field::Stefan,
            Field::Stefan => Field::Density,
        },
        t: snapshot.t,
        b: snapshot.b,
        dy: snapshot.dy,
        alpha: snapshot.alpha,
    }
}

/// `max |mass(t) - 1|` over the snapshots.
pub fn check_conservation(snapshots: &[DensitySnapshot]) -> f64 {
    snapshots.iter().map(|s| (s.mass() - 1.0).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeSolution {
    pub alpha: f64,
    pub dt: f64,
    pub dy: f64,
    pub y_max: f64,
    /// `b` at `t_n = n dt`, `n = 0..=steps`.
    pub boundary: Vec<f64>,
    /// `b'` at the start of step `n`.
    pub speed: Vec<f64>,
    /// `-d_y mu(0)` on step `n`.
    pub neg_gradient: Vec<f64>,
    pub snapshots: Vec<DensitySnapshot>,
    /// `(t, mass)` sampled along the run.
    pub mass_history: Vec<(f64, f64)>,
    pub final_state: DensitySnapshot,
}

impl PdeSolution {
    pub fn horizon(&self) -> f64 {
        (self.boundary.len() - 1) as f64 * self.dt
    }

    pub fn boundary_at(&self, t: f64) -> f64 {
        let s = (t / self.dt).clamp(0.0, (self.boundary.len() - 1) as f64);
        let n = (s.floor() as usize).min(self.boundary.len().saturating_sub(2));
        let w = s - n as f64;
        if self.boundary.len() == 1 {
            return self.boundary[0];
        }
        self.boundary[n] * (1.0 - w) + self.boundary[n + 1] * w
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.mass_history
            .iter()
            .map(|(_, m)| (m - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV `t, b`, keeping every `stride`-th step and the last one.
    pub fn boundary_csv(&self, stride: usize) -> String {
        let stride = stride.max(1);
        let last = self.boundary.len() - 1;
        let mut out = String::from("t,b\n");
        for (n, b) in self.boundary.iter().enumerate() {
            if n % stride == 0 || n == last {
                out.push_str(&format!("{},{}\n", n as f64 * self.dt, b));
            }
        }
        out
    }

    /// CSV `t, y, mu` for all snapshots.
    pub fn density_csv(&self) -> String {
        let mut out = String::from("t,y,mu\n");
        for s in &self.snapshots {
            for (j, v) in s.values.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", s.t, s.y(j), v));
            }
        }
        out
    }
}

/// Solves the moving-boundary system on `[0, horizon]` starting from `mu0` and `b_0 = 0`.
pub fn solve_fpe_front_fixed(
    mu0: &PiecewiseDensity,
    alpha: f64,
    horizon: f64,
    opts: &PdeOptions,
) -> Result<PdeSolution> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", "must be positive and finite"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", "must be positive and finite"));
    }
    if !(opts.dt > 0.0 && opts.dy > 0.0) {
        return Err(invalid("dt/dy", "must be positive"));
    }
    if opts.stepping == TimeStepping::Explicit && opts.dt > opts.dy * opts.dy {
        return Err(invalid(
            "dt",
            format!(
                "explicit stepping needs dt <= dy^2 = {}, got {}",
                opts.dy * opts.dy,
                opts.dt
            ),
        ));
    }
    let y_max = opts.y_max.unwrap_or(10.0 * horizon.sqrt() + mu0.support_end());
    let n_cells = (y_max / opts.dy).ceil() as usize;
    if n_cells < 3 {
        return Err(invalid("dy", "grid needs at least three cells"));
    }
    let steps = (horizon / opts.dt).round() as usize;
    if steps == 0 || ((steps as f64 * opts.dt) - horizon).abs() > 1e-9 * horizon {
        return Err(invalid("dt", "must divide the horizon"));
    }
    let (dt, dy) = (opts.dt, opts.dy);
    let inv_alpha = 1.0 / alpha;

    let mut u: Vec<f64> = (0..=n_cells)
        .map(|j| {
            let y = j as f64 * dy;
            mu0.cell_average((y - 0.5 * dy).max(0.0), y + 0.5 * dy)
        })
        .collect();
    u[0] = inv_alpha;

    let mut snap_steps: Vec<(usize, f64)> = opts
        .snapshot_times
        .iter()
        .map(|t| (((t / dt).round() as usize).min(steps), *t))
        .collect();
    snap_steps.sort_by_key(|s| s.0);
    let mut next_snap = 0;

    let snapshot = |u: &[f64], b: f64, t: f64| DensitySnapshot {
        t,
        b,
        dy,
        alpha,
        field: Field::Density,
        values: u.to_vec(),
    };

    let mass_stride = (steps / 1000).max(1);
    let mut boundary = Vec::with_capacity(steps + 1);
    let mut speed = Vec::with_capacity(steps);
    let mut neg_gradient = Vec::with_capacity(steps);
    let mut snapshots = Vec::new();
    let mut mass_history = vec![(0.0, trapezoid(&u, dy))];
    let mut b = 0.0;
    boundary.push(b);

    let mut next = vec![0.0; u.len()];
    let mut scratch = vec![0.0; u.len()];
    for n in 0..steps {
        while next_snap < snap_steps.len() && snap_steps[next_snap].0 == n {
            snapshots.push(snapshot(&u, b, n as f64 * dt));
            next_snap += 1;
        }
        let grad = boundary_gradient(&u, dy);
        neg_gradient.push(-grad);
        speed.push(-0.5 * alpha * grad);
        let n_sub = match opts.front_cfl {
            Some(c) => ((0.5 * alpha * grad.abs() * dt) / (c * dy)).ceil().max(1.0) as usize,
            None => 1,
        };
        let h = dt / n_sub as f64;
        for s in 0..n_sub {
            let bdot = if s == 0 {
                -0.5 * alpha * grad
            } else {
                -0.5 * alpha * boundary_gradient(&u, dy)
            };
            match opts.stepping {
                TimeStepping::Implicit => implicit_step(&u, &mut next, &mut scratch, h, dy, bdot, inv_alpha),
                TimeStepping::Explicit => explicit_step(&u, &mut next, h, dy, bdot, inv_alpha),
            }
            std::mem::swap(&mut u, &mut next);
            b += h * bdot;
        }
        boundary.push(b);

        let t = (n + 1) as f64 * dt;
        if (n + 1) % mass_stride == 0 || n + 1 == steps {
            let mass = trapezoid(&u, dy);
            mass_history.push((t, mass));
            if (mass - 1.0).abs() > opts.mass_tolerance {
                return Err(Error::MassDrift {
                    drift: (mass - 1.0).abs(),
                    limit: opts.mass_tolerance,
                    t,
                });
            }
        }
    }
    while next_snap < snap_steps.len() {
        snapshots.push(snapshot(&u, b, steps as f64 * dt));
        next_snap += 1;
    }
    let final_state = snapshot(&u, b, horizon);
    Ok(PdeSolution {
        alpha,
        dt,
        dy,
        y_max: n_cells as f64 * dy,
        boundary,
        speed,
        neg_gradient,
        snapshots,
        mass_history,
        final_state,
    })
}

/// One-sided second-order `d_y u(0)`.
fn boundary_gradient(u: &[f64], dy: f64) -> f64 {
    (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dy)
}

/// Backward Euler for `u_t = 1/2 u_yy + c u_y` with `u_0 = g` and a mirror node past the end.
fn implicit_step(u: &[f64], out: &mut [f64], c_prime: &mut [f64], dt: f64, dy: f64, c: f64, g: f64) {
    let last = u.len() - 1;
    let diff = 0.5 * dt / (dy * dy);
    let conv = 0.5 * dt * c / dy;
    let lower = -diff + conv;
    let upper = -diff - conv;
    let diag = 1.0 + 2.0 * diff;
    // Thomas algorithm on unknowns 1..=last, reusing `out` for the modified right-hand side.
    out[0] = g;
    let mut prev_c = 0.0;
    let mut prev_d = g;
    for j in 1..=last {
        let (a, cu) = if j == last {
            (lower + upper, 0.0)
        } else {
            (lower, upper)
        };
        let rhs = u[j];
        let (denom, d) = if j == 1 {
            (diag, rhs - a * g)
        } else {
            (diag - a * prev_c, rhs - a * prev_d)
        };
        prev_c = cu / denom;
        prev_d = d / denom;
        c_prime[j] = prev_c;
        out[j] = prev_d;
    }
    for j in (1..last).rev() {
        out[j] -= c_prime[j] * out[j + 1];
    }
}

fn explicit_step(u: &[f64], out: &mut [f64], dt: f64, dy: f64, c: f64, g: f64) {
    let last = u.len() - 1;
    out[0] = g;
    for j in 1..=last {
        let right = if j == last { u[last - 1] } else { u[j + 1] };
        let lap = (u[j - 1] - 2.0 * u[j] + right) / (dy * dy);
        let grad = (right - u[j - 1]) / (2.0 * dy);
        out[j] = u[j] + dt * (0.5 * lap + c * grad);
    }
}
