//! Piecewise-constant probability densities on `[0, ∞)` used as initial laws.

use crate::error::{Error, Result};
use crate::measure::SignedMeasureProfile;
use rand::Rng;

/// A probability density that is constant on `[breaks[j], breaks[j+1])` and zero past the last break.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    breaks: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

const NORMALIZATION_TOL: f64 = 1e-9;

impl PiecewiseDensity {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breaks.len() != values.len() + 1 {
            return Err(Error::InvalidDensity(format!(
                "need n values and n+1 breaks, got {} values and {} breaks",
                values.len(),
                breaks.len()
            )));
        }
        if breaks[0] != 0.0 {
            return Err(Error::InvalidDensity(format!(
                "first break must be 0, got {}",
                breaks[0]
            )));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidDensity(
                "breaks must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity("values must be finite and nonnegative".into()));
        }
        if values[0] <= 0.0 {
            return Err(Error::InvalidDensity("density must not vanish at the origin".into()));
        }
        let mut cumulative = Vec::with_capacity(breaks.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for (j, v) in values.iter().enumerate() {
            acc += v * (breaks[j + 1] - breaks[j]);
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDensity(format!("density integrates to {acc}, not 1")));
        }
        Ok(Self {
            breaks,
            values,
            cumulative,
        })
    }

    /// Uniform density on `[0, width)`.
    pub fn uniform(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidDensity(format!("width must be positive, got {width}")));
        }
        Self::new(vec![0.0, width], vec![1.0 / width])
    }

    /// Recovers `mu0 = 1/alpha - m([0, x])` from an atoms-only profile.
    pub fn from_measure(m: &SignedMeasureProfile) -> Result<Self> {
        if m.cells().next().is_some() {
            return Err(Error::InvalidDensity(
                "only atom-only profiles correspond to piecewise-constant densities".into(),
            ));
        }
        let inv_alpha = 1.0 / m.alpha();
        let mut breaks = vec![0.0];
        let mut values = Vec::new();
        let mut level = inv_alpha;
        for atom in m.atoms() {
            if atom.x > *breaks.last().expect("nonempty") {
                values.push(level);
                breaks.push(atom.x);
            }
            level -= atom.mass;
        }
        if level.abs() > 1e-12 {
            return Err(Error::InvalidDensity(format!(
                "profile total mass {} differs from 1/alpha = {inv_alpha}",
                inv_alpha - level
            )));
        }
        Self::new(breaks, values)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support_end(&self) -> f64 {
        *self.breaks.last().expect("nonempty")
    }

    /// Density value, extended by `mu0(0)` to negative arguments.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.values[0];
        }
        match self.cell_of(x) {
            Some(j) => self.values[j],
            None => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.cell_of(x) {
            Some(j) => self.cumulative[j] + self.values[j] * (x - self.breaks[j]),
            None => 1.0,
        }
    }

    /// Inverse CDF on `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let j = self.cumulative.partition_point(|c| *c <= u).saturating_sub(1);
        let j = j.min(self.values.len() - 1);
        let v = self.values[j];
        if v == 0.0 {
            return self.breaks[j];
        }
        (self.breaks[j] + (u - self.cumulative[j]) / v).min(self.breaks[j + 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Average of the density over `[a, b]`.
    pub fn cell_average(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(0.0);
        let mut total = (self.cdf(b) - self.cdf(lo)).max(0.0);
        if a < 0.0 {
            total += self.values[0] * (b.min(0.0) - a);
        }
        total / (b - a)
    }

    fn cell_of(&self, x: f64) -> Option<usize> {
        let j = self.breaks.partition_point(|b| *b <= x);
        if j == 0 || j == self.breaks.len() {
            None
        } else {
            Some(j - 1)
        }
    }
}
