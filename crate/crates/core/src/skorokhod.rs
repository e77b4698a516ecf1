//! Discrete one-dimensional Skorokhod map.
//!
//! For a sampled path `f` with `f_0 >= 0` the regulator is `z_k = max_{j<=k} (f_j)_-`
//! and the reflected path is `x = f + z`. This is the continuous map applied to the
//! piecewise-linear interpolant of `f`, whose minimum on each step sits at a node.
//!
//! [`Monitoring::BrownianBridge`] instead samples the exact minimum of a Brownian
//! bridge inside each step, which removes the `O(sqrt(dt))` bias of node monitoring
//! when the driving path is Brownian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the running infimum of the driving process is observed between nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monitoring {
    /// Infimum over grid nodes only.
    #[default]
    Nodes,
    /// Exact sampled minimum of the Brownian bridge on each step.
    BrownianBridge,
}

/// Solution `(x, z)` of the discrete Skorokhod problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPair {
    /// Reflected path, nodewise `f + z` (shifted back by the barrier when reflecting against one).
    pub path: Vec<f64>,
    /// Nondecreasing regulator with `z_0 = 0`.
    pub regulator: Vec<f64>,
}

#[inline]
fn neg_part(a: f64) -> f64 {
    (-a).max(0.0)
}

/// Reflects `f` at zero. Requires `f_0 >= 0`.
pub fn reflect_at_zero(f: &[f64]) -> Result<ReflectedPair> {
    let Some(&f0) = f.first() else {
        return Ok(ReflectedPair {
            path: Vec::new(),
            regulator: Vec::new(),
        });
    };
    if f0 < 0.0 {
        return Err(Error::StartBelowBarrier(f0));
    }
    let mut regulator = Vec::with_capacity(f.len());
    let mut path = Vec::with_capacity(f.len());
    let mut z = 0.0_f64;
    for &v in f {
        z = z.max(neg_part(v));
        regulator.push(z);
        path.push(v + z);
    }
    Ok(ReflectedPair { path, regulator })
}

/// Reflects `xi + w` against the barrier `b`; the returned path is `X = xi + w + L >= b`.
pub fn reflect_against_barrier(xi: f64, w: &[f64], b: &[f64]) -> Result<ReflectedPair> {
    if w.len() != b.len() {
        return Err(Error::GridMismatch {
            expected: w.len(),
            found: b.len(),
        });
    }
    let f: Vec<f64> = w.iter().zip(b).map(|(wk, bk)| xi + wk - bk).collect();
    let ReflectedPair { regulator, .. } = reflect_at_zero(&f)?;
    let path = w.iter().zip(&regulator).map(|(wk, lk)| xi + wk + lk).collect();
    Ok(ReflectedPair { path, regulator })
}

/// `R_k = max_{j<=k} (w_j - alpha f_j)_-`: the regulator of `w - alpha f` reflected at zero.
pub fn running_regulator(w: &[f64], f: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    running_regulator_into(w, f, alpha, &mut out);
    out
}

pub fn running_regulator_into(w: &[f64], f: &[f64], alpha: f64, out: &mut [f64]) {
    debug_assert!(w.len() == f.len() && w.len() == out.len());
    let mut r = 0.0_f64;
    for ((o, wk), fk) in out.iter_mut().zip(w).zip(f) {
        r = r.max(alpha * fk - wk);
        *o = r;
    }
}

/// Minimum of a Brownian bridge from `a` to `c` over a step of length `dt`, drawn from `u` in `(0, 1]`.
///
/// Nondecreasing in `a` and in `c`, and shifts with them: `bridge_minimum(a + s, c + s, ..) = bridge_minimum(a, c, ..) + s`.
#[inline]
pub fn bridge_minimum(a: f64, c: f64, dt: f64, u: f64) -> f64 {
    let d = c - a;
    (0.5 * (a + c - (d * d - 2.0 * dt * u.ln()).sqrt())).min(a).min(c)
}

/// Bridge-monitored variant: on step `k` the minimum of `w - alpha f` is drawn with
/// [`bridge_minimum`] from `u_k`. `f` is linear on each step, so the drift it adds
/// does not change the bridge law.
pub fn running_regulator_bridge_into(w: &[f64], f: &[f64], alpha: f64, uniforms: &[f64], dt: f64, out: &mut [f64]) {
    debug_assert!(w.len() == f.len() && w.len() == out.len() && uniforms.len() + 1 == w.len());
    let mut prev = w[0] - alpha * f[0];
    let mut r = neg_part(prev);
    out[0] = r;
    for k in 1..w.len() {
        let cur = w[k] - alpha * f[k];
        r = r.max(neg_part(bridge_minimum(prev, cur, dt, uniforms[k - 1])));
        out[k] = r;
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_explicit_example() {
        let p = reflect_at_zero(&[0.0, -1.0, -0.5, -2.0]).unwrap();
        assert_eq!(p.regulator, vec![0.0, 1.0, 1.0, 2.0]);
        assert_eq!(p.path, vec![0.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn nonnegative_path_is_fixed() {
        let f = [0.3, 0.1, 2.0, 0.0];
        let p = reflect_at_zero(&f).unwrap();
        assert!(p.regulator.iter().all(|z| *z == 0.0));
        assert_eq!(p.path, f);
    }

    #[test]
    fn rejects_negative_start() {
        assert!(matches!(
            reflect_at_zero(&[-0.1, 0.0]),
            Err(Error::StartBelowBarrier(_))
        ));
        assert!(reflect_against_barrier(0.0, &[0.0, 1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn barrier_examples() {
        let p = reflect_against_barrier(0.0, &[0.0, -1.0, 1.0], &[0.0; 3]).unwrap();
        assert_eq!(p.regulator, vec![0.0, 1.0, 1.0]);
        assert_eq!(p.path, vec![0.0, 0.0, 2.0]);

        let w = [0.0, 0.01, -0.02, 0.015];
        let b = [0.0, -0.5, -1.0, -1.5];
        let p = reflect_against_barrier(1.0, &w, &b).unwrap();
        assert!(p.regulator.iter().all(|l| *l == 0.0));
        assert_eq!(p.path, vec![1.0, 1.01, 0.98, 1.015]);
    }

    #[test]
    fn regulator_examples() {
        let w = [0.0, -0.4, 0.2, -0.9, -0.1];
        let r = running_regulator(&w, &[0.0; 5], 1.0);
        assert_eq!(r, vec![0.0, 0.4, 0.4, 0.9, 0.9]);
        let f = [0.0, 0.1, 0.3, 0.3, 0.7];
        let r = running_regulator(&[0.0; 5], &f, 2.0);
        assert_eq!(r, vec![0.0, 0.2, 0.6, 0.6, 1.4]);
    }

    #[test]
    fn bridge_minimum_never_above_nodes() {
        let w = [0.0, -0.4, 0.2, -0.9, -0.1];
        let f = [0.0; 5];
        let nodes = running_regulator(&w, &f, 1.0);
        let mut out = [0.0; 5];
        running_regulator_bridge_into(&w, &f, 1.0, &[0.5, 0.9, 0.1, 1.0], 0.01, &mut out);
        assert!(out.iter().zip(&nodes).all(|(b, n)| b >= n));
        // u = 1 gives exactly the lower endpoint
        let mut one = [0.0; 2];
        running_regulator_bridge_into(&[0.0, -0.3], &[0.0, 0.0], 1.0, &[1.0], 0.01, &mut one);
        assert!((one[1] - 0.3).abs() < 1e-15);
    }
}
