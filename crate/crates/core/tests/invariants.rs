//! Property-based checks of the structural invariants.

use proptest::collection::vec;
use proptest::prelude::*;

use atlas_meanfield::particles::{check_regulator_constraint, simulate_atlas_observed, StepObserver, StepView};
use atlas_meanfield::skorokhod::bridge_minimum;
use atlas_meanfield::*;

fn atoms() -> impl Strategy<Value = Vec<Atom>> {
    vec((0.0..3.0f64, -0.5..0.5f64), 0..5).prop_map(|v| v.into_iter().map(|(x, mass)| Atom { x, mass }).collect())
}

fn cells() -> impl Strategy<Value = Vec<Cell>> {
    vec((0.0..2.0f64, 0.05..1.0f64, -0.5..0.5f64), 0..3).prop_map(|v| {
        // disjoint cells laid out left to right
        let mut at = 0.0;
        v.into_iter()
            .map(|(gap, len, density)| {
                let a = at + gap;
                at = a + len;
                Cell { a, b: at, density }
            })
            .collect()
    })
}

fn increments(n: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-0.2..0.2f64, n)
}

fn cumulative(start: f64, steps: &[f64]) -> Vec<f64> {
    let mut out = vec![start];
    for d in steps {
        out.push(out[out.len() - 1] + d);
    }
    out
}

struct BarrierBelow {
    worst: f64,
}

impl StepObserver for BarrierBelow {
    fn observe(&mut self, view: &StepView<'_>) {
        for x in view.positions {
            self.worst = self.worst.max(view.barrier - x);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn skorokhod_solution_is_minimal(start in 0.0..0.5f64, steps in increments(200)) {
        let f = cumulative(start, &steps);
        let p = reflect_at_zero(&f).unwrap();
        for k in 0..f.len() {
            prop_assert!(p.path[k] >= 0.0);
            prop_assert_eq!(p.path[k], f[k] + p.regulator[k]);
            if k > 0 {
                prop_assert!(p.regulator[k] >= p.regulator[k - 1]);
                if p.regulator[k] > p.regulator[k - 1] {
                    prop_assert!(p.path[k].abs() < 1e-12);
                }
            }
            // any admissible regulator must exceed every earlier deficit
            let lower = f[..=k].iter().fold(0.0f64, |z, v| z.max(-v));
            prop_assert_eq!(p.regulator[k], lower);
        }
    }

    #[test]
    fn hinge_and_cdf_integrals_coincide(a in atoms(), c in cells(), r in 0.0..5.0f64) {
        let m = SignedMeasureProfile::with_override(a, c, 1.0).unwrap();
        let (h, v) = (m.integrate_hinge(r), m.integrate_cdf(r));
        prop_assert!((h - v).abs() <= 1e-12 * h.abs().max(1.0));
    }

    #[test]
    fn envelope_is_monotone_and_dominates(a in atoms(), c in cells(), alpha in 0.5..2.0f64) {
        let Ok(m) = SignedMeasureProfile::new(a, c, alpha) else { return Ok(()) };
        let env = m.monotone_envelope();
        prop_assert!(env.is_nonnegative());
        let mut prev = 0.0;
        for j in 0..600 {
            let x = j as f64 * 0.01;
            let e = env.cdf_at(x);
            prop_assert!(e >= prev - 1e-12);
            prop_assert!(e >= m.cdf_at(x).max(0.0) - 1e-12);
            prop_assert!(e <= 1.0 / alpha + 1e-12);
            prev = e;
        }
    }

    #[test]
    fn bridge_minimum_is_monotone_and_below_endpoints(
        a in -1.0..1.0f64, c in -1.0..1.0f64, s in 0.0..0.5f64, u in 1e-9..1.0f64,
    ) {
        let dt = 0.01;
        let m = bridge_minimum(a, c, dt, u);
        prop_assert!(m <= a.min(c));
        prop_assert!(bridge_minimum(a + s, c, dt, u) >= m);
        prop_assert!(bridge_minimum(a, c + s, dt, u) >= m);
        prop_assert!((bridge_minimum(a + s, c + s, dt, u) - (m + s)).abs() < 1e-12);
    }

    #[test]
    fn lambda_is_monotone_in_f_for_nonnegative_m(
        masses in vec(0.0..0.3f64, 1..4), lift in 0.0..0.5f64, seed in 0u64..1000,
    ) {
        let atoms: Vec<Atom> = masses.iter().enumerate().map(|(i, m)| Atom { x: 0.5 * i as f64, mass: *m }).collect();
        let m = SignedMeasureProfile::new(atoms, Vec::new(), 1.0).unwrap();
        let paths = PathEnsemble::new(seed, 200, TimeGrid::new(64, 1.0 / 64.0).unwrap()).unwrap();
        let f = BoundaryPath::from_fn(paths.grid(), |t| 0.5 * t.sqrt()).unwrap();
        let g = BoundaryPath::from_fn(paths.grid(), |t| 0.5 * t.sqrt() + lift * t).unwrap();
        let (lf, lg) = (lambda_map(&f, &m, &paths).unwrap(), lambda_map(&g, &m, &paths).unwrap());
        for (a, b) in lf.values.values().iter().zip(lg.values.values()) {
            prop_assert!(*a <= *b + 1e-12);
        }
        // nondecreasing in t as well
        for w in lf.values.values().windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-12);
        }
    }

    #[test]
    fn particle_schemes_keep_constraint_and_order(
        n in 1usize..40, gamma in 0.1..2.0f64, seed in 0u64..10_000,
        bridge in any::<bool>(), starts in vec(0.0..2.0f64, 40),
    ) {
        let params = ModelParams::new(gamma, 0.5, 1.0 / 64.0).unwrap();
        let mut cfg = AtlasConfig::new(n, params);
        cfg.scheme = if bridge { AtlasScheme::ReflectedBridge } else { AtlasScheme::ReflectedLevel };
        let mut obs = BarrierBelow { worst: f64::NEG_INFINITY };
        let rec = simulate_atlas_observed(&cfg, &starts[..n], seed, &mut [&mut obs]).unwrap();
        prop_assert!(check_regulator_constraint(&rec) <= 1e-12 * gamma.max(1.0));
        prop_assert!(obs.worst <= 0.0);
        for w in rec.tracked[0].path.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn density_quantile_inverts_cdf(values in vec(0.05..2.0f64, 1..5), u in 0.0..1.0f64) {
        let total: f64 = values.iter().sum();
        let breaks: Vec<f64> = (0..=values.len()).map(|i| i as f64 / total).collect();
        let mu0 = PiecewiseDensity::new(breaks, values).unwrap();
        prop_assert!((mu0.cdf(mu0.quantile(u)) - u).abs() < 1e-9);
    }

    #[test]
    fn ensemble_paths_are_reproducible(seed in any::<u64>(), i in 0usize..50) {
        let g = TimeGrid::new(32, 1.0 / 32.0).unwrap();
        let a = PathEnsemble::new(seed, 50, g).unwrap();
        let b = PathEnsemble::new(seed, 50, g).unwrap();
        prop_assert_eq!(a.path(i), b.path(i));
        prop_assert_eq!(a.path(i)[0], 0.0);
    }
}
