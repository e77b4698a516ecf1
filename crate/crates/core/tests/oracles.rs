//! Solver outputs checked against closed forms and brute-force computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use atlas_meanfield::fixed_point::{evaluate_lambda, Representation};
use atlas_meanfield::particles::{check_regulator_constraint, sample_initial, simulate_coupled_pair};
use atlas_meanfield::skorokhod::running_regulator_bridge_into;
use atlas_meanfield::*;

fn grid(steps: usize) -> TimeGrid {
    TimeGrid::new(steps, 1.0 / steps as f64).unwrap()
}

/// `E[(sqrt(t) |Z| - c)_+] = 2 (sqrt(t) phi(c / sqrt(t)) - c Phi(-c / sqrt(t)))`.
fn folded_normal_excess(c: f64, t: f64) -> f64 {
    let n = Normal::standard();
    let s = t.sqrt();
    2.0 * (s * n.pdf(c / s) - c * n.cdf(-c / s))
}

#[test]
fn folded_normal_reference_value() {
    assert!((folded_normal_excess(0.0, 1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    assert!((folded_normal_excess(0.5, 1.0) - 0.395_6).abs() < 1e-4);
}

#[test]
fn mean_regulator_is_sqrt_2t_over_pi() {
    let paths = PathEnsemble::new(11, 40_000, grid(256)).unwrap();
    let g = paths.grid();
    let zero = vec![0.0; g.n_nodes()];
    let (mut w, mut u, mut r) = (vec![0.0; g.n_nodes()], vec![0.0; g.n_steps()], vec![0.0; g.n_nodes()]);
    let ks = [64, 128, 256];
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    for i in 0..paths.n_paths() {
        paths.fill_path(i, &mut w);
        paths.fill_bridge_uniforms(i, &mut u);
        running_regulator_bridge_into(&w, &zero, 1.0, &u, g.dt(), &mut r);
        for (j, k) in ks.iter().enumerate() {
            sum[j] += r[*k];
            sum_sq[j] += r[*k] * r[*k];
        }
    }
    let m = paths.n_paths() as f64;
    for (j, k) in ks.iter().enumerate() {
        let mean = sum[j] / m;
        let se = ((sum_sq[j] / m - mean * mean) / m).sqrt();
        let t = g.node(*k);
        let exact = (2.0 * t / std::f64::consts::PI).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "t = {t}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn lambda_for_an_interior_atom_is_a_folded_normal_excess() {
    // m = 0.3 delta_{0.5}: Λ_t(0) = 0.3 E[(R_t - 0.5)_+] with R_t distributed as |W_t|
    let m = SignedMeasureProfile::new(vec![Atom { x: 0.5, mass: 0.3 }], Vec::new(), 1.0).unwrap();
    let paths = PathEnsemble::new(3, 40_000, grid(512)).unwrap();
    let f = BoundaryPath::zeros(paths.grid());
    for rep in [Representation::LocalTime, Representation::HittingTime] {
        let est = evaluate_lambda(&f, &m, &paths, rep, Monitoring::BrownianBridge).unwrap();
        for k in [128, 256, 512] {
            let t = paths.grid().node(k);
            let exact = 0.3 * folded_normal_excess(0.5, t);
            let (v, se) = (est.values.values()[k], est.stderr[k]);
            assert!((v - exact).abs() < 3.5 * se, "t = {t}: {v} vs {exact} (se {se})");
        }
    }
}

#[test]
fn reflected_brownian_motion_from_c_has_closed_form_local_time() {
    let c = 0.5;
    // essentially delta_c: densities may not vanish at the origin
    let eps = (-30f64).exp2();
    let mu0 = PiecewiseDensity::new(vec![0.0, c, c + eps], vec![eps, (1.0 - eps * c) / eps]).unwrap();
    let paths = PathEnsemble::new(8, 40_000, grid(256)).unwrap();
    let ell = BoundaryPath::zeros(paths.grid());
    let v = validate_mean_local_time(&ell, &mu0, 1.0, &paths, Monitoring::BrownianBridge).unwrap();
    for k in [64, 128, 256] {
        let t = paths.grid().node(k);
        let exact = folded_normal_excess(c, t);
        assert!(
            (v.mean[k] - exact).abs() < 3.5 * v.stderr[k],
            "t = {t}: {} vs {exact} (se {})",
            v.mean[k],
            v.stderr[k]
        );
    }
    // a validation run against the wrong gamma is flagged
    assert!(v.max_excess(0.5, 3.0) > 0.05);
}

/// Midpoint Riemann sum of `v = m([0, x])` over `[0, r]`.
fn riemann_cdf_integral(m: &SignedMeasureProfile, r: f64, h: f64) -> f64 {
    let n = (r / h).ceil() as usize;
    let h = r / n as f64;
    (0..n).map(|i| m.cdf_at((i as f64 + 0.5) * h) * h).sum()
}

fn brute_force_hinge(atoms: &[Atom], cells: &[Cell], r: f64) -> f64 {
    let from_atoms: f64 = atoms.iter().map(|a| a.mass * (r - a.x).max(0.0)).sum();
    let from_cells: f64 = cells
        .iter()
        .map(|c| {
            let n = 20_000;
            let h = (c.b - c.a) / n as f64;
            (0..n)
                .map(|i| c.density * (r - (c.a + (i as f64 + 0.5) * h)).max(0.0) * h)
                .sum::<f64>()
        })
        .sum();
    from_atoms + from_cells
}

#[test]
fn closed_form_integrals_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let atoms: Vec<Atom> = (0..rng.random_range(1..5))
            .map(|_| Atom {
                x: rng.random_range(0.0..3.0),
                mass: rng.random_range(-0.5..0.5),
            })
            .collect();
        let a = rng.random_range(0.0..2.0);
        let cells = vec![Cell {
            a,
            b: a + rng.random_range(0.1..1.5),
            density: rng.random_range(-0.5..0.5),
        }];
        let m = SignedMeasureProfile::with_override(atoms.clone(), cells.clone(), 1.0).unwrap();
        for _ in 0..5 {
            let r = rng.random_range(0.0..4.0);
            let riemann = riemann_cdf_integral(&m, r, 1e-4);
            assert!((m.integrate_cdf(r) - riemann).abs() < 1e-3, "cdf integral at {r}");
            let hinge = brute_force_hinge(&atoms, &cells, r);
            assert!((m.integrate_hinge(r) - hinge).abs() < 1e-6, "hinge at {r}");
        }
    }
}

#[test]
fn measure_examples() {
    let mu0 = PiecewiseDensity::uniform(2.0).unwrap();
    let m = build_from_initial_density(&mu0, 1.0).unwrap();
    assert_eq!(m.atoms(), &[Atom { x: 0.0, mass: 0.5 }, Atom { x: 2.0, mass: 0.5 }]);
    assert_eq!(m.criticality(), Criticality::Critical);
    assert_eq!(m.cdf_at(1.0), 0.5);
    assert_eq!(m.cdf_at(2.0), 1.0);
    assert!((m.integrate_hinge(3.0) - 2.0).abs() < 1e-15);
    assert!((m.integrate_cdf(3.0) - 2.0).abs() < 1e-15);
    assert_eq!(m.integrate_cdf(0.0), 0.0);

    let wide = build_from_initial_density(&mu0, 0.5).unwrap();
    assert!((wide.mass_at_origin() - 1.5).abs() < 1e-15);
    assert_eq!(wide.criticality(), Criticality::Critical);

    let mixed = SignedMeasureProfile::new(
        vec![Atom { x: 0.0, mass: 0.1 }],
        vec![Cell {
            a: 0.0,
            b: 1.0,
            density: 0.3,
        }],
        1.0,
    )
    .unwrap();
    assert!((mixed.cdf_at(0.5) - 0.25).abs() < 1e-15);
}

#[test]
fn envelope_examples() {
    let signed = SignedMeasureProfile::new(
        vec![
            Atom { x: 0.0, mass: 0.5 },
            Atom { x: 1.0, mass: -0.2 },
            Atom { x: 2.0, mass: 0.7 },
        ],
        Vec::new(),
        1.0,
    )
    .unwrap();
    let env = signed.monotone_envelope();
    assert_eq!(env.cdf_at(0.0), 0.5);
    assert_eq!(env.cdf_at(1.5), 0.5);
    assert!((env.cdf_at(2.0) - 1.0).abs() < 1e-15);
    assert!(env.is_nonnegative());

    let negative = SignedMeasureProfile::new(
        vec![Atom { x: 0.0, mass: -0.2 }],
        vec![Cell {
            a: 0.5,
            b: 1.5,
            density: 0.1,
        }],
        2.0,
    )
    .unwrap();
    let env = negative.monotone_envelope();
    assert_eq!(env.cdf_at(0.99), 0.0);
    assert_eq!(env.cdf_at(1.0), 0.5);
    assert_eq!(env.cdf_at(7.0), 0.5);
}

#[test]
fn discrete_reflection_is_complementary() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = 300;
        let mut w = vec![0.0];
        let mut b = vec![0.0];
        for _ in 0..n {
            w.push(w[w.len() - 1] + rng.random_range(-0.1..0.1));
            b.push(b[b.len() - 1] + rng.random_range(-0.02..0.05));
        }
        let xi = rng.random_range(0.0..0.3);
        let pair = reflect_against_barrier(xi, &w, &b).unwrap();
        let mut sum = 0.0;
        for k in 1..=n {
            assert!(pair.path[k] >= b[k] - 1e-12);
            sum += (pair.path[k] - b[k]) * (pair.regulator[k] - pair.regulator[k - 1]);
        }
        assert!(sum.abs() < 1e-12, "complementarity sum {sum}");
    }
    // a barrier far below never binds
    let w = [0.0, 0.05, -0.03, 0.02];
    let b = [0.0, -1.0, -2.0, -3.0];
    let pair = reflect_against_barrier(0.5, &w, &b).unwrap();
    assert!(pair.regulator.iter().all(|l| *l == 0.0));
}

#[test]
fn mean_field_density_limits() {
    let mu0 = PiecewiseDensity::uniform(2.0).unwrap();
    let paths = PathEnsemble::new(2, 20_000, grid(1024)).unwrap();
    let ell = BoundaryPath::from_fn(paths.grid(), |t| 0.6 * t.sqrt()).unwrap();
    let near = mean_field_density(&ell, &mu0, 1.0, 1, &[0.5, 1.0, 1.5], &paths).unwrap();
    for (est, _) in near {
        assert!((est - 0.5).abs() < 0.02, "{est}");
    }
    let far = mean_field_density(&ell, &mu0, 1.0, 1024, &[8.0], &paths).unwrap();
    assert!(far[0].0 < 1e-3);
}

#[test]
fn particle_constraint_holds_at_scale_and_flags_corruption() {
    let params = ModelParams::new(0.5, 1.0, 1.0 / 1024.0).unwrap();
    let mu0 = PiecewiseDensity::uniform(2.0).unwrap();
    let mut cfg = AtlasConfig::new(4000, params);
    cfg.store_all_regulators = true;
    let rec = simulate_atlas(&cfg, &sample_initial(&mu0, 4000, 6), 6).unwrap();
    assert!(check_regulator_constraint(&rec) <= 1e-10);

    let mut bad = rec.clone();
    bad.regulators.as_mut().unwrap()[17][600] += 40.0;
    assert!(check_regulator_constraint(&bad) > 5e-3);
}

#[test]
fn shifted_start_dominates_at_every_node() {
    let params = ModelParams::new(0.5, 1.0, 1.0 / 512.0).unwrap();
    let mu0 = PiecewiseDensity::uniform(2.0).unwrap();
    for scheme in [AtlasScheme::ReflectedLevel, AtlasScheme::ReflectedBridge] {
        let mut cfg = AtlasConfig::new(300, params);
        cfg.scheme = scheme;
        let low = sample_initial(&mu0, 300, 12);
        let high: Vec<f64> = low.iter().map(|x| x + 1.0).collect();
        let run = simulate_coupled_pair(&cfg, &low, &high, 12).unwrap();
        assert_eq!(run.barrier_violation, 0.0);
        assert_eq!(run.position_violation, 0.0);
    }
}
