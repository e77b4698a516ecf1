use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use atlas_meanfield::error::{Error, Result};
use atlas_meanfield::fixed_point::FixedPointReport;
use atlas_meanfield::harness::config::{ExperimentConfig, OutputFormat};
use atlas_meanfield::harness::output::{OutputDir, RunManifest, Table};
use atlas_meanfield::harness::{self, compare, properties, study};
use atlas_meanfield::particles::{sample_initial, simulate_atlas, AtlasConfig};
use atlas_meanfield::stefan::solve_fpe_front_fixed;

/// Atlas particle system and mean-field boundary toolkit.
#[derive(Parser)]
#[command(name = "atlas", version)]
struct Cli {
    /// TOML experiment configuration (defaults describe Uniform[0,2], gamma = 0.5).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-field boundary by fixed-point iteration.
    SolveBoundary,
    /// One run of the N-particle system.
    Simulate {
        /// Number of particles (default: the largest configured size).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Front-fixing finite-difference solve of the moving-boundary PDE.
    SolvePde,
    /// Mean-field boundary vs PDE front vs particle barrier.
    Compare {
        /// Reuse a `report.json` from `solve-boundary` instead of solving again.
        #[arg(long)]
        boundary: Option<PathBuf>,
    },
    /// Exact finite-N identities and solver invariants.
    Verify,
    /// Particle-to-mean-field convergence table.
    Study,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveBoundary => "solve-boundary",
            Command::Simulate { .. } => "simulate",
            Command::SolvePde => "solve-pde",
            Command::Compare { .. } => "compare",
            Command::Verify => "verify",
            Command::Study => "study",
        }
    }
}

/// A completed command: its exit code and an optional message for stderr.
struct Outcome {
    code: u8,
    message: Option<String>,
}

impl Outcome {
    fn ok() -> Self {
        Self { code: 0, message: None }
    }

    fn fail(code: u8, message: String) -> Self {
        Self {
            code,
            message: Some(message),
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NotConverged { .. } => 2,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = dir.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    Ok(cfg)
}

fn boundary_table(report: &FixedPointReport) -> Table {
    let mut t = Table::new(&["t", "ell", "b"]);
    let grid = report.solution.grid();
    for (k, ell) in report.solution.values().iter().enumerate() {
        t.push(vec![grid.node(k), *ell, report.alpha * ell]);
    }
    t
}

fn solver_outcome(report: &FixedPointReport) -> Outcome {
    if !report.converged {
        return Outcome::fail(
            2,
            format!(
                "fixed-point iteration did not converge: residual {} after {} iterations (tolerance {})",
                report.final_residual(),
                report.iterations,
                report.tolerance
            ),
        );
    }
    if let Some(excess) = report.envelope_excess.filter(|e| *e > 0.0) {
        return Outcome::fail(1, format!("solution exceeds the envelope bound by {excess}"));
    }
    Outcome::ok()
}

fn run(cli: &Cli, cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Outcome> {
    match &cli.command {
        Command::SolveBoundary => {
            let report = harness::solve_boundary(cfg)?;
            out.table("boundary", &boundary_table(&report))?;
            out.json("report.json", &report)?;
            eprintln!(
                "ell(T) = {:.6}, {} iterations, converged = {}",
                report.solution.values()[report.solution.values().len() - 1],
                report.iterations,
                report.converged
            );
            Ok(solver_outcome(&report))
        }
        Command::Simulate { n } => {
            let params = cfg.params()?;
            let n = n.unwrap_or_else(|| *cfg.discretization.particles.iter().max().expect("validated"));
            let mut acfg = AtlasConfig::new(n, params);
            acfg.scheme = cfg.discretization.scheme;
            acfg.space_bin_width = cfg.discretization.space_bin;
            acfg.time_bin_steps = cfg.discretization.time_bin_steps;
            let init = sample_initial(&cfg.initial_density()?, n, cfg.mc.seed);
            let rec = simulate_atlas(&acfg, &init, cfg.mc.seed)?;
            let mut t = Table::new(&["t", "barrier", "integrated_barrier", "L_tracked", "mean_L"]);
            for k in 0..rec.grid.n_nodes() {
                t.push(vec![
                    rec.grid.node(k),
                    rec.barrier[k],
                    rec.integrated_barrier[k],
                    rec.tracked[0].path[k],
                    rec.mean_regulator[k],
                ]);
            }
            out.table("particles", &t)?;
            let bm = &rec.boundary_measure;
            let mut h = Table::new(&["t_bin", "x_bin", "mass"]);
            for j in 0..bm.n_slabs() {
                for (i, m) in bm.slab(j).iter().enumerate() {
                    if *m > 0.0 {
                        h.push(vec![j as f64 * bm.slab_width, bm.x_origin + i as f64 * bm.x_width, *m]);
                    }
                }
            }
            out.table("boundary_measure", &h)?;
            let dev = atlas_meanfield::particles::check_regulator_constraint(&rec);
            eprintln!("N = {n}: max |mean L - gamma t| = {dev:e}");
            Ok(Outcome::ok())
        }
        Command::SolvePde => {
            let sol = solve_fpe_front_fixed(
                &cfg.initial_density()?,
                cfg.alpha(),
                cfg.model.horizon,
                &cfg.pde_options(),
            )?;
            let stride = ((cfg.discretization.dt / sol.dt).round() as usize).max(1);
            let mut t = Table::new(&["t", "b"]);
            for (n, b) in sol.boundary.iter().enumerate() {
                if n % stride == 0 || n + 1 == sol.boundary.len() {
                    t.push(vec![n as f64 * sol.dt, *b]);
                }
            }
            out.table("pde_boundary", &t)?;
            let mut d = Table::new(&["t", "y", "mu"]);
            for s in &sol.snapshots {
                for (j, v) in s.values.iter().enumerate() {
                    d.push(vec![s.t, s.y(j), *v]);
                }
            }
            out.table("pde_density", &d)?;
            eprintln!(
                "b(T) = {:.6}, max mass drift = {:e}",
                sol.boundary[sol.boundary.len() - 1],
                sol.max_mass_drift()
            );
            Ok(Outcome::ok())
        }
        Command::Compare { boundary } => {
            let report = match boundary {
                Some(path) => Some(serde_json::from_str::<FixedPointReport>(&std::fs::read_to_string(
                    path,
                )?)?),
                None => None,
            };
            let cmp = compare::compare_boundaries(cfg, report)?;
            match out.format {
                OutputFormat::Csv => {
                    out.text("comparison.csv", &cmp.to_csv())?;
                    out.text("comparison_matrix.csv", &cmp.matrix_csv())?;
                }
                OutputFormat::Json => out.json("comparison.json", &cmp)?,
            }
            for (label, row) in cmp.labels.iter().zip(&cmp.matrix) {
                eprintln!("{label:>10}: {row:.4?}");
            }
            if cmp.passed {
                Ok(Outcome::ok())
            } else {
                Ok(Outcome::fail(
                    1,
                    format!("boundary estimates differ by more than {}", cmp.tolerance),
                ))
            }
        }
        Command::Verify => {
            let report = properties::run_property_suite(cfg)?;
            match out.format {
                OutputFormat::Csv => out.text("properties.csv", &report.to_csv())?,
                OutputFormat::Json => out.json("properties.json", &report)?,
            }
            for c in &report.checks {
                eprintln!(
                    "{} {}: {:e} (limit {:e})",
                    if c.passed { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.limit
                );
            }
            if report.all_passed() {
                Ok(Outcome::ok())
            } else {
                let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
                Ok(Outcome::fail(1, format!("failed checks: {}", names.join("; "))))
            }
        }
        Command::Study => {
            let s = study::run_convergence_study(cfg)?;
            match out.format {
                OutputFormat::Csv => out.text("convergence.csv", &s.table.to_csv())?,
                OutputFormat::Json => out.json("convergence.json", &s.table)?,
            }
            out.table("boundary", &boundary_table(&s.boundary))?;
            eprint!("{}", s.table.to_csv());
            Ok(Outcome::ok())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let mut out = match OutputDir::create(&cfg.output.dir, cfg.output.format) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = run(&cli, &cfg, &mut out).unwrap_or_else(|e| Outcome::fail(exit_code(&e), e.to_string()));
    if let Some(msg) = &outcome.message {
        eprintln!("error: {msg}");
    }
    let manifest = RunManifest::new(
        cli.command.name(),
        &cfg,
        start.elapsed(),
        out.written.clone(),
        i32::from(outcome.code),
    );
    if let Err(e) = out.json("manifest.json", &manifest) {
        eprintln!("error: could not write manifest: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(outcome.code)
}
