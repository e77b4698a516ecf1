//! End-to-end runs of the `atlas` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
[model]
gamma = 0.5

[discretization]
dt = 0.015625
paths = 2000
particles = [20, 50]
time_bin_steps = 4
dy = 0.01
dt_pde = 0.0005

[mc]
replicas = 2
";

fn atlas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn verify_on_defaults_succeeds() {
    let tmp = TempDir::new().unwrap();
    let out = atlas(tmp.path(), &["verify", "--out-dir", "v"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(tmp.path().join("v/properties.csv")).unwrap();
    assert!(csv.lines().count() > 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("v/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "verify");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn compare_rejects_boundary_from_another_gamma() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "a.toml", SMALL);
    let out = atlas(tmp.path(), &["solve-boundary", "--config", &cfg, "--out-dir", "a"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let header = std::fs::read_to_string(tmp.path().join("a/boundary.csv")).unwrap();
    assert!(header.starts_with("t,ell,b\n"));

    let other = write(tmp.path(), "b.toml", &SMALL.replace("gamma = 0.5", "gamma = 0.25"));
    let out = atlas(
        tmp.path(),
        &[
            "compare",
            "--config",
            &other,
            "--boundary",
            "a/report.json",
            "--out-dir",
            "b",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("gamma"), "{}", stderr(&out));
}

#[test]
fn supercritical_table_is_rejected_unless_overridden() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "m.txt", "# supercritical\natom 0 0.6\natom 1 0.6\n");
    let text = format!("{SMALL}\n[initial]\npreset = \"measure-table\"\nfile = \"m.txt\"\n");
    let cfg = write(tmp.path(), "s.toml", &text);
    let out = atlas(tmp.path(), &["solve-boundary", "--config", &cfg, "--out-dir", "s"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("criticality"), "{}", stderr(&out));

    let allowed = write(
        tmp.path(),
        "o.toml",
        &text.replace("file = \"m.txt\"", "file = \"m.txt\"\nallow_supercritical = true"),
    );
    let out = atlas(tmp.path(), &["solve-boundary", "--config", &allowed, "--out-dir", "o"]);
    assert!(!stderr(&out).contains("criticality"), "{}", stderr(&out));
}

#[test]
fn malformed_config_reports_its_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[model]\ngamma = 0.5\nhorizon = \"long\"\n");
    let out = atlas(tmp.path(), &["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bad.toml:3"), "{}", stderr(&out));
}

#[test]
fn nonconvergence_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "n.toml",
        &SMALL.replace("replicas = 2", "replicas = 2\nmax_iter = 1"),
    );
    let out = atlas(tmp.path(), &["solve-boundary", "--config", &cfg, "--out-dir", "n"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn identical_runs_write_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "d.toml", SMALL);
    let files = [
        ("simulate", "particles.csv"),
        ("simulate", "boundary_measure.csv"),
        ("solve-boundary", "boundary.csv"),
        ("solve-pde", "pde_boundary.csv"),
        ("study", "convergence.csv"),
    ];
    for (cmd, file) in files {
        for run in ["r1", "r2"] {
            let dir = format!("{run}-{cmd}");
            let out = atlas(tmp.path(), &[cmd, "--config", &cfg, "--seed", "7", "--out-dir", &dir]);
            assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
        }
        let a = std::fs::read(tmp.path().join(format!("r1-{cmd}/{file}"))).unwrap();
        let b = std::fs::read(tmp.path().join(format!("r2-{cmd}/{file}"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between runs");
    }
    let header = std::fs::read_to_string(tmp.path().join("r1-simulate/particles.csv")).unwrap();
    assert!(header.starts_with("t,barrier,integrated_barrier,L_tracked,mean_L\n"));
    let hist = std::fs::read_to_string(tmp.path().join("r1-simulate/boundary_measure.csv")).unwrap();
    assert!(hist.starts_with("t_bin,x_bin,mass\n"));
}

#[test]
fn json_format_and_seed_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "j.toml", SMALL);
    let out = atlas(
        tmp.path(),
        &[
            "simulate",
            "--config",
            &cfg,
            "--format",
            "json",
            "--seed",
            "3",
            "--out-dir",
            "j",
            "--n",
            "10",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("j/particles.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 65);
    assert!((rows[64]["mean_L"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let manifest = std::fs::read_to_string(tmp.path().join("j/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3"));
}

#[test]
fn pde_density_dump_has_snapshot_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "p.toml", SMALL);
    let out = atlas(tmp.path(), &["solve-pde", "--config", &cfg, "--out-dir", "p"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dump = std::fs::read_to_string(tmp.path().join("p/pde_density.csv")).unwrap();
    assert!(dump.starts_with("t,y,mu\n"));
    let times: std::collections::BTreeSet<String> = dump
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(times.len(), 3);
}
