//! One TOML file drives every subcommand.
//!
//! ```toml
//! [model]
//! gamma = 0.5
//! horizon = 1.0
//!
//! [initial]
//! preset = "uniform"      # or "density" with breaks/values, or "measure-table" with file
//! width = 2.0
//!
//! [discretization]
//! dt = 0.0009765625
//! particles = [100, 1000, 4000]
//! paths = 100000
//!
//! [mc]
//! seed = 1
//! replicas = 10
//!
//! [output]
//! dir = "out"
//! format = "csv"
//! ```
//!
//! Every key has a default, so an empty file (or no file at all) describes the
//! `Uniform[0, 2]`, `gamma = 0.5` experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::PiecewiseDensity;
use crate::error::{invalid, Error, Result};
use crate::measure::{build_from_initial_density, SignedMeasureProfile};
use crate::params::{alpha_from_gamma, ModelParams};
use crate::particles::AtlasScheme;
use crate::skorokhod::Monitoring;
use crate::stefan::PdeOptions;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub initial: InitialSection,
    pub discretization: DiscretizationSection,
    pub mc: McSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    pub horizon: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPreset {
    /// `Uniform[0, width]`.
    Uniform,
    /// Piecewise-constant density given by `breaks` and `values`.
    Density,
    /// The measure `m` read from a table file; the density is recovered when `m` is purely atomic.
    MeasureTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub preset: InitialPreset,
    pub width: f64,
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
    /// Measure table path, relative to the config file.
    pub file: Option<PathBuf>,
    pub allow_supercritical: bool,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            preset: InitialPreset::Uniform,
            width: 2.0,
            breaks: Vec::new(),
            values: Vec::new(),
            file: None,
            allow_supercritical: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    pub dt: f64,
    pub paths: usize,
    /// Defaults to bridge monitoring, which removes the `O(sqrt(dt))` bias of node reflection.
    pub monitoring: Monitoring,
    pub particles: Vec<usize>,
    /// Defaults to the bridge-monitored level scheme, for the same reason as `monitoring`.
    pub scheme: AtlasScheme,
    pub space_bin: f64,
    /// Time-bin width of the barrier histogram and of barrier smoothing, in steps.
    pub time_bin_steps: usize,
    pub dy: f64,
    pub dt_pde: f64,
    pub pde_snapshots: Vec<f64>,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        Self {
            dt: 1.0 / 1024.0,
            paths: 100_000,
            monitoring: Monitoring::BrownianBridge,
            particles: vec![100, 1000, 4000],
            scheme: AtlasScheme::ReflectedBridge,
            space_bin: 0.01,
            time_bin_steps: 16,
            dy: 1e-3,
            dt_pde: 1e-5,
            pde_snapshots: vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub seed: u64,
    pub replicas: usize,
    /// Standard-error multiplier used by statistical checks.
    pub z: f64,
    /// Fixed-point tolerance; `1e-3 (1 + sup ell*)` when absent.
    pub tolerance: Option<f64>,
    pub max_iter: usize,
    pub damping: f64,
    /// Pairwise sup-distance allowed between boundary estimates in `compare`.
    pub compare_tolerance: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            seed: 1,
            replicas: 10,
            z: 3.0,
            tolerance: None,
            max_iter: 200,
            damping: 1.0,
            compare_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    /// Parses and validates; relative table paths resolve against `base_dir`.
    pub fn from_toml(text: &str, source: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            file: source.to_string(),
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        if let (Some(base), Some(file)) = (base_dir, cfg.initial.file.as_mut()) {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, &path.display().to_string(), path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let d = &self.discretization;
        if d.paths == 0 {
            return Err(invalid("discretization.paths", "must be positive"));
        }
        if d.particles.is_empty() || d.particles.contains(&0) {
            return Err(invalid(
                "discretization.particles",
                "need a nonempty list of positive sizes",
            ));
        }
        if !(d.space_bin > 0.0) || !(d.dy > 0.0) || !(d.dt_pde > 0.0) {
            return Err(invalid("discretization", "space_bin, dy and dt_pde must be positive"));
        }
        let steps = self.params()?.grid().n_steps();
        if d.time_bin_steps == 0 || steps % d.time_bin_steps != 0 {
            return Err(invalid(
                "discretization.time_bin_steps",
                format!("must divide the {steps} time steps"),
            ));
        }
        if self.mc.replicas == 0 {
            return Err(invalid("mc.replicas", "must be positive"));
        }
        if !(self.mc.z > 0.0) || !(self.mc.compare_tolerance > 0.0) {
            return Err(invalid("mc", "z and compare_tolerance must be positive"));
        }
        if !(self.mc.damping > 0.0 && self.mc.damping <= 1.0) {
            return Err(invalid("mc.damping", "must lie in (0, 1]"));
        }
        if let Some(file) = &self.initial.file {
            if !file.exists() {
                return Err(Error::Validation(format!("measure table {} not found", file.display())));
            }
        }
        self.measure()?;
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.gamma, self.model.horizon, self.discretization.dt)
    }

    pub fn alpha(&self) -> f64 {
        alpha_from_gamma(self.model.gamma)
    }

    /// The initial density, when the configuration determines one.
    pub fn initial_density(&self) -> Result<PiecewiseDensity> {
        match self.initial.preset {
            InitialPreset::Uniform => PiecewiseDensity::uniform(self.initial.width),
            InitialPreset::Density => PiecewiseDensity::new(self.initial.breaks.clone(), self.initial.values.clone()),
            InitialPreset::MeasureTable => PiecewiseDensity::from_measure(&self.measure()?),
        }
    }

    /// The measure `m` with `m([0, x]) = 1/alpha - mu0(x)`.
    pub fn measure(&self) -> Result<SignedMeasureProfile> {
        let alpha = self.alpha();
        match self.initial.preset {
            InitialPreset::MeasureTable => {
                let file = self
                    .initial
                    .file
                    .as_ref()
                    .ok_or_else(|| invalid("initial.file", "measure-table preset needs a file"))?;
                let text = std::fs::read_to_string(file)?;
                SignedMeasureProfile::parse_table(
                    &text,
                    alpha,
                    self.initial.allow_supercritical,
                    &file.display().to_string(),
                )
            }
            _ => build_from_initial_density(&self.initial_density()?, alpha),
        }
    }

    pub fn pde_options(&self) -> PdeOptions {
        let mut opts = PdeOptions::new(self.discretization.dt_pde, self.discretization.dy);
        opts.snapshot_times = self.discretization.pde_snapshots.clone();
        opts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("", "empty.toml", None).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.alpha(), 1.0);
        assert_eq!(cfg.measure().unwrap().atoms().len(), 2);
    }

    #[test]
    fn roundtrip_is_stable() {
        let text = "[model]\ngamma = 0.25\n[discretization]\nparticles = [10, 20]\nmonitoring = \"nodes\"\n";
        let cfg = ExperimentConfig::from_toml(text, "a.toml", None).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml(), "b.toml", None).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_toml(), again.to_toml());
        assert_eq!(cfg.alpha(), 2.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "[model]\ngamma = 0.5\nhorizon = \"long\"\n";
        match ExperimentConfig::from_toml(text, "bad.toml", None) {
            Err(Error::Parse { file, line, .. }) => {
                assert_eq!(file, "bad.toml");
                assert_eq!(line, 3);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let unknown = "[mc]\nseed = 1\nsede = 2\n";
        assert!(matches!(
            ExperimentConfig::from_toml(unknown, "u.toml", None),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn rejects_inconsistent_values() {
        assert!(ExperimentConfig::from_toml("[model]\ngamma = -1.0\n", "x", None).is_err());
        assert!(ExperimentConfig::from_toml("[discretization]\ntime_bin_steps = 7\n", "x", None).is_err());
        let missing = "[initial]\npreset = \"measure-table\"\nfile = \"/nonexistent/m.txt\"\n";
        assert!(ExperimentConfig::from_toml(missing, "x", None).is_err());
    }
}
