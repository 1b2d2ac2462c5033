use std::path::{Path, PathBuf};

use ltasep::infer::InferOptions;
use ltasep::pde::SteadyOptions;
use ltasep::{Geometry, Interpolation, ModelSpec, RateFunction, RateProfile};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Theory,
    Pde,
    Compare,
    Infer,
    PhaseScan,
}

/// Where the site rates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSource {
    Inline { values: Vec<f64> },
    /// A `site,rate` CSV, resolved relative to the config file.
    Csv { path: PathBuf },
    /// A named rate function sampled on the lattice positions.
    Generator { function: RateFunction },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Required for generated rates; checked against the data otherwise.
    #[serde(default)]
    pub n_sites: Option<usize>,
    pub ell: u32,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "open")]
    pub geometry: Geometry,
    pub rates: RateSource,
    #[serde(default)]
    pub interpolation: Interpolation,
}

fn open() -> Geometry {
    Geometry::Open
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Tasep,
    Zrp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub burn_in_events: u64,
    pub sample_events: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Independent runs merged into one estimate; replica `r` uses `derive_seed(seed, r)`.
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default = "tasep")]
    pub engine: Engine,
}

fn default_batches() -> usize {
    ltasep::simulate::DEFAULT_BATCHES
}

fn one() -> usize {
    1
}

fn tasep() -> Engine {
    Engine::Tasep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    /// Number of grid points; defaults to the lattice size.
    #[serde(default)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub cells: usize,
    #[serde(default = "pde_tol")]
    pub tol: f64,
    #[serde(default = "pde_steps")]
    pub max_steps: usize,
    #[serde(default = "cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub viscosity: bool,
}

fn pde_tol() -> f64 {
    1e-10
}

fn pde_steps() -> usize {
    10_000_000
}

fn cfl() -> f64 {
    ltasep::pde::DEFAULT_CFL
}

impl PdeConfig {
    pub fn options(&self) -> SteadyOptions {
        SteadyOptions { m: self.cells, tol: self.tol, max_steps: self.max_steps, cfl: self.cfl, viscosity: self.viscosity }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferConfig {
    /// `site,density` CSV, resolved relative to the config file.
    pub profile: PathBuf,
    pub ell: u32,
    /// 1-based site where `lambda = 1`.
    pub anchor: usize,
    #[serde(default)]
    pub smoothing: Option<usize>,
    #[serde(default = "epsilon")]
    pub epsilon: f64,
}

fn epsilon() -> f64 {
    ltasep::infer::DEFAULT_EPSILON
}

impl InferConfig {
    pub fn options(&self) -> InferOptions {
        InferOptions { epsilon: self.epsilon, smoothing: self.smoothing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Geometric spacing, for scans across decades.
    #[serde(default)]
    pub log: bool,
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.points == 0 || !(self.min > 0.0 && self.max >= self.min) {
            return Err(CliError::Config(format!(
                "scan axis needs 0 < min <= max and points >= 1, got {self:?}"
            )));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let steps = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let t = i as f64 / steps;
                if self.log {
                    self.min * (self.max / self.min).powf(t)
                } else {
                    self.min + (self.max - self.min) * t
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseScanConfig {
    pub alpha: Axis,
    pub beta: Axis,
}

/// One JSON document describing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub theory: Option<TheoryConfig>,
    #[serde(default)]
    pub pde: Option<PdeConfig>,
    #[serde(default)]
    pub infer: Option<InferConfig>,
    #[serde(default)]
    pub phase_scan: Option<PhaseScanConfig>,
    /// Directory that relative paths resolve against; set from the config location.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.check()?;
        Ok(config)
    }

    /// Checks that the sections the mode needs are present.
    pub fn check(&self) -> Result<(), CliError> {
        let need = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::Config(format!("mode {:?} needs a `{what}` section", self.mode)))
            }
        };
        match self.mode {
            Mode::Simulate => {
                need(self.model.is_some(), "model")?;
                need(self.simulate.is_some(), "simulate")
            }
            Mode::Theory => need(self.model.is_some(), "model"),
            Mode::Pde => {
                need(self.model.is_some(), "model")?;
                need(self.pde.is_some(), "pde")
            }
            Mode::Compare => {
                need(self.model.is_some(), "model")?;
                need(self.simulate.is_some(), "simulate")
            }
            Mode::Infer => need(self.infer.is_some(), "infer"),
            Mode::PhaseScan => {
                need(self.model.is_some(), "model")?;
                need(self.phase_scan.is_some(), "phase_scan")
            }
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::Config("missing `model` section".into()))
    }

    pub fn rate_profile(&self) -> Result<RateProfile, CliError> {
        let model = self.model()?;
        let rates = match &model.rates {
            RateSource::Inline { values } => RateProfile::new(values.clone(), model.interpolation)?,
            RateSource::Csv { path } => RateProfile::from_csv_path(self.resolve(path), model.interpolation)?,
            RateSource::Generator { function } => {
                let n = model
                    .n_sites
                    .ok_or_else(|| CliError::Config("generated rates need `n_sites`".into()))?;
                function.sample(n, model.interpolation)?
            }
        };
        if let Some(n) = model.n_sites {
            if n != rates.len() {
                return Err(CliError::Config(format!("n_sites = {n} but the rate data has {} sites", rates.len())));
            }
        }
        Ok(rates)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let model = self.model()?;
        let rates = self.rate_profile()?;
        let spec = match model.geometry {
            Geometry::Open => ModelSpec::open(model.ell, model.alpha, model.beta, rates, self.seed)?,
            Geometry::Ring { particles } => ModelSpec::ring(model.ell, particles, rates, self.seed)?,
        };
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    #[test]
    fn generator_config() {
        let c = parse(
            r#"{"mode": "theory", "seed": 4,
                "model": {"n_sites": 100, "ell": 3, "alpha": 0.1, "beta": 0.2,
                          "rates": {"source": "generator", "function": {"kind": "bump", "center": 0.5, "width": 0.2, "depth": 0.5}}}}"#,
        )
        .unwrap();
        let spec = c.model_spec().unwrap();
        assert_eq!(spec.n_sites, 100);
        assert_eq!(spec.seed, 4);
        assert_eq!(spec.geometry, Geometry::Open);
    }

    #[test]
    fn inline_and_ring() {
        let c = parse(
            r#"{"mode": "simulate", "simulate": {"burn_in_events": 10, "sample_events": 100, "engine": "zrp"},
                "model": {"ell": 2, "geometry": {"kind": "ring", "particles": 2},
                          "rates": {"source": "inline", "values": [1, 1, 1, 1, 1, 1]}}}"#,
        )
        .unwrap();
        assert_eq!(c.model_spec().unwrap().geometry, Geometry::Ring { particles: 2 });
        assert_eq!(c.simulate.unwrap().replicas, 1);
    }

    #[test]
    fn schema_errors() {
        assert!(parse(r#"{"mode": "theory"}"#).is_err());
        assert!(parse(r#"{"mode": "simulate", "model": {"ell": 1, "rates": {"source": "inline", "values": [1]}}}"#).is_err());
        assert!(parse(r#"{"mode": "bogus"}"#).is_err());
        assert!(parse(r#"{"mode": "theory", "typo": 1}"#).is_err());
        let c = parse(
            r#"{"mode": "theory", "model": {"n_sites": 3, "ell": 1, "alpha": 0.1, "beta": 0.1,
                "rates": {"source": "inline", "values": [1, 1]}}}"#,
        )
        .unwrap();
        assert!(matches!(c.model_spec(), Err(CliError::Config(_))));
    }

    #[test]
    fn axes() {
        let a = Axis { min: 0.001, max: 1.0, points: 4, log: true };
        let v = a.values().unwrap();
        assert!((v[1] - 0.01).abs() < 1e-15 && (v[3] - 1.0).abs() < 1e-15);
        assert!(Axis { min: 0.0, max: 1.0, points: 3, log: false }.values().is_err());
    }
}
