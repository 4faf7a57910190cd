//! JSON experiment configuration with a versioned schema.

use anyhow::{bail, Context, Result};
use gkdv_core::nonlinearity::{Nonlinearity, NonlinearityKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SolitonPropagation,
    PerturbedSoliton,
    LinearLiouville,
    VirialAudit,
    MultiSoliton,
    CStarScan,
    SpectralReport,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SolitonPropagation => "soliton-propagation",
            Scenario::PerturbedSoliton => "perturbed-soliton",
            Scenario::LinearLiouville => "linear-liouville",
            Scenario::VirialAudit => "virial-audit",
            Scenario::MultiSoliton => "multi-soliton",
            Scenario::CStarScan => "c-star-scan",
            Scenario::SpectralReport => "spectral-report",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    pub length: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    Gaussian,
    ScaleDirection,
    TranslationDirection,
    RandomBandLimited,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub shape: PerturbationShape,
    pub amplitude: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_width() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorConfig {
    #[serde(default = "default_x0")]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub t0: Vec<f64>,
}

fn default_x0() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}

impl Default for AnchorConfig {
    fn default() -> AnchorConfig {
        AnchorConfig { x0: default_x0(), t0: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub c: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: Scenario,
    pub nonlinearity: NonlinearityKind,
    pub grid: GridConfig,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_cadence")]
    pub output_cadence: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default)]
    pub rho0: f64,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub anchors: AnchorConfig,
    /// Per-soliton parameters for the multi-soliton scenario.
    #[serde(default)]
    pub solitons: Vec<SolitonSpec>,
    /// Grid used for eigenvalue analysis (dense solves); kept moderate.
    #[serde(default = "default_analysis_grid")]
    pub analysis_grid: GridConfig,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_final() -> f64 {
    20.0
}

fn default_cadence() -> f64 {
    0.5
}

fn default_c0() -> f64 {
    1.0
}

fn default_analysis_grid() -> GridConfig {
    GridConfig { length: 80.0, n: 1024 }
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            bail!("unsupported config version {} (expected 1)", self.version);
        }
        for (name, v) in [
            ("grid.length", self.grid.length),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("output_cadence", self.output_cadence),
            ("c0", self.c0),
        ] {
            if !(v > 0.0) {
                bail!("field {name} must be positive, got {v}");
            }
        }
        if !self.grid.n.is_power_of_two() {
            bail!("grid.n must be a power of two, got {}", self.grid.n);
        }
        if let Some(p) = &self.perturbation {
            if p.amplitude < 0.0 || !(p.width > 0.0) {
                bail!("perturbation requires amplitude >= 0 and width > 0");
            }
        }
        if self.scenario == Scenario::MultiSoliton && self.solitons.len() < 2 {
            bail!("multi-soliton scenario needs at least two soliton entries");
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        Nonlinearity::new(self.nonlinearity.clone()).map_err(anyhow::Error::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let text = r#"{
            "version": 1,
            "scenario": "soliton-propagation",
            "nonlinearity": {"kind": "pure_power", "p": 2, "a": 1.0},
            "grid": {"length": 200.0, "n": 4096}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.anchors.x0, vec![5.0, 10.0, 20.0]);
        assert!(cfg.nonlinearity().is_ok());
    }

    #[test]
    fn rejects_bad_fields() {
        let bad_version = r#"{
            "version": 2,
            "scenario": "soliton-propagation",
            "nonlinearity": {"kind": "pure_power", "p": 2, "a": 1.0},
            "grid": {"length": 200.0, "n": 4096}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(bad_version).unwrap();
        assert!(cfg.validate().is_err());

        let bad_n = r#"{
            "version": 1,
            "scenario": "soliton-propagation",
            "nonlinearity": {"kind": "pure_power", "p": 2, "a": 1.0},
            "grid": {"length": 200.0, "n": 1000}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(bad_n).unwrap();
        assert!(cfg.validate().is_err());

        // unknown fields are named in the error
        let unknown = r#"{
            "version": 1,
            "scenario": "soliton-propagation",
            "nonlinearity": {"kind": "pure_power", "p": 2, "a": 1.0},
            "grid": {"length": 200.0, "n": 4096},
            "tfinal": 10.0
        }"#;
        let err = serde_json::from_str::<ExperimentConfig>(unknown).unwrap_err();
        assert!(err.to_string().contains("tfinal"));
    }
}
