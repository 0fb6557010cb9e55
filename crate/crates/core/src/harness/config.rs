//! Experiment configuration, read from TOML with unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandits::PolicyConfig;
use crate::envsim::{CorruptionMode, GenerationConfig};
use crate::error::{io_err, Error, Result};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "RCLUB_OUT_DIR";

fn default_noise_sd() -> f64 {
    0.1
}
fn default_trace_points() -> usize {
    1000
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    pub users: usize,
    pub clusters: usize,
    pub dim: usize,
    pub pool_size: usize,
    pub arms_per_round: usize,
    #[serde(default)]
    pub corrupted_fraction: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Instance JSON written by `gen-instance`; replaces generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_file: Option<PathBuf>,
    /// Features CSV for the arm pool (used with `theta_features`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_features: Option<PathBuf>,
    /// Features CSV with one preference vector per cluster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_features: Option<PathBuf>,
}

impl InstanceSection {
    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            users: self.users,
            clusters: self.clusters,
            dim: self.dim,
            pool_size: self.pool_size,
            arms_per_round: self.arms_per_round,
            corrupted_fraction: self.corrupted_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    #[serde(default)]
    pub mode: CorruptionMode,
    #[serde(default)]
    pub k: u64,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

impl Default for CorruptionSection {
    fn default() -> Self {
        Self {
            mode: CorruptionMode::FlipPrefix,
            k: 0,
            enabled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Number of points kept in each regret trace.
    #[serde(default = "default_trace_points")]
    pub trace_points: usize,
    /// Track the ground-truth-cluster elliptical potential and fail the run
    /// if it ever exceeds its bound.
    #[serde(default)]
    pub track_potential: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    /// Scan cadence; defaults to `horizon / 5`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect_every: Option<u64>,
    /// Confidence parameter for OCCUD; defaults to the policy's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// GCUD flag fraction; defaults to the corrupted fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Minimum eigenvalue of the arm covariance; estimated from the pool
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_x: Option<f64>,
    /// Sub-Gaussian parameter of the arm distribution; defaults to the
    /// largest value the regularity condition allows,
    /// `λx / √(8·ln(4K))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSection,
    #[serde(default)]
    pub corruption: CorruptionSection,
    pub run: RunSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default, rename = "policy")]
    pub policies: Vec<PolicyConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative feature/instance paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.instance.instance_file,
            &mut cfg.instance.arm_features,
            &mut cfg.instance.theta_features,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.run.horizon < 1 {
            return bad("run.horizon must be at least 1".into());
        }
        if self.instance.arms_per_round > self.instance.pool_size {
            return bad(format!(
                "instance.arms_per_round ({}) exceeds instance.pool_size ({})",
                self.instance.arms_per_round, self.instance.pool_size
            ));
        }
        if !(self.instance.noise_sd >= 0.0) {
            return bad("instance.noise_sd must be nonnegative".into());
        }
        if self.instance.arm_features.is_some() != self.instance.theta_features.is_some() {
            return bad("instance.arm_features and instance.theta_features go together".into());
        }
        if let Some(e) = self.detector.detect_every {
            if e == 0 || e > self.run.horizon {
                return bad(format!(
                    "detector.detect_every must lie in 1..=horizon, got {e}"
                ));
            }
        }
        if let Some(rho) = self.detector.rho {
            if !(0.0..1.0).contains(&rho) {
                return bad(format!("detector.rho must lie in [0, 1), got {rho}"));
            }
        }
        if self.run.trace_points == 0 {
            return bad("run.trace_points must be positive".into());
        }
        if self.run.seeds.is_empty() {
            return bad("run.seeds must not be empty".into());
        }
        let mut labels: Vec<String> = self.policies.iter().map(PolicyConfig::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate policy label '{}'", w[0]));
        }
        for p in &self.policies {
            p.resolve(self.run.horizon, self.instance.dim)
                .map_err(|e| Error::Config(format!("policy '{}': {e}", p.label())))?;
        }
        Ok(())
    }

    pub fn detect_every(&self) -> u64 {
        self.detector
            .detect_every
            .unwrap_or((self.run.horizon / 5).max(1))
    }

    pub fn gcud_rho(&self) -> f64 {
        self.detector
            .rho
            .unwrap_or(self.instance.corrupted_fraction)
    }

    /// Output root: explicit override, then the config, then the
    /// environment, then `runs`.
    pub fn out_root(&self, override_dir: Option<&Path>) -> PathBuf {
        override_dir
            .map(Path::to_path_buf)
            .or_else(|| self.run.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandits::{Auto, PolicyKind};

    const BASIC: &str = r#"
[instance]
users = 10
clusters = 2
dim = 4
pool_size = 30
arms_per_round = 5
corrupted_fraction = 0.2

[corruption]
k = 100

[run]
horizon = 500
seeds = [1, 2]

[[policy]]
kind = "rclub_wcu"
alpha = 0.3
c_bar = 12

[[policy]]
kind = "linucb_ind"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(c.instance.noise_sd, 0.1);
        assert!(c.corruption.enabled);
        assert_eq!(c.run.trace_points, 1000);
        assert_eq!(c.detect_every(), 100);
        assert_eq!(c.gcud_rho(), 0.2);
        assert_eq!(c.policies.len(), 2);
        assert_eq!(c.policies[0].kind, PolicyKind::RclubWcu);
        assert_eq!(c.policies[0].alpha, Auto::Value(0.3));
        assert_eq!(c.policies[0].c_bar, Auto::Value(12.0));
        assert_eq!(c.policies[1].delta, Auto::Auto);
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::from_toml(BASIC).unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let text = BASIC.replace("horizon = 500", "horizon = 500\nhorizn = 3");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("horizn"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("horizon = 500", "horizon = 0"),
            ("arms_per_round = 5", "arms_per_round = 31"),
            ("alpha = 0.3", "alpha = -1"),
            (
                "kind = \"linucb_ind\"",
                "kind = \"linucb_ind\"\nlabel = \"rclub_wcu\"",
            ),
        ] {
            let text = BASIC.replace(from, to);
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{to}");
        }
        let text = format!("{BASIC}\n[detector]\ndetect_every = 501\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn out_root_precedence() {
        let mut c = ExperimentConfig::from_toml(BASIC).unwrap();
        c.run.out_dir = Some("cfg".into());
        assert_eq!(c.out_root(Some(Path::new("cli"))), PathBuf::from("cli"));
        assert_eq!(c.out_root(None), PathBuf::from("cfg"));
    }
}
