//! Tunable parameters, loadable as a partial JSON override file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::RecognitionConfig;
use crate::kent::DotModel;
use crate::pattern::{EvalConfig, StepSchedule};
use crate::spin::RansacConfig;

/// Environment variable naming a config file when none is given explicitly.
pub const CONFIG_ENV: &str = "SPINDOE_CONFIG";

/// All angles are radians.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: DotModel,
    pub recognition: RecognitionConfig,
    pub ransac: RansacConfig,
    pub optimizer: StepSchedule,
    pub success_gate: Option<f64>,
    pub visibility_threshold: Option<f64>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| Error::format("config file", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::format(format!("config file {}", path.display()), e))?;
        Self::from_json(&text)
    }

    /// Loads `explicit` if given, else the file named by [`CONFIG_ENV`],
    /// else the defaults. Returns the path that was read, if any.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from),
        };
        match path {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.recognition.validate()?;
        self.optimizer.validate()?;
        if self.ransac.iterations == 0 || !(self.ransac.inlier_gate > 0.0) {
            return Err(Error::InvalidParams(
                "ransac needs iterations >= 1 and a positive inlier_gate".into(),
            ));
        }
        if let Some(g) = self.success_gate {
            if !(g > 0.0) {
                return Err(Error::InvalidParams("success_gate must be positive".into()));
            }
        }
        if let Some(t) = self.visibility_threshold {
            if !(-1.0..1.0).contains(&t) {
                return Err(Error::InvalidParams("visibility_threshold must be in [-1, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn eval_config(&self, seed: u64) -> EvalConfig {
        let base = EvalConfig::default();
        EvalConfig {
            recognition: self.recognition.clone(),
            success_gate: self.success_gate.unwrap_or(base.success_gate),
            visibility_threshold: self.visibility_threshold.unwrap_or(base.visibility_threshold),
            seed,
        }
    }
}
