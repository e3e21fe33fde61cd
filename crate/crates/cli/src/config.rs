//! Run configuration: TOML file, then command-line flags on top.
//!
//! ```toml
//! seed = 7
//! threads = 4
//!
//! [registration]
//! f_scale = 4.5
//!
//! [contact]
//! contact_threshold = 2.5
//! ```
//!
//! Every section is optional and unknown keys are rejected. The top-level
//! `seed` is copied into every component seed, so one number reproduces a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scenereg_core::alignment::IcpConfig;
use scenereg_core::metrics::{ContactConfig, LossWeights, ReconConfig};
use scenereg_core::registration::RegistrationConfig;
use scenereg_core::scenegen::GenerateOptions;

use crate::error::CliError;

pub const THREADS_ENV: &str = "SCENEREG_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSettings {
    pub cd_samples: usize,
    pub iou_resolution: usize,
}

impl Default for ReconSettings {
    fn default() -> Self {
        let d = ReconConfig::default();
        Self {
            cd_samples: d.cd_samples,
            iou_resolution: d.iou_resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub registration: RegistrationConfig,
    pub icp: IcpConfig,
    pub contact: ContactConfig,
    pub recon: ReconSettings,
    pub loss: LossWeights,
    pub scenes: GenerateOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message)))
    }

    /// File values, overridden by any flag that was given, with seeds propagated.
    pub fn resolve(file: Option<&Path>, seed: Option<u64>, threads: Option<usize>) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(t) = threads {
            cfg.threads = t;
        }
        cfg.registration.seed = cfg.seed;
        cfg.icp.seed = cfg.seed;
        cfg.contact.seed = cfg.seed;
        cfg.scenes.contact.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: &dyn std::fmt::Display| CliError::usage(format!("invalid config: {e}"));
        self.registration.validate().map_err(|e| usage(&e))?;
        self.icp.validate().map_err(|e| usage(&e))?;
        self.contact.validate().map_err(|e| usage(&e))?;
        self.scenes.cameras.validate().map_err(|e| usage(&e))?;
        if self.recon.cd_samples == 0 || self.recon.iou_resolution == 0 {
            return Err(CliError::usage(
                "invalid config: recon sample count and resolution must be positive",
            ));
        }
        let w = &self.loss;
        if [w.w_cd, w.w_t, w.w_s, w.w_ip]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(CliError::usage(
                "invalid config: loss weights must be finite and non-negative",
            ));
        }
        Ok(())
    }

    pub fn recon_config(&self) -> ReconConfig {
        ReconConfig {
            icp: self.icp.clone(),
            cd_samples: self.recon.cd_samples,
            iou_resolution: self.recon.iou_resolution,
            seed: self.seed,
        }
    }
}
