use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::costspec::CaseStudyParams;
use crate::engine::StepSchedule;
use crate::error::{Error, Result};
use crate::model::SurrogateSpec;
use crate::plant::PlantSpec;

fn default_max_iter() -> usize {
    50
}

/// A surrogate with a display label, e.g. `label = "LM"` next to the
/// surrogate's own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSurrogate {
    pub label: String,
    #[serde(flatten)]
    pub spec: SurrogateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub c_values: Vec<f64>,
    /// Iterations reported in the sweep table.
    pub iterations: Vec<usize>,
}

/// One experiment description. `run` uses the first surrogate;
/// `compare-models` uses all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Defaults to `1e-6 √dim z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_stop: Option<f64>,
    /// Output directory, relative to the config file. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub schedule: StepSchedule,
    pub plant: PlantSpec,
    pub surrogates: Vec<LabeledSurrogate>,
    #[serde(default)]
    pub case_study: CaseStudyParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepParams>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Every failure, including a missing
    /// file, is reported as [`Error::Config`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.plant.validate()?;
        if self.surrogates.is_empty() {
            return Err(Error::Config("at least one surrogate is required".into()));
        }
        for s in &self.surrogates {
            s.spec.validate()?;
        }
        if let Some(eps) = self.eps_stop {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Config("eps_stop must be nonnegative".into()));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.c_values.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
                return Err(Error::Config("sweep c values must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form: keys sorted, no whitespace,
    /// output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let value = serde_json::to_value(&c).expect("run configs serialize to JSON");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// Output directory: explicit override, else `out` relative to `base`,
    /// else `obilc-out` in the working directory.
    pub fn out_dir(&self, base: &Path, explicit: Option<&Path>) -> PathBuf {
        match (explicit, &self.out) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(o)) => base.join(o),
            (None, None) => PathBuf::from("obilc-out"),
        }
    }
}
