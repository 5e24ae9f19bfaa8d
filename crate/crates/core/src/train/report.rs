use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{identify_report, TrainableParams, Variation};
use super::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Angle loss plus physics residuals.
    Pinn,
    /// Both residual weights zero: plain angle regression.
    Baseline,
}

/// Epoch means over the training rows (train-mode passes), validation angle
/// loss (eval mode) and the mapped parameter values after the epoch.
/// Residual terms are NaN when they were not evaluated; `skipped` counts
/// rows whose predicted kinematics left the model's domain, where only the
/// angle loss applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_q: f64,
    pub l_r1: f64,
    pub l_r2: f64,
    pub l_total: f64,
    pub val_l_q: f64,
    pub skipped: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub param_labels: Vec<String>,
    pub best_epoch: usize,
    pub best_val_l_q: f64,
    pub wall_clock_s: f64,
    pub identified: Vec<Variation>,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub(super) fn new(mode: TrainMode, param_labels: Vec<String>, config: TrainConfig) -> Self {
        TrainReport {
            mode,
            param_labels,
            best_epoch: 0,
            best_val_l_q: f64::NAN,
            wall_clock_s: 0.0,
            identified: Vec::new(),
            config,
            epochs: Vec::new(),
        }
    }

    pub(super) fn finish(&mut self, best_epoch: usize, best_val: f64, params: &TrainableParams, secs: f64) -> Result<()> {
        self.best_epoch = best_epoch;
        self.best_val_l_q = best_val;
        self.wall_clock_s = secs;
        self.identified = identify_report(&params.labels(), &params.values(), &params.initials())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| crate::data::io::parse_error(path, &text, e))
    }
}
