//! Hyperparameter sweeps: one independent training job per axis value.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ToolConfig;
use crate::data::TrialMatrix;
use crate::error::{Error, Result};
use crate::eval::{self, ComparisonRow, ComparisonTable};
use crate::neural::Activation;
use crate::train::{self, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LearningRate,
    Activation,
    BatchSize,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::LearningRate => "learning_rate",
            SweepAxis::Activation => "activation",
            SweepAxis::BatchSize => "batch_size",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learning_rate" => Ok(SweepAxis::LearningRate),
            "activation" => Ok(SweepAxis::Activation),
            "batch_size" => Ok(SweepAxis::BatchSize),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (expected learning_rate, activation or batch_size)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
}

impl SweepSpec {
    /// Validates every value against the axis.
    pub fn new(axis: SweepAxis, values: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("a sweep needs at least one value".into()));
        }
        let spec = SweepSpec { axis, values };
        let base = ToolConfig::default();
        for v in &spec.values {
            spec.apply(&base, v)?;
        }
        Ok(spec)
    }

    /// `"1e-3,1e-4"` style comma-separated values.
    pub fn parse(axis: &str, values: &str) -> Result<Self> {
        Self::new(
            axis.parse()?,
            values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect(),
        )
    }

    pub fn label(&self, value: &str) -> String {
        format!("{}={value}", self.axis)
    }

    /// `base` with the axis set to `value`.
    pub fn apply(&self, base: &ToolConfig, value: &str) -> Result<ToolConfig> {
        let bad = |why: &str| Error::Config(format!("{} value `{value}`: {why}", self.axis));
        let mut cfg = base.clone();
        match self.axis {
            SweepAxis::LearningRate => {
                let lr: f64 = value.parse().map_err(|_| bad("not a number"))?;
                if !(lr > 0.0 && lr.is_finite()) {
                    return Err(bad("must be positive"));
                }
                cfg.training.learning_rate = lr;
            }
            SweepAxis::Activation => {
                cfg.network.activation = value.parse::<Activation>().map_err(|e| bad(&e.to_string()))?;
            }
            SweepAxis::BatchSize => {
                let b: usize = value.parse().map_err(|_| bad("not a positive integer"))?;
                if b == 0 {
                    return Err(bad("must be positive"));
                }
                cfg.training.batch_size = b;
            }
        }
        Ok(cfg)
    }

    /// `(label, config)` per value, in order.
    pub fn jobs(&self, base: &ToolConfig) -> Result<Vec<(String, ToolConfig)>> {
        self.values.iter().map(|v| Ok((self.label(v), self.apply(base, v)?))).collect()
    }
}

/// Trains on `trials` with `cfg` and scores the result on `test`.
pub fn run_job(label: &str, cfg: &ToolConfig, trials: &[TrialMatrix], test: &TrialMatrix) -> Result<(TrainOutcome, ComparisonRow)> {
    cfg.validate()?;
    let outcome = train::train(trials, &cfg.model()?, cfg.trainable()?, &cfg.network_config(), &cfg.training)?;
    let row = eval::evaluate(label, &outcome.network, test)?;
    Ok((outcome, row))
}

/// Successful rows in job order plus the failures, by label.
pub fn aggregate(results: Vec<(String, Result<ComparisonRow>)>) -> Result<(ComparisonTable, Vec<(String, String)>)> {
    let mut table = ComparisonTable::new();
    let mut failures = Vec::new();
    for (label, r) in results {
        match r {
            Ok(row) => table.push(row)?,
            Err(e) => failures.push((label, e.to_string())),
        }
    }
    Ok((table, failures))
}
