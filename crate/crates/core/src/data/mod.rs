//! Trials in the `t × (1 + N + 1)` layout, sEMG envelope extraction and the
//! synthetic-subject generator.

pub mod filter;
pub mod io;
pub mod synth;

pub use io::{load_forces, load_trial, save_forces, save_trial, Manifest};
pub use synth::{synthesize_trial, MotionProfile, Subject};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use filter::{Cascade, Response};

/// Default muscle ordering of the wrist model.
pub const MUSCLE_NAMES: [&str; 5] = ["FCR", "FCU", "ECRL", "ECRB", "ECU"];

/// Time-indexed envelopes and joint angle, with optional ground-truth forces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMatrix {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// One row of `N` envelopes per time step.
    pub envelopes: Vec<Vec<f64>>,
    pub angles: Vec<f64>,
    /// One row of `N` forces (N) per time step.
    pub forces: Option<Vec<Vec<f64>>>,
}

impl TrialMatrix {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_muscles(&self) -> usize {
        self.names.len()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt()
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Envelope series of muscle `n`.
    pub fn channel(&self, n: usize) -> Vec<f64> {
        self.envelopes.iter().map(|row| row[n]).collect()
    }

    pub fn force_channel(&self, n: usize) -> Option<Vec<f64>> {
        self.forces
            .as_ref()
            .map(|f| f.iter().map(|row| row[n]).collect())
    }

    /// Rows `range` as a new trial (times are kept, not re-based).
    pub fn slice(&self, range: std::ops::Range<usize>) -> TrialMatrix {
        TrialMatrix {
            names: self.names.clone(),
            times: self.times[range.clone()].to_vec(),
            envelopes: self.envelopes[range.clone()].to_vec(),
            angles: self.angles[range.clone()].to_vec(),
            forces: self.forces.as_ref().map(|f| f[range].to_vec()),
        }
    }

    /// Checks lengths, uniform strictly increasing time and envelope bounds.
    /// Errors name the offending row (0-based data row).
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.envelopes.len() != n || self.angles.len() != n {
            return Err(Error::Length(format!(
                "{n} time stamps, {} envelope rows, {} angles",
                self.envelopes.len(),
                self.angles.len()
            )));
        }
        if let Some(f) = &self.forces {
            if f.len() != n {
                return Err(Error::Length(format!("{n} time stamps but {} force rows", f.len())));
            }
        }
        let dt = if n >= 2 { self.times[1] - self.times[0] } else { 0.0 };
        for i in 1..n {
            let step = self.times[i] - self.times[i - 1];
            if !(step > 0.0) {
                return Err(Error::Config(format!("time not strictly increasing at row {i}")));
            }
            if (step - dt).abs() > 1e-6 * dt.max(1e-9) + 1e-12 {
                return Err(Error::Config(format!(
                    "non-uniform time step at row {i}: {step} s vs {dt} s"
                )));
            }
        }
        for (i, row) in self.envelopes.iter().enumerate() {
            if row.len() != self.names.len() {
                return Err(Error::Length(format!("row {i}: {} envelopes", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(-1e-9..=1.0 + 1e-9).contains(*v)) {
                return Err(Error::domain("trial", format!("row {i}: envelope {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// sEMG conditioning: band-pass, full-wave rectification, low-pass envelope,
/// MVC normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub sample_rate: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub envelope_cutoff: f64,
    pub order: usize,
    pub zero_phase: bool,
    /// Per-channel normalisation constants; missing channels use 1.
    #[serde(default)]
    pub mvc: Vec<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            sample_rate: 2000.0,
            band_low: 20.0,
            band_high: 450.0,
            envelope_cutoff: 6.0,
            order: 4,
            zero_phase: true,
            mvc: Vec::new(),
        }
    }
}

impl PreprocessConfig {
    fn apply(&self, stage: &Cascade, x: &[f64]) -> Vec<f64> {
        if self.zero_phase {
            stage.filtfilt(x)
        } else {
            let mut y = x.to_vec();
            stage.filter(&mut y);
            y
        }
    }

    fn mvc(&self, channel: usize) -> f64 {
        self.mvc.get(channel).copied().unwrap_or(1.0)
    }
}

/// Raw sEMG of one channel to a normalised envelope in `[0, 1]`.
pub fn preprocess_semg(raw: &[f64], channel: usize, cfg: &PreprocessConfig) -> Result<Vec<f64>> {
    let fs = cfg.sample_rate;
    if !(cfg.band_low < cfg.band_high) {
        return Err(Error::Config(format!(
            "band-pass corners {} Hz and {} Hz are not ordered",
            cfg.band_low, cfg.band_high
        )));
    }
    let hp = Cascade::butterworth(Response::HighPass, cfg.order, cfg.band_low, fs)?;
    let lp = Cascade::butterworth(Response::LowPass, cfg.order, cfg.band_high, fs)?;
    let band = cfg.apply(&lp, &cfg.apply(&hp, raw));
    envelope(&band, channel, cfg)
}

/// Rectification, envelope low-pass, normalisation and clamping only.
pub fn envelope(x: &[f64], channel: usize, cfg: &PreprocessConfig) -> Result<Vec<f64>> {
    let mvc = cfg.mvc(channel);
    if !(mvc > 0.0) {
        return Err(Error::Config(format!("channel {channel}: MVC constant {mvc} must be positive")));
    }
    let lp = Cascade::butterworth(Response::LowPass, cfg.order, cfg.envelope_cutoff, cfg.sample_rate)?;
    let rect: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    Ok(cfg
        .apply(&lp, &rect)
        .into_iter()
        .map(|v| (v / mvc).clamp(0.0, 1.0))
        .collect())
}
