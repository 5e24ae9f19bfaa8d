//! Synthetic trials from the forward-dynamics simulator.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::filter::{Cascade, Response};
use super::io::Manifest;
use super::TrialMatrix;
use crate::error::{Error, Result};
use crate::joint::{self, JointModel};
use crate::muscle::MuscleParams;

/// Ground-truth subject: rigid body, geometry and physiology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub model: JointModel,
    pub params: Vec<MuscleParams>,
    /// One shared activation shape factor, or one per muscle.
    pub shape: Vec<f64>,
}

impl Subject {
    pub fn names(&self) -> Vec<String> {
        self.model.muscles.iter().map(|m| m.name.clone()).collect()
    }
}

/// Cyclic flexion/extension excitation pattern.
///
/// Muscle `n` receives `amp_n·(0.5 − 0.5·cos(2π f t + φ_n + φ_g))` where the
/// global phase `φ_g` is drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionProfile {
    /// Flexion/extension cycle frequency (Hz).
    pub frequency: f64,
    pub amplitudes: Vec<f64>,
    /// Per-muscle phase offsets (rad).
    pub phases: Vec<f64>,
    /// Recorded length (s).
    pub duration: f64,
    /// Simulated but discarded lead-in (s).
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// Envelope signal-to-noise ratio (dB); `inf` disables noise.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Cut-off of the envelope noise low-pass (Hz).
    #[serde(default = "default_noise_cutoff")]
    pub noise_cutoff: f64,
}

fn default_warmup() -> f64 {
    1.0
}
fn default_sample_rate() -> f64 {
    1000.0
}
fn default_snr() -> f64 {
    f64::INFINITY
}
fn default_noise_cutoff() -> f64 {
    6.0
}

impl MotionProfile {
    pub fn validate(&self, n_muscles: usize) -> Result<()> {
        if !(self.frequency > 0.0) {
            return Err(Error::Config(format!("frequency {} must be positive", self.frequency)));
        }
        if self.amplitudes.len() != n_muscles || self.phases.len() != n_muscles {
            return Err(Error::Config(format!(
                "profile has {} amplitudes and {} phases for {n_muscles} muscles",
                self.amplitudes.len(),
                self.phases.len()
            )));
        }
        if let Some(a) = self.amplitudes.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("amplitude {a} outside [0, 1]")));
        }
        if !(self.duration > 0.0 && self.warmup >= 0.0 && self.sample_rate > 0.0) {
            return Err(Error::Config("duration, warmup and sample_rate must be positive".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db is NaN".into()));
        }
        Ok(())
    }

    /// The same pattern at `factor` times the cycle frequency.
    pub fn with_speed(&self, factor: f64) -> MotionProfile {
        MotionProfile {
            frequency: self.frequency * factor,
            ..self.clone()
        }
    }

    /// Envelopes at time `t` for global phase `phase`.
    pub fn excitation(&self, t: f64, phase: f64) -> Vec<f64> {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .map(|(a, p)| a * (0.5 - 0.5 * (2.0 * PI * self.frequency * t + p + phase).cos()))
            .collect()
    }
}

/// Simulates the subject under `profile` and returns the recorded trial
/// (with ground-truth forces) and its manifest.
///
/// The simulation starts at rest at `q = 0`; the warm-up segment is dropped
/// and times are re-based to zero.
pub fn synthesize_trial(profile: &MotionProfile, subject: &Subject, seed: u64) -> Result<(TrialMatrix, Manifest)> {
    let n = subject.model.n_muscles();
    profile.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let dt = 1.0 / profile.sample_rate;
    let traj = joint::simulate(
        |t| profile.excitation(t, phase),
        &subject.model,
        &subject.params,
        &subject.shape,
        0.0,
        0.0,
        dt,
        profile.warmup + profile.duration,
    )?;
    let skip = (profile.warmup / dt).round() as usize;
    let t0 = traj.times[skip];
    let mut envelopes: Vec<Vec<f64>> = traj.excitations[skip..].to_vec();
    if profile.snr_db.is_finite() {
        add_envelope_noise(&mut envelopes, profile, &mut rng)?;
    }
    let trial = TrialMatrix {
        names: subject.names(),
        times: traj.times[skip..].iter().map(|t| t - t0).collect(),
        envelopes,
        angles: traj.states[skip..].iter().map(|s| s.q).collect(),
        forces: Some(traj.forces[skip..].to_vec()),
    };
    let manifest = Manifest {
        seed,
        global_phase: phase,
        profile: profile.clone(),
        subject: subject.clone(),
    };
    Ok((trial, manifest))
}

/// Adds low-passed Gaussian noise at the profile's SNR (relative to each
/// channel's mean-square envelope), then clamps to `[0, 1]`.
fn add_envelope_noise(rows: &mut [Vec<f64>], profile: &MotionProfile, rng: &mut ChaCha8Rng) -> Result<()> {
    let lp = Cascade::butterworth(Response::LowPass, 4, profile.noise_cutoff, profile.sample_rate)?;
    let len = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    for ch in 0..n {
        let power = rows.iter().map(|r| r[ch] * r[ch]).sum::<f64>() / len as f64;
        let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let shaped = lp.filtfilt(&white);
        let rms = (shaped.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        let target = (power / 10f64.powf(profile.snr_db / 10.0)).sqrt();
        let scale = if rms > 0.0 { target / rms } else { 0.0 };
        for (row, w) in rows.iter_mut().zip(&shaped) {
            row[ch] = (row[ch] + scale * w).clamp(0.0, 1.0);
        }
    }
    Ok(())
}
