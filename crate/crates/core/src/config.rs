//! Tool configuration: joint, muscles (initial guesses, simulator truth,
//! geometry, bounds), network, training and synthetic data.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::Manifest;
use crate::data::synth::{synthesize_trial, MotionProfile, Subject};
use crate::data::TrialMatrix;
use crate::error::{Error, Result};
use crate::joint::{JointModel, MotionRange, MuscleGeometry};
use crate::muscle::MuscleParams;
use crate::neural::NetworkConfig;
use crate::train::{Bounded, BoundsConfig, TrainConfig, TrainableParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub mass: f64,
    pub com_distance: f64,
    pub principal_inertia: f64,
    pub damping: f64,
    pub gravity: f64,
    pub range: MotionRange,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            mass: 0.45,
            com_distance: 0.07,
            principal_inertia: 1e-4,
            damping: 0.05,
            gravity: 9.81,
            range: MotionRange::default(),
        }
    }
}

/// One muscle-tendon unit. `f0m` and `l0m` are the trainer's initial
/// guesses; `true_f0m` and `true_l0m` drive the simulator. All other fields
/// are shared by both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleConfig {
    pub name: String,
    pub f0m: f64,
    pub l0m: f64,
    /// Defaults to `10·l0m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    pub lst: f64,
    pub phi0: f64,
    pub true_f0m: f64,
    pub true_l0m: f64,
    /// Moment-arm polynomial `r(q) = c₀ + c₁q + …` (m); negative for extensors.
    pub arm_coeffs: Vec<f64>,
    /// Musculotendon length at `q = 0`; by default the length that puts the
    /// true fibre at its optimal length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmt_ref: Option<f64>,
    /// Per-muscle overrides of the global bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0m_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0m_delta: Option<f64>,
}

impl MuscleConfig {
    fn v0(&self) -> f64 {
        self.v0.unwrap_or(10.0 * self.l0m)
    }

    pub fn initial(&self) -> Result<MuscleParams> {
        MuscleParams::new(self.l0m, self.v0(), self.f0m, self.lst, self.phi0)
    }

    pub fn truth(&self) -> Result<MuscleParams> {
        MuscleParams::new(self.true_l0m, self.v0(), self.true_f0m, self.lst, self.phi0)
    }

    pub fn geometry(&self) -> Result<MuscleGeometry> {
        let truth = self.truth()?;
        let mut geo = MuscleGeometry::at_optimal_length(&self.name, self.arm_coeffs.clone(), &truth);
        if let Some(l) = self.lmt_ref {
            geo.lmt_ref = l;
        }
        Ok(geo)
    }
}

/// Activation shape factor(s): one shared value or one per muscle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub initial: Vec<f64>,
    pub truth: Vec<f64>,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            initial: vec![0.01],
            truth: vec![-1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Seed of the synthetic trial (global phase and noise).
    pub seed: u64,
    pub profile: MotionProfile,
    pub trial_file: String,
    pub forces_file: String,
    pub manifest_file: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            seed: 1,
            profile: MotionProfile {
                frequency: 0.5,
                amplitudes: vec![0.08; 5],
                phases: vec![0.0, 0.8, PI, PI + 0.8, PI - 0.8],
                duration: 8.0,
                warmup: 1.0,
                sample_rate: 1000.0,
                snr_db: f64::INFINITY,
                noise_cutoff: 6.0,
            },
            trial_file: "trial.csv".into(),
            forces_file: "forces.csv".into(),
            manifest_file: "manifest.toml".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub joint: JointConfig,
    pub shape: ShapeConfig,
    pub bounds: BoundsConfig,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    pub data: DataConfig,
    pub muscles: Vec<MuscleConfig>,
}

const NAMES: [&str; 5] = ["FCR", "FCU", "ECRL", "ECRB", "ECU"];
const F0M: [f64; 5] = [407.0, 479.0, 337.0, 252.0, 192.0];
const L0M: [f64; 5] = [0.062, 0.051, 0.081, 0.058, 0.062];
const LST: [f64; 5] = [0.24, 0.26, 0.24, 0.22, 0.2285];
const PHI0: [f64; 5] = [0.05, 0.2, 0.0, 0.16, 0.06];
const F0M_SCALE: [f64; 5] = [1.15, 0.9, 1.2, 0.85, 1.1];
const L0M_OFFSET: [f64; 5] = [0.0006, -0.0005, 0.0004, -0.0007, 0.0003];
const ARM: [f64; 5] = [0.015, 0.014, -0.013, -0.012, -0.016];

impl Default for ToolConfig {
    /// Generic wrist model with five muscles. The simulated subject differs
    /// from the initial guesses by up to 20% in F0m and 0.7 mm in l0m.
    /// Dropout is off: masking the same pass that feeds the physics residuals
    /// biases the identified forces low.
    fn default() -> Self {
        let muscles = (0..5)
            .map(|i| MuscleConfig {
                name: NAMES[i].into(),
                f0m: F0M[i],
                l0m: L0M[i],
                v0: None,
                lst: LST[i],
                phi0: PHI0[i],
                true_f0m: F0M[i] * F0M_SCALE[i],
                true_l0m: L0M[i] + L0M_OFFSET[i],
                arm_coeffs: vec![ARM[i], 0.0, -0.002 * ARM[i].signum()],
                lmt_ref: None,
                f0m_fraction: None,
                l0m_delta: None,
            })
            .collect();
        ToolConfig {
            joint: JointConfig::default(),
            shape: ShapeConfig::default(),
            bounds: BoundsConfig::default(),
            network: NetworkConfig {
                dropout_rate: 0.0,
                ..NetworkConfig::default()
            },
            training: TrainConfig::default(),
            data: DataConfig::default(),
            muscles,
        }
    }
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ToolConfig = toml::from_str(&text).map_err(|e| crate::data::io::parse_error(path, &text, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn names(&self) -> Vec<String> {
        self.muscles.iter().map(|m| m.name.clone()).collect()
    }

    pub fn model(&self) -> Result<JointModel> {
        let j = &self.joint;
        Ok(JointModel {
            mass: j.mass,
            com_distance: j.com_distance,
            principal_inertia: j.principal_inertia,
            damping: j.damping,
            gravity: j.gravity,
            range: j.range,
            muscles: self.muscles.iter().map(MuscleConfig::geometry).collect::<Result<_>>()?,
        })
    }

    /// The simulated subject.
    pub fn subject(&self) -> Result<Subject> {
        Ok(Subject {
            model: self.model()?,
            params: self.muscles.iter().map(MuscleConfig::truth).collect::<Result<_>>()?,
            shape: self.shape.truth.clone(),
        })
    }

    /// Bounded trainable parameters at the initial guesses.
    pub fn trainable(&self) -> Result<TrainableParams> {
        let base = self.muscles.iter().map(MuscleConfig::initial).collect::<Result<Vec<_>>>()?;
        let mut params = TrainableParams::new(&self.names(), &base, &self.shape.initial, &self.bounds)?;
        for (i, m) in self.muscles.iter().enumerate() {
            if let Some(fr) = m.f0m_fraction {
                if !(0.0..1.0).contains(&fr) {
                    return Err(Error::Config(format!("{}: f0m_fraction {fr} not in [0, 1)", m.name)));
                }
                params.f0m[i] = Bounded::new(format!("F0m_{}", m.name), m.f0m, m.f0m * (1.0 - fr), m.f0m * (1.0 + fr))?;
            }
            if let Some(dl) = m.l0m_delta {
                if !(dl > 0.0 && m.l0m - dl > 0.0) {
                    return Err(Error::Config(format!("{}: l0m_delta {dl} must be in (0, l0m)", m.name)));
                }
                params.l0m[i] = Bounded::new(format!("l0m_{}", m.name), m.l0m, m.l0m - dl, m.l0m + dl)?;
            }
        }
        Ok(params)
    }

    /// Network settings with the input and output widths matched to the
    /// configured muscles.
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            n_muscles: self.muscles.len(),
            ..self.network.clone()
        }
    }

    /// Checks every block and the cross-block consistency: muscle counts,
    /// valid simulator and trainer parameters, and simulator truth lying
    /// inside the trainer's bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.muscles.len();
        if n == 0 {
            return Err(Error::Config("at least one muscle is required".into()));
        }
        for (i, m) in self.muscles.iter().enumerate() {
            if self.muscles[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::Config(format!("duplicate muscle `{}`", m.name)));
            }
        }
        if self.network.n_muscles != n {
            return Err(Error::Config(format!(
                "network.n_muscles is {} but {n} muscles are configured",
                self.network.n_muscles
            )));
        }
        for (what, v) in [("initial", &self.shape.initial), ("truth", &self.shape.truth)] {
            if !(v.len() == 1 || v.len() == n) {
                return Err(Error::Config(format!("shape.{what} needs 1 or {n} values, got {}", v.len())));
            }
        }
        let subject = self.subject()?;
        subject.model.validate(&subject.params)?;
        for m in &self.muscles {
            m.initial().map_err(|e| Error::Muscle {
                muscle: m.name.clone(),
                source: Box::new(e),
            })?;
        }
        self.network.validate()?;
        self.training.validate()?;
        self.data.profile.validate(n)?;
        let params = self.trainable()?;
        let check = |b: &Bounded, v: f64| {
            if !(b.lo <= v && v <= b.hi) {
                return Err(Error::Config(format!(
                    "true {} = {v} outside trainer bounds [{}, {}]",
                    b.name, b.lo, b.hi
                )));
            }
            Ok(())
        };
        for (i, m) in self.muscles.iter().enumerate() {
            check(&params.f0m[i], m.true_f0m)?;
            check(&params.l0m[i], m.true_l0m)?;
        }
        for (i, b) in params.shape.iter().enumerate() {
            let t = self.shape.truth[if self.shape.truth.len() == 1 { 0 } else { i }];
            check(b, t)?;
        }
        Ok(())
    }

    /// Simulates the configured subject under the configured profile, with
    /// its cycle frequency scaled by `speed`.
    pub fn synthesize(&self, seed: u64, speed: f64) -> Result<(TrialMatrix, Manifest)> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::Config(format!("speed factor {speed} must be positive")));
        }
        synthesize_trial(&self.data.profile.with_speed(speed), &self.subject()?, seed)
    }

    /// The same configuration restricted to the named muscles, in the order
    /// given; profile amplitudes and phases follow their muscles.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.muscles
                    .iter()
                    .position(|m| m.name == *n)
                    .ok_or_else(|| Error::Config(format!("unknown muscle `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pick = |v: &[f64]| -> Vec<f64> {
            if v.len() == 1 {
                v.to_vec()
            } else {
                idx.iter().map(|&i| v[i]).collect()
            }
        };
        let mut out = self.clone();
        out.muscles = idx.iter().map(|&i| self.muscles[i].clone()).collect();
        out.network.n_muscles = idx.len();
        out.shape.initial = pick(&self.shape.initial);
        out.shape.truth = pick(&self.shape.truth);
        out.data.profile.amplitudes = idx.iter().map(|&i| self.data.profile.amplitudes[i]).collect();
        out.data.profile.phases = idx.iter().map(|&i| self.data.profile.phases[i]).collect();
        Ok(out)
    }
}
