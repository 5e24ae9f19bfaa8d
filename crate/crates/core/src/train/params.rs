//! Physiological parameters as bounded optimisation variables.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::muscle::{MuscleParams, SHAPE_MAX, SHAPE_MIN};

/// A scalar confined to `(lo, hi)` through `lo + (hi − lo)·σ(raw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub initial: f64,
    pub raw: f64,
}

/// Fraction of the interval kept clear of each bound when an initial value
/// sits on (or beyond) it.
const EDGE: f64 = 1e-3;

impl Bounded {
    pub fn new(name: impl Into<String>, initial: f64, lo: f64, hi: f64) -> Result<Self> {
        let name = name.into();
        if !(lo < hi) {
            return Err(Error::Config(format!("{name}: empty bounds [{lo}, {hi}]")));
        }
        let frac = ((initial - lo) / (hi - lo)).clamp(EDGE, 1.0 - EDGE);
        Ok(Bounded {
            name,
            lo,
            hi,
            initial,
            raw: (frac / (1.0 - frac)).ln(),
        })
    }

    pub fn map<S: Scalar>(&self, raw: S) -> S {
        raw.sigmoid() * (self.hi - self.lo) + self.lo
    }

    pub fn value(&self) -> f64 {
        self.map(self.raw)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// How far the trainable parameters may move from their initial guesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// F0m may range over `initial·(1 ± f0m_fraction)`.
    pub f0m_fraction: f64,
    /// l0m may range over `initial ± l0m_delta` (m).
    pub l0m_delta: f64,
    pub shape_lo: f64,
    pub shape_hi: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            f0m_fraction: 0.5,
            l0m_delta: 0.001,
            shape_lo: SHAPE_MIN,
            shape_hi: SHAPE_MAX,
        }
    }
}

/// Trainable `F0m`, `l0m` per muscle and the activation shape factor(s);
/// `v0`, `lst` and `phi0` stay at their initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainableParams {
    pub names: Vec<String>,
    pub base: Vec<MuscleParams>,
    pub f0m: Vec<Bounded>,
    pub l0m: Vec<Bounded>,
    /// One shared factor or one per muscle.
    pub shape: Vec<Bounded>,
}

impl TrainableParams {
    pub fn new(names: &[String], base: &[MuscleParams], shape: &[f64], bounds: &BoundsConfig) -> Result<Self> {
        if names.len() != base.len() || !(shape.len() == 1 || shape.len() == base.len()) {
            return Err(Error::Config(format!(
                "{} names, {} parameter sets, {} shape factors",
                names.len(),
                base.len(),
                shape.len()
            )));
        }
        if bounds.shape_lo < SHAPE_MIN || bounds.shape_hi > SHAPE_MAX {
            return Err(Error::Config(format!(
                "shape bounds [{}, {}] exceed [{SHAPE_MIN}, {SHAPE_MAX}]",
                bounds.shape_lo, bounds.shape_hi
            )));
        }
        if !(0.0..1.0).contains(&bounds.f0m_fraction) {
            return Err(Error::Config(format!("f0m_fraction {} not in [0, 1)", bounds.f0m_fraction)));
        }
        let mut f0m = Vec::new();
        let mut l0m = Vec::new();
        for (n, p) in names.iter().zip(base) {
            p.validate()?;
            let (f, fr) = (p.f0m, bounds.f0m_fraction);
            f0m.push(Bounded::new(format!("F0m_{n}"), f, f * (1.0 - fr), f * (1.0 + fr))?);
            let (l, dl) = (p.l0m, bounds.l0m_delta);
            if !(l - dl > 0.0) {
                return Err(Error::Config(format!("{n}: l0m bounds reach zero")));
            }
            l0m.push(Bounded::new(format!("l0m_{n}"), l, l - dl, l + dl)?);
        }
        let shape = if shape.len() == 1 {
            vec![Bounded::new("A", shape[0], bounds.shape_lo, bounds.shape_hi)?]
        } else {
            names
                .iter()
                .zip(shape)
                .map(|(n, a)| Bounded::new(format!("A_{n}"), *a, bounds.shape_lo, bounds.shape_hi))
                .collect::<Result<_>>()?
        };
        Ok(TrainableParams {
            names: names.to_vec(),
            base: base.to_vec(),
            f0m,
            l0m,
            shape,
        })
    }

    fn all(&self) -> impl Iterator<Item = &Bounded> {
        self.f0m.iter().chain(&self.l0m).chain(&self.shape)
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut Bounded> {
        self.f0m.iter_mut().chain(&mut self.l0m).chain(&mut self.shape)
    }

    pub fn len(&self) -> usize {
        self.f0m.len() + self.l0m.len() + self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter labels in raw-vector order: all F0m, all l0m, then shape.
    pub fn labels(&self) -> Vec<String> {
        self.all().map(|b| b.name.clone()).collect()
    }

    pub fn raws(&self) -> Vec<f64> {
        self.all().map(|b| b.raw).collect()
    }

    pub fn set_raws(&mut self, raws: &[f64]) {
        assert_eq!(raws.len(), self.len(), "raw parameter count");
        for (b, r) in self.all_mut().zip(raws) {
            b.raw = *r;
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.all().map(Bounded::value).collect()
    }

    pub fn initials(&self) -> Vec<f64> {
        self.all().map(|b| b.initial).collect()
    }

    /// Muscle parameters and shape factors for raw values `raw` (in the
    /// order of [`TrainableParams::raws`]) on any scalar type.
    pub fn mapped<S: Scalar>(&self, raw: &[S]) -> (Vec<MuscleParams<S>>, Vec<S>) {
        assert_eq!(raw.len(), self.len(), "raw parameter count");
        let n = self.base.len();
        let like = raw[0];
        let params = (0..n)
            .map(|i| {
                let mut p = self.base[i].lift(like);
                p.f0m = self.f0m[i].map(raw[i]);
                p.l0m = self.l0m[i].map(raw[n + i]);
                p
            })
            .collect();
        let shapes = self
            .shape
            .iter()
            .zip(&raw[2 * n..])
            .map(|(b, r)| b.map(*r))
            .collect();
        (params, shapes)
    }

    pub fn muscle_params(&self) -> Vec<MuscleParams> {
        self.mapped(&self.raws()).0
    }

    pub fn shapes(&self) -> Vec<f64> {
        self.shape.iter().map(Bounded::value).collect()
    }
}

/// One row of a variation table: `variation = 100·estimate/initial` percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variation {
    pub name: String,
    pub estimate: f64,
    pub initial: f64,
    /// `None` when the initial value is zero.
    pub percent: Option<f64>,
}

pub fn identify_report(names: &[String], estimates: &[f64], initials: &[f64]) -> Result<Vec<Variation>> {
    if names.len() != estimates.len() || estimates.len() != initials.len() {
        return Err(Error::Length(format!(
            "{} names, {} estimates, {} initial values",
            names.len(),
            estimates.len(),
            initials.len()
        )));
    }
    Ok(names
        .iter()
        .zip(estimates.iter().zip(initials))
        .map(|(name, (&estimate, &initial))| Variation {
            name: name.clone(),
            estimate,
            initial,
            percent: (initial != 0.0).then(|| 100.0 * estimate / initial),
        })
        .collect())
}
