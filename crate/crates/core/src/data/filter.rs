//! Butterworth biquad cascades and zero-phase (forward-backward) filtering.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Second-order section in transposed direct form II, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    LowPass,
    HighPass,
}

impl Biquad {
    /// Bilinear-transform section with pre-warped corner `fc` and quality `q`.
    pub fn design(response: Response, fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = match response {
            Response::LowPass => [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            Response::HighPass => [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
        };
        Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filters `x` in place starting from the steady state for a constant
    /// input equal to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let y0 = x0 * self.dc_gain();
        let mut z2 = b2 * x0 - a2 * y0;
        let mut z1 = b1 * x0 - a1 * y0 + z2;
        for v in x.iter_mut() {
            let xi = *v;
            let y = b0 * xi + z1;
            z1 = b1 * xi - a1 * y + z2;
            z2 = b2 * xi - a2 * y;
            *v = y;
        }
    }

    /// Magnitude response at frequency `f`.
    pub fn gain(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let (re1, im1) = (w.cos(), -w.sin());
        let (re2, im2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * re1 + self.b[2] * re2,
            self.b[1] * im1 + self.b[2] * im2,
        );
        let den = (1.0 + self.a[0] * re1 + self.a[1] * re2, self.a[0] * im1 + self.a[1] * im2);
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Cascade of biquads forming one Butterworth low- or high-pass stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub sections: Vec<Biquad>,
    pub corner: f64,
    pub fs: f64,
}

impl Cascade {
    /// Even-order Butterworth filter.
    pub fn butterworth(response: Response, order: usize, fc: f64, fs: f64) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return Err(Error::Config(format!("filter order {order} must be even and positive")));
        }
        if !(fc > 0.0 && fc < fs / 2.0) {
            return Err(Error::Config(format!(
                "corner {fc} Hz must lie in (0, {}) for sample rate {fs} Hz",
                fs / 2.0
            )));
        }
        let sections = (0..order / 2)
            .map(|k| {
                let theta = PI * (2 * k + 1) as f64 / (2 * order) as f64;
                Biquad::design(response, fc, fs, 1.0 / (2.0 * theta.cos()))
            })
            .collect();
        Ok(Cascade {
            sections,
            corner: fc,
            fs,
        })
    }

    pub fn filter(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    pub fn gain(&self, f: f64) -> f64 {
        self.sections.iter().map(|s| s.gain(f, self.fs)).product()
    }

    /// Zero-phase filtering: odd-reflection padding, forward pass, backward
    /// pass. The magnitude response is squared.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = ((3.0 * self.fs / self.corner) as usize).clamp(1, n - 1);
        let mut buf = Vec::with_capacity(n + 2 * pad);
        buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        buf.extend_from_slice(x);
        buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.filter(&mut buf);
        buf.reverse();
        self.filter(&mut buf);
        buf.reverse();
        buf[pad..pad + n].to_vec()
    }
}
