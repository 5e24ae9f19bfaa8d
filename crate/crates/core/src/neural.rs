//! Fully-connected surrogate mapping `(t, e₁..e_N)` to the joint angle and
//! `N` muscle forces.
//!
//! Layout: four trunk blocks `linear → activation → dropout`, then two heads
//! `activation → dropout → linear`. The angle head optionally uses Mish in
//! place of the trunk activation so that `q̂` has a non-trivial second time
//! derivative even with a piecewise-linear trunk.
//!
//! Two evaluation paths exist. The layer-level path below propagates the
//! value together with first and second time tangents and back-propagates
//! all three by hand; it is what training uses. [`Network::forward_generic`]
//! evaluates the same function on any [`Scalar`] (in particular
//! `Dual2<Var>`), which the tests use as the reference for the hand-written
//! backward pass.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual2, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "ReLU")]
    Relu,
    Tanh,
    Sigmoid,
    Mish,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "ReLU",
            Activation::Tanh => "Tanh",
            Activation::Sigmoid => "Sigmoid",
            Activation::Mish => "Mish",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "mish" => Ok(Activation::Mish),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Mish => x.mish(),
        }
    }

    /// `[σ, σ', σ'', σ''']` at `x`.
    pub fn derivs(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    [x, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 0.0]
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            Activation::Sigmoid => {
                let s = x.sigmoid();
                let d = s * (1.0 - s);
                [s, d, d * (1.0 - 2.0 * s), d * (1.0 - 6.0 * s + 6.0 * s * s)]
            }
            Activation::Mish => {
                // mish = x·th with th = tanh(softplus x); g = th' = (1 − th²)·s
                let s = x.sigmoid();
                let th = x.softplus().tanh();
                let g = (1.0 - th * th) * s;
                let h = (1.0 - s) - 2.0 * th * s;
                let dg = g * h;
                let dh = -s * (1.0 - s) * (1.0 + 2.0 * th) - 2.0 * g * s;
                let ddg = dg * h + g * dh;
                [x * th, th + x * g, 2.0 * g + x * dg, 3.0 * dg + x * ddg]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_widths: Vec<usize>,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub n_muscles: usize,
    /// Mish on the angle head instead of the trunk activation.
    pub smooth_angle_head: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden_widths: vec![64; 4],
            dropout_rate: 0.3,
            activation: Activation::Relu,
            n_muscles: 5,
            smooth_angle_head: true,
        }
    }
}

impl NetworkConfig {
    /// Time plus one envelope per muscle.
    pub fn input_dim(&self) -> usize {
        1 + self.n_muscles
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config(format!("hidden widths {:?} must be positive", self.hidden_widths)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        if self.n_muscles == 0 {
            return Err(Error::Config("n_muscles must be positive".into()));
        }
        Ok(())
    }

    fn angle_activation(&self) -> Activation {
        if self.smooth_angle_head {
            Activation::Mish
        } else {
            self.activation
        }
    }

    /// `(fan_in, fan_out)` of every linear layer: trunk, angle head, force head.
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_widths.len() + 2);
        let mut fan_in = self.input_dim();
        for &w in &self.hidden_widths {
            shapes.push((fan_in, w));
            fan_in = w;
        }
        shapes.push((fan_in, 1));
        shapes.push((fan_in, self.n_muscles));
        shapes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Network weights plus the fixed input/output scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    /// Trial duration; the time input is `t / time_scale`.
    pub time_scale: f64,
    /// Per-muscle multiplier of the force head (N).
    pub force_scale: Vec<f64>,
    /// All weights and biases, layer by layer, each weight matrix row-major
    /// `[fan_out][fan_in]` followed by its bias.
    pub params: Vec<f64>,
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

/// Dropout multipliers for one stochastic pass; `None` in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks(Option<Vec<Vec<f64>>>);

impl Masks {
    pub fn identity() -> Self {
        Masks(None)
    }

    fn get(&self, i: usize) -> Option<&[f64]> {
        self.0.as_ref().map(|m| m[i].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub q: f64,
    /// `dq̂/dt` and `d²q̂/dt²` (physical time) when requested.
    pub q_dot: Option<f64>,
    pub q_ddot: Option<f64>,
    pub forces: Vec<f64>,
}

/// Adjoints of a scalar loss with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputAdjoint {
    pub q: f64,
    pub q_dot: f64,
    pub q_ddot: f64,
    pub forces: Vec<f64>,
}

impl OutputAdjoint {
    pub fn zero(n: usize) -> Self {
        OutputAdjoint {
            q: 0.0,
            q_dot: 0.0,
            q_ddot: 0.0,
            forces: vec![0.0; n],
        }
    }
}

/// Value with first and second time tangents, one entry per unit. Tangent
/// vectors are empty when not tracked.
#[derive(Debug, Clone, Default)]
struct Jet {
    v: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Jet {
    fn zeros(n: usize, tangents: bool) -> Self {
        let t = if tangents { n } else { 0 };
        Jet {
            v: vec![0.0; n],
            d1: vec![0.0; t],
            d2: vec![0.0; t],
        }
    }

    fn tracks(&self) -> bool {
        !self.d1.is_empty()
    }

    fn scale(&mut self, mask: Option<&[f64]>) {
        if let Some(m) = mask {
            for (i, k) in m.iter().enumerate() {
                self.v[i] *= k;
                if !self.d1.is_empty() {
                    self.d1[i] *= k;
                    self.d2[i] *= k;
                }
            }
        }
    }
}

/// Intermediate values of one forward pass, kept for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Pass {
    /// Input of every trunk layer, then the trunk output.
    inputs: Vec<Jet>,
    /// Pre-activations of every trunk layer.
    pre: Vec<Jet>,
    /// Angle and force head hidden values after activation and dropout.
    head_q: Jet,
    head_f: Jet,
    pub output: NetworkOutput,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Network {
    /// Weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn init(config: &NetworkConfig, time_scale: f64, force_scale: Vec<f64>, seed: u64) -> Result<Self> {
        config.validate()?;
        if !(time_scale > 0.0) {
            return Err(Error::Config(format!("time scale {time_scale} must be positive")));
        }
        if force_scale.len() != config.n_muscles {
            return Err(Error::Config(format!(
                "{} force scales for {} muscles",
                force_scale.len(),
                config.n_muscles
            )));
        }
        let shapes = config.shapes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut offsets = Vec::with_capacity(shapes.len());
        for &(fan_in, fan_out) in &shapes {
            offsets.push(params.len());
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_out * (fan_in + 1)).map(|_| rng.gen_range(-bound..=bound)));
        }
        Ok(Network {
            config: config.clone(),
            time_scale,
            force_scale,
            params,
            shapes,
            offsets,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn n_trunk(&self) -> usize {
        self.config.hidden_widths.len()
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = self.shapes[l];
        let o = self.offsets[l];
        let w = &self.params[o..o + fan_in * fan_out];
        let b = &self.params[o + fan_in * fan_out..o + (fan_in + 1) * fan_out];
        (w, b)
    }

    /// Index into [`Network::params`] of weight `(row, col)` of layer `l`.
    pub fn weight_index(&self, l: usize, row: usize, col: usize) -> usize {
        self.offsets[l] + row * self.shapes[l].0 + col
    }

    /// Draws a dropout mask for every dropout site (trunk blocks, then the
    /// two heads). Survivors are scaled by `1/(1 − rate)`.
    pub fn sample_masks(&self, mode: Mode, rng: &mut impl Rng) -> Masks {
        let p = self.config.dropout_rate;
        if mode == Mode::Eval || p == 0.0 {
            return Masks::identity();
        }
        let keep = 1.0 / (1.0 - p);
        let width = *self.config.hidden_widths.last().expect("validated");
        let sites = self.config.hidden_widths.iter().copied().chain([width, width]);
        Masks(Some(
            sites
                .map(|n| (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect())
                .collect(),
        ))
    }

    fn affine(&self, l: usize, x: &Jet) -> Jet {
        let (fan_in, fan_out) = self.shapes[l];
        let (w, b) = self.layer(l);
        let mut z = Jet::zeros(fan_out, x.tracks());
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            z.v[o] = b[o] + dot(row, &x.v);
            if x.tracks() {
                z.d1[o] = dot(row, &x.d1);
                z.d2[o] = dot(row, &x.d2);
            }
        }
        z
    }

    fn activate(act: Activation, z: &Jet) -> Jet {
        let mut y = Jet::zeros(z.v.len(), z.tracks());
        for i in 0..z.v.len() {
            let [s0, s1, s2, _] = act.derivs(z.v[i]);
            y.v[i] = s0;
            if z.tracks() {
                y.d1[i] = s1 * z.d1[i];
                y.d2[i] = s2 * z.d1[i] * z.d1[i] + s1 * z.d2[i];
            }
        }
        y
    }

    /// Full forward pass. With `e_tangents = Some((ė, ë))` the envelopes are
    /// treated as functions of time and the tangents give total derivatives;
    /// otherwise the envelopes are held constant. `tangents = false` skips
    /// all derivative work.
    pub fn forward_pass(
        &self,
        t: f64,
        e: &[f64],
        e_tangents: Option<(&[f64], &[f64])>,
        masks: &Masks,
        tangents: bool,
    ) -> Pass {
        assert_eq!(e.len(), self.config.n_muscles, "envelope count");
        let mut x = Jet::zeros(self.config.input_dim(), tangents);
        x.v[0] = t / self.time_scale;
        x.v[1..].copy_from_slice(e);
        if tangents {
            x.d1[0] = 1.0 / self.time_scale;
            if let Some((de, dde)) = e_tangents {
                x.d1[1..].copy_from_slice(de);
                x.d2[1..].copy_from_slice(dde);
            }
        }
        let n = self.n_trunk();
        let mut inputs = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        for l in 0..n {
            let z = self.affine(l, &x);
            let mut y = Self::activate(self.config.activation, &z);
            y.scale(masks.get(l));
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        let mut head_q = Self::activate(self.config.angle_activation(), &x);
        head_q.scale(masks.get(n));
        let value_only = Jet {
            v: x.v.clone(),
            ..Jet::default()
        };
        let mut head_f = Self::activate(self.config.activation, &value_only);
        head_f.scale(masks.get(n + 1));
        inputs.push(x);

        let q = self.affine(n, &head_q);
        let f = self.affine(n + 1, &head_f);
        let output = NetworkOutput {
            q: q.v[0],
            q_dot: tangents.then(|| q.d1[0]),
            q_ddot: tangents.then(|| q.d2[0]),
            forces: f.v.iter().zip(&self.force_scale).map(|(v, s)| v * s).collect(),
        };
        Pass {
            inputs,
            pre,
            head_q,
            head_f,
            output,
        }
    }

    /// Eval/train forward pass without time derivatives.
    pub fn forward(&self, t: f64, e: &[f64], mode: Mode, rng: &mut impl Rng) -> NetworkOutput {
        let masks = self.sample_masks(mode, rng);
        self.forward_pass(t, e, None, &masks, false).output
    }

    /// Forward pass returning `q̂`, `dq̂/dt` and `d²q̂/dt²` with the envelopes
    /// held constant, all on the same dropout mask.
    pub fn forward_with_time_derivatives(&self, t: f64, e: &[f64], mode: Mode, rng: &mut impl Rng) -> NetworkOutput {
        let masks = self.sample_masks(mode, rng);
        self.forward_pass(t, e, None, &masks, true).output
    }

    /// Accumulates `∂loss/∂params` into `grad` given the output adjoints.
    pub fn backward(&self, pass: &Pass, adj: &OutputAdjoint, masks: &Masks, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient length");
        let n = self.n_trunk();
        let tangents = pass.output.q_dot.is_some();
        let trunk_out = &pass.inputs[n];
        let width = trunk_out.v.len();

        let mut gq = Jet::zeros(1, tangents);
        gq.v[0] = adj.q;
        if tangents {
            gq.d1[0] = adj.q_dot;
            gq.d2[0] = adj.q_ddot;
        }
        let mut g_head_q = self.affine_back(n, &pass.head_q, &gq, grad);
        g_head_q.scale(masks.get(n));
        let mut g_trunk = Self::activate_back(self.config.angle_activation(), trunk_out, &g_head_q);

        let gf = Jet {
            v: adj.forces.iter().zip(&self.force_scale).map(|(g, s)| g * s).collect(),
            ..Jet::default()
        };
        let mut g_head_f = self.affine_back(n + 1, &pass.head_f, &gf, grad);
        g_head_f.scale(masks.get(n + 1));
        let trunk_value = Jet {
            v: trunk_out.v.clone(),
            ..Jet::default()
        };
        let g_from_f = Self::activate_back(self.config.activation, &trunk_value, &g_head_f);
        for i in 0..width {
            g_trunk.v[i] += g_from_f.v[i];
        }

        let mut g = g_trunk;
        for l in (0..n).rev() {
            g.scale(masks.get(l));
            let gz = Self::activate_back(self.config.activation, &pass.pre[l], &g);
            g = self.affine_back(l, &pass.inputs[l], &gz, grad);
        }
    }

    /// Adjoint of `y = σ(z)` with tangents; `gy` may track fewer tangents
    /// than `z` (value-only heads).
    fn activate_back(act: Activation, z: &Jet, gy: &Jet) -> Jet {
        let tangents = gy.tracks();
        let mut gz = Jet::zeros(z.v.len(), tangents);
        for i in 0..z.v.len() {
            let [_, s1, s2, s3] = act.derivs(z.v[i]);
            gz.v[i] = gy.v[i] * s1;
            if tangents {
                let (z1, z2) = (z.d1[i], z.d2[i]);
                gz.v[i] += gy.d1[i] * s2 * z1 + gy.d2[i] * (s3 * z1 * z1 + s2 * z2);
                gz.d1[i] = gy.d1[i] * s1 + gy.d2[i] * 2.0 * s2 * z1;
                gz.d2[i] = gy.d2[i] * s1;
            }
        }
        gz
    }

    /// Adjoint of `z = W x + b`: accumulates weight/bias gradients and
    /// returns the input adjoint.
    fn affine_back(&self, l: usize, x: &Jet, gz: &Jet, grad: &mut [f64]) -> Jet {
        let (fan_in, fan_out) = self.shapes[l];
        let o0 = self.offsets[l];
        let (w, _) = self.layer(l);
        let tangents = gz.tracks();
        let mut gx = Jet::zeros(fan_in, tangents);
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let gw = &mut grad[o0 + o * fan_in..o0 + (o + 1) * fan_in];
            let gv = gz.v[o];
            for i in 0..fan_in {
                gw[i] += gv * x.v[i];
                gx.v[i] += row[i] * gv;
            }
            if tangents {
                let (g1, g2) = (gz.d1[o], gz.d2[o]);
                for i in 0..fan_in {
                    gw[i] += g1 * x.d1[i] + g2 * x.d2[i];
                    gx.d1[i] += row[i] * g1;
                    gx.d2[i] += row[i] * g2;
                }
            }
            grad[o0 + fan_in * fan_out + o] += gv;
        }
        gx
    }

    /// The network as a function of its weights `w` on any scalar type.
    /// `e` carries the envelopes with their time tangents. Returns the angle
    /// with its time derivatives and the scaled forces.
    pub fn forward_generic<S: Scalar>(
        &self,
        w: &[S],
        t: S,
        e: &[Dual2<S>],
        masks: &Masks,
    ) -> (Dual2<S>, Vec<S>) {
        assert_eq!(w.len(), self.params.len(), "weight count");
        let inv_t = 1.0 / self.time_scale;
        let mut x: Vec<Dual2<S>> = Vec::with_capacity(self.config.input_dim());
        x.push(Dual2::new(t * inv_t, t.lift(inv_t), t.lift(0.0)));
        x.extend_from_slice(e);

        let layer = |l: usize, x: &[Dual2<S>]| -> Vec<Dual2<S>> {
            let (fan_in, fan_out) = self.shapes[l];
            let o0 = self.offsets[l];
            (0..fan_out)
                .map(|o| {
                    let row: Vec<Dual2<S>> = w[o0 + o * fan_in..o0 + (o + 1) * fan_in]
                        .iter()
                        .map(|v| Dual2::constant(*v))
                        .collect();
                    Dual2::dot(&row, x) + Dual2::constant(w[o0 + fan_in * fan_out + o])
                })
                .collect()
        };
        let drop = |v: Vec<Dual2<S>>, site: usize| -> Vec<Dual2<S>> {
            match masks.get(site) {
                Some(m) => v.into_iter().zip(m).map(|(a, k)| a * *k).collect(),
                None => v,
            }
        };
        let n = self.n_trunk();
        for l in 0..n {
            let z = layer(l, &x);
            x = drop(z.into_iter().map(|v| self.config.activation.apply(v)).collect(), l);
        }
        let hq = drop(x.iter().map(|v| self.config.angle_activation().apply(*v)).collect(), n);
        let values: Vec<Dual2<S>> = x.iter().map(|v| Dual2::constant(v.v)).collect();
        let hf = drop(values.into_iter().map(|v| self.config.activation.apply(v)).collect(), n + 1);
        let q = layer(n, &hq)[0];
        let f = layer(n + 1, &hf)
            .into_iter()
            .zip(&self.force_scale)
            .map(|(v, s)| v.v * *s)
            .collect();
        (q, f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let names = self.layer_names();
        let mut arrays = Vec::with_capacity(2 * names.len());
        for (l, name) in names.iter().enumerate() {
            let (fan_in, fan_out) = self.shapes[l];
            let (w, b) = self.layer(l);
            arrays.push(NamedArray {
                name: format!("{name}.weight"),
                shape: vec![fan_out, fan_in],
                values: w.to_vec(),
            });
            arrays.push(NamedArray {
                name: format!("{name}.bias"),
                shape: vec![fan_out],
                values: b.to_vec(),
            });
        }
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            time_scale: self.time_scale,
            force_scale: self.force_scale.clone(),
            arrays,
        };
        let text = toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = toml::from_str(&text).map_err(|e| crate::data::io::parse_error(path, &text, e))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint format `{}`",
                path.display(),
                file.format
            )));
        }
        let mut net = Network::init(&file.config, file.time_scale, file.force_scale, 0)?;
        let names = net.layer_names();
        let mut params = Vec::with_capacity(net.params.len());
        let mut arrays = file.arrays.into_iter();
        for (l, name) in names.iter().enumerate() {
            let (fan_in, fan_out) = net.shapes[l];
            for (suffix, shape) in [("weight", vec![fan_out, fan_in]), ("bias", vec![fan_out])] {
                let expect = format!("{name}.{suffix}");
                let a = arrays
                    .next()
                    .ok_or_else(|| Error::Config(format!("{}: missing array `{expect}`", path.display())))?;
                if a.name != expect || a.shape != shape || a.values.len() != shape.iter().product::<usize>() {
                    return Err(Error::Config(format!(
                        "{}: expected `{expect}` with shape {shape:?}, found `{}` with shape {:?} and {} values",
                        path.display(),
                        a.name,
                        a.shape,
                        a.values.len()
                    )));
                }
                params.extend(a.values);
            }
        }
        net.params = params;
        Ok(net)
    }

    fn layer_names(&self) -> Vec<String> {
        (0..self.n_trunk())
            .map(|l| format!("trunk{l}"))
            .chain(["angle".to_string(), "force".to_string()])
            .collect()
    }
}

const CHECKPOINT_FORMAT: &str = "myodyn-network-1";

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: NetworkConfig,
    time_scale: f64,
    force_scale: Vec<f64>,
    arrays: Vec<NamedArray>,
}
