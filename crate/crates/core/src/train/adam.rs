//! Adam with bias correction.

/// First and second moment estimates over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Starts a new step (advances the bias-correction counter). Call
    /// [`Adam::update`] afterwards on every parameter block.
    pub fn begin(&mut self) {
        self.t += 1;
    }

    /// Updates `params`, which occupy `offset..offset + params.len()` of the
    /// optimiser state.
    pub fn update(&mut self, offset: usize, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len(), "adam: gradient length");
        assert!(self.t > 0, "adam: update before begin");
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = flush(self.beta1 * m[i] + (1.0 - self.beta1) * g);
            v[i] = flush(self.beta2 * v[i] + (1.0 - self.beta2) * g * g);
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }

    /// One full step on a single parameter block.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.begin();
        self.update(0, params, grad, lr);
    }
}

/// Moments of parameters whose gradient has been zero for thousands of steps
/// (dead ReLU units) decay into subnormals, which are very slow on most CPUs.
fn flush(x: f64) -> f64 {
    if x.abs() < 1e-200 {
        0.0
    } else {
        x
    }
}
