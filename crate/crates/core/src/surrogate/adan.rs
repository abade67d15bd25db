//! Adan: adaptive Nesterov momentum, in the reference implementation's form.

/// Hyperparameters; `betas` are the decay rates of the three moment buffers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdanParams {
    pub lr: f64,
    pub betas: [f64; 3],
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdanParams {
    fn default() -> Self {
        AdanParams { lr: 1e-3, betas: [0.98, 0.92, 0.99], eps: 1e-8, weight_decay: 0.0 }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    n: Vec<f64>,
    prev: Vec<f64>,
}

/// Optimizer state for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adan {
    params: AdanParams,
    step: u32,
    state: Vec<Moments>,
}

impl Adan {
    pub fn new(params: AdanParams, sizes: &[usize]) -> Self {
        let state = sizes
            .iter()
            .map(|&s| Moments { m: vec![0.0; s], v: vec![0.0; s], n: vec![0.0; s], prev: vec![0.0; s] })
            .collect();
        Adan { params, step: 0, state }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.params.lr = lr;
    }

    /// Advances the shared step counter; call once before updating each tensor.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates tensor `idx` in place from its gradient.
    pub fn update(&mut self, idx: usize, param: &mut [f64], grad: &[f64]) {
        let AdanParams { lr, betas: [b1, b2, b3], eps, weight_decay } = self.params;
        let t = self.step as i32;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let bc3_sqrt = (1.0 - b3.powi(t)).sqrt();
        let first = self.step == 1;
        let s = &mut self.state[idx];
        for i in 0..param.len() {
            let g = grad[i];
            let diff = if first { 0.0 } else { g - s.prev[i] };
            s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
            s.v[i] = b2 * s.v[i] + (1.0 - b2) * diff;
            let u = g + b2 * diff;
            s.n[i] = b3 * s.n[i] + (1.0 - b3) * u * u;
            let denom = s.n[i].sqrt() / bc3_sqrt + eps;
            let step = (s.m[i] / bc1 + b2 * s.v[i] / bc2) / denom;
            param[i] = param[i] * (1.0 - lr * weight_decay) - lr * step;
            s.prev[i] = g;
        }
    }
}
