//! Fully connected network with exact input Jacobians.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adan::{Adan, AdanParams};
use crate::error::{Error, Result};
use crate::pdegen::{read_f64s, write_f64s, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `a` and pre-activation `z`.
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Config(format!("unknown activation `{s}` (sigmoid, relu)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Mean squared error over all outputs.
    Mse,
    /// Binary cross-entropy on a single logit output.
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of points held out for validation.
    pub val_fraction: f64,
    /// Train on a seeded random subset of at most this many points.
    pub max_train_points: Option<usize>,
    /// Fold per-feature mean and scale of the training data into the first
    /// and last layers at initialization. The network is still a plain MLP on
    /// raw coordinates.
    pub data_init: bool,
    #[serde(default)]
    pub schedule: LrSchedule,
}

/// Learning-rate schedule over all optimizer steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero.
    Cosine,
}

impl LrSchedule {
    fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total.max(1) as f64).cos()),
        }
    }
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            _ => Err(Error::Config(format!("unknown schedule `{s}` (constant, cosine)"))),
        }
    }
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_layers: 3,
            width: 200,
            activation: Activation::Sigmoid,
            lr: 1e-3,
            batch_size: 256,
            epochs: 200,
            seed: 0,
            val_fraction: 0.1,
            max_train_points: None,
            data_init: false,
            schedule: LrSchedule::Constant,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.batch_size == 0 {
            return Err(Error::Config("width and batch size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("validation fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

/// The network `R^din → R^dout`; hidden layers use `activation`, the output is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    activation: Activation,
    layers: Vec<Layer>,
}

impl Mlp {
    /// PyTorch-style uniform init `U(-1/√fan_in, 1/√fan_in)` for weights and biases.
    pub fn init(din: usize, dout: usize, hidden_layers: usize, width: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![din];
        sizes.extend(std::iter::repeat_n(width, hidden_layers));
        sizes.push(dout);
        let layers = sizes
            .windows(2)
            .map(|s| {
                let bound = 1.0 / (s[0] as f64).sqrt();
                let w = DMatrix::from_fn(s[1], s[0], |_, _| rng.random_range(-bound..bound));
                let b = DVector::from_fn(s[1], |_, _| rng.random_range(-bound..bound));
                Layer { w, b }
            })
            .collect();
        Mlp { activation, layers }
    }

    /// A network given by explicit `(weights, bias)` pairs, `weights` being `out × in`.
    pub fn from_layers(activation: Activation, layers: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].0.nrows() != pair[1].0.ncols() {
                return Err(Error::Shape("consecutive layer sizes do not chain".into()));
            }
        }
        if layers.iter().any(|(w, b)| w.nrows() != b.len()) || layers.is_empty() {
            return Err(Error::Shape("bias length must match layer output".into()));
        }
        Ok(Mlp { activation, layers: layers.into_iter().map(|(w, b)| Layer { w, b }).collect() })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.nrows()));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} entries, network takes {}", x.len(), self.input_dim())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = DVector::from_column_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * &a + &layer.b;
            if l < last {
                z.apply(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a.as_slice().to_vec())
    }

    /// `∂ output / ∂ input` by the layerwise chain rule, `dout × din`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut a = DVector::from_column_slice(x);
        let mut slopes = Vec::with_capacity(self.layers.len() - 1);
        for layer in &self.layers[..self.layers.len() - 1] {
            let z = &layer.w * &a + &layer.b;
            let act = z.map(|v| self.activation.apply(v));
            slopes.push(z.zip_map(&act, |zi, ai| self.activation.slope(zi, ai)));
            a = act;
        }
        let mut j = self.layers.last().unwrap().w.clone();
        for (layer, s) in self.layers.iter().zip(&slopes).rev() {
            for (c, &sc) in s.iter().enumerate() {
                j.column_mut(c).scale_mut(sc);
            }
            j = &j * &layer.w;
        }
        Ok(j)
    }

    /// Batched forward pass keeping activations; columns of `x` are samples.
    fn forward_batch(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut acts = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            let a = if l < last { z.map(|v| self.activation.apply(v)) } else { z.clone() };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    /// Loss and parameter gradients for one batch (`x`: din × B, `y`: dout × B).
    fn loss_and_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, loss: Loss) -> (f64, Vec<(DMatrix<f64>, DVector<f64>)>) {
        let (pre, acts) = self.forward_batch(x);
        let out = acts.last().unwrap();
        let n = out.len() as f64;
        let (value, mut delta) = match loss {
            Loss::Mse => {
                let diff = out - y;
                (diff.norm_squared() / n, diff * (2.0 / n))
            }
            Loss::Logistic => {
                let mut v = 0.0;
                let d = out.zip_map(y, |z, t| {
                    v += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
                    (1.0 / (1.0 + (-z).exp()) - t) / n
                });
                (v / n, d)
            }
        };
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = &delta * acts[l].transpose();
            let gb = delta.column_sum();
            grads.push((gw, gb));
            if l > 0 {
                let mut back = self.layers[l].w.transpose() * &delta;
                let (z, a) = (&pre[l - 1], &acts[l]);
                for ((bv, &zv), &av) in back.iter_mut().zip(z.iter()).zip(a.iter()) {
                    *bv *= self.activation.slope(zv, av);
                }
                delta = back;
            }
        }
        grads.reverse();
        (value, grads)
    }

    fn batch_loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, loss: Loss) -> f64 {
        let (_, acts) = self.forward_batch(x);
        let out = acts.last().unwrap();
        let n = out.len() as f64;
        match loss {
            Loss::Mse => (out - y).norm_squared() / n,
            Loss::Logistic => out.zip_map(y, |z, t| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()).sum() / n,
        }
    }

    pub fn save(&self, dir: &Path, name: &str, header: &ModelHeader) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut flat = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            // row-major weights then bias, layer by layer
            flat.extend(l.w.transpose().iter());
            flat.extend(l.b.iter());
        }
        write_f64s(&dir.join(format!("{name}.bin")), &flat)?;
        let mut h = header.clone();
        h.sizes = self.sizes();
        h.activation = self.activation;
        fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&h)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<(Self, ModelHeader)> {
        let h: ModelHeader = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json")))?)?;
        let flat = read_f64s(&dir.join(format!("{name}.bin")))?;
        let mut layers = Vec::new();
        let mut pos = 0;
        for s in h.sizes.windows(2) {
            let (din, dout) = (s[0], s[1]);
            if pos + din * dout + dout > flat.len() {
                return Err(Error::Shape("weight file shorter than the declared architecture".into()));
            }
            let w = DMatrix::from_row_slice(dout, din, &flat[pos..pos + din * dout]);
            pos += din * dout;
            let b = DVector::from_column_slice(&flat[pos..pos + dout]);
            pos += dout;
            layers.push((w, b));
        }
        if pos != flat.len() {
            return Err(Error::Shape("weight file longer than the declared architecture".into()));
        }
        Ok((Mlp::from_layers(h.activation, layers)?, h))
    }
}

/// JSON header stored next to the weight blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub version: u32,
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub coords: Vec<String>,
    pub fields: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub loss: Loss,
}

impl ModelHeader {
    pub fn new(seed: u64, loss: Loss) -> Self {
        ModelHeader {
            version: FORMAT_VERSION,
            sizes: vec![],
            activation: Activation::Sigmoid,
            seed,
            coords: vec![],
            fields: vec![],
            inputs: vec![],
            outputs: vec![],
            loss,
        }
    }
}

/// Per-epoch losses from [`fit`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainReport {
    pub fn final_val(&self) -> Option<f64> {
        self.val_loss.last().copied()
    }
}

/// Trains a fresh network on rows of `x` (`n × din`) against `y` (`n × dout`).
pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, loss: Loss, cfg: &MlpConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    if x.nrows() != y.nrows() || x.nrows() == 0 {
        return Err(Error::Shape(format!("{} inputs vs {} targets", x.nrows(), y.nrows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.shuffle(&mut rng);
    if let Some(cap) = cfg.max_train_points {
        idx.truncate(cap.max(1));
    }
    let n_val = ((idx.len() as f64) * cfg.val_fraction).round() as usize;
    let (val_idx, train_idx) = idx.split_at(n_val.min(idx.len().saturating_sub(1)));
    let mut train_idx = train_idx.to_vec();
    // columns are samples
    let gather = |rows: &[usize], m: &DMatrix<f64>| DMatrix::from_fn(m.ncols(), rows.len(), |i, j| m[(rows[j], i)]);
    let xv = gather(val_idx, x);
    let yv = gather(val_idx, y);

    let mut net = Mlp::init(x.ncols(), y.ncols(), cfg.hidden_layers, cfg.width, cfg.activation, &mut rng);
    if cfg.data_init {
        let xt = gather(&train_idx, x);
        let yt = gather(&train_idx, y);
        fold_data_scaling(&mut net, &xt, &yt, loss);
    }
    let sizes: Vec<usize> = net.layers.iter().flat_map(|l| [l.w.len(), l.b.len()]).collect();
    let mut opt = Adan::new(AdanParams { lr: cfg.lr, ..Default::default() }, &sizes);
    let mut report = TrainReport { n_train: train_idx.len(), n_val: val_idx.len(), ..Default::default() };
    let total_steps = cfg.epochs * train_idx.len().div_ceil(cfg.batch_size);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let xb = gather(chunk, x);
            let yb = gather(chunk, y);
            let (l, grads) = net.loss_and_grad(&xb, &yb, loss);
            if !l.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += l * chunk.len() as f64;
            opt.set_lr(cfg.lr * cfg.schedule.factor(step, total_steps));
            step += 1;
            opt.begin_step();
            for (k, (layer, (gw, gb))) in net.layers.iter_mut().zip(&grads).enumerate() {
                opt.update(2 * k, layer.w.as_mut_slice(), gw.as_slice());
                opt.update(2 * k + 1, layer.b.as_mut_slice(), gb.as_slice());
            }
        }
        report.train_loss.push(total / train_idx.len() as f64);
        if !val_idx.is_empty() {
            report.val_loss.push(net.batch_loss(&xv, &yv, loss));
        }
    }
    Ok((net, report))
}

/// Rescales the first layer to see standardized inputs and, for regression,
/// the last layer to emit outputs on the data's scale.
fn fold_data_scaling(net: &mut Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>, loss: Loss) {
    let stats = |m: &DMatrix<f64>| -> Vec<(f64, f64)> {
        m.row_iter()
            .map(|r| {
                let n = r.len() as f64;
                let mean = r.sum() / n;
                let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, if var > 1e-24 { var.sqrt() } else { 1.0 })
            })
            .collect()
    };
    let sx = stats(x);
    let first = &mut net.layers[0];
    for (c, &(mean, sd)) in sx.iter().enumerate() {
        let mut col = first.w.column_mut(c);
        col /= sd;
        let shift = col.clone_owned() * mean;
        first.b -= shift;
    }
    if loss == Loss::Mse {
        let sy = stats(y);
        let last = net.layers.last_mut().unwrap();
        for (r, &(mean, sd)) in sy.iter().enumerate() {
            let mut row = last.w.row_mut(r);
            row *= sd;
            last.b[r] = last.b[r] * sd + mean;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(net: &Mlp, x: &[f64], h: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(net.output_dim(), x.len());
        for c in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (net.forward(&xp).unwrap(), net.forward(&xm).unwrap());
            for r in 0..fp.len() {
                j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn linear_layer_jacobian_is_the_matrix() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let net = Mlp::from_layers(Activation::Sigmoid, vec![(a.clone(), DVector::from_vec(vec![0.1, 0.2]))]).unwrap();
        assert_eq!(net.jacobian(&[0.3, -0.2, 1.0]).unwrap(), a);
        assert!(net.jacobian(&[0.3]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for act in [Activation::Sigmoid, Activation::Relu] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let net = Mlp::init(4, 2, 3, 30, act, &mut rng);
            for _ in 0..20 {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let j = net.jacobian(&x).unwrap();
                let f = fd_jacobian(&net, &x, 1e-5);
                let err = (&j - &f).abs().max() / j.abs().max();
                assert!(err < 1e-5, "{act:?}: {err}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(3, 2, 2, 5, Activation::Sigmoid, &mut rng);
        let x = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(2, 7, |_, _| rng.random_range(-1.0..1.0));
        for loss in [Loss::Mse, Loss::Logistic] {
            let y = if loss == Loss::Logistic { y.map(|v| if v > 0.0 { 1.0 } else { 0.0 }) } else { y.clone() };
            let (_, grads) = net.loss_and_grad(&x, &y, loss);
            for l in 0..net.layers.len() {
                for k in 0..net.layers[l].w.len() {
                    let mut p = net.clone();
                    let mut m = net.clone();
                    p.layers[l].w.as_mut_slice()[k] += 1e-6;
                    m.layers[l].w.as_mut_slice()[k] -= 1e-6;
                    let fd = (p.batch_loss(&x, &y, loss) - m.batch_loss(&x, &y, loss)) / 2e-6;
                    assert!((fd - grads[l].0.as_slice()[k]).abs() < 1e-7);
                }
                for k in 0..net.layers[l].b.len() {
                    let mut p = net.clone();
                    let mut m = net.clone();
                    p.layers[l].b[k] += 1e-6;
                    m.layers[l].b[k] -= 1e-6;
                    let fd = (p.batch_loss(&x, &y, loss) - m.batch_loss(&x, &y, loss)) / 2e-6;
                    assert!((fd - grads[l].1[k]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn fits_a_linear_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(2000, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = x.map(|v| 2.0 * v);
        let cfg = MlpConfig { hidden_layers: 2, width: 32, epochs: 200, batch_size: 64, lr: 3e-3, seed: 2, ..Default::default() };
        let (_, report) = fit(&x, &y, Loss::Mse, &cfg).unwrap();
        assert!(report.final_val().unwrap() < 1e-4, "{:?}", report.final_val());
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let y = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let cfg = MlpConfig { width: 4, epochs: 0, seed: 11, ..Default::default() };
        let (a, _) = fit(&x, &y, Loss::Mse, &cfg).unwrap();
        let (b, _) = fit(&x, &y, Loss::Mse, &cfg).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut idx: Vec<usize> = (0..10).collect();
        idx.shuffle(&mut rng);
        assert_eq!(a, Mlp::init(2, 1, 3, 4, Activation::Sigmoid, &mut rng));
    }

    #[test]
    fn data_init_preserves_raw_coordinates() {
        let x = DMatrix::from_fn(50, 2, |i, j| 100.0 + (i * (j + 1)) as f64);
        let y = DMatrix::from_fn(50, 1, |i, _| 1000.0 + i as f64);
        let cfg = MlpConfig { width: 8, epochs: 0, data_init: true, ..Default::default() };
        let (net, _) = fit(&x, &y, Loss::Mse, &cfg).unwrap();
        let xr = [130.0, 170.0];
        let j = net.jacobian(&xr).unwrap();
        let fd = fd_jacobian(&net, &xr, 1e-4);
        assert!((&j - &fd).abs().max() < 1e-6 * j.abs().max().max(1.0));
    }

    #[test]
    fn persistence_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::init(3, 2, 2, 6, Activation::Relu, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        net.save(dir.path(), "m", &ModelHeader::new(5, Loss::Mse)).unwrap();
        let (back, h) = Mlp::load(dir.path(), "m").unwrap();
        assert_eq!(back, net);
        assert_eq!(h.sizes, vec![3, 6, 6, 2]);
        assert_eq!(h.activation, Activation::Relu);
    }
}
