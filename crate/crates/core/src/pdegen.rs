//! Trajectory generation for the built-in PDEs.
//!
//! Initial conditions are random Fourier series on the periodic box
//! `[-L/2, L/2)^dims`; space is discretized with periodic central differences
//! and time is integrated with classical RK4.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Uniform periodic grid and time sampling shared by all spatial axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Domain length per axis; the domain is `[-L/2, L/2)`.
    pub length: f64,
    pub nx: usize,
    pub t_final: f64,
    /// Stored time samples at `t_k = k·T/N_t`, `k = 0..N_t`.
    pub nt: usize,
    /// RK4 steps per stored sample.
    pub substeps: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 {
            return Err(Error::InvalidGrid(format!("nx = {} (need >= 8)", self.nx)));
        }
        if self.nt < 2 {
            return Err(Error::InvalidGrid(format!("nt = {} (need >= 2)", self.nt)));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidGrid("substeps must be >= 1".into()));
        }
        if !(self.length > 0.0 && self.t_final > 0.0) {
            return Err(Error::InvalidGrid("length and t_final must be positive".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn dt_sample(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.nx).map(|k| -self.length / 2.0 + k as f64 * self.h()).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|k| k as f64 * self.dt_sample()).collect()
    }
}

/// Pointwise right-hand side: channel values in, one time derivative per field out.
pub type RhsFn = fn(&[f64], &mut [f64]);

/// A PDE `∂_t u^α = f_α(spatial jet)` integrated by the method of lines.
#[derive(Clone, Debug)]
pub struct PdeSpec {
    pub name: &'static str,
    pub dims: usize,
    pub fields: Vec<&'static str>,
    /// Order of the original equation in time; second-order equations are
    /// carried in first-order form with an extra field.
    pub time_order: usize,
    /// Inputs to `rhs`: `(field, derivative count per spatial axis)`.
    pub channels: Vec<(usize, Vec<usize>)>,
    pub rhs: RhsFn,
}

impl PdeSpec {
    pub fn q(&self) -> usize {
        self.fields.len()
    }

    pub fn max_spatial_order(&self) -> usize {
        self.channels.iter().map(|(_, c)| c.iter().sum::<usize>()).max().unwrap_or(0)
    }

    /// Axis names, time first.
    pub fn coords(&self) -> Vec<&'static str> {
        ["t", "x", "y"][..=self.dims].to_vec()
    }

    /// Substeps giving `dt <= 0.2·h³` for third-order equations, else 1.
    pub fn default_substeps(&self, grid: &GridSpec) -> usize {
        if self.max_spatial_order() >= 3 {
            let limit = 0.2 * grid.h().powi(3);
            (grid.dt_sample() / limit).ceil().max(1.0) as usize
        } else {
            1
        }
    }
}

pub const PDE_NAMES: [&str; 6] = ["burgers", "heat", "kdv", "wave2d", "schrodinger2d", "rd2d"];

fn burgers_rhs(c: &[f64], out: &mut [f64]) {
    // c = [u, u_x, u_xx]
    out[0] = c[2] + c[1] * c[1];
}

fn heat_rhs(c: &[f64], out: &mut [f64]) {
    out[0] = c[2];
}

fn kdv_rhs(c: &[f64], out: &mut [f64]) {
    // c = [u, u_x, u_xx, u_xxx]
    out[0] = -c[3] - c[0] * c[1];
}

// 2D channels: [u, u_xx, u_yy, v, v_xx, v_yy]
fn wave_rhs(c: &[f64], out: &mut [f64]) {
    out[0] = c[3];
    out[1] = c[1] + c[2];
}

fn schrodinger_rhs(c: &[f64], out: &mut [f64]) {
    let (u, v) = (c[0], c[3]);
    let (lu, lv) = (c[1] + c[2], c[4] + c[5]);
    out[0] = -0.5 * lv + v * u * u + v * v * v;
    out[1] = 0.5 * lu - u * v * v - u * u * u;
}

fn rd_rhs(c: &[f64], out: &mut [f64]) {
    const BETA: f64 = 1.0;
    const D1: f64 = 0.1;
    const D2: f64 = 0.1;
    let (u, v) = (c[0], c[3]);
    let a2 = u * u + v * v;
    out[0] = (1.0 - a2) * u + BETA * a2 * v + D1 * (c[1] + c[2]);
    out[1] = -BETA * a2 * u + (1.0 - a2) * v + D2 * (c[4] + c[5]);
}

pub fn builtin_pde(name: &str) -> Result<PdeSpec> {
    let one_d = |k: usize| (0..=k).map(|o| (0, vec![o])).collect::<Vec<_>>();
    let lap2 = vec![(0, vec![0, 0]), (0, vec![2, 0]), (0, vec![0, 2]), (1, vec![0, 0]), (1, vec![2, 0]), (1, vec![0, 2])];
    let spec = match name {
        "burgers" => PdeSpec { name: "burgers", dims: 1, fields: vec!["u"], time_order: 1, channels: one_d(2), rhs: burgers_rhs },
        "heat" => PdeSpec { name: "heat", dims: 1, fields: vec!["u"], time_order: 1, channels: one_d(2), rhs: heat_rhs },
        "kdv" => PdeSpec { name: "kdv", dims: 1, fields: vec!["u"], time_order: 1, channels: one_d(3), rhs: kdv_rhs },
        "wave2d" => PdeSpec { name: "wave2d", dims: 2, fields: vec!["u", "v"], time_order: 2, channels: lap2, rhs: wave_rhs },
        "schrodinger2d" => PdeSpec {
            name: "schrodinger2d",
            dims: 2,
            fields: vec!["u", "v"],
            time_order: 1,
            channels: lap2,
            rhs: schrodinger_rhs,
        },
        "rd2d" => PdeSpec { name: "rd2d", dims: 2, fields: vec!["u", "v"], time_order: 1, channels: lap2, rhs: rd_rhs },
        _ => return Err(Error::UnknownPde { name: name.to_string(), options: PDE_NAMES.join(", ") }),
    };
    Ok(spec)
}

/// Random Fourier-series field on the grid, one value per spatial point
/// (row-major over axes).
pub fn sample_fourier_ic<R: Rng + ?Sized>(grid: &GridSpec, dims: usize, n_f: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let x = grid.axis();
    let k0 = 2.0 * PI / grid.length;
    let mut g = || -> f64 { scale * rng.sample::<f64, _>(StandardNormal) };
    match dims {
        1 => {
            let a0 = g();
            let coefs: Vec<(f64, f64)> = (0..n_f).map(|_| (g(), g())).collect();
            x.iter()
                .map(|&xi| {
                    let mut f = a0 / 2.0;
                    for (n, (a, b)) in coefs.iter().enumerate() {
                        let w = k0 * (n + 1) as f64 * xi;
                        f += a * w.cos() + b * w.sin();
                    }
                    f
                })
                .collect()
        }
        2 => {
            let a0 = g();
            let coefs: Vec<[f64; 4]> = (0..n_f * n_f).map(|_| [g(), g(), g(), g()]).collect();
            let trig = |n: usize| -> (Vec<f64>, Vec<f64>) {
                x.iter().map(|&xi| ((k0 * n as f64 * xi).cos(), (k0 * n as f64 * xi).sin())).unzip()
            };
            let tables: Vec<(Vec<f64>, Vec<f64>)> = (1..=n_f).map(trig).collect();
            let nx = grid.nx;
            let mut out = vec![a0 / 4.0; nx * nx];
            for m in 0..n_f {
                let (cm, sm) = &tables[m];
                for n in 0..n_f {
                    let (cn, sn) = &tables[n];
                    let [a, b, c, d] = coefs[m * n_f + n];
                    for i in 0..nx {
                        for j in 0..nx {
                            out[i * nx + j] += a * cm[i] * cn[j] + b * cm[i] * sn[j] + c * sm[i] * cn[j] + d * sm[i] * sn[j];
                        }
                    }
                }
            }
            out
        }
        _ => panic!("unsupported spatial dimension {dims}"),
    }
}

/// Periodic central difference of `order` along `axis` of an `n^dims` grid.
pub fn spatial_derivs_periodic(f: &[f64], n: usize, dims: usize, axis: usize, order: usize, h: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.len()];
    stencil_into(f, n, dims, axis, order, h, &mut out)?;
    Ok(out)
}

/// Index stride of `axis` in a row-major `n^dims` grid.
fn axis_stride(n: usize, dims: usize, axis: usize) -> usize {
    n.pow((dims - 1 - axis) as u32)
}

pub(crate) fn stencil_into(f: &[f64], n: usize, dims: usize, axis: usize, order: usize, h: f64, out: &mut [f64]) -> Result<()> {
    let weights: &[(isize, f64)] = match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => {
            return Err(Error::UnsupportedOrder { order, reason: "spatial stencils exist for orders 0..=3".into() });
        }
    };
    let scale = h.powi(order as i32).recip();
    let stride = axis_stride(n, dims, axis);
    let period = stride * n;
    let ni = n as isize;
    for (k, o) in out.iter_mut().enumerate() {
        let i = ((k / stride) % n) as isize;
        let base = k - (i as usize) * stride;
        let mut s = 0.0;
        for &(off, w) in weights {
            let j = (i + off).rem_euclid(ni) as usize;
            s += w * f[base + j * stride];
        }
        debug_assert!(base + (n - 1) * stride < base + period);
        *o = s * scale;
    }
    Ok(())
}

/// Spatial derivative with the given count per axis, as nested pure stencils.
pub(crate) fn mixed_derivative(f: &[f64], n: usize, dims: usize, counts: &[usize], h: f64) -> Result<Vec<f64>> {
    let mut cur = f.to_vec();
    let mut tmp = vec![0.0; f.len()];
    for (axis, &k) in counts.iter().enumerate() {
        if k > 0 {
            stencil_into(&cur, n, dims, axis, k, h, &mut tmp)?;
            std::mem::swap(&mut cur, &mut tmp);
        }
    }
    Ok(cur)
}

/// Trajectories stored flat as `[ic, time, space..., field]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub meta: DatasetMeta,
    pub data: Vec<f64>,
}

/// Sidecar metadata; `shape` is `[n_ics, n_t, n_x (, n_y), q]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub pde: String,
    pub coords: Vec<String>,
    pub fields: Vec<String>,
    pub shape: Vec<usize>,
    /// Spacing of stored samples after any subsampling.
    pub dt: f64,
    pub dx: f64,
    pub x0: f64,
    pub grid: GridSpec,
    pub seed: u64,
    pub n_f: usize,
    pub n_ics: usize,
    pub ic_scale: f64,
    pub space_stride: usize,
    pub time_stride: usize,
}

impl DatasetMeta {
    pub fn dims(&self) -> usize {
        self.shape.len() - 3
    }

    pub fn n_ics(&self) -> usize {
        self.shape[0]
    }

    pub fn nt(&self) -> usize {
        self.shape[1]
    }

    pub fn n_space(&self) -> usize {
        self.shape[2]
    }

    pub fn q(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn points_per_slice(&self) -> usize {
        self.n_space().pow(self.dims() as u32)
    }

    pub fn ic_len(&self) -> usize {
        self.nt() * self.points_per_slice() * self.q()
    }
}

impl TrajectoryDataset {
    pub fn ic(&self, k: usize) -> &[f64] {
        let len = self.meta.ic_len();
        &self.data[k * len..(k + 1) * len]
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_f64s(&dir.join(format!("{name}.bin")), &self.data)?;
        fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json")))?)?;
        let data = read_f64s(&dir.join(format!("{name}.bin")))?;
        let expect: usize = meta.shape.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!("{} values on disk, shape {:?} needs {expect}", data.len(), meta.shape)));
        }
        Ok(TrajectoryDataset { meta, data })
    }
}

pub(crate) fn write_f64s(path: &Path, data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Shape(format!("{} is not a whole number of f64 values", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Generation parameters besides the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub grid: GridSpec,
    pub n_f: usize,
    pub n_ics: usize,
    pub seed: u64,
    pub ic_scale: f64,
}

/// Deterministic RNG for initial condition `ic` under `seed`.
pub fn ic_rng(seed: u64, ic: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ic as u64);
    rng
}

/// Evaluates the method-of-lines right-hand side for a state laid out `[space..., field]`.
struct MolRhs<'a> {
    pde: &'a PdeSpec,
    n: usize,
    h: f64,
    field_buf: Vec<f64>,
    chan: Vec<Vec<f64>>,
    cv: Vec<f64>,
    ov: Vec<f64>,
}

impl<'a> MolRhs<'a> {
    fn new(pde: &'a PdeSpec, n: usize, h: f64) -> Self {
        let npts = n.pow(pde.dims as u32);
        MolRhs {
            pde,
            n,
            h,
            field_buf: vec![0.0; npts],
            chan: vec![vec![0.0; npts]; pde.channels.len()],
            cv: vec![0.0; pde.channels.len()],
            ov: vec![0.0; pde.q()],
        }
    }

    fn eval(&mut self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let q = self.pde.q();
        let dims = self.pde.dims;
        for (c, (field, counts)) in self.pde.channels.iter().enumerate() {
            for (k, v) in self.field_buf.iter_mut().enumerate() {
                *v = state[k * q + field];
            }
            self.chan[c] = mixed_derivative(&self.field_buf, self.n, dims, counts, self.h)?;
        }
        for k in 0..self.field_buf.len() {
            for c in 0..self.cv.len() {
                self.cv[c] = self.chan[c][k];
            }
            (self.pde.rhs)(&self.cv, &mut self.ov);
            out[k * q..(k + 1) * q].copy_from_slice(&self.ov);
        }
        Ok(())
    }
}

/// RK4 trajectory from `u0` (laid out `[space..., field]`); returns `[time, space..., field]`.
pub fn rk4_integrate(pde: &PdeSpec, u0: &[f64], grid: &GridSpec) -> Result<Vec<f64>> {
    grid.validate()?;
    let npts = grid.nx.pow(pde.dims as u32);
    let len = npts * pde.q();
    if u0.len() != len {
        return Err(Error::Shape(format!("initial state has {} values, grid needs {len}", u0.len())));
    }
    let mut f = MolRhs::new(pde, grid.nx, grid.h());
    let dt = grid.dt_sample() / grid.substeps as f64;
    let mut out = Vec::with_capacity(len * grid.nt);
    let mut y = u0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    out.extend_from_slice(&y);
    let mut step = 0;
    for _ in 1..grid.nt {
        for _ in 0..grid.substeps {
            f.eval(&y, &mut k1)?;
            axpy(&y, 0.5 * dt, &k1, &mut tmp);
            f.eval(&tmp, &mut k2)?;
            axpy(&y, 0.5 * dt, &k2, &mut tmp);
            f.eval(&tmp, &mut k3)?;
            axpy(&y, dt, &k3, &mut tmp);
            f.eval(&tmp, &mut k4)?;
            for i in 0..len {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            step += 1;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step });
            }
        }
        out.extend_from_slice(&y);
    }
    Ok(out)
}

fn axpy(y: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for ((o, yi), ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + a * ki;
    }
}

/// Random initial state for one trajectory, fields sampled independently.
pub fn initial_state(pde: &PdeSpec, cfg: &GenConfig, ic: usize) -> Vec<f64> {
    let mut rng = ic_rng(cfg.seed, ic);
    let q = pde.q();
    let per_field: Vec<Vec<f64>> = (0..q)
        .map(|_| sample_fourier_ic(&cfg.grid, pde.dims, cfg.n_f, cfg.ic_scale, &mut rng))
        .collect();
    let npts = per_field[0].len();
    let mut out = vec![0.0; npts * q];
    for (a, f) in per_field.iter().enumerate() {
        for (k, v) in f.iter().enumerate() {
            out[k * q + a] = *v;
        }
    }
    out
}

/// Integrates one initial condition, returning `[time, space..., field]`.
pub fn simulate_ic(pde: &PdeSpec, cfg: &GenConfig, ic: usize) -> Result<Vec<f64>> {
    rk4_integrate(pde, &initial_state(pde, cfg, ic), &cfg.grid)
}

pub fn meta_for(pde: &PdeSpec, cfg: &GenConfig) -> DatasetMeta {
    let mut shape = vec![cfg.n_ics, cfg.grid.nt];
    shape.extend(std::iter::repeat_n(cfg.grid.nx, pde.dims));
    shape.push(pde.q());
    DatasetMeta {
        version: FORMAT_VERSION,
        pde: pde.name.to_string(),
        coords: pde.coords().iter().map(|s| s.to_string()).collect(),
        fields: pde.fields.iter().map(|s| s.to_string()).collect(),
        shape,
        dt: cfg.grid.dt_sample(),
        dx: cfg.grid.h(),
        x0: -cfg.grid.length / 2.0,
        grid: cfg.grid,
        seed: cfg.seed,
        n_f: cfg.n_f,
        n_ics: cfg.n_ics,
        ic_scale: cfg.ic_scale,
        space_stride: 1,
        time_stride: 1,
    }
}

/// All initial conditions of a dataset.
pub fn generate(pde: &PdeSpec, cfg: &GenConfig) -> Result<TrajectoryDataset> {
    let meta = meta_for(pde, cfg);
    let mut data = Vec::with_capacity(meta.shape.iter().product());
    for ic in 0..cfg.n_ics {
        data.extend(simulate_ic(pde, cfg, ic)?);
    }
    Ok(TrajectoryDataset { meta, data })
}

/// Strided view of a dataset, materialized.
pub fn subsample(traj: &TrajectoryDataset, space_stride: usize, time_stride: usize) -> Result<TrajectoryDataset> {
    let m = &traj.meta;
    for (stride, len) in [(space_stride, m.n_space()), (time_stride, m.nt())] {
        if stride == 0 || len % stride != 0 {
            return Err(Error::Stride { stride, len });
        }
    }
    let (dims, n, q, nt) = (m.dims(), m.n_space(), m.q(), m.nt());
    let (n2, nt2) = (n / space_stride, nt / time_stride);
    let npts = m.points_per_slice();
    let mut data = Vec::with_capacity(m.n_ics() * nt2 * n2.pow(dims as u32) * q);
    for ic in 0..m.n_ics() {
        let block = traj.ic(ic);
        for t in (0..nt).step_by(time_stride) {
            let slice = &block[t * npts * q..(t + 1) * npts * q];
            for_each_strided(n, dims, space_stride, |k| data.extend_from_slice(&slice[k * q..(k + 1) * q]));
        }
    }
    let mut meta = m.clone();
    meta.shape = [vec![m.n_ics(), nt2], vec![n2; dims], vec![q]].concat();
    meta.dt = m.dt * time_stride as f64;
    meta.dx = m.dx * space_stride as f64;
    meta.space_stride = m.space_stride * space_stride;
    meta.time_stride = m.time_stride * time_stride;
    Ok(TrajectoryDataset { meta, data })
}

/// Calls `f` with the flat index of every strided grid point, row-major.
pub(crate) fn for_each_strided(n: usize, dims: usize, stride: usize, mut f: impl FnMut(usize)) {
    match dims {
        1 => (0..n).step_by(stride).for_each(f),
        2 => {
            for i in (0..n).step_by(stride) {
                for j in (0..n).step_by(stride) {
                    f(i * n + j);
                }
            }
        }
        _ => unreachable!("dims is 1 or 2"),
    }
}
