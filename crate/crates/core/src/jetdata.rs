//! Jet estimation from gridded trajectories.
//!
//! Every jet coordinate `u^α_J` with `|J| <= n` is estimated with the same
//! central stencils used for generation, applied per axis (time first, then
//! space). Space wraps periodically; time is interior-only, so the first and
//! last `n` stored slices never appear as points.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdegen::{for_each_strided, mixed_derivative, read_f64s, write_f64s, TrajectoryDataset, FORMAT_VERSION};
use crate::symexpr::{JetLookup, JetSpace, JetVar};

/// Where a point came from: initial condition, time index, flat spatial index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub ic: usize,
    pub time: usize,
    pub space: usize,
}

/// Values of all jet coordinates at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongedPoint {
    pub provenance: Provenance,
    pub values: BTreeMap<JetVar, f64>,
}

impl JetLookup for ProlongedPoint {
    fn value(&self, v: &JetVar) -> Option<f64> {
        self.values.get(v).copied()
    }
}

/// Estimated jets, one row per point, columns in `layout` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongedDataset {
    pub space: JetSpace,
    pub order: usize,
    layout: Vec<JetVar>,
    index: HashMap<JetVar, usize>,
    values: Vec<f64>,
    provenance: Vec<Provenance>,
    /// Model inputs `S_in`.
    pub inputs: Vec<JetVar>,
    /// Subtracted outputs `S_out`.
    pub outputs: Vec<JetVar>,
    /// Name of the PDE the trajectories came from, if known.
    pub source: Option<String>,
}

impl ProlongedDataset {
    pub fn new(space: JetSpace, order: usize, layout: Vec<JetVar>, values: Vec<f64>, provenance: Vec<Provenance>) -> Result<Self> {
        if values.len() != layout.len() * provenance.len() {
            return Err(Error::Shape(format!(
                "{} values for {} points of {} channels",
                values.len(),
                provenance.len(),
                layout.len()
            )));
        }
        let index = layout.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
        Ok(ProlongedDataset { space, order, layout, index, values, provenance, inputs: vec![], outputs: vec![], source: None })
    }

    /// Declares `S_in` and `S_out`; both must be present and disjoint.
    pub fn with_split(mut self, inputs: Vec<JetVar>, outputs: Vec<JetVar>) -> Result<Self> {
        for v in inputs.iter().chain(&outputs) {
            if !self.index.contains_key(v) {
                return Err(Error::UnhousedVariable(self.space.name(v)));
            }
        }
        if let Some(v) = inputs.iter().find(|v| outputs.contains(v)) {
            return Err(Error::Config(format!("{} is both an input and an output", self.space.name(v))));
        }
        self.inputs = inputs;
        self.outputs = outputs;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn layout(&self) -> &[JetVar] {
        &self.layout
    }

    pub fn column(&self, v: &JetVar) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.layout.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn provenance(&self, i: usize) -> Provenance {
        self.provenance[i]
    }

    pub fn value(&self, i: usize, v: &JetVar) -> Option<f64> {
        self.column(v).map(|c| self.row(i)[c])
    }

    /// Values of `vars` at point `i`.
    pub fn gather(&self, i: usize, vars: &[JetVar]) -> Result<Vec<f64>> {
        let row = self.row(i);
        vars.iter()
            .map(|v| self.column(v).map(|c| row[c]).ok_or_else(|| Error::UnhousedVariable(self.space.name(v))))
            .collect()
    }

    pub fn point(&self, i: usize) -> ProlongedPoint {
        ProlongedPoint {
            provenance: self.provenance[i],
            values: self.layout.iter().cloned().zip(self.row(i).iter().copied()).collect(),
        }
    }

    /// Appends the points of another dataset with the same layout.
    pub fn extend(&mut self, other: &ProlongedDataset) -> Result<()> {
        if other.layout != self.layout {
            return Err(Error::Shape("jet layouts differ".into()));
        }
        self.values.extend_from_slice(&other.values);
        self.provenance.extend_from_slice(&other.provenance);
        Ok(())
    }

    /// Sets the initial-condition index of every point.
    pub fn relabel_ic(&mut self, ic: usize) {
        self.provenance.iter_mut().for_each(|p| p.ic = ic);
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.layout.iter().map(|v| self.space.name(v)).collect()
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let w = self.layout.len();
        let mut flat = Vec::with_capacity(self.len() * (w + 3));
        for i in 0..self.len() {
            let p = self.provenance[i];
            flat.extend([p.ic as f64, p.time as f64, p.space as f64]);
            flat.extend_from_slice(self.row(i));
        }
        write_f64s(&dir.join(format!("{name}.bin")), &flat)?;
        let meta = JetMeta {
            version: FORMAT_VERSION,
            coords: self.space.coords.clone(),
            fields: self.space.fields.clone(),
            order: self.order,
            channels: self.channel_names(),
            n_points: self.len(),
            inputs: self.inputs.iter().map(|v| self.space.name(v)).collect(),
            outputs: self.outputs.iter().map(|v| self.space.name(v)).collect(),
            source: self.source.clone(),
        };
        fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let meta: JetMeta = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json")))?)?;
        let space = JetSpace::new(meta.coords.clone(), meta.fields.clone());
        let resolve = |names: &[String]| -> Result<Vec<JetVar>> {
            names.iter().map(|n| space.resolve(n).ok_or_else(|| Error::UnhousedVariable(n.clone()))).collect()
        };
        let layout = resolve(&meta.channels)?;
        let flat = read_f64s(&dir.join(format!("{name}.bin")))?;
        let w = layout.len() + 3;
        if flat.len() != w * meta.n_points {
            return Err(Error::Shape(format!("{} values on disk, expected {}", flat.len(), w * meta.n_points)));
        }
        let mut values = Vec::with_capacity(meta.n_points * layout.len());
        let mut provenance = Vec::with_capacity(meta.n_points);
        for row in flat.chunks_exact(w) {
            provenance.push(Provenance { ic: row[0] as usize, time: row[1] as usize, space: row[2] as usize });
            values.extend_from_slice(&row[3..]);
        }
        let (inputs, outputs) = (resolve(&meta.inputs)?, resolve(&meta.outputs)?);
        let mut ds = ProlongedDataset::new(space, meta.order, layout, values, provenance)?.with_split(inputs, outputs)?;
        ds.source = meta.source;
        Ok(ds)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct JetMeta {
    version: u32,
    coords: Vec<String>,
    fields: Vec<String>,
    order: usize,
    channels: Vec<String>,
    n_points: usize,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    outputs: Vec<String>,
    #[serde(default)]
    source: Option<String>,
}

/// Options for [`estimate_jet`].
#[derive(Clone, Debug, PartialEq)]
pub struct JetOptions {
    pub order: usize,
    /// Keep only these fields (by index); `None` keeps all.
    pub fields: Option<Vec<usize>>,
    /// Emit every `space_stride`-th grid point per axis.
    pub space_stride: usize,
}

impl JetOptions {
    pub fn new(order: usize) -> Self {
        JetOptions { order, fields: None, space_stride: 1 }
    }
}

const TIME_WEIGHTS: [&[(isize, f64)]; 4] = [
    &[(0, 1.0)],
    &[(-1, -0.5), (1, 0.5)],
    &[(-1, 1.0), (0, -2.0), (1, 1.0)],
    &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
];

fn check_order(order: usize, dims: usize) -> Result<()> {
    let max = if dims == 1 { 3 } else { 2 };
    if order > max {
        return Err(Error::UnsupportedOrder {
            order,
            reason: format!("jets of order > {max} are not supported for {dims}D data"),
        });
    }
    Ok(())
}

/// Estimates all jets up to `opts.order` at every interior time slice.
pub fn estimate_jet(traj: &TrajectoryDataset, opts: &JetOptions) -> Result<ProlongedDataset> {
    let m = &traj.meta;
    let dims = m.dims();
    check_order(opts.order, dims)?;
    let n = opts.order;
    if m.nt() < 2 * n + 1 {
        return Err(Error::TooShort { needed: 2 * n + 1, have: m.nt() });
    }
    let nsp = m.n_space();
    if opts.space_stride == 0 || nsp % opts.space_stride != 0 {
        return Err(Error::Stride { stride: opts.space_stride, len: nsp });
    }
    let fields: Vec<usize> = opts.fields.clone().unwrap_or_else(|| (0..m.q()).collect());
    if let Some(&bad) = fields.iter().find(|&&a| a >= m.q()) {
        return Err(Error::FieldOutOfRange { index: bad, q: m.q() });
    }
    let space = JetSpace::new(m.coords.clone(), fields.iter().map(|&a| m.fields[a].clone()).collect::<Vec<_>>());
    let layout = space.jet_vars(n);
    let p = space.p();

    let mut targets: Vec<usize> = Vec::new();
    for_each_strided(nsp, dims, opts.space_stride, |k| targets.push(k));

    // Per field: the multi-indices to estimate, split into time count and spatial counts.
    let mut jobs: Vec<(usize, usize, Vec<usize>)> = Vec::new(); // (layout column, time count, spatial counts)
    for (col, v) in layout.iter().enumerate() {
        if let JetVar::Deriv { index, .. } = v {
            let c = index.counts(p);
            jobs.push((col, c[0], c[1..].to_vec()));
        }
    }

    let npts = m.points_per_slice();
    let q = m.q();
    let w = layout.len();
    let nslices = m.nt() - 2 * n;
    let nt_targets = targets.len();
    let total = m.n_ics() * nslices * nt_targets;
    let mut values = vec![0.0; total * w];
    let mut provenance = Vec::with_capacity(total);
    let mut field_slices: Vec<Vec<f64>> = vec![vec![0.0; npts]; m.nt()];
    let mut tslice = vec![0.0; npts];
    for ic in 0..m.n_ics() {
        let data = traj.ic(ic);
        let ic_base = ic * nslices * nt_targets;
        for (fi, &alpha) in fields.iter().enumerate() {
            for (t, s) in field_slices.iter_mut().enumerate() {
                for (j, v) in s.iter_mut().enumerate() {
                    *v = data[(t * npts + j) * q + alpha];
                }
            }
            for k in n..m.nt() - n {
                let slice_base = ic_base + (k - n) * nt_targets;
                for (col, tcount, scounts) in &jobs {
                    if !matches!(&layout[*col], JetVar::Deriv { field, .. } if *field == fi) {
                        continue;
                    }
                    tslice.iter_mut().for_each(|v| *v = 0.0);
                    for &(off, wt) in TIME_WEIGHTS[*tcount] {
                        let src = &field_slices[(k as isize + off) as usize];
                        for (a, b) in tslice.iter_mut().zip(src) {
                            *a += wt * b;
                        }
                    }
                    let scale = m.dt.powi(*tcount as i32).recip();
                    let d = mixed_derivative(&tslice, nsp, dims, scounts, m.dx)?;
                    for (ti, &s) in targets.iter().enumerate() {
                        values[(slice_base + ti) * w + col] = d[s] * scale;
                    }
                }
            }
        }
        for k in n..m.nt() - n {
            let slice_base = ic_base + (k - n) * nt_targets;
            for (ti, &s) in targets.iter().enumerate() {
                let row = &mut values[(slice_base + ti) * w..(slice_base + ti + 1) * w];
                row[0] = k as f64 * m.dt;
                let mut rem = s;
                for axis in (0..dims).rev() {
                    row[1 + axis] = m.x0 + (rem % nsp) as f64 * m.dx;
                    rem /= nsp;
                }
                provenance.push(Provenance { ic, time: k, space: s });
            }
        }
    }
    let mut ds = ProlongedDataset::new(space, n, layout, values, provenance)?;
    ds.source = Some(m.pde.clone());
    Ok(ds)
}

/// `M` points drawn uniformly without replacement.
pub fn sample_points(ds: &ProlongedDataset, m: usize, seed: u64) -> Result<Vec<ProlongedPoint>> {
    Ok(sample_indices(ds.len(), m, seed)?.into_iter().map(|i| ds.point(i)).collect())
}

/// Indices behind [`sample_points`].
pub fn sample_indices(len: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > len {
        return Err(Error::TooManySamples { requested: m, available: len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, len, m).into_vec())
}
