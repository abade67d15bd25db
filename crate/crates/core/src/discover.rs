//! The sampled symmetry criterion and its null space.
//!
//! Each sample contributes the block `C_i = J_F(pt_i) · Θₙ(pt_i)`; generators
//! are the (numerical) null space of the stacked `C`, or equivalently of the
//! Gram matrix `CᵀC` when the number of rows dwarfs the number of unknowns.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{FunctionLibrary, LibrarySpec};
use crate::prolong::{build_theta_n, ThetaNEvaluator};
use crate::surrogate::ResidualSpec;
use crate::symexpr::{JetLookup, JetPoly};

/// Default switch ratio `M·l / ((p+q)·r)` above which the Gram path is used.
pub const DEFAULT_GRAM_RATIO: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Dense,
    Gram,
}

/// The criterion matrix, dense or as its Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum CriterionSystem {
    Dense { c: DMatrix<f64>, points: usize },
    Gram { g: DMatrix<f64>, points: usize },
}

impl CriterionSystem {
    pub fn kind(&self) -> SystemKind {
        match self {
            CriterionSystem::Dense { .. } => SystemKind::Dense,
            CriterionSystem::Gram { .. } => SystemKind::Gram,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            CriterionSystem::Dense { c, .. } => c.ncols(),
            CriterionSystem::Gram { g, .. } => g.ncols(),
        }
    }

    pub fn points(&self) -> usize {
        match self {
            CriterionSystem::Dense { points, .. } | CriterionSystem::Gram { points, .. } => *points,
        }
    }
}

/// Which path the ratio test selects.
pub fn choose_kind(points: usize, l: usize, ncols: usize, ratio: f64) -> SystemKind {
    if (points * l) as f64 / ncols as f64 >= ratio {
        SystemKind::Gram
    } else {
        SystemKind::Dense
    }
}

/// Evaluates per-point criterion blocks for a fixed residual and library.
pub struct CriterionBuilder<'a> {
    spec: &'a ResidualSpec<'a>,
    theta: ThetaNEvaluator,
    ncols: usize,
}

impl<'a> CriterionBuilder<'a> {
    pub fn new(spec: &'a ResidualSpec<'a>, lib: &FunctionLibrary) -> Result<Self> {
        let theta = build_theta_n(lib, spec.rows())?.compile();
        let ncols = theta.shape().1;
        Ok(CriterionBuilder { spec, theta, ncols })
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn l(&self) -> usize {
        self.spec.l()
    }

    /// `J_F Θₙ` at one point, `l × (p+q)r`.
    pub fn block<L: JetLookup + ?Sized>(&self, pt: &L) -> Result<DMatrix<f64>> {
        let jf = crate::surrogate::residual_jacobian(self.spec, pt)?;
        let th = self.theta.evaluate(pt)?;
        Ok(jf * th)
    }

    pub fn dense<L: JetLookup>(&self, points: &[L]) -> Result<CriterionSystem> {
        let l = self.l();
        let mut c = DMatrix::zeros(points.len() * l, self.ncols);
        for (i, pt) in points.iter().enumerate() {
            c.rows_mut(i * l, l).copy_from(&self.block(pt)?);
        }
        Ok(CriterionSystem::Dense { c, points: points.len() })
    }

    pub fn gram<L: JetLookup>(&self, points: &[L]) -> Result<CriterionSystem> {
        let mut g = DMatrix::zeros(self.ncols, self.ncols);
        for pt in points {
            let b = self.block(pt)?;
            g.gemm_tr(1.0, &b, &b, 1.0);
        }
        Ok(CriterionSystem::Gram { g, points: points.len() })
    }
}

/// Stacks `C_i = J_F Θₙ` over all points.
pub fn build_c<L: JetLookup>(points: &[L], spec: &ResidualSpec, lib: &FunctionLibrary) -> Result<CriterionSystem> {
    CriterionBuilder::new(spec, lib)?.dense(points)
}

/// Accumulates `Σ C_iᵀ C_i` without forming `C`.
pub fn accumulate_gram<L: JetLookup>(points: &[L], spec: &ResidualSpec, lib: &FunctionLibrary) -> Result<CriterionSystem> {
    CriterionBuilder::new(spec, lib)?.gram(points)
}

/// Right singular vectors and singular values of the criterion, descending.
///
/// For the Gram path the eigenvalues of `CᵀC` are mapped back to singular
/// values of `C`, so one threshold applies to both paths.
pub fn spectrum(sys: &CriterionSystem) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (mut sv, v) = match sys {
        CriterionSystem::Dense { c, .. } => {
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteMatrix);
            }
            let n = c.ncols();
            let padded;
            let c = if c.nrows() < n {
                padded = c.clone().resize_vertically(n, 0.0);
                &padded
            } else {
                c
            };
            let svd = c.clone().svd(false, true);
            let vt = svd.v_t.ok_or(Error::NonFiniteMatrix)?;
            (svd.singular_values.iter().copied().collect::<Vec<_>>(), vt.transpose())
        }
        CriterionSystem::Gram { g, .. } => {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteMatrix);
            }
            let sym = (g + g.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym);
            (eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect(), eig.eigenvectors)
        }
    };
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let v_sorted = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, order[j])]);
    sv = order.iter().map(|&k| sv[k]).collect();
    Ok((sv, v_sorted))
}

/// A discovered generator subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorBasis {
    /// Singular values of `C`, descending.
    pub spectrum: Vec<f64>,
    pub threshold: f64,
    pub d: usize,
    /// `(p+q)r × d`, orthonormal columns.
    pub q: DMatrix<f64>,
    pub nblocks: usize,
    pub r: usize,
    pub kind: SystemKind,
}

impl GeneratorBasis {
    pub fn from_q(q: DMatrix<f64>, nblocks: usize, r: usize) -> Self {
        GeneratorBasis { spectrum: vec![], threshold: 0.0, d: q.ncols(), q, nblocks, r, kind: SystemKind::Dense }
    }

    /// Column `i` reshaped row-major to `(p+q) × r`.
    pub fn w(&self, i: usize) -> DMatrix<f64> {
        w_of(&self.q.column(i).iter().copied().collect::<Vec<_>>(), self.nblocks, self.r)
    }

    pub fn ws(&self) -> Vec<DMatrix<f64>> {
        (0..self.d).map(|i| self.w(i)).collect()
    }
}

pub fn w_of(col: &[f64], nblocks: usize, r: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(nblocks, r, col)
}

/// Null space at threshold `eps2`: every right singular vector whose singular
/// value is below it.
pub fn null_space(sys: &CriterionSystem, eps2: f64, nblocks: usize, r: usize) -> Result<GeneratorBasis> {
    if !(eps2 >= 0.0) {
        return Err(Error::Config("threshold must be non-negative".into()));
    }
    if nblocks * r != sys.ncols() {
        return Err(Error::Shape(format!("{} columns for {nblocks} blocks of {r}", sys.ncols())));
    }
    let (sv, v) = spectrum(sys)?;
    let d = sv.iter().filter(|&&s| s < eps2).count();
    let n = sv.len();
    let q = v.columns(n - d, d).into_owned();
    Ok(GeneratorBasis { spectrum: sv, threshold: eps2, d, q, nblocks, r, kind: sys.kind() })
}

fn fmt_short(c: f64) -> String {
    let r = c.round();
    if (c - r).abs() <= 1e-9 * c.abs().max(1.0) {
        return format!("{}", r as i64);
    }
    let s = format!("{c:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// `Σ_b (W_b · Θ) ∂/∂coord_b` as text, scaled so the pivot is 1; terms that round to zero are dropped.
pub fn render_w(w: &DMatrix<f64>, lib: &FunctionLibrary) -> String {
    let maxabs = w.abs().max();
    if maxabs == 0.0 {
        return "0".to_string();
    }
    // first near-maximal coefficient in row-major order becomes +1
    let pivot = w.transpose().iter().copied().find(|c| c.abs() >= maxabs * (1.0 - 1e-9)).unwrap();
    let w = w / pivot;
    let names = lib.names();
    let mut parts: Vec<String> = Vec::new();
    for (b, name) in names.iter().enumerate() {
        let mut poly = JetPoly::zero();
        for (k, e) in lib.entries().iter().enumerate() {
            let c = w[(b, k)];
            if c.abs() >= 1e-8 {
                poly.add_scaled(e, c);
            }
        }
        let poly = JetPoly::from_terms(poly.terms().filter(|(_, c)| c.abs() >= 5e-5).map(|(m, c)| (m.clone(), c)));
        if poly.is_zero() {
            continue;
        }
        let text = poly.to_text_with(lib.space(), fmt_short);
        let term = if poly.num_terms() > 1 {
            format!("({text}) ∂/∂{name}")
        } else if text == "1" {
            format!("∂/∂{name}")
        } else if text == "-1" {
            format!("-∂/∂{name}")
        } else {
            format!("{text} ∂/∂{name}")
        };
        parts.push(term);
    }
    if parts.is_empty() {
        return "0".to_string();
    }
    let mut out = parts[0].clone();
    for p in &parts[1..] {
        match p.strip_prefix('-') {
            Some(rest) => {
                out.push_str(" - ");
                out.push_str(rest);
            }
            None => {
                out.push_str(" + ");
                out.push_str(p);
            }
        }
    }
    out
}

pub fn render_generators(basis: &GeneratorBasis, lib: &FunctionLibrary) -> Vec<String> {
    basis.ws().iter().map(|w| render_w(w, lib)).collect()
}

/// Spectrum audit: all singular values, the cutoff, and the gap at the cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub spectrum: Vec<f64>,
    pub threshold: f64,
    pub d: usize,
    /// `σ_{last kept} / σ_{first null}`; absent when either side is empty.
    pub gap_ratio: Option<f64>,
    /// Largest ratio of consecutive singular values and the `d` it would imply.
    pub largest_gap: Option<(usize, f64)>,
}

pub fn spectrum_report(basis: &GeneratorBasis) -> SpectrumReport {
    let s = &basis.spectrum;
    let n = s.len();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::INFINITY };
    let gap_ratio = (basis.d > 0 && basis.d < n).then(|| ratio(s[n - basis.d - 1], s[n - basis.d]));
    let largest_gap = (1..n)
        .map(|k| (n - k, ratio(s[k - 1], s[k])))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    SpectrumReport { spectrum: s.clone(), threshold: basis.threshold, d: basis.d, gap_ratio, largest_gap }
}

impl SpectrumReport {
    /// Plain-text table of the trailing `k` singular values.
    pub fn table(&self, k: usize) -> String {
        let n = self.spectrum.len();
        let mut out = String::from("  index  singular value\n");
        for i in n.saturating_sub(k)..n {
            let mark = if i >= n - self.d { "  *" } else { "" };
            out.push_str(&format!("  {:>5}  {:.6e}{mark}\n", i + 1, self.spectrum[i]));
        }
        out.push_str(&format!("threshold {:.3e}, d = {}", self.threshold, self.d));
        if let Some(g) = self.gap_ratio {
            out.push_str(&format!(", gap ratio {g:.3e}"));
        }
        if self.d == 0 {
            out.push_str(" (no generators found)");
        }
        out
    }
}

/// Serializable discovery outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub version: u32,
    pub kind: SystemKind,
    pub spectrum: Vec<f64>,
    pub threshold: f64,
    pub d: usize,
    pub gap_ratio: Option<f64>,
    /// Row-major `(p+q)r × d`.
    pub q: Vec<f64>,
    pub q_shape: [usize; 2],
    pub w: Vec<Vec<Vec<f64>>>,
    pub expressions: Vec<String>,
    pub library: LibrarySpec,
    pub config: serde_json::Value,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_sparse: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions_sparse: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladmap: Option<serde_json::Value>,
}

pub fn matrix_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

impl DiscoveryResult {
    pub fn new(basis: &GeneratorBasis, lib: &FunctionLibrary, config: serde_json::Value, fingerprint: String) -> Self {
        let report = spectrum_report(basis);
        DiscoveryResult {
            version: crate::pdegen::FORMAT_VERSION,
            kind: basis.kind,
            spectrum: basis.spectrum.clone(),
            threshold: basis.threshold,
            d: basis.d,
            gap_ratio: report.gap_ratio,
            q: matrix_row_major(&basis.q),
            q_shape: [basis.q.nrows(), basis.q.ncols()],
            w: basis
                .ws()
                .iter()
                .map(|w| w.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            expressions: render_generators(basis, lib),
            library: lib.to_spec(),
            config,
            fingerprint,
            q_sparse: None,
            expressions_sparse: None,
            ladmap: None,
        }
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.q_shape[0], self.q_shape[1], &self.q)
    }

    pub fn q_sparse_matrix(&self) -> Option<DMatrix<f64>> {
        self.q_sparse.as_ref().map(|q| DMatrix::from_row_slice(self.q_shape[0], self.q_shape[1], q))
    }

    pub fn basis(&self) -> Result<GeneratorBasis> {
        let lib = FunctionLibrary::from_spec(&self.library)?;
        Ok(GeneratorBasis {
            spectrum: self.spectrum.clone(),
            threshold: self.threshold,
            d: self.d,
            q: self.q_matrix(),
            nblocks: lib.p() + lib.q(),
            r: lib.r(),
            kind: self.kind,
        })
    }
}

/// FNV-1a over the little-endian bytes of `values`, as hex.
pub fn fingerprint(values: impl IntoIterator<Item = f64>) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    format!("{h:016x}")
}
