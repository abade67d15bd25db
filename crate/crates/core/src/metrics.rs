//! Subspace comparison and the shipped ground-truth algebras.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::library::FunctionLibrary;
use crate::symexpr::{JetPoly, JetSpace, Monomial};

const TRUTH_JSON: &str = include_str!("../fixtures/truth.json");

/// Relative tolerance on the QR diagonal below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the column space via QR.
pub fn orthonormalize(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    let (n, d) = b.shape();
    if d == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    if d > n {
        return Err(Error::RankDeficient);
    }
    let qr = b.clone().qr();
    let r = qr.r();
    let scale = b.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if (0..d).any(|i| r[(i, i)].abs() <= RANK_TOL * scale) {
        return Err(Error::RankDeficient);
    }
    Ok(qr.q().columns(0, d).into_owned())
}

/// Orthonormal basis of the column space, dropping dependent directions.
pub fn range_basis(b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = b.nrows();
    if b.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol * smax).collect();
    DMatrix::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])
}

fn check_orthonormal(q: &DMatrix<f64>) -> Result<()> {
    let e = crate::sparsify::orthonormality_error(q);
    if e > 1e-6 {
        return Err(Error::NotOrthonormal(e));
    }
    Ok(())
}

/// Principal angles between two column spaces, ascending.
///
/// The spaces may have different dimensions; the count returned is the
/// smaller of the two.
pub fn principal_angles(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Result<Vec<f64>> {
    if q1.nrows() != q2.nrows() {
        return Err(Error::Shape(format!("ambient dimensions {} and {}", q1.nrows(), q2.nrows())));
    }
    check_orthonormal(q1)?;
    check_orthonormal(q2)?;
    if q1.ncols() == 0 || q2.ncols() == 0 {
        return Ok(vec![]);
    }
    // acos alone loses small angles below ~1e-8, so those come from the sines
    // of the part of the smaller space outside the larger one
    let (small, large) = if q1.ncols() <= q2.ncols() { (q1, q2) } else { (q2, q1) };
    let proj = large.transpose() * small;
    let mut cos: Vec<f64> = proj.singular_values().iter().map(|c| c.clamp(0.0, 1.0)).collect();
    let mut sin: Vec<f64> = (small - large * &proj).singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    sin.sort_by(f64::total_cmp);
    Ok(cos
        .iter()
        .zip(&sin)
        .map(|(&c, &s)| if s * s < 0.5 { s.asin() } else { c.acos() })
        .collect())
}

/// `√Σθᵢ²` over the principal angles of two equal-dimensional subspaces.
pub fn grassmann_distance(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Result<f64> {
    if q1.shape() != q2.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", q1.shape(), q2.shape())));
    }
    Ok(principal_angles(q1, q2)?.iter().map(|t| t * t).sum::<f64>().sqrt())
}

/// Distance from the smaller subspace to its best match inside the larger one.
///
/// Equals [`grassmann_distance`] when the dimensions agree.
pub fn containment_distance(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Result<f64> {
    Ok(principal_angles(q1, q2)?.iter().map(|t| t * t).sum::<f64>().sqrt())
}

#[derive(Clone, Debug, Deserialize)]
struct TruthEntry {
    coords: Vec<String>,
    fields: Vec<String>,
    generators: Vec<BTreeMap<String, String>>,
}

fn truth_table() -> BTreeMap<String, TruthEntry> {
    serde_json::from_str(TRUTH_JSON).expect("shipped fixture parses")
}

pub fn truth_names() -> Vec<String> {
    truth_table().into_keys().collect()
}

/// A published generator as `(variable name, coefficient polynomial)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthGenerator {
    pub terms: Vec<(String, JetPoly)>,
}

pub fn truth_generators(name: &str) -> Result<(JetSpace, Vec<TruthGenerator>)> {
    let table = truth_table();
    let entry = table.get(name).ok_or_else(|| Error::UnknownDataset {
        name: name.to_string(),
        options: table.keys().cloned().collect::<Vec<_>>().join(", "),
    })?;
    let space = JetSpace::new(entry.coords.clone(), entry.fields.clone());
    let names: Vec<String> = entry.coords.iter().chain(&entry.fields).cloned().collect();
    let mut gens = Vec::new();
    for g in &entry.generators {
        let mut terms = Vec::new();
        for n in &names {
            if let Some(text) = g.get(n) {
                terms.push((n.clone(), JetPoly::parse(text, &space)?));
            }
        }
        gens.push(TruthGenerator { terms });
    }
    Ok((space, gens))
}

/// `vec(W)` of a generator over `lib` (row-major, one block per variable).
pub fn encode_generator(g: &TruthGenerator, lib: &FunctionLibrary) -> Result<Vec<f64>> {
    let names = lib.names();
    let r = lib.r();
    let mut index: BTreeMap<&Monomial, usize> = BTreeMap::new();
    for (k, e) in lib.entries().iter().enumerate() {
        let mut it = e.terms();
        match (it.next(), it.next()) {
            (Some((m, c)), None) if c == 1.0 => {
                index.insert(m, k);
            }
            _ => return Err(Error::InvalidLibrary("ground-truth encoding needs monomial library entries".into())),
        }
    }
    let mut out = vec![0.0; names.len() * r];
    for (var, poly) in &g.terms {
        let b = names.iter().position(|n| n == var).ok_or_else(|| Error::OutsideLibrary(format!("variable {var}")))?;
        for (m, c) in poly.terms() {
            let k = index.get(m).ok_or_else(|| Error::OutsideLibrary(poly.to_text(lib.space())))?;
            out[b * r + k] += c;
        }
    }
    Ok(out)
}

/// Published generators of `name` encoded over `lib`, as raw columns.
pub fn truth_matrix(name: &str, lib: &FunctionLibrary) -> Result<DMatrix<f64>> {
    let (space, gens) = truth_generators(name)?;
    if &space != lib.space() {
        return Err(Error::Shape(format!(
            "library variables {:?} do not match ground truth {:?}",
            lib.names(),
            space.coords.iter().chain(&space.fields).collect::<Vec<_>>()
        )));
    }
    let cols = gens.iter().map(|g| encode_generator(g, lib)).collect::<Result<Vec<_>>>()?;
    let n = (lib.p() + lib.q()) * lib.r();
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
}

/// Orthonormal basis of the published algebra of `name` over `lib`.
pub fn truth_algebra(name: &str, lib: &FunctionLibrary) -> Result<DMatrix<f64>> {
    orthonormalize(&truth_matrix(name, lib)?)
}

/// Keeps only rows belonging to degree-1 library entries, then re-orthonormalizes.
pub fn linear_part(q: &DMatrix<f64>, lib: &FunctionLibrary) -> DMatrix<f64> {
    let r = lib.r();
    let linear: Vec<bool> = lib.entries().iter().map(|e| e.degree() == 1 && e.terms().all(|(m, _)| m.degree() == 1)).collect();
    let projected = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| if linear[i % r] { q[(i, j)] } else { 0.0 });
    range_basis(&projected, 1e-8)
}
