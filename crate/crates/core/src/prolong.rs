//! The prolonged coefficient matrix `Θₙ`.
//!
//! For a generator `v = WΘ·∇`, the prolongation `pr⁽ⁿ⁾v` is linear in
//! `vec(W)`: each jet coordinate contributes one row of polynomials, with
//! column blocks `W_1 … W_{p+q}` in coordinate order.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::library::FunctionLibrary;
use crate::symexpr::{JetLookup, JetPoly, JetSpace, JetVar, MultiIndex};

/// Row labels of `Θₙ`: the jet coordinates a residual depends on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivCoordSet {
    order: usize,
    rows: Vec<JetVar>,
}

impl DerivCoordSet {
    pub fn new(space: &JetSpace, order: usize, rows: Vec<JetVar>) -> Result<Self> {
        for (k, v) in rows.iter().enumerate() {
            space.check(v)?;
            if v.order() > order {
                return Err(Error::RowOutsideOrder { label: space.name(v), order });
            }
            if rows[..k].contains(v) {
                return Err(Error::Shape(format!("duplicate row label {}", space.name(v))));
            }
        }
        Ok(DerivCoordSet { order, rows })
    }

    /// Every jet coordinate up to `order`.
    pub fn full(space: &JetSpace, order: usize) -> Self {
        DerivCoordSet { order, rows: space.jet_vars(order) }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> &[JetVar] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, v: &JetVar) -> Option<usize> {
        self.rows.iter().position(|r| r == v)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Proper sub-multisets `I ⊊ J` with their multiplicities `Π_c C(J_c, I_c)`.
fn proper_submultisets(j: &MultiIndex, p: usize) -> Vec<(MultiIndex, MultiIndex, f64)> {
    let full = j.counts(p);
    let mut out = Vec::new();
    let mut cur = vec![0usize; p];
    loop {
        if cur != full {
            let rest: Vec<usize> = full.iter().zip(&cur).map(|(a, b)| a - b).collect();
            let m = full.iter().zip(&cur).map(|(&a, &b)| binomial(a, b)).product();
            out.push((MultiIndex::from_counts(&cur), MultiIndex::from_counts(&rest), m));
        }
        // odometer increment bounded by `full`
        let mut c = 0;
        while c < p {
            if cur[c] < full[c] {
                cur[c] += 1;
                break;
            }
            cur[c] = 0;
            c += 1;
        }
        if c == p {
            return out;
        }
    }
}

/// The row blocks of `φ_α^J` as polynomials multiplying `W_1 … W_{p+q}`.
///
/// Block `i < p` is `−Σ_{I⊊J} m(J,I) u^α_{I,i} D_{J∖I}Θ`; block `p+α` is `D_JΘ`.
pub fn phi_coefficient(lib: &FunctionLibrary, alpha: usize, j: &MultiIndex) -> Result<Vec<Vec<JetPoly>>> {
    phi_with_cache(lib, alpha, j, &mut HashMap::new())
}

fn phi_with_cache(
    lib: &FunctionLibrary,
    alpha: usize,
    j: &MultiIndex,
    cache: &mut HashMap<MultiIndex, Vec<JetPoly>>,
) -> Result<Vec<Vec<JetPoly>>> {
    let (p, q, r) = (lib.p(), lib.q(), lib.r());
    if j.is_empty() {
        return Err(Error::EmptyMultiIndex);
    }
    lib.space().check(&JetVar::Deriv { field: alpha, index: j.clone() })?;
    let mut d_theta = |k: &MultiIndex| -> Result<Vec<JetPoly>> {
        if let Some(v) = cache.get(k) {
            return Ok(v.clone());
        }
        let v = lib.d_theta(k)?;
        cache.insert(k.clone(), v.clone());
        Ok(v)
    };
    let mut blocks = vec![vec![JetPoly::zero(); r]; p + q];
    for (sub, rest, m) in proper_submultisets(j, p) {
        let dk = d_theta(&rest)?;
        for (i, block) in blocks.iter_mut().enumerate().take(p) {
            let u = JetPoly::var(JetVar::Deriv { field: alpha, index: sub.with(i) });
            for (cell, d) in block.iter_mut().zip(&dk) {
                cell.add_scaled(&(&u * d), -m);
            }
        }
    }
    blocks[p + alpha] = d_theta(j)?;
    Ok(blocks)
}

/// Symbolic `Θₙ` with one row per label of a [`DerivCoordSet`].
#[derive(Clone, Debug)]
pub struct ThetaN {
    rows: DerivCoordSet,
    nblocks: usize,
    r: usize,
    cells: Vec<Vec<JetPoly>>,
}

pub fn build_theta_n(lib: &FunctionLibrary, rows: &DerivCoordSet) -> Result<ThetaN> {
    let (p, r) = (lib.p(), lib.r());
    let nblocks = p + lib.q();
    let mut cache = HashMap::new();
    let mut cells = Vec::with_capacity(rows.len());
    for v in rows.rows() {
        lib.space().check(v)?;
        let blocks = match v {
            JetVar::Indep(i) => structural_row(lib, nblocks, *i),
            JetVar::Deriv { field, index } if index.is_empty() => structural_row(lib, nblocks, p + field),
            JetVar::Deriv { field, index } => phi_with_cache(lib, *field, index, &mut cache)?,
        };
        cells.push(blocks.into_iter().flatten().collect());
    }
    Ok(ThetaN { rows: rows.clone(), nblocks, r, cells })
}

fn structural_row(lib: &FunctionLibrary, nblocks: usize, block: usize) -> Vec<Vec<JetPoly>> {
    let mut out = vec![vec![JetPoly::zero(); lib.r()]; nblocks];
    out[block] = lib.entries().to_vec();
    out
}

impl ThetaN {
    pub fn rows(&self) -> &DerivCoordSet {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.cells.len()
    }

    pub fn ncols(&self) -> usize {
        self.nblocks * self.r
    }

    pub fn cell(&self, row: usize, col: usize) -> &JetPoly {
        &self.cells[row][col]
    }

    /// `Θₙ · vec(W)` as one polynomial per row; `w` is `(p+q) × r`.
    pub fn contract(&self, w: &DMatrix<f64>) -> Result<Vec<JetPoly>> {
        if w.nrows() != self.nblocks || w.ncols() != self.r {
            return Err(Error::Shape(format!(
                "W is {}x{}, expected {}x{}",
                w.nrows(),
                w.ncols(),
                self.nblocks,
                self.r
            )));
        }
        Ok(self
            .cells
            .iter()
            .map(|row| {
                let mut acc = JetPoly::zero();
                for (c, cell) in row.iter().enumerate() {
                    acc.add_scaled(cell, w[(c / self.r, c % self.r)]);
                }
                acc
            })
            .collect())
    }

    pub fn compile(&self) -> ThetaNEvaluator {
        let mut vars: Vec<JetVar> = Vec::new();
        let mut slot = HashMap::new();
        let mut cells = Vec::new();
        for (i, row) in self.cells.iter().enumerate() {
            for (j, poly) in row.iter().enumerate() {
                if poly.is_zero() {
                    continue;
                }
                let terms = poly
                    .terms()
                    .map(|(m, c)| {
                        let powers = m
                            .powers()
                            .iter()
                            .map(|(v, e)| {
                                let s = *slot.entry(v.clone()).or_insert_with(|| {
                                    vars.push(v.clone());
                                    vars.len() - 1
                                });
                                (s, *e)
                            })
                            .collect();
                        (c, powers)
                    })
                    .collect();
                cells.push(CompiledCell { row: i, col: j, terms });
            }
        }
        ThetaNEvaluator { vars, nrows: self.nrows(), ncols: self.ncols(), cells }
    }

    pub fn evaluate<L: JetLookup + ?Sized>(&self, pt: &L) -> Result<DMatrix<f64>> {
        self.compile().evaluate(pt)
    }
}

#[derive(Clone, Debug)]
struct CompiledCell {
    row: usize,
    col: usize,
    terms: Vec<(f64, Vec<(usize, u32)>)>,
}

/// Flattened form of [`ThetaN`] for repeated numeric evaluation.
///
/// Values are supplied as a slice aligned with [`ThetaNEvaluator::vars`].
#[derive(Clone, Debug)]
pub struct ThetaNEvaluator {
    vars: Vec<JetVar>,
    nrows: usize,
    ncols: usize,
    cells: Vec<CompiledCell>,
}

impl ThetaNEvaluator {
    pub fn vars(&self) -> &[JetVar] {
        &self.vars
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    /// Overwrites `out` (which must be `nrows × ncols`) with `Θₙ` at `vals`.
    pub fn eval_into(&self, vals: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for cell in &self.cells {
            let mut s = 0.0;
            for (c, powers) in &cell.terms {
                let mut t = *c;
                for &(k, e) in powers {
                    t *= if e == 1 { vals[k] } else { vals[k].powi(e as i32) };
                }
                s += t;
            }
            out[(cell.row, cell.col)] = s;
        }
    }

    pub fn evaluate<L: JetLookup + ?Sized>(&self, pt: &L) -> Result<DMatrix<f64>> {
        let vals = self
            .vars
            .iter()
            .map(|v| pt.value(v).ok_or_else(|| Error::UnhousedVariable(v.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        self.eval_into(&vals, &mut out);
        Ok(out)
    }
}

/// Coefficients of `pr⁽ⁿ⁾v` for `v = WΘ·∇`, keyed by jet coordinate.
pub fn prolong_vector_field(lib: &FunctionLibrary, w: &DMatrix<f64>, order: usize) -> Result<Vec<(JetVar, JetPoly)>> {
    let rows = DerivCoordSet::full(lib.space(), order);
    let theta = build_theta_n(lib, &rows)?;
    let coeffs = theta.contract(w)?;
    Ok(rows.rows().iter().cloned().zip(coeffs).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{build_linear_library, build_poly_library};

    fn poly(s: &str, sp: &JetSpace) -> JetPoly {
        JetPoly::parse(s, sp).unwrap()
    }

    #[test]
    fn first_order_scalar_row() {
        let sp = JetSpace::new(["x"], ["u"]);
        let lib = build_poly_library(&sp, 2).unwrap();
        let blocks = phi_coefficient(&lib, 0, &MultiIndex::new(vec![0])).unwrap();
        let dx = lib.d_theta(&MultiIndex::new(vec![0])).unwrap();
        let ux = poly("u_x", &sp);
        for k in 0..lib.r() {
            assert_eq!(blocks[0][k], -&(&ux * &dx[k]));
            assert_eq!(blocks[1][k], dx[k]);
        }
    }

    #[test]
    fn burgers_second_order_row() {
        let sp = JetSpace::new(["t", "x"], ["u"]);
        let lib = build_poly_library(&sp, 2).unwrap();
        let xx = MultiIndex::new(vec![1, 1]);
        let blocks = phi_coefficient(&lib, 0, &xx).unwrap();
        let dxx = lib.d_theta(&xx).unwrap();
        let dx = lib.d_theta(&MultiIndex::new(vec![1])).unwrap();
        for k in 0..lib.r() {
            let bt = &(&poly("u_t", &sp) * &dxx[k]) + &(&poly("2*u_tx", &sp) * &dx[k]);
            let bx = &(&poly("u_x", &sp) * &dxx[k]) + &(&poly("2*u_xx", &sp) * &dx[k]);
            assert_eq!(blocks[0][k], -&bt);
            assert_eq!(blocks[1][k], -&bx);
            assert_eq!(blocks[2][k], dxx[k]);
        }
    }

    #[test]
    fn wave_mixed_row_has_unit_multiplicities() {
        let sp = JetSpace::new(["t", "x", "y"], ["u"]);
        let lib = build_poly_library(&sp, 2).unwrap();
        let xy = MultiIndex::new(vec![1, 2]);
        let blocks = phi_coefficient(&lib, 0, &xy).unwrap();
        let dxy = lib.d_theta(&xy).unwrap();
        let dx = lib.d_theta(&MultiIndex::new(vec![1])).unwrap();
        let dy = lib.d_theta(&MultiIndex::new(vec![2])).unwrap();
        for k in 0..lib.r() {
            let expect = &(&(&poly("u_x", &sp) * &dxy[k]) + &(&poly("u_xx", &sp) * &dy[k]))
                + &(&poly("u_xy", &sp) * &dx[k]);
            assert_eq!(blocks[1][k], -&expect);
        }
    }

    #[test]
    fn empty_index_rejected() {
        let sp = JetSpace::new(["x"], ["u"]);
        let lib = build_poly_library(&sp, 1).unwrap();
        assert!(matches!(phi_coefficient(&lib, 0, &MultiIndex::empty()), Err(Error::EmptyMultiIndex)));
    }

    #[test]
    fn rows_outside_order_rejected() {
        let sp = JetSpace::new(["x"], ["u"]);
        let e = DerivCoordSet::new(&sp, 1, vec![JetVar::deriv(0, vec![0, 0])]);
        assert!(matches!(e, Err(Error::RowOutsideOrder { .. })));
    }

    #[test]
    fn structural_rows_and_static_shape() {
        let sp = JetSpace::new(Vec::<String>::new(), vec!["p0".into(), "p1".into(), "p2".into(), "p3".into()]);
        let lib = build_linear_library(&sp, false).unwrap();
        let rows = DerivCoordSet::full(&sp, 0);
        let th = build_theta_n(&lib, &rows).unwrap();
        assert_eq!((th.nrows(), th.ncols()), (4, 16));
        for a in 0..4 {
            for c in 0..16 {
                let expect = if c / 4 == a { lib.entries()[c % 4].clone() } else { JetPoly::zero() };
                assert_eq!(th.cell(a, c), &expect);
            }
        }
    }

    #[test]
    fn burgers_theta2_shape() {
        let sp = JetSpace::new(["t", "x"], ["u"]);
        let lib = build_poly_library(&sp, 2).unwrap();
        let rows = DerivCoordSet::new(
            &sp,
            2,
            vec![JetVar::field(0), JetVar::deriv(0, vec![1]), JetVar::deriv(0, vec![1, 1]), JetVar::deriv(0, vec![0])],
        )
        .unwrap();
        let th = build_theta_n(&lib, &rows).unwrap();
        assert_eq!((th.nrows(), th.ncols()), (4, 30));
    }

    #[test]
    fn rotation_prolongation() {
        let sp = JetSpace::new(["x"], ["u"]);
        let lib = build_linear_library(&sp, false).unwrap();
        // v = -u ∂x + x ∂u
        let w = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let pr = prolong_vector_field(&lib, &w, 1).unwrap();
        let ux = pr.iter().find(|(v, _)| *v == JetVar::deriv(0, vec![0])).unwrap();
        assert_eq!(ux.1, poly("1 + u_x^2", &sp));
        let zero = prolong_vector_field(&lib, &DMatrix::zeros(2, 2), 1).unwrap();
        assert!(zero.iter().all(|(_, c)| c.is_zero()));
    }

    #[test]
    fn compiled_matches_symbolic() {
        let sp = JetSpace::new(["t", "x"], ["u"]);
        let lib = build_poly_library(&sp, 2).unwrap();
        let rows = DerivCoordSet::full(&sp, 2);
        let th = build_theta_n(&lib, &rows).unwrap();
        let mut pt = HashMap::new();
        for (k, v) in sp.jet_vars(3).into_iter().enumerate() {
            pt.insert(v, 0.3 + 0.17 * k as f64);
        }
        let m = th.evaluate(&pt).unwrap();
        for i in 0..th.nrows() {
            for j in 0..th.ncols() {
                assert_eq!(m[(i, j)], th.cell(i, j).evaluate(&pt).unwrap());
            }
        }
    }
}
