#![allow(dead_code)]

use jetsym::symexpr::{JetPoly, JetSpace, JetVar, Monomial, MultiIndex};
use proptest::prelude::*;

/// `D_i P = ∂P/∂xⁱ + Σ u_{J,i} ∂P/∂u_J`, written from the definition with
/// partial derivatives only.
pub fn oracle_total(p: &JetPoly, i: usize) -> JetPoly {
    let mut out = p.partial(&JetVar::Indep(i));
    for v in p.vars() {
        if let JetVar::Deriv { field, index } = &v {
            let next = JetPoly::var(JetVar::Deriv { field: *field, index: index.with(i) });
            out = &out + &(&next * &p.partial(&v));
        }
    }
    out
}

pub fn oracle_total_multi(p: &JetPoly, j: &MultiIndex) -> JetPoly {
    j.entries().iter().fold(p.clone(), |acc, &i| oracle_total(&acc, i))
}

/// Random polynomial with small integer coefficients over the given variables.
pub fn poly_strategy(vars: Vec<JetVar>, max_terms: usize) -> impl Strategy<Value = JetPoly> {
    let n = vars.len();
    prop::collection::vec((prop::collection::vec((0..n, 1u32..3), 0..3), -4i32..5), 0..max_terms).prop_map(move |terms| {
        JetPoly::from_terms(terms.into_iter().map(|(pw, c)| {
            (Monomial::from_powers(pw.into_iter().map(|(k, e)| (vars[k].clone(), e))), c as f64)
        }))
    })
}

pub fn space(p: usize, q: usize) -> JetSpace {
    let coords = ["t", "x", "y"][..p].to_vec();
    let fields = ["u", "v"][..q].to_vec();
    JetSpace::new(coords, fields)
}

/// Compares the block formula for `φ_α^J`, contracted with `w`, against
/// `D_J(φ_α − Σᵢ ξⁱ u^α_i) + Σᵢ ξⁱ u^α_{J,i}` for every `1 ≤ |J| ≤ order`.
/// Returns the number of rows compared, or the first mismatch.
pub fn check_prolongation_oracle(
    lib: &jetsym::library::FunctionLibrary,
    w: &nalgebra::DMatrix<f64>,
    order: usize,
) -> Result<usize, String> {
    use jetsym::prolong::prolong_vector_field;
    let (p, q) = (lib.p(), lib.q());
    let combo = |row: usize| -> JetPoly {
        let mut out = JetPoly::zero();
        for (k, e) in lib.entries().iter().enumerate() {
            out.add_scaled(e, w[(row, k)]);
        }
        out
    };
    let xi: Vec<JetPoly> = (0..p).map(combo).collect();
    let ours = prolong_vector_field(lib, w, order).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (var, poly) in &ours {
        let JetVar::Deriv { field, index } = var else { continue };
        if index.is_empty() {
            continue;
        }
        let mut inner = combo(p + field);
        for (i, x) in xi.iter().enumerate() {
            let ui = JetPoly::var(JetVar::Deriv { field: *field, index: MultiIndex::new(vec![i]) });
            inner = &inner - &(x * &ui);
        }
        let mut expect = oracle_total_multi(&inner, index);
        for (i, x) in xi.iter().enumerate() {
            expect = &expect + &(x * &JetPoly::var(JetVar::Deriv { field: *field, index: index.with(i) }));
        }
        if &expect != poly {
            return Err(format!("mismatch at {var}: {} vs {}", poly.to_text(lib.space()), expect.to_text(lib.space())));
        }
        compared += 1;
    }
    assert!(q > 0);
    Ok(compared)
}

/// Orthonormal `n × d` matrix from the QR factor of raw entries.
pub fn orthonormal_from(n: usize, d: usize, raw: &[f64]) -> nalgebra::DMatrix<f64> {
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| raw[(i * d + j) % raw.len()] + if i == j { 3.0 } else { 0.0 });
    m.qr().q().columns(0, d).into_owned()
}

pub fn orthonormal_strategy(n: usize, d: usize) -> impl Strategy<Value = nalgebra::DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * d).prop_map(move |raw| orthonormal_from(n, d, &raw))
}
