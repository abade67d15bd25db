//! Function libraries `Θ(x, u)` and their total derivatives.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symexpr::{JetPoly, JetSpace, JetVar, Monomial, MultiIndex};

/// An ordered list of polynomials in the order-0 jet variables.
///
/// Entry order is the column order of every coefficient matrix `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionLibrary {
    space: JetSpace,
    entries: Vec<JetPoly>,
}

/// On-disk form of a library: `{coords, fields, entries}` with entries as text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub coords: Vec<String>,
    pub fields: Vec<String>,
    pub entries: Vec<String>,
}

impl FunctionLibrary {
    pub fn new(space: JetSpace, entries: Vec<JetPoly>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLibrary("library has no entries".into()));
        }
        for (k, e) in entries.iter().enumerate() {
            for v in e.vars() {
                space.check(&v)?;
                if v.order() > 0 {
                    return Err(Error::InvalidLibrary(format!(
                        "entry {k} (`{}`) depends on derivative coordinate {}",
                        e.to_text(&space),
                        space.name(&v)
                    )));
                }
            }
        }
        Ok(FunctionLibrary { space, entries })
    }

    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    pub fn p(&self) -> usize {
        self.space.p()
    }

    pub fn q(&self) -> usize {
        self.space.q()
    }

    pub fn r(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[JetPoly] {
        &self.entries
    }

    /// Coordinate names in block order: independent then dependent variables.
    pub fn names(&self) -> Vec<String> {
        self.space.coords.iter().chain(&self.space.fields).cloned().collect()
    }

    pub fn entry_texts(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.to_text(&self.space)).collect()
    }

    /// `D_J Θ`, componentwise.
    pub fn d_theta(&self, j: &MultiIndex) -> Result<Vec<JetPoly>> {
        self.entries.iter().map(|e| e.total_derivative_multi(j, &self.space)).collect()
    }

    pub fn to_spec(&self) -> LibrarySpec {
        LibrarySpec {
            coords: self.space.coords.clone(),
            fields: self.space.fields.clone(),
            entries: self.entry_texts(),
        }
    }

    pub fn from_spec(spec: &LibrarySpec) -> Result<Self> {
        let space = JetSpace::new(spec.coords.iter().cloned(), spec.fields.iter().cloned());
        let entries = spec
            .entries
            .iter()
            .map(|s| JetPoly::parse(s, &space))
            .collect::<Result<Vec<_>>>()?;
        FunctionLibrary::new(space, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: LibrarySpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_spec(&spec)
    }
}

fn order0_vars(space: &JetSpace) -> Vec<JetVar> {
    (0..space.p()).map(JetVar::Indep).chain((0..space.q()).map(JetVar::field)).collect()
}

/// All monomials of total degree `<= degree` in the order-0 variables.
///
/// Within a degree, monomials with fewer distinct variables come first, then
/// lexicographic by variable index: `[1, t, x, u, t², x², u², tx, tu, xu]`.
pub fn build_poly_library(space: &JetSpace, degree: usize) -> Result<FunctionLibrary> {
    if degree == 0 {
        return Err(Error::InvalidLibrary("polynomial degree must be at least 1".into()));
    }
    let vars = order0_vars(space);
    let mut entries = vec![JetPoly::constant(1.0)];
    for k in 1..=degree {
        let mut combos = MultiIndex::all_of_order(vars.len(), k);
        combos.sort_by_key(|c| {
            let mut distinct = c.entries().to_vec();
            distinct.dedup();
            (distinct.len(), distinct, c.entries().to_vec())
        });
        for c in combos {
            let mono = Monomial::from_powers(c.entries().iter().map(|&i| (vars[i].clone(), 1)));
            entries.push(JetPoly::monomial(mono, 1.0));
        }
    }
    FunctionLibrary::new(space.clone(), entries)
}

/// `[x, u]`, optionally preceded by the constant 1.
pub fn build_linear_library(space: &JetSpace, include_constant: bool) -> Result<FunctionLibrary> {
    let mut entries = Vec::new();
    if include_constant {
        entries.push(JetPoly::constant(1.0));
    }
    entries.extend(order0_vars(space).into_iter().map(JetPoly::var));
    FunctionLibrary::new(space.clone(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(lib: &FunctionLibrary) -> Vec<String> {
        lib.entry_texts()
    }

    #[test]
    fn poly_library_listings() {
        let xu = JetSpace::new(["x"], ["u"]);
        assert_eq!(texts(&build_poly_library(&xu, 2).unwrap()), ["1", "x", "u", "x^2", "u^2", "x*u"]);
        let txu = JetSpace::new(["t", "x"], ["u"]);
        assert_eq!(
            texts(&build_poly_library(&txu, 2).unwrap()),
            ["1", "t", "x", "u", "t^2", "x^2", "u^2", "t*x", "t*u", "x*u"]
        );
        let big = JetSpace::new(["t", "x", "y"], ["u", "v"]);
        assert_eq!(build_poly_library(&big, 2).unwrap().r(), 21);
        // C(p+q+deg, deg)
        assert_eq!(build_poly_library(&txu, 3).unwrap().r(), 20);
    }

    #[test]
    fn linear_library_listings() {
        let top = JetSpace::new(Vec::<String>::new(), vec!["p0".into(), "p1".into(), "p2".into(), "p3".into()]);
        assert_eq!(texts(&build_linear_library(&top, false).unwrap()), ["p0", "p1", "p2", "p3"]);
        let xu = JetSpace::new(["x"], ["u"]);
        assert_eq!(texts(&build_linear_library(&xu, true).unwrap()), ["1", "x", "u"]);
        assert_eq!(texts(&build_linear_library(&xu, false).unwrap()), ["x", "u"]);
    }

    #[test]
    fn rejects_derivative_entries() {
        let xu = JetSpace::new(["x"], ["u"]);
        let e = JetPoly::parse("u_x", &xu).unwrap();
        assert!(matches!(FunctionLibrary::new(xu.clone(), vec![e]), Err(Error::InvalidLibrary(_))));
        assert!(FunctionLibrary::new(xu, vec![]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let sp = JetSpace::new(["t", "x"], ["u"]);
        let lib = build_poly_library(&sp, 2).unwrap();
        let json = serde_json::to_string(&lib.to_spec()).unwrap();
        let back = FunctionLibrary::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, lib);
    }
}
