//! Exact polynomial algebra over jet coordinates.
//!
//! A jet coordinate is either an independent variable `x^i` or a derivative
//! coordinate `u^α_J`, where `J` is a multiset of coordinate indices (`J = ∅`
//! is the dependent variable itself). Polynomials over these coordinates carry
//! the function library and every total derivative taken from it.
//!
//! All indices are zero-based. Coefficients are `f64`; the libraries used in
//! practice have integer coefficients, so sums and products stay exact.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multiset of coordinate indices, stored sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(mut entries: Vec<usize>) -> Self {
        entries.sort_unstable();
        MultiIndex(entries)
    }

    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    /// Builds the multiset with `counts[c]` copies of coordinate `c`.
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut v = Vec::new();
        for (c, &k) in counts.iter().enumerate() {
            v.extend(std::iter::repeat_n(c, k));
        }
        MultiIndex(v)
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `J ⊎ {i}`.
    pub fn with(&self, i: usize) -> Self {
        let pos = self.0.partition_point(|&c| c <= i);
        let mut v = self.0.clone();
        v.insert(pos, i);
        MultiIndex(v)
    }

    /// Multiplicity of each coordinate `0..p`.
    pub fn counts(&self, p: usize) -> Vec<usize> {
        let mut counts = vec![0; p];
        for &c in &self.0 {
            counts[c] += 1;
        }
        counts
    }

    pub fn multiplicity(&self, c: usize) -> usize {
        self.0.iter().filter(|&&e| e == c).count()
    }

    /// All sorted multi-indices of exactly `order` entries drawn from `0..p`,
    /// in lexicographic order.
    pub fn all_of_order(p: usize, order: usize) -> Vec<MultiIndex> {
        fn rec(p: usize, start: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if left == 0 {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for c in start..p {
                cur.push(c);
                rec(p, c, left - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if order == 0 {
            out.push(MultiIndex::empty());
        } else if p > 0 {
            rec(p, 0, order, &mut Vec::new(), &mut out);
        }
        out
    }

    /// All multi-indices with `1 <= |J| <= order`, graded.
    pub fn all_up_to(p: usize, order: usize) -> Vec<MultiIndex> {
        (1..=order).flat_map(|k| Self::all_of_order(p, k)).collect()
    }
}

/// A coordinate of the jet space `X × U^(n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JetVar {
    Indep(usize),
    Deriv { field: usize, index: MultiIndex },
}

impl JetVar {
    pub fn field(field: usize) -> Self {
        JetVar::Deriv { field, index: MultiIndex::empty() }
    }

    pub fn deriv(field: usize, index: Vec<usize>) -> Self {
        JetVar::Deriv { field, index: MultiIndex::new(index) }
    }

    /// Jet order: 0 for independent and dependent variables, `|J|` otherwise.
    pub fn order(&self) -> usize {
        match self {
            JetVar::Indep(_) => 0,
            JetVar::Deriv { index, .. } => index.order(),
        }
    }

    fn sort_key(&self) -> (u8, usize, usize, &[usize]) {
        match self {
            JetVar::Indep(i) => (0, *i, 0, &[]),
            JetVar::Deriv { field, index } => (1, *field, index.order(), index.entries()),
        }
    }
}

impl Ord for JetVar {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for JetVar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for JetVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JetVar::Indep(i) => write!(f, "x{i}"),
            JetVar::Deriv { field, index } if index.is_empty() => write!(f, "u{field}"),
            JetVar::Deriv { field, index } => write!(f, "u{field}{:?}", index.entries()),
        }
    }
}

/// Names of the independent and dependent variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JetSpace {
    pub coords: Vec<String>,
    pub fields: Vec<String>,
}

impl JetSpace {
    pub fn new<S: Into<String>>(coords: impl IntoIterator<Item = S>, fields: impl IntoIterator<Item = S>) -> Self {
        JetSpace {
            coords: coords.into_iter().map(Into::into).collect(),
            fields: fields.into_iter().map(Into::into).collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.coords.len()
    }

    pub fn q(&self) -> usize {
        self.fields.len()
    }

    pub fn check(&self, v: &JetVar) -> Result<()> {
        match v {
            JetVar::Indep(i) if *i >= self.p() => Err(Error::CoordOutOfRange { index: *i, p: self.p() }),
            JetVar::Indep(_) => Ok(()),
            JetVar::Deriv { field, index } => {
                if *field >= self.q() {
                    return Err(Error::FieldOutOfRange { index: *field, q: self.q() });
                }
                match index.entries().iter().find(|&&c| c >= self.p()) {
                    Some(&c) => Err(Error::CoordOutOfRange { index: c, p: self.p() }),
                    None => Ok(()),
                }
            }
        }
    }

    /// Human-readable name, e.g. `t`, `u`, `u_tx`.
    pub fn name(&self, v: &JetVar) -> String {
        match v {
            JetVar::Indep(i) => self.coords.get(*i).cloned().unwrap_or_else(|| v.to_string()),
            JetVar::Deriv { field, index } => {
                let Some(base) = self.fields.get(*field) else {
                    return v.to_string();
                };
                if index.is_empty() {
                    return base.clone();
                }
                let mut s = format!("{base}_");
                for &c in index.entries() {
                    match self.coords.get(c) {
                        Some(n) => s.push_str(n),
                        None => return v.to_string(),
                    }
                }
                s
            }
        }
    }

    /// Inverse of [`JetSpace::name`].
    pub fn resolve(&self, name: &str) -> Option<JetVar> {
        if let Some(i) = self.coords.iter().position(|c| c == name) {
            return Some(JetVar::Indep(i));
        }
        if let Some(a) = self.fields.iter().position(|f| f == name) {
            return Some(JetVar::field(a));
        }
        for (a, f) in self.fields.iter().enumerate() {
            if let Some(suffix) = name.strip_prefix(f.as_str()).and_then(|s| s.strip_prefix('_')) {
                if let Some(idx) = self.split_coords(suffix) {
                    if !idx.is_empty() {
                        return Some(JetVar::deriv(a, idx));
                    }
                }
            }
        }
        None
    }

    fn split_coords(&self, mut s: &str) -> Option<Vec<usize>> {
        let mut out = Vec::new();
        while !s.is_empty() {
            let (i, len) = self
                .coords
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_empty() && s.starts_with(c.as_str()))
                .map(|(i, c)| (i, c.len()))
                .max_by_key(|&(_, l)| l)?;
            out.push(i);
            s = &s[len..];
        }
        Some(out)
    }

    /// Every jet coordinate up to `order`: independent variables first, then
    /// each field's derivatives graded by order.
    pub fn jet_vars(&self, order: usize) -> Vec<JetVar> {
        let mut out: Vec<JetVar> = (0..self.p()).map(JetVar::Indep).collect();
        for a in 0..self.q() {
            out.push(JetVar::field(a));
            for j in MultiIndex::all_up_to(self.p(), order) {
                out.push(JetVar::Deriv { field: a, index: j });
            }
        }
        out
    }
}

/// Power product of jet variables, sorted by variable, with no zero exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<(JetVar, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: JetVar) -> Self {
        Monomial(vec![(v, 1)])
    }

    pub fn from_powers(powers: impl IntoIterator<Item = (JetVar, u32)>) -> Self {
        let mut m = Monomial::one();
        for (v, e) in powers {
            if e > 0 {
                m = m.mul(&Monomial(vec![(v, e)]));
            }
        }
        m
    }

    pub fn powers(&self) -> &[(JetVar, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, v: &JetVar) -> u32 {
        self.0.iter().find(|(w, _)| w == v).map_or(0, |(_, e)| *e)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Lowers the exponent of the `k`-th power by one.
    fn lowered(&self, k: usize) -> Monomial {
        let mut out = self.0.clone();
        if out[k].1 == 1 {
            out.remove(k);
        } else {
            out[k].1 -= 1;
        }
        Monomial(out)
    }

    fn text(&self, space: &JetSpace) -> String {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(v, e)| match e {
                1 => space.name(v),
                _ => format!("{}^{e}", space.name(v)),
            })
            .collect();
        parts.join("*")
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Anything that can supply values for jet coordinates.
pub trait JetLookup {
    fn value(&self, v: &JetVar) -> Option<f64>;
}

impl JetLookup for HashMap<JetVar, f64> {
    fn value(&self, v: &JetVar) -> Option<f64> {
        self.get(v).copied()
    }
}

impl JetLookup for BTreeMap<JetVar, f64> {
    fn value(&self, v: &JetVar) -> Option<f64> {
        self.get(v).copied()
    }
}

/// A polynomial over jet coordinates in canonical form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JetPoly {
    terms: BTreeMap<Monomial, f64>,
}

impl JetPoly {
    pub fn zero() -> Self {
        JetPoly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = JetPoly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(v: JetVar) -> Self {
        let mut p = JetPoly::zero();
        p.add_term(Monomial::var(v), 1.0);
        p
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let mut p = JetPoly::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = JetPoly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = *e.get() + c;
                if s == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn scale(&self, c: f64) -> JetPoly {
        if c == 0.0 {
            return JetPoly::zero();
        }
        JetPoly { terms: self.terms.iter().map(|(m, &k)| (m.clone(), k * c)).collect() }
    }

    /// Adds `c * other` in place.
    pub fn add_scaled(&mut self, other: &JetPoly, c: f64) {
        if c == 0.0 {
            return;
        }
        for (m, &k) in &other.terms {
            self.add_term(m.clone(), k * c);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Highest jet order of any variable present.
    pub fn jet_order(&self) -> usize {
        self.vars().iter().map(JetVar::order).max().unwrap_or(0)
    }

    pub fn vars(&self) -> BTreeSet<JetVar> {
        self.terms.keys().flat_map(|m| m.0.iter().map(|(v, _)| v.clone())).collect()
    }

    /// Partial derivative with respect to one jet coordinate.
    pub fn partial(&self, v: &JetVar) -> JetPoly {
        let mut out = JetPoly::zero();
        for (m, &c) in &self.terms {
            if let Some(k) = m.0.iter().position(|(w, _)| w == v) {
                let e = m.0[k].1;
                out.add_term(m.lowered(k), c * e as f64);
            }
        }
        out
    }

    /// Total derivative `D_i`.
    pub fn total_derivative(&self, i: usize, space: &JetSpace) -> Result<JetPoly> {
        if i >= space.p() {
            return Err(Error::CoordOutOfRange { index: i, p: space.p() });
        }
        let mut out = JetPoly::zero();
        for (m, &c) in &self.terms {
            for (k, (v, e)) in m.0.iter().enumerate() {
                let coef = c * *e as f64;
                match v {
                    JetVar::Indep(j) => {
                        if *j == i {
                            out.add_term(m.lowered(k), coef);
                        }
                    }
                    JetVar::Deriv { field, index } => {
                        let next = JetVar::Deriv { field: *field, index: index.with(i) };
                        out.add_term(m.lowered(k).mul(&Monomial::var(next)), coef);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `D_J`, the composition of total derivatives over a multi-index.
    pub fn total_derivative_multi(&self, j: &MultiIndex, space: &JetSpace) -> Result<JetPoly> {
        let mut out = self.clone();
        for &i in j.entries() {
            out = out.total_derivative(i, space)?;
        }
        Ok(out)
    }

    pub fn evaluate<L: JetLookup + ?Sized>(&self, pt: &L) -> Result<f64> {
        let mut sum = 0.0;
        for (m, &c) in &self.terms {
            let mut t = c;
            for (v, e) in &m.0 {
                let x = pt.value(v).ok_or_else(|| Error::UnhousedVariable(v.to_string()))?;
                t *= x.powi(*e as i32);
            }
            sum += t;
        }
        Ok(sum)
    }

    /// Like [`JetPoly::evaluate`] but names the missing variable using `space`.
    pub fn evaluate_named<L: JetLookup + ?Sized>(&self, pt: &L, space: &JetSpace) -> Result<f64> {
        self.evaluate(pt).map_err(|e| match e {
            Error::UnhousedVariable(_) => {
                let missing = self.vars().into_iter().find(|v| pt.value(v).is_none());
                Error::UnhousedVariable(missing.map(|v| space.name(&v)).unwrap_or_default())
            }
            other => other,
        })
    }

    /// Deterministic rendering, e.g. `u + x*u_x`; parsed back by [`JetPoly::parse`].
    pub fn to_text(&self, space: &JetSpace) -> String {
        self.to_text_with(space, fmt_coef)
    }

    /// [`JetPoly::to_text`] with a custom formatter for coefficient magnitudes.
    pub fn to_text_with(&self, space: &JetSpace, fmt_coef: impl Fn(f64) -> String) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (n, (m, &c)) in self.terms.iter().enumerate() {
            let mag = if n == 0 {
                if c < 0.0 {
                    s.push('-');
                }
                c.abs()
            } else {
                s.push_str(if c < 0.0 { " - " } else { " + " });
                c.abs()
            };
            let cs = fmt_coef(mag);
            if m.is_one() {
                s.push_str(&cs);
            } else if cs == "1" {
                s.push_str(&m.text(space));
            } else {
                s.push_str(&cs);
                s.push('*');
                s.push_str(&m.text(space));
            }
        }
        s
    }

    pub fn parse(text: &str, space: &JetSpace) -> Result<JetPoly> {
        let mut p = Parser { src: text.as_bytes(), pos: 0, space };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(out)
    }
}

fn fmt_coef(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c:?}")
    }
}

impl Add for &JetPoly {
    type Output = JetPoly;
    fn add(self, rhs: &JetPoly) -> JetPoly {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &JetPoly {
    type Output = JetPoly;
    fn sub(self, rhs: &JetPoly) -> JetPoly {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl Mul for &JetPoly {
    type Output = JetPoly;
    fn mul(self, rhs: &JetPoly) -> JetPoly {
        let mut out = JetPoly::zero();
        for (a, &ca) in &self.terms {
            for (b, &cb) in &rhs.terms {
                out.add_term(a.mul(b), ca * cb);
            }
        }
        out
    }
}

impl Neg for &JetPoly {
    type Output = JetPoly;
    fn neg(self) -> JetPoly {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for JetPoly {
            type Output = JetPoly;
            fn $m(self, rhs: JetPoly) -> JetPoly {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    space: &'a JetSpace,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<JetPoly> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                b'-' => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<JetPoly> {
        let mut acc = self.unary()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            acc = &acc * &self.unary()?;
        }
        Ok(acc)
    }

    fn power(&mut self) -> Result<JetPoly> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let e: u32 = std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err("expected non-negative integer exponent"))?;
        let mut out = JetPoly::constant(1.0);
        for _ in 0..e {
            out = &out * &base;
        }
        Ok(out)
    }

    fn unary(&mut self) -> Result<JetPoly> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-&self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn atom(&mut self) -> Result<JetPoly> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
                match self.space.resolve(name) {
                    Some(v) => Ok(JetPoly::var(v)),
                    None => {
                        self.pos = start;
                        Err(self.err(&format!("unknown variable `{name}`")))
                    }
                }
            }
            _ => Err(self.err("expected number, variable or `(`")),
        }
    }

    fn number(&mut self) -> Result<JetPoly> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'-' || s[self.pos] == b'+') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or_default();
        let v: f64 = text.parse().map_err(|_| {
            self.pos = start;
            self.err("malformed number")
        })?;
        Ok(JetPoly::constant(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn tx() -> JetSpace {
        JetSpace::new(["x"], ["u"])
    }

    fn p(s: &str, space: &JetSpace) -> JetPoly {
        JetPoly::parse(s, space).unwrap()
    }

    #[test]
    fn total_derivative_examples() {
        let sp = tx();
        assert_eq!(p("u", &sp).total_derivative(0, &sp).unwrap(), p("u_x", &sp));
        assert_eq!(p("x*u", &sp).total_derivative(0, &sp).unwrap(), p("u + x*u_x", &sp));
        assert_eq!(p("u^2", &sp).total_derivative(0, &sp).unwrap(), p("2*u*u_x", &sp));
        let st = JetSpace::new(["t", "x"], ["u"]);
        assert!(JetPoly::constant(1.0).total_derivative(0, &st).unwrap().is_zero());
    }

    #[test]
    fn total_derivative_rejects_bad_coord() {
        let sp = tx();
        assert!(matches!(
            p("u", &sp).total_derivative(1, &sp),
            Err(Error::CoordOutOfRange { index: 1, p: 1 })
        ));
    }

    #[test]
    fn multi_derivative_examples() {
        let sp = tx();
        let xx = MultiIndex::new(vec![0, 0]);
        assert_eq!(
            p("u^2", &sp).total_derivative_multi(&xx, &sp).unwrap(),
            p("2*u_x^2 + 2*u*u_xx", &sp)
        );
        assert_eq!(p("x*u", &sp).total_derivative_multi(&xx, &sp).unwrap(), p("2*u_x + x*u_xx", &sp));
        let q = p("x^2*u + 3", &sp);
        assert_eq!(q.total_derivative_multi(&MultiIndex::empty(), &sp).unwrap(), q);
    }

    #[test]
    fn evaluate_examples() {
        let sp = tx();
        let mut pt = HashMap::new();
        pt.insert(JetVar::Indep(0), 2.0);
        pt.insert(JetVar::deriv(0, vec![0]), 3.0);
        assert_eq!(p("x*u_x", &sp).evaluate(&pt).unwrap(), 6.0);
        assert_eq!(JetPoly::zero().evaluate(&pt).unwrap(), 0.0);
        let err = p("u*x", &sp).evaluate_named(&pt, &sp).unwrap_err();
        assert!(err.to_string().contains("unhoused variable: u"), "{err}");
    }

    #[test]
    fn text_examples() {
        let sp = tx();
        let poly = &JetPoly::var(JetVar::field(0))
            + &(&JetPoly::var(JetVar::Indep(0)) * &JetPoly::var(JetVar::deriv(0, vec![0])));
        assert_eq!(poly.to_text(&sp), "u + x*u_x");
        assert_eq!(JetPoly::zero().to_text(&sp), "0");
        let st = JetSpace::new(["t", "x"], ["u"]);
        let m = JetPoly::monomial(
            Monomial::from_powers([(JetVar::Indep(0), 1), (JetVar::Indep(1), 1)]),
            -2.0,
        );
        assert_eq!(m.to_text(&st), "-2*t*x");
    }

    #[test]
    fn names_round_trip() {
        let sp = JetSpace::new(["t", "x", "y"], ["u", "v"]);
        for v in sp.jet_vars(3) {
            assert_eq!(sp.resolve(&sp.name(&v)), Some(v.clone()));
        }
        assert_eq!(sp.name(&JetVar::deriv(1, vec![2, 0])), "v_ty");
    }

    #[test]
    fn parser_handles_structure() {
        let sp = tx();
        assert_eq!(p("(x + u)^2", &sp), p("x^2 + 2*x*u + u^2", &sp));
        assert_eq!(p("-(2*x - u)", &sp), p("u - 2*x", &sp));
        assert_eq!(p("1.5e-3*u", &sp).coefficient(&Monomial::var(JetVar::field(0))), 1.5e-3);
        assert!(JetPoly::parse("x +", &sp).is_err());
        assert!(JetPoly::parse("w", &sp).is_err());
        assert!(JetPoly::parse("x^y", &sp).is_err());
    }

    #[test]
    fn cancellation_gives_canonical_zero() {
        let sp = tx();
        let z = &p("x*u + 1", &sp) - &p("u*x + 1", &sp);
        assert!(z.is_zero());
        assert_eq!(z, JetPoly::zero());
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(MultiIndex::all_of_order(2, 2).len(), 3);
        assert_eq!(MultiIndex::all_of_order(3, 2).len(), 6);
        assert_eq!(MultiIndex::all_up_to(2, 3).len(), 2 + 3 + 4);
        assert_eq!(MultiIndex::new(vec![1, 0, 1]).counts(2), vec![1, 2]);
        assert_eq!(MultiIndex::from_counts(&[1, 2]), MultiIndex::new(vec![1, 0, 1]));
    }
}
