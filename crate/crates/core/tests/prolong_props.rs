mod common;

use std::collections::HashMap;

use common::{check_prolongation_oracle, space};
use jetsym::library::build_poly_library;
use jetsym::prolong::{build_theta_n, DerivCoordSet};
use jetsym::symexpr::{JetVar, MultiIndex};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn block_formula_matches_oracle(p in 1usize..=3, q in 1usize..=2, ints in prop::collection::vec(-3i32..=3, 105)) {
        let lib = build_poly_library(&space(p, q), 2).unwrap();
        let (rows, r) = (p + q, lib.r());
        let w = DMatrix::from_fn(rows, r, |i, k| ints[i * r + k] as f64);
        let n = check_prolongation_oracle(&lib, &w, 3).map_err(TestCaseError::fail)?;
        prop_assert!(n > 0);
    }

    #[test]
    fn theta_n_is_linear_in_w(
        a in -4i32..=4,
        b in -4i32..=4,
        w1 in prop::collection::vec(-3i32..=3, 30),
        w2 in prop::collection::vec(-3i32..=3, 30),
        vals in prop::collection::vec(-3i32..=3, 10),
    ) {
        let sp = space(2, 1);
        let lib = build_poly_library(&sp, 2).unwrap();
        let th = build_theta_n(&lib, &DerivCoordSet::full(&sp, 2)).unwrap();
        let pt: HashMap<JetVar, f64> = sp.jet_vars(3).into_iter().zip(vals.iter().cycle()).map(|(v, &x)| (v, x as f64)).collect();
        let m = th.evaluate(&pt).unwrap();
        let v1 = DVector::from_iterator(30, w1.iter().map(|&x| x as f64));
        let v2 = DVector::from_iterator(30, w2.iter().map(|&x| x as f64));
        let (a, b) = (a as f64, b as f64);
        let lhs = &m * (&v1 * a + &v2 * b);
        let rhs = (&m * &v1) * a + (&m * &v2) * b;
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn d_theta_ignores_index_order(perm in Just(vec![0usize, 1, 1]).prop_shuffle()) {
        let sp = space(2, 1);
        let lib = build_poly_library(&sp, 2).unwrap();
        let sorted = lib.d_theta(&MultiIndex::new(vec![0, 1, 1])).unwrap();
        let stepwise: Vec<_> = lib
            .entries()
            .iter()
            .map(|e| perm.iter().fold(e.clone(), |acc, &i| acc.total_derivative(i, &sp).unwrap()))
            .collect();
        prop_assert_eq!(sorted, stepwise);
    }

    #[test]
    fn d_theta_matches_finite_differences(a in 0.3f64..1.5, b in 0.3f64..1.5, t0 in -1.0f64..1.0, x0 in -1.0f64..1.0) {
        // f(t, x) = sin(a t + b x): every jet coordinate is known in closed form
        let sp = space(2, 1);
        let lib = build_poly_library(&sp, 2).unwrap();
        let f = |t: f64, x: f64| (a * t + b * x).sin();
        let jet = |t: f64, x: f64| -> HashMap<JetVar, f64> {
            let mut m = HashMap::from([(JetVar::Indep(0), t), (JetVar::Indep(1), x)]);
            for v in sp.jet_vars(3) {
                if let JetVar::Deriv { index, .. } = &v {
                    let c = index.counts(2);
                    let k = index.order() as f64;
                    let val = a.powi(c[0] as i32) * b.powi(c[1] as i32) * (a * t + b * x + k * std::f64::consts::FRAC_PI_2).sin();
                    m.insert(v, val);
                }
            }
            m
        };
        let h = 1e-3;
        for j in [vec![0], vec![1], vec![1, 1], vec![0, 1]] {
            let mi = MultiIndex::new(j.clone());
            let d = lib.d_theta(&mi).unwrap();
            for (k, e) in lib.entries().iter().enumerate() {
                let g = |t: f64, x: f64| e.evaluate(&HashMap::from([
                    (JetVar::Indep(0), t), (JetVar::Indep(1), x), (JetVar::field(0), f(t, x)),
                ])).unwrap();
                let fd = match j.as_slice() {
                    [0] => (g(t0 + h, x0) - g(t0 - h, x0)) / (2.0 * h),
                    [1] => (g(t0, x0 + h) - g(t0, x0 - h)) / (2.0 * h),
                    [1, 1] => (g(t0, x0 + h) - 2.0 * g(t0, x0) + g(t0, x0 - h)) / (h * h),
                    _ => (g(t0 + h, x0 + h) - g(t0 + h, x0 - h) - g(t0 - h, x0 + h) + g(t0 - h, x0 - h)) / (4.0 * h * h),
                };
                let exact = d[k].evaluate(&jet(t0, x0)).unwrap();
                prop_assert!((exact - fd).abs() < 1e-4, "J={:?} entry {}: {} vs {}", j, k, exact, fd);
            }
        }
    }
}

#[test]
fn multiplicities_follow_binomials() {
    use jetsym::prolong::phi_coefficient;
    use jetsym::symexpr::JetPoly;
    let sp = space(2, 1);
    let lib = build_poly_library(&sp, 2).unwrap();
    let xx = phi_coefficient(&lib, 0, &MultiIndex::new(vec![1, 1])).unwrap();
    let dx = lib.d_theta(&MultiIndex::new(vec![1])).unwrap();
    let dxx = lib.d_theta(&MultiIndex::new(vec![1, 1])).unwrap();
    let ut = JetPoly::var(JetVar::deriv(0, vec![0]));
    let utx = JetPoly::var(JetVar::deriv(0, vec![0, 1]));
    for k in 0..lib.r() {
        let expect = -&(&(&ut * &dxx[k]) + &(&utx * &dx[k]).scale(2.0));
        assert_eq!(xx[0][k], expect);
    }

    let sp = space(3, 1);
    let lib = build_poly_library(&sp, 2).unwrap();
    let xy = phi_coefficient(&lib, 0, &MultiIndex::new(vec![1, 2])).unwrap();
    let d = |j: Vec<usize>| lib.d_theta(&MultiIndex::new(j)).unwrap();
    let (dx, dy, dxy) = (d(vec![1]), d(vec![2]), d(vec![1, 2]));
    let v = |j: Vec<usize>| JetPoly::var(JetVar::deriv(0, j));
    for k in 0..lib.r() {
        let expect = &(&(&v(vec![0]) * &dxy[k]) + &(&v(vec![0, 1]) * &dy[k])) + &(&v(vec![0, 2]) * &dx[k]);
        assert_eq!(xy[0][k], -&expect);
    }
}
