mod common;

use std::collections::HashMap;

use common::{oracle_total, poly_strategy, space};
use jetsym::symexpr::{JetPoly, JetVar};
use proptest::prelude::*;

fn vars() -> Vec<JetVar> {
    space(2, 1).jet_vars(2)
}

proptest! {
    #[test]
    fn total_derivatives_commute(p in poly_strategy(vars(), 5), i in 0usize..2, j in 0usize..2) {
        let sp = space(2, 1);
        let a = p.total_derivative(j, &sp).unwrap().total_derivative(i, &sp).unwrap();
        let b = p.total_derivative(i, &sp).unwrap().total_derivative(j, &sp).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn leibniz_rule(p in poly_strategy(vars(), 4), q in poly_strategy(vars(), 4), i in 0usize..2) {
        let sp = space(2, 1);
        let lhs = (&p * &q).total_derivative(i, &sp).unwrap();
        let rhs = &(&p.total_derivative(i, &sp).unwrap() * &q) + &(&p * &q.total_derivative(i, &sp).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn linearity(p in poly_strategy(vars(), 4), q in poly_strategy(vars(), 4), a in -5i32..6, b in -5i32..6, i in 0usize..2) {
        let sp = space(2, 1);
        let (a, b) = (a as f64, b as f64);
        let mut combo = p.scale(a);
        combo.add_scaled(&q, b);
        let lhs = combo.total_derivative(i, &sp).unwrap();
        let mut rhs = p.total_derivative(i, &sp).unwrap().scale(a);
        rhs.add_scaled(&q.total_derivative(i, &sp).unwrap(), b);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn matches_definition(p in poly_strategy(vars(), 5), i in 0usize..2) {
        let sp = space(2, 1);
        prop_assert_eq!(p.total_derivative(i, &sp).unwrap(), oracle_total(&p, i));
    }

    #[test]
    fn canonical_text_evaluates_the_same(p in poly_strategy(vars(), 6), vals in prop::collection::vec(-2.0f64..2.0, 8)) {
        let sp = space(2, 1);
        let pt: HashMap<JetVar, f64> = vars().into_iter().zip(vals).collect();
        let back = JetPoly::parse(&p.to_text(&sp), &sp).unwrap();
        let (a, b) = (p.evaluate(&pt).unwrap(), back.evaluate(&pt).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        prop_assert_eq!(back, p);
    }
}
