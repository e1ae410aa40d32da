//! Algebraic laws of the sparse polynomial type. Small integer coefficients
//! keep every product exact in `f64`, so equality is structural.

use std::collections::HashMap;

use proptest::prelude::*;
use sis_core::polynomial::{Monomial, Polynomial, VarId, Vars};

fn vars() -> (Vars, Vec<VarId>) {
    let mut v = Vars::new();
    let ids = vec![
        v.state("x").unwrap(),
        v.state("y").unwrap(),
        v.state("z").unwrap(),
        v.decision("k").unwrap(),
    ];
    (v, ids)
}

fn poly() -> impl Strategy<Value = Polynomial<f64>> {
    let term = (-5i32..=5, proptest::collection::vec(0u32..=2, 4));
    proptest::collection::vec(term, 0..6).prop_map(|terms| {
        let (_, ids) = vars();
        Polynomial::from_terms(terms.into_iter().map(|(c, e)| {
            let m = Monomial::from_factors(ids.iter().copied().zip(e));
            (m, f64::from(c))
        }))
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, 4)
}

fn assignment(x: &[f64]) -> HashMap<VarId, f64> {
    let (_, ids) = vars();
    ids.into_iter().zip(x.iter().copied()).collect()
}

proptest! {
    #[test]
    fn addition_commutes_and_associates(a in poly(), b in poly(), c in poly()) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert!((&a - &a).is_zero());
    }

    #[test]
    fn multiplication_commutes_associates_distributes(a in poly(), b in poly(), c in poly()) {
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!(&a * &Polynomial::one(), a.clone());
    }

    #[test]
    fn product_rule(a in poly(), b in poly(), which in 0usize..3) {
        let (_, ids) = vars();
        let v = ids[which];
        let lhs = (&a * &b).differentiate(v).unwrap();
        let rhs = &(&a.differentiate(v).unwrap() * &b) + &(&a * &b.differentiate(v).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn evaluation_is_a_homomorphism(a in poly(), b in poly(), x in point()) {
        let env = assignment(&x);
        let (ea, eb) = (a.evaluate(&env).unwrap(), b.evaluate(&env).unwrap());
        let prod = (&a * &b).evaluate(&env).unwrap();
        let sum = (&a + &b).evaluate(&env).unwrap();
        prop_assert!((prod - ea * eb).abs() <= 1e-12 * (1.0 + (ea * eb).abs()));
        prop_assert!((sum - (ea + eb)).abs() <= 1e-12 * (1.0 + (ea + eb).abs()));
    }

    #[test]
    fn collect_by_state_round_trips(a in poly()) {
        let collected = a.collect_by_state();
        for (m, c) in &collected {
            prop_assert!(m.vars().all(|v| v.is_state()));
            prop_assert!(c.vars().iter().all(|v| v.is_decision()));
        }
        prop_assert_eq!(Polynomial::from_collected(&collected), a);
    }
}
