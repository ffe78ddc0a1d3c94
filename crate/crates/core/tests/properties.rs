use proptest::prelude::*;

use rapm::catalog::{self, sample};
use rapm::classify;
use rapm::expr::Func;
use rapm::{Expr, PointStructure, PointTensor, ScalarField};

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-2.0..2.0f64).prop_map(Expr::constant),
        (0usize..4).prop_map(Expr::coord),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Cos, a)),
            inner.prop_map(|a| Expr::call(Func::Exp, Expr::mul(Expr::constant(0.3), a))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 4)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * 1f64.max(a.abs()).max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn derivative_matches_central_difference(e in expr_strategy(), p in point(), axis in 1usize..=4) {
        let f = ScalarField::from_expr(e, 4).unwrap();
        let h = 1e-5;
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus[axis - 1] += h;
        minus[axis - 1] -= h;
        let fd = (f.eval(&plus).unwrap() - f.eval(&minus).unwrap()) / (2.0 * h);
        let sym = f.derivative(axis).eval(&p).unwrap();
        prop_assert!(close(sym, fd, 1e-5), "{} : {} vs {}", f.expr(), sym, fd);
    }

    #[test]
    fn derivative_is_linear(a in expr_strategy(), b in expr_strategy(), s in -3.0..3.0f64, p in point(), axis in 1usize..=4) {
        let combo = ScalarField::from_expr(Expr::add(Expr::mul(Expr::constant(s), a.clone()), b.clone()), 4).unwrap();
        let fa = ScalarField::from_expr(a, 4).unwrap();
        let fb = ScalarField::from_expr(b, 4).unwrap();
        let lhs = combo.derivative(axis).eval(&p).unwrap();
        let rhs = s * fa.derivative(axis).eval(&p).unwrap() + fb.derivative(axis).eval(&p).unwrap();
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn product_rule(a in expr_strategy(), b in expr_strategy(), p in point(), axis in 1usize..=4) {
        let prod = ScalarField::from_expr(Expr::mul(a.clone(), b.clone()), 4).unwrap();
        let fa = ScalarField::from_expr(a, 4).unwrap();
        let fb = ScalarField::from_expr(b, 4).unwrap();
        let lhs = prod.derivative(axis).eval(&p).unwrap();
        let rhs = fa.derivative(axis).eval(&p).unwrap() * fb.eval(&p).unwrap()
            + fa.eval(&p).unwrap() * fb.derivative(axis).eval(&p).unwrap();
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn printed_expressions_reparse(e in expr_strategy(), p in point()) {
        let f = ScalarField::from_expr(e, 4).unwrap();
        let text = f.expr().to_string();
        let back = ScalarField::parse(&text, 4).unwrap();
        prop_assert!(close(f.eval(&p).unwrap(), back.eval(&p).unwrap(), 1e-12), "{}", text);
    }

    #[test]
    fn dim4_decomposition_recovers_coefficients(a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let s = PointStructure::canonical(2);
        let pis = s.pi_tensors();
        let l = pis.pi1.add(&pis.pi2).scale(a).add(&pis.pi3.scale(b));
        let d = s.decompose_dim4(&l).unwrap();
        prop_assert!(d.residual < 1e-10);
        prop_assert!((d.tau - 8.0 * a).abs() < 1e-10 && (d.tau_star - 8.0 * b).abs() < 1e-10);
    }

    #[test]
    fn psi1_of_symmetric_form_is_curvature_like(entries in prop::collection::vec(-1.0..1.0f64, 21), n in 2usize..=3) {
        let s = PointStructure::canonical(n);
        let d = 2 * n;
        // upper triangle, row by row
        let mut k = 0;
        let mut m = PointTensor::zeros(2, d);
        for i in 0..d {
            for j in i..d {
                let v = entries[k % entries.len()];
                k += 1;
                m.set(&[i, j], v);
                m.set(&[j, i], v);
            }
        }
        let props = s.check_properties(&s.psi1(&m).unwrap()).unwrap();
        prop_assert!(props.curvature_like() < 1e-12);
    }
}

#[test]
fn classification_is_invariant_under_constant_rescaling() {
    for name in ["flat-product-n2", "conformal-vertical-n2", "conformal-horizontal-n2", "perturbed-7"] {
        let chart = catalog::lookup(name).unwrap().build().unwrap();
        let points = sample(&chart, 2, 20, 5);
        let base = classify::classify(&chart, &points).unwrap().verdict;
        for c in [0.5, 2.0] {
            let scaled = chart.with_scaled_metric(c);
            let verdict = classify::classify(&scaled, &points).unwrap().verdict;
            assert_eq!(verdict, base, "{name} scaled by {c}");
        }
    }
}
