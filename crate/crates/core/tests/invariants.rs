use isotm_core::gmetric::TangentMetric;
use isotm_core::harmonic::{tension_closed, tension_sigma0};
use isotm_core::geom::angle_unit_field;
use isotm_core::{IsotropicStructure, RiemannianChart, TMPoint, TMVector, Thresholds, Verdict};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn structures() -> Vec<IsotropicStructure> {
    vec![
        IsotropicStructure::sasaki(),
        IsotropicStructure::family_sigma0(1.0, 0.5),
        IsotropicStructure::family_sigma0(0.0, 2.0),
        IsotropicStructure::family_general(1.0, 0.7, 1.0).unwrap(),
        IsotropicStructure::family_general(1.0, -1.3, 0.2).unwrap(),
    ]
}

fn vec2() -> impl Strategy<Value = DVector<f64>> {
    prop::array::uniform2(-1.5f64..1.5).prop_map(|a| DVector::from_row_slice(&a))
}

fn vec4() -> impl Strategy<Value = DVector<f64>> {
    prop::array::uniform4(-2.0f64..2.0).prop_map(|a| DVector::from_row_slice(&a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn j_squares_to_minus_identity(s in 0usize..5, x in vec2(), y in vec2(), sphere in any::<bool>()) {
        let chart = if sphere { RiemannianChart::sphere_stereographic(2) } else { RiemannianChart::euclidean(2) };
        let m = TangentMetric::new(structures()[s].clone(), chart);
        let j = m.j_matrix(&TMPoint::new(x, y)).unwrap();
        prop_assert!((&j * &j + DMatrix::identity(4, 4)).amax() <= 1e-10);
    }

    #[test]
    fn metric_is_spd_and_hermitian(s in 0usize..5, x in vec2(), y in vec2(), a in vec4(), b in vec4()) {
        let m = TangentMetric::new(structures()[s].clone(), RiemannianChart::sphere_stereographic(2));
        let at = TMPoint::new(x, y);
        let g = m.metric_matrix(&at).unwrap();
        prop_assert!(g.clone().cholesky().is_some());
        prop_assert!((&g - g.transpose()).amax() == 0.0);
        let a = TMVector::from_components(at.clone(), &a);
        let b = TMVector::from_components(at, &b);
        let lhs = m.metric_eval(&m.apply_j(&a).unwrap(), &m.apply_j(&b).unwrap()).unwrap();
        let rhs = m.metric_eval(&a, &b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices(x in vec2()) {
        let c = RiemannianChart::sphere_stereographic(2);
        let gam = c.christoffel(&x).unwrap();
        for k in 0..2 {
            prop_assert!((gam.get(k, 0, 1) - gam.get(k, 1, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma0_tension_is_general_tension(b in 0.2f64..3.0, x in vec2(), th in -3.0f64..3.0, q in -0.5f64..0.5) {
        let chart = RiemannianChart::sphere_stereographic(2);
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, b), chart.clone());
        let f = angle_unit_field(&chart, th, [0.3, -0.4], [q, 0.2, -q]).unwrap();
        let a = tension_closed(&m, &f, &x).unwrap();
        let s = tension_sigma0(&m, &f, &x).unwrap();
        prop_assert!(a.max_gap(&s) <= 1e-10);
    }

    #[test]
    fn verdict_bands_are_monotone(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let t = Thresholds::default();
        let rank = |v: Verdict| match v { Verdict::Holds => 0, Verdict::Inconclusive => 1, Verdict::Fails => 2 };
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(rank(t.classify(lo)) <= rank(t.classify(hi)));
    }
}
