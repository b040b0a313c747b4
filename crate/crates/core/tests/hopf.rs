use std::f64::consts::PI;

use isotm_core::geom::hopf_field;
use isotm_core::gmetric::TangentMetric;
use isotm_core::harmonic::{energy, energy_density, first_variation_check, harmonic_unit_residual, Quadrature};
use isotm_core::{Harmonicity, IsotropicStructure, RiemannianChart, Thresholds, VectorField};
use nalgebra::DVector;

fn s3() -> RiemannianChart {
    RiemannianChart::sphere_stereographic(3)
}

#[test]
fn hopf_fields_are_harmonic_for_every_sigma0_structure() {
    let p = DVector::from_row_slice(&[0.4, 1.1, -0.6]);
    for i in 1..=3 {
        let w = hopf_field(i).unwrap();
        for s in [IsotropicStructure::sasaki(), IsotropicStructure::family_sigma0(1.0, 0.5)] {
            let m = TangentMetric::new(s, s3());
            let v = harmonic_unit_residual(&m, &w, &p, &Thresholds::default()).unwrap();
            assert_eq!(v.verdict, Harmonicity::Harmonic, "W{i}: {}", v.residual_norm);
        }
    }
}

#[test]
fn sasaki_hopf_energy_total() {
    let m = TangentMetric::new(IsotropicStructure::sasaki(), s3());
    let w1 = hopf_field(1).unwrap();
    let rep = energy(&m, &w1, &Quadrature::chart_box(m.chart(), 48)).unwrap();
    let exact = 5.0 * PI * PI;
    assert!((rep.total - exact).abs() / exact < 5e-3, "{} vs {exact}", rep.total);
    let cap = rep.cap.unwrap();
    assert!(cap.cap_volume > 0.0 && cap.bound >= cap.correction.abs());
    assert!((rep.max_density - 2.5).abs() < 1e-6 && (rep.min_density - 2.5).abs() < 1e-6);
}

#[test]
fn parallel_field_density_is_half_dimension() {
    for n in 1..=3 {
        let m = TangentMetric::new(IsotropicStructure::sasaki(), RiemannianChart::euclidean(n));
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        let x = VectorField::constant("e1", e);
        assert_eq!(energy_density(&m, &x, &DVector::from_element(n, 0.3)).unwrap(), n as f64 / 2.0);
    }
}

#[test]
fn hopf_is_a_critical_point() {
    let m = TangentMetric::new(IsotropicStructure::sasaki(), s3());
    let w1 = hopf_field(1).unwrap();
    let w2 = hopf_field(2).unwrap();
    let fv = first_variation_check(&m, &w1, &w2, &Quadrature::chart_box(m.chart(), 24), 1e-4).unwrap();
    assert!(fv.lhs.abs() < 1e-3 && fv.rhs.abs() < 1e-3, "{fv:?}");
}
