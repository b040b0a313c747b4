//! Shared fixtures for the kernel benchmarks.

use isotm_core::geom::hopf_field;
use isotm_core::gmetric::TangentMetric;
use isotm_core::{IsotropicStructure, RiemannianChart, TMPoint, VectorField};
use nalgebra::DVector;

pub struct Fixture {
    pub metric: TangentMetric,
    pub hopf: VectorField,
    pub base: DVector<f64>,
    pub at: TMPoint,
}

/// `T S³` with the given structure, a generic base point and the first Hopf field.
pub fn s3(structure: IsotropicStructure) -> Fixture {
    let base = DVector::from_row_slice(&[0.3, -0.2, 0.8]);
    let hopf = hopf_field(1).expect("Hopf field index in range");
    let at = TMPoint::new(base.clone(), hopf.eval(&base));
    Fixture {
        metric: TangentMetric::new(structure, RiemannianChart::sphere_stereographic(3)),
        hopf,
        base,
        at,
    }
}

/// Two smooth fields used as connection arguments.
pub fn test_fields(n: usize) -> (VectorField, VectorField) {
    let x = VectorField::new("X", move |p| DVector::from_fn(n, |i, _| 1.0 + p[(i + 1) % n].sin()));
    let y = VectorField::new("Y", move |p| DVector::from_fn(n, |i, _| p[i].cos() - 0.3 * p[(i + 1) % n]));
    (x, y)
}
