//! Isotropic almost complex structures on tangent bundles, their induced
//! metrics, and harmonic unit vector fields, with finite-difference oracles
//! for every closed-form expression.

pub mod error;
pub mod fd;
pub mod geom;

pub use error::{GeomError, Result};
pub use fd::FdPolicy;
pub use geom::{Christoffel, Domain, Riemann, RiemannianChart, VectorField};
pub mod iso;
pub mod tbundle;
pub mod verdict;

pub use iso::{ComplexFieldZ, IsotropicStructure, ScalarField};
pub use tbundle::{TMPoint, TMVector};
pub use verdict::{Harmonicity, Integrability, Thresholds, Verdict};
pub mod gmetric;

pub use gmetric::{ConnectionKind, ConnectionValue, TangentMetric};
pub mod harmonic;
pub use harmonic::{EnergyReport, HarmonicityVerdict, Quadrature, TensionReport, TensionSource};
