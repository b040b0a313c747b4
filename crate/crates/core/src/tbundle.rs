//! The induced chart `(x, y)` on `TM`, horizontal and vertical lifts, the
//! connection map `K`, the projection `π_*`, the Liouville form and Lie
//! brackets of vector fields on `TM` by central differences.
//!
//! In induced coordinates a tangent vector `A` to `TM` is a pair `(a, b)`
//! with `a` the `dx` part and `b` the `dy` part. Then `π_*A = a`,
//! `K A = b + Γ(y, a)`, `X^h = (X, −Γ(y, X))` and `X^v = (0, X)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::fd;
use crate::geom::{RiemannianChart, VectorField};

/// A point `(x, u)` of `TM`, `u` given by its components `y` in the
/// coordinate basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TMPoint {
    pub base: DVector<f64>,
    pub fiber: DVector<f64>,
}

impl TMPoint {
    pub fn new(base: DVector<f64>, fiber: DVector<f64>) -> Self {
        assert_eq!(base.len(), fiber.len(), "base and fiber dimensions differ");
        Self { base, fiber }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// `(x¹..xⁿ, y¹..yⁿ)` as one vector.
    pub fn flat(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(2 * n, |i, _| if i < n { self.base[i] } else { self.fiber[i - n] })
    }

    pub fn from_flat(z: &DVector<f64>) -> Self {
        let n = z.len() / 2;
        Self {
            base: z.rows(0, n).into_owned(),
            fiber: z.rows(n, n).into_owned(),
        }
    }
}

/// A tangent vector to `TM` in induced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TMVector {
    pub at: TMPoint,
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
}

impl TMVector {
    pub fn new(at: TMPoint, dx: DVector<f64>, dy: DVector<f64>) -> Self {
        Self { at, dx, dy }
    }

    pub fn zero(at: TMPoint) -> Self {
        let n = at.dim();
        Self::new(at, DVector::zeros(n), DVector::zeros(n))
    }

    pub fn from_components(at: TMPoint, c: &DVector<f64>) -> Self {
        let n = at.dim();
        Self {
            dx: c.rows(0, n).into_owned(),
            dy: c.rows(n, n).into_owned(),
            at,
        }
    }

    pub fn components(&self) -> DVector<f64> {
        let n = self.at.dim();
        DVector::from_fn(2 * n, |i, _| if i < n { self.dx[i] } else { self.dy[i - n] })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.at.clone(), &self.dx * s, &self.dy * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.at != other.at {
            return Err(GeomError::PointMismatch);
        }
        Ok(Self::new(self.at.clone(), &self.dx + &other.dx, &self.dy + &other.dy))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.dx.amax().max(self.dy.amax())
    }
}

/// `π_*A`.
pub fn projection(a: &TMVector) -> DVector<f64> {
    a.dx.clone()
}

/// `K A = b + Γ(y, a)`.
pub fn connection_map(chart: &RiemannianChart, a: &TMVector) -> Result<DVector<f64>> {
    let gam = chart.christoffel(&a.at.base)?;
    Ok(&a.dy + gam.along(&a.at.fiber) * &a.dx)
}

pub fn horizontal_lift(chart: &RiemannianChart, x: &DVector<f64>, at: &TMPoint) -> Result<TMVector> {
    let gam = chart.christoffel(&at.base)?;
    Ok(TMVector::new(at.clone(), x.clone(), -(gam.along(&at.fiber) * x)))
}

pub fn vertical_lift(chart: &RiemannianChart, x: &DVector<f64>, at: &TMPoint) -> Result<TMVector> {
    chart.check(&at.base)?;
    Ok(TMVector::new(at.clone(), DVector::zeros(x.len()), x.clone()))
}

/// `X^h + Y^v` at `at`.
pub fn lift(chart: &RiemannianChart, h: &DVector<f64>, v: &DVector<f64>, at: &TMPoint) -> Result<TMVector> {
    let gam = chart.christoffel(&at.base)?;
    Ok(TMVector::new(at.clone(), h.clone(), v - gam.along(&at.fiber) * h))
}

/// `(π_*A, K A)`, so that `A = (π_*A)^h + (K A)^v`.
pub fn decompose(chart: &RiemannianChart, a: &TMVector) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok((projection(a), connection_map(chart, a)?))
}

/// The `2n × 2n` matrix taking induced coordinates `(a, b)` to the split
/// components `(π_*A, K A)`.
pub fn split_matrix(chart: &RiemannianChart, at: &TMPoint) -> Result<DMatrix<f64>> {
    let n = at.dim();
    let c = chart.christoffel(&at.base)?.along(&at.fiber);
    let mut l = DMatrix::identity(2 * n, 2 * n);
    l.view_mut((n, 0), (n, n)).copy_from(&c);
    Ok(l)
}

/// Liouville form `Θ(A) = g(π_*A, u)`.
pub fn liouville_form(chart: &RiemannianChart, a: &TMVector) -> Result<f64> {
    chart.inner(&a.at.base, &a.dx, &a.at.fiber)
}

fn check_stencil(chart: &RiemannianChart, z: &DVector<f64>) -> Result<TMPoint> {
    let p = TMPoint::from_flat(z);
    chart.check(&p.base)?;
    Ok(p)
}

/// Derivative of the scalar function `f` on `TM` along `a`.
pub fn directional_derivative<F>(chart: &RiemannianChart, f: F, a: &TMVector) -> Result<f64>
where
    F: Fn(&TMPoint) -> Result<f64>,
{
    let z = a.at.flat();
    fd::directional_scalar(|w| f(&check_stencil(chart, w)?), &z, &a.components(), chart.fd().first)
}

/// Derivative of the components of the field `g` along the vector `d`.
fn field_derivative<G>(chart: &RiemannianChart, g: &G, at: &TMPoint, d: &DVector<f64>) -> Result<DVector<f64>>
where
    G: Fn(&TMPoint) -> Result<TMVector>,
{
    let z = at.flat();
    fd::directional_vector(
        |w| Ok(g(&check_stencil(chart, w)?)?.components()),
        &z,
        d,
        chart.fd().first,
        z.len(),
    )
}

/// `[F, G]^a = F^b ∂_b G^a − G^b ∂_b F^a` by central differences in the
/// induced chart. Stencil points outside the chart domain are an error.
pub fn bracket_fd<F, G>(chart: &RiemannianChart, f: F, g: G, at: &TMPoint) -> Result<TMVector>
where
    F: Fn(&TMPoint) -> Result<TMVector>,
    G: Fn(&TMPoint) -> Result<TMVector>,
{
    chart.check(&at.base)?;
    let fv = f(at)?.components();
    let gv = g(at)?.components();
    let dg = field_derivative(chart, &g, at, &fv)?;
    let df = field_derivative(chart, &f, at, &gv)?;
    Ok(TMVector::from_components(at.clone(), &(dg - df)))
}

/// `q ↦ X(π q)^h`.
pub fn horizontal_field<'a>(chart: &'a RiemannianChart, x: &'a VectorField) -> impl Fn(&TMPoint) -> Result<TMVector> + 'a {
    move |q| horizontal_lift(chart, &x.eval(&q.base), q)
}

/// `q ↦ X(π q)^v`.
pub fn vertical_field<'a>(chart: &'a RiemannianChart, x: &'a VectorField) -> impl Fn(&TMPoint) -> Result<TMVector> + 'a {
    move |q| vertical_lift(chart, &x.eval(&q.base), q)
}

/// The field with the same induced-coordinate components as `a` everywhere.
pub fn constant_field(a: &TMVector) -> impl Fn(&TMPoint) -> Result<TMVector> + '_ {
    move |q| Ok(TMVector::new(q.clone(), a.dx.clone(), a.dy.clone()))
}
