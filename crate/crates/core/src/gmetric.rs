//! The metric `g_{δ,σ}(A, B) = dΘ(JA, B)` on `TM`, its Levi-Civita
//! connection in closed form, and a Koszul-formula oracle.
//!
//! On lifts the metric reads
//! `G(X^h,Y^h) = α g(X,Y)`, `G(X^h,Y^v) = −σ g(X,Y)`, `G(X^v,Y^v) = δ g(X,Y)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::geom::{RiemannianChart, VectorField};
use crate::iso::{self, IsotropicStructure, Scalar, StructureDifferentials};
use crate::tbundle::{self, TMPoint, TMVector};

#[derive(Debug, Clone)]
pub struct TangentMetric {
    structure: IsotropicStructure,
    chart: RiemannianChart,
}

impl TangentMetric {
    pub fn new(structure: IsotropicStructure, chart: RiemannianChart) -> Self {
        Self { structure, chart }
    }

    pub fn structure(&self) -> &IsotropicStructure {
        &self.structure
    }

    pub fn chart(&self) -> &RiemannianChart {
        &self.chart
    }

    pub fn metric_eval(&self, a: &TMVector, b: &TMVector) -> Result<f64> {
        if a.at != b.at {
            return Err(GeomError::PointMismatch);
        }
        let v = self.structure.values(&self.chart, &a.at)?;
        let g = self.chart.metric(&a.at.base)?;
        let (xa, ya) = tbundle::decompose(&self.chart, a)?;
        let (xb, yb) = tbundle::decompose(&self.chart, b)?;
        let ip = |p: &DVector<f64>, q: &DVector<f64>| p.dot(&(&g * q));
        Ok(v.alpha * ip(&xa, &xb) - v.sigma * (ip(&xa, &yb) + ip(&ya, &xb)) + v.delta * ip(&ya, &yb))
    }

    /// The metric in split components `(π_*A, K A)`.
    pub fn block_matrix(&self, at: &TMPoint) -> Result<DMatrix<f64>> {
        let v = self.structure.values(&self.chart, at)?;
        let g = self.chart.metric(&at.base)?;
        let n = at.dim();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(&g * v.alpha));
        m.view_mut((0, n), (n, n)).copy_from(&(&g * -v.sigma));
        m.view_mut((n, 0), (n, n)).copy_from(&(&g * -v.sigma));
        m.view_mut((n, n), (n, n)).copy_from(&(&g * v.delta));
        Ok(m)
    }

    /// The metric in induced coordinates `(dx, dy)`.
    pub fn metric_matrix(&self, at: &TMPoint) -> Result<DMatrix<f64>> {
        let l = tbundle::split_matrix(&self.chart, at)?;
        let m = l.transpose() * self.block_matrix(at)? * &l;
        Ok((&m + m.transpose()) * 0.5)
    }

    /// Solves `G v = w` for the coordinate metric at `at`.
    pub fn raise(&self, at: &TMPoint, w: &DVector<f64>) -> Result<TMVector> {
        let m = self.metric_matrix(at)?;
        let chol = m
            .cholesky()
            .ok_or_else(|| GeomError::SingularMetric(format!("g_(delta,sigma) at {:?}", at.flat().as_slice())))?;
        Ok(TMVector::from_components(at.clone(), &chol.solve(w)))
    }

    /// `∇̄f` for a function on `TM` given its induced-coordinate differential.
    pub fn gradient_from_differential(&self, at: &TMPoint, df: &DVector<f64>) -> Result<TMVector> {
        self.raise(at, df)
    }

    /// `∇̄f` for an arbitrary scalar function on `TM`, by central differences.
    pub fn gradient_on_tm<F>(&self, f: F, at: &TMPoint) -> Result<TMVector>
    where
        F: Fn(&TMPoint) -> Result<f64>,
    {
        let chart = &self.chart;
        let df = crate::fd::gradient(
            |z| {
                let q = TMPoint::from_flat(z);
                chart.check(&q.base)?;
                f(&q)
            },
            &at.flat(),
            chart.fd().first,
        )?;
        self.raise(at, &df)
    }

    /// `∇̄α`, `∇̄δ` or `∇̄σ`, from the structure jets.
    pub fn scalar_gradient(&self, which: Scalar, at: &TMPoint) -> Result<TMVector> {
        let d = self.structure.differentials(&self.chart, at)?;
        self.raise(at, pick(&d, which))
    }

    pub fn apply_j(&self, a: &TMVector) -> Result<TMVector> {
        iso::apply_j(&self.structure, &self.chart, a)
    }

    /// The matrix of `J` in induced coordinates.
    pub fn j_matrix(&self, at: &TMPoint) -> Result<DMatrix<f64>> {
        let m = 2 * at.dim();
        let mut out = DMatrix::zeros(m, m);
        for c in 0..m {
            let mut e = DVector::zeros(m);
            e[c] = 1.0;
            let ja = self.apply_j(&TMVector::from_components(at.clone(), &e))?;
            out.set_column(c, &ja.components());
        }
        Ok(out)
    }

    /// `dΘ(JA, B)` with `dΘ(C, B) = C(Θ(B̃)) − B(Θ(C̃))` for constant-coefficient
    /// extensions, whose bracket vanishes.
    pub fn metric_from_liouville(&self, a: &TMVector, b: &TMVector) -> Result<f64> {
        if a.at != b.at {
            return Err(GeomError::PointMismatch);
        }
        let c = self.apply_j(a)?;
        let theta = |w: &TMVector| {
            let dx = w.dx.clone();
            move |q: &TMPoint| tbundle::liouville_form(&self.chart, &TMVector::new(q.clone(), dx.clone(), DVector::zeros(q.dim())))
        };
        let cb = tbundle::directional_derivative(&self.chart, theta(b), &c)?;
        let bc = tbundle::directional_derivative(&self.chart, theta(&c), b)?;
        Ok(cb - bc)
    }
}

fn pick(d: &StructureDifferentials, which: Scalar) -> &DVector<f64> {
    match which {
        Scalar::Alpha => &d.alpha,
        Scalar::Delta => &d.delta,
        Scalar::Sigma => &d.sigma,
    }
}

/// `(π_*(∇̄f), K(∇̄f))` at `(p, X(p))`.
pub fn x1_x2_fields(m: &TangentMetric, which: Scalar, x: &VectorField, p: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let at = TMPoint::new(p.clone(), x.eval(p));
    let grad = m.scalar_gradient(which, &at)?;
    tbundle::decompose(m.chart(), &grad)
}

/// Unit normal of `S(M)` in `(TM, g_{δ,σ})`: `√α((σ/α) u^h + u^v)`.
pub fn unit_normal(m: &TangentMetric, at: &TMPoint) -> Result<TMVector> {
    let norm_sq = m.chart().norm_sq(&at.base, &at.fiber)?;
    if (norm_sq - 1.0).abs() > 1e-9 {
        return Err(GeomError::NotUnitFiber { norm_sq });
    }
    let v = m.structure().values(m.chart(), at)?;
    let s = v.alpha.sqrt();
    tbundle::lift(m.chart(), &(&at.fiber * (s * v.sigma / v.alpha)), &(&at.fiber * s), at)
}

/// The g-natural coefficients `α₁ = δ`, `α₂ = −σ`, `α₃ = α − δ` (all `β_i = 0`)
/// as functions of `r² = g(u,u)`.
pub fn gnatural_coefficients(s: &IsotropicStructure) -> Result<impl Fn(f64) -> Option<(f64, f64, f64)> + '_> {
    let (delta, sigma) = s.radial_profiles()?;
    Ok(move |r2: f64| {
        let e = 0.5 * r2;
        let d = delta(e)?;
        let sg = sigma(e)?;
        let a = (1.0 + sg * sg) / d;
        Some((d, -sg, a - d))
    })
}

/// Which lift pair `∇̄_{X^a} Y^b` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConnectionKind {
    HH,
    HV,
    VH,
    VV,
}

impl ConnectionKind {
    pub const ALL: [ConnectionKind; 4] = [Self::HH, Self::HV, Self::VH, Self::VV];

    pub fn first_horizontal(self) -> bool {
        matches!(self, Self::HH | Self::HV)
    }

    pub fn second_horizontal(self) -> bool {
        matches!(self, Self::HH | Self::VH)
    }
}

impl fmt::Display for ConnectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HH => "hh",
            Self::HV => "hv",
            Self::VH => "vh",
            Self::VV => "vv",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionValue {
    pub result: TMVector,
    pub terms: Vec<(&'static str, TMVector)>,
}

impl ConnectionValue {
    fn from_terms(at: &TMPoint, terms: Vec<(&'static str, TMVector)>) -> Result<Self> {
        let mut result = TMVector::zero(at.clone());
        for (_, t) in &terms {
            result = result.add(t)?;
        }
        Ok(Self { result, terms })
    }
}

/// Everything the closed-form connection needs at one point.
struct Ingredients {
    x: DVector<f64>,
    y: DVector<f64>,
    u: DVector<f64>,
    gxy: f64,
    nxy: DVector<f64>,
    delta: f64,
    sigma: f64,
    alpha: f64,
    riemann: crate::geom::Riemann,
    diffs: StructureDifferentials,
    hx: TMVector,
    hy: TMVector,
    vx: TMVector,
    vy: TMVector,
}

impl Ingredients {
    fn new(m: &TangentMetric, fx: &VectorField, fy: &VectorField, at: &TMPoint) -> Result<Self> {
        let chart = m.chart();
        let p = &at.base;
        let x = fx.eval(p);
        let y = fy.eval(p);
        let v = m.structure().values(chart, at)?;
        Ok(Self {
            gxy: chart.inner(p, &x, &y)?,
            nxy: chart.covariant_derivative(fy, &x, p)?,
            riemann: chart.riemann(p)?,
            diffs: m.structure().differentials(chart, at)?,
            hx: tbundle::horizontal_lift(chart, &x, at)?,
            hy: tbundle::horizontal_lift(chart, &y, at)?,
            vx: tbundle::vertical_lift(chart, &x, at)?,
            vy: tbundle::vertical_lift(chart, &y, at)?,
            u: at.fiber.clone(),
            delta: v.delta,
            sigma: v.sigma,
            alpha: v.alpha,
            x,
            y,
        })
    }

    /// `(dα, dδ, dσ)` along a lifted vector.
    fn d(&self, a: &TMVector) -> (f64, f64, f64) {
        self.diffs.along(a)
    }

    fn r(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
        self.riemann.apply(a, b, c)
    }
}

/// Levi-Civita connection of `g_{δ,σ}` on lifted fields, in closed form.
///
/// With `D` the connection `D_{X^h}Y^h = (∇_X Y)^h`, `D_{X^h}Y^v = (∇_X Y)^v`,
/// `D_{X^v} = 0`, the difference `∇̄ − D` is
/// `½(δP + σQ)^h + ½(σP + αQ)^v + ½ c g(X,Y) ∇̄φ`, where `P` and `Q` are the
/// parts of `2G(∇̄ − D, ·)` paired with `Z^h` and `Z^v`:
///
/// | kind | `P` | `Q` | `c ∇̄φ` |
/// |------|-----|-----|--------|
/// | hh | `X^h(α)Y + Y^h(α)X − 2σR(u,X)Y` | `−X^h(σ)Y − Y^h(σ)X − δR(X,Y)u` | `−∇̄α` |
/// | hv | `−X^h(σ)Y + Y^v(α)X + δR(u,Y)X` | `X^h(δ)Y − Y^v(σ)X` | `+∇̄σ` |
/// | vh | `X^v(α)Y − Y^h(σ)X + δR(u,X)Y` | `−X^v(σ)Y + Y^h(δ)X` | `+∇̄σ` |
/// | vv | `−X^v(σ)Y − Y^v(σ)X` | `X^v(δ)Y + Y^v(δ)X` | `−∇̄δ` |
pub fn levi_civita_closed(
    m: &TangentMetric,
    fx: &VectorField,
    fy: &VectorField,
    kind: ConnectionKind,
    at: &TMPoint,
) -> Result<ConnectionValue> {
    let chart = m.chart();
    let ing = Ingredients::new(m, fx, fy, at)?;
    let (x, y, u) = (&ing.x, &ing.y, &ing.u);
    let (delta, sigma, alpha) = (ing.delta, ing.sigma, ing.alpha);
    let zero = DVector::zeros(x.len());

    let (base, p_der, q_der, p_cur, q_cur, grad_sign, grad_of) = match kind {
        ConnectionKind::HH => {
            let (ax, _, sx) = ing.d(&ing.hx);
            let (ay, _, sy) = ing.d(&ing.hy);
            (
                tbundle::horizontal_lift(chart, &ing.nxy, at)?,
                y * ax + x * ay,
                -(y * sx) - x * sy,
                ing.r(u, x, y) * (-2.0 * sigma),
                ing.r(x, y, u) * (-delta),
                -1.0,
                Scalar::Alpha,
            )
        }
        ConnectionKind::HV => {
            let (_, dx, sx) = ing.d(&ing.hx);
            let (ay, _, sy) = ing.d(&ing.vy);
            (
                tbundle::vertical_lift(chart, &ing.nxy, at)?,
                -(y * sx) + x * ay,
                y * dx - x * sy,
                ing.r(u, y, x) * delta,
                zero.clone(),
                1.0,
                Scalar::Sigma,
            )
        }
        ConnectionKind::VH => {
            let (ax, _, sx) = ing.d(&ing.vx);
            let (_, dy, sy) = ing.d(&ing.hy);
            (
                TMVector::zero(at.clone()),
                y * ax - x * sy,
                -(y * sx) + x * dy,
                ing.r(u, x, y) * delta,
                zero.clone(),
                1.0,
                Scalar::Sigma,
            )
        }
        ConnectionKind::VV => {
            let (_, dx, sx) = ing.d(&ing.vx);
            let (_, dy, sy) = ing.d(&ing.vy);
            (
                TMVector::zero(at.clone()),
                -(y * sx) - x * sy,
                y * dx + x * dy,
                zero.clone(),
                zero.clone(),
                -1.0,
                Scalar::Delta,
            )
        }
    };
    let assemble = |p: &DVector<f64>, q: &DVector<f64>| {
        tbundle::lift(chart, &((p * delta + q * sigma) * 0.5), &((p * sigma + q * alpha) * 0.5), at)
    };
    let gradient = m.raise(at, pick(&ing.diffs, grad_of))?.scale(0.5 * grad_sign * ing.gxy);
    ConnectionValue::from_terms(
        at,
        vec![
            ("lift", base),
            ("curvature", assemble(&p_cur, &q_cur)?),
            ("derivative", assemble(&p_der, &q_der)?),
            ("gradient", gradient),
        ],
    )
}

/// The connection formulas exactly as commonly displayed for this metric,
/// which treat the horizontal and vertical blocks as if they were
/// `g_{δ,σ}`-orthogonal. They coincide with [`levi_civita_closed`] when
/// `σ ≡ 0` and differ otherwise; kept for diagnostics.
pub fn levi_civita_as_printed(
    m: &TangentMetric,
    fx: &VectorField,
    fy: &VectorField,
    kind: ConnectionKind,
    at: &TMPoint,
) -> Result<ConnectionValue> {
    let chart = m.chart();
    let ing = Ingredients::new(m, fx, fy, at)?;
    let (x, y, u) = (&ing.x, &ing.y, &ing.u);
    let (delta, sigma, alpha) = (ing.delta, ing.sigma, ing.alpha);
    let h = |w: DVector<f64>| tbundle::horizontal_lift(chart, &w, at);
    let v = |w: DVector<f64>| tbundle::vertical_lift(chart, &w, at);
    let half_g = 0.5 * ing.gxy;
    let terms: Vec<(&'static str, TMVector)> = match kind {
        ConnectionKind::HH => {
            let (ax, _, sx) = ing.d(&ing.hx);
            let (ay, _, sy) = ing.d(&ing.hy);
            vec![
                ("lift", h(ing.nxy.clone())?.add(&v(&ing.nxy * (-sigma / delta))?)?),
                ("curvature", h(ing.r(u, x, y) * (-sigma / alpha))?.add(&v(ing.r(x, y, u) * -0.5)?)?),
                (
                    "derivative",
                    h((y * ax + x * ay) / (2.0 * alpha))?.add(&v(-(y * sx + x * sy) / (2.0 * delta))?)?,
                ),
                ("gradient", m.scalar_gradient(Scalar::Alpha, at)?.scale(-half_g)),
            ]
        }
        ConnectionKind::HV => {
            let (_, dx, sx) = ing.d(&ing.hx);
            let (ay, _, sy) = ing.d(&ing.vy);
            vec![
                ("lift", h(&ing.nxy * (-sigma / alpha))?.add(&v(ing.nxy.clone())?)?),
                ("curvature", h(ing.r(u, y, x) * (delta / (2.0 * alpha)))?),
                (
                    "derivative",
                    h((-(y * sx) + x * ay) / (2.0 * alpha))?.add(&v((y * dx - x * sy) / (2.0 * delta))?)?,
                ),
                ("gradient", m.scalar_gradient(Scalar::Sigma, at)?.scale(half_g)),
            ]
        }
        ConnectionKind::VH => {
            let (ax, _, sx) = ing.d(&ing.vx);
            let (_, dy, sy) = ing.d(&ing.hy);
            vec![
                ("curvature", h(ing.r(u, x, y) * (delta / (2.0 * alpha)))?),
                (
                    "derivative",
                    h((y * ax - x * sy) / (2.0 * alpha))?.add(&v((-(y * sx) + x * dy) / (2.0 * delta))?)?,
                ),
                ("gradient", m.scalar_gradient(Scalar::Sigma, at)?.scale(half_g)),
            ]
        }
        ConnectionKind::VV => {
            let (_, dx, sx) = ing.d(&ing.vx);
            let (_, dy, sy) = ing.d(&ing.vy);
            vec![
                (
                    "derivative",
                    h(-(y * sx + x * sy) / (2.0 * alpha))?.add(&v((y * dx + x * dy) / (2.0 * delta))?)?,
                ),
                ("gradient", m.scalar_gradient(Scalar::Delta, at)?.scale(-half_g)),
            ]
        }
    };
    ConnectionValue::from_terms(at, terms)
}

/// A vector field on `TM` given pointwise.
pub trait TMField: Fn(&TMPoint) -> Result<TMVector> {}
impl<T: Fn(&TMPoint) -> Result<TMVector>> TMField for T {}

/// `∇̄_F G` from the Koszul formula
/// `2G(∇̄_F G, H) = F G(G,H) + G G(H,F) − H G(F,G) + G([F,G],H) − G([G,H],F) + G([H,F],G)`
/// evaluated against the `2n` constant coordinate fields `H`, then solved
/// with the coordinate metric matrix.
pub fn koszul_oracle<F, G>(m: &TangentMetric, f: F, g: G, at: &TMPoint) -> Result<TMVector>
where
    F: TMField,
    G: TMField,
{
    let chart = m.chart();
    let dim = 2 * at.dim();
    let fv = f(at)?.components();
    let gv = g(at)?.components();
    let g0 = m.metric_matrix(at)?;
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&g0 * b));
    let fg = tbundle::bracket_fd(chart, &f, &g, at)?.components();
    let fa = TMVector::from_components(at.clone(), &fv);
    let ga = TMVector::from_components(at.clone(), &gv);

    let mut w = DVector::zeros(dim);
    for c in 0..dim {
        let mut e = DVector::zeros(dim);
        e[c] = 1.0;
        let ea = TMVector::from_components(at.clone(), &e);
        let h = |q: &TMPoint| Ok(TMVector::from_components(q.clone(), &e));
        let t1 = tbundle::directional_derivative(chart, metric_pairing(m, &g, &h), &fa)?;
        let t2 = tbundle::directional_derivative(chart, metric_pairing(m, &h, &f), &ga)?;
        let t3 = tbundle::directional_derivative(chart, metric_pairing(m, &f, &g), &ea)?;
        let gh = tbundle::bracket_fd(chart, &g, h, at)?.components();
        let hf = tbundle::bracket_fd(chart, h, &f, at)?.components();
        w[c] = t1 + t2 - t3 + ip(&fg, &e) - ip(&gh, &fv) + ip(&hf, &gv);
    }
    m.raise(at, &(w * 0.5))
}

fn metric_pairing<'a>(
    m: &'a TangentMetric,
    a: &'a dyn Fn(&TMPoint) -> Result<TMVector>,
    b: &'a dyn Fn(&TMPoint) -> Result<TMVector>,
) -> impl Fn(&TMPoint) -> Result<f64> + 'a {
    move |q| Ok(a(q)?.components().dot(&(m.metric_matrix(q)? * b(q)?.components())))
}

/// Componentwise max of `∇̄_F G − ∇̄_G F − [F, G]` for the Koszul oracle.
pub fn oracle_torsion_residual<F, G>(m: &TangentMetric, f: F, g: G, at: &TMPoint) -> Result<f64>
where
    F: TMField,
    G: TMField,
{
    let fg = koszul_oracle(m, &f, &g, at)?;
    let gf = koszul_oracle(m, &g, &f, at)?;
    let br = tbundle::bracket_fd(m.chart(), &f, &g, at)?;
    Ok(fg.sub(&gf)?.sub(&br)?.max_abs())
}

/// `|H G(F,G) − G(∇̄_H F, G) − G(F, ∇̄_H G)|` for the Koszul oracle.
pub fn oracle_compatibility_residual<F, G, H>(m: &TangentMetric, f: F, g: G, h: H, at: &TMPoint) -> Result<f64>
where
    F: TMField,
    G: TMField,
    H: TMField,
{
    let d = tbundle::directional_derivative(m.chart(), metric_pairing(m, &f, &g), &h(at)?)?;
    let hf = koszul_oracle(m, &h, &f, at)?;
    let hg = koszul_oracle(m, &h, &g, at)?;
    Ok((d - m.metric_eval(&hf, &g(at)?)? - m.metric_eval(&f(at)?, &hg)?).abs())
}

/// `X^h` or `X^v` as a field on `TM`.
pub fn lifted_field<'a>(chart: &'a RiemannianChart, x: &'a VectorField, horizontal: bool) -> Box<dyn Fn(&TMPoint) -> Result<TMVector> + 'a> {
    if horizontal {
        Box::new(tbundle::horizontal_field(chart, x))
    } else {
        Box::new(tbundle::vertical_field(chart, x))
    }
}

/// Koszul value of the connection block `kind` on the lifts of `X` and `Y`.
pub fn koszul_block(m: &TangentMetric, fx: &VectorField, fy: &VectorField, kind: ConnectionKind, at: &TMPoint) -> Result<TMVector> {
    let chart = m.chart();
    koszul_oracle(
        m,
        lifted_field(chart, fx, kind.first_horizontal()),
        lifted_field(chart, fy, kind.second_horizontal()),
        at,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn fields() -> (VectorField, VectorField) {
        let x = VectorField::new("X", |p| v(&[p[1].sin() + 1.0, p[0] * p[1]]));
        let y = VectorField::new("Y", |p| v(&[p[0].cos(), 0.5 - p[1] * p[1]]));
        (x, y)
    }

    fn sample() -> TMPoint {
        TMPoint::new(v(&[0.4, -0.7]), v(&[0.6, 0.3]))
    }

    #[test]
    fn sasaki_blocks_on_euclidean() {
        let m = TangentMetric::new(IsotropicStructure::sasaki(), RiemannianChart::euclidean(2));
        let at = sample();
        assert_eq!(m.metric_matrix(&at).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn general_family_blocks() {
        let m = TangentMetric::new(
            IsotropicStructure::family_general(1.0, 1.0, 0.0).unwrap(),
            RiemannianChart::euclidean(2),
        );
        let at = TMPoint::new(v(&[0.4, -0.7]), v(&[0.0, 0.0]));
        let x = v(&[1.0, 2.0]);
        let h = tbundle::horizontal_lift(m.chart(), &x, &at).unwrap();
        let vl = tbundle::vertical_lift(m.chart(), &x, &at).unwrap();
        assert!((m.metric_eval(&h, &h).unwrap() - 10.0).abs() < 1e-14);
        assert!((m.metric_eval(&h, &vl).unwrap() + 5.0).abs() < 1e-14);
        assert!((m.metric_eval(&vl, &vl).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn metric_eval_matches_matrix_and_is_j_invariant() {
        let m = TangentMetric::new(
            IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(),
            RiemannianChart::sphere_stereographic(2),
        );
        let at = sample();
        let a = TMVector::new(at.clone(), v(&[0.3, -1.0]), v(&[2.0, 0.7]));
        let b = TMVector::new(at.clone(), v(&[1.0, 0.2]), v(&[-0.4, 0.5]));
        let g = m.metric_matrix(&at).unwrap();
        let direct = m.metric_eval(&a, &b).unwrap();
        assert!((direct - a.components().dot(&(&g * b.components()))).abs() < 1e-12);
        let jj = m.metric_eval(&m.apply_j(&a).unwrap(), &m.apply_j(&b).unwrap()).unwrap();
        assert!((jj - direct).abs() < 1e-9);
        let jm = m.j_matrix(&at).unwrap();
        assert!((jm.transpose() * &g * &jm - &g).amax() < 1e-9);
    }

    #[test]
    fn liouville_definition_matches_blocks() {
        let m = TangentMetric::new(
            IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(),
            RiemannianChart::sphere_stereographic(2),
        );
        let at = sample();
        let a = TMVector::new(at.clone(), v(&[0.3, -1.0]), v(&[2.0, 0.7]));
        let b = TMVector::new(at.clone(), v(&[1.0, 0.2]), v(&[-0.4, 0.5]));
        let lhs = m.metric_from_liouville(&a, &b).unwrap();
        let rhs = m.metric_eval(&a, &b).unwrap();
        assert!((lhs - rhs).abs() < 1e-5 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn gradient_duality() {
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, 1.0), RiemannianChart::sphere_stereographic(2));
        let at = sample();
        let grad = m.scalar_gradient(Scalar::Alpha, &at).unwrap();
        let a = TMVector::new(at.clone(), v(&[0.3, -1.0]), v(&[2.0, 0.7]));
        let d = m.structure().differentials(m.chart(), &at).unwrap();
        let df = d.alpha.dot(&a.components());
        assert!((m.metric_eval(&grad, &a).unwrap() - df).abs() < 1e-8 * df.abs().max(1.0));
    }

    #[test]
    fn alpha_gradient_for_sigma0_on_space_form() {
        // ∇̄α = k u^v for δ = (2kE + b)^{-1/2}
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, 0.5), RiemannianChart::sphere_stereographic(2));
        let at = sample();
        let grad = m.scalar_gradient(Scalar::Alpha, &at).unwrap();
        let (h, k) = tbundle::decompose(m.chart(), &grad).unwrap();
        assert!(h.amax() < 1e-12);
        assert!((k - &at.fiber).amax() < 1e-12);
    }

    #[test]
    fn unit_normal_is_unit_and_normal() {
        let chart = RiemannianChart::sphere_stereographic(2);
        let x = v(&[0.4, -0.7]);
        let lam = 2.0 / (1.0 + x.norm_squared());
        let at = TMPoint::new(x, v(&[0.6, 0.8]) / lam);
        for s in [
            IsotropicStructure::sasaki(),
            IsotropicStructure::family_sigma0(1.0, 1.0),
            IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(),
        ] {
            let m = TangentMetric::new(s, chart.clone());
            let n = unit_normal(&m, &at).unwrap();
            assert!((m.metric_eval(&n, &n).unwrap() - 1.0).abs() < 1e-12);
            let h = tbundle::horizontal_lift(&chart, &v(&[0.3, 1.0]), &at).unwrap();
            assert!(m.metric_eval(&n, &h).unwrap().abs() < 1e-12);
            let perp = v(&[-at.fiber[1], at.fiber[0]]);
            let vl = tbundle::vertical_lift(&chart, &perp, &at).unwrap();
            assert!(m.metric_eval(&n, &vl).unwrap().abs() < 1e-12);
        }
        let m = TangentMetric::new(IsotropicStructure::sasaki(), chart.clone());
        assert!(matches!(unit_normal(&m, &sample()), Err(GeomError::NotUnitFiber { .. })));
    }

    #[test]
    fn gnatural_values() {
        let s = IsotropicStructure::family_general(1.0, 1.0, 0.0).unwrap();
        let f = gnatural_coefficients(&s).unwrap();
        let (a1, a2, a3) = f(0.0).unwrap();
        assert!((a1 - 1.0).abs() < 1e-15 && (a2 + 1.0).abs() < 1e-15 && (a3 - 1.0).abs() < 1e-15);
        let sas = IsotropicStructure::sasaki();
        assert_eq!(gnatural_coefficients(&sas).unwrap()(3.0), Some((1.0, -0.0, 0.0)));
        let custom = crate::iso::ComplexFieldZ::flat_example().to_structure();
        assert!(matches!(gnatural_coefficients(&custom), Err(GeomError::NotRadial(_))));
    }

    #[test]
    fn sasaki_flat_connection_blocks() {
        let m = TangentMetric::new(IsotropicStructure::sasaki(), RiemannianChart::euclidean(2));
        let (x, y) = fields();
        let at = sample();
        let hv = levi_civita_closed(&m, &x, &y, ConnectionKind::HV, &at).unwrap();
        let nxy = m.chart().covariant_derivative(&y, &x.eval(&at.base), &at.base).unwrap();
        assert!((&hv.result.dy - nxy).amax() < 1e-14 && hv.result.dx.amax() < 1e-14);
        let vv = levi_civita_closed(&m, &x, &y, ConnectionKind::VV, &at).unwrap();
        assert!(vv.result.max_abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_koszul() {
        let (x, y) = fields();
        let at = sample();
        for chart in [RiemannianChart::euclidean(2), RiemannianChart::sphere_stereographic(2)] {
            for s in [
                IsotropicStructure::sasaki(),
                IsotropicStructure::family_sigma0(1.0, 1.0),
                IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(),
            ] {
                let m = TangentMetric::new(s, chart.clone());
                for kind in ConnectionKind::ALL {
                    let closed = levi_civita_closed(&m, &x, &y, kind, &at).unwrap().result;
                    let oracle = koszul_block(&m, &x, &y, kind, &at).unwrap();
                    let err = closed.sub(&oracle).unwrap().max_abs() / oracle.max_abs().max(1.0);
                    assert!(err < 1e-5, "{} {} {kind}: {err}", chart.name(), m.structure().name());
                }
            }
        }
    }

    #[test]
    fn as_printed_agrees_only_without_sigma() {
        let (x, y) = fields();
        let at = sample();
        let chart = RiemannianChart::sphere_stereographic(2);
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, 1.0), chart.clone());
        for kind in ConnectionKind::ALL {
            let a = levi_civita_closed(&m, &x, &y, kind, &at).unwrap().result;
            let b = levi_civita_as_printed(&m, &x, &y, kind, &at).unwrap().result;
            assert!(a.sub(&b).unwrap().max_abs() < 1e-12, "{kind}");
        }
        let m = TangentMetric::new(IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(), chart);
        let a = levi_civita_closed(&m, &x, &y, ConnectionKind::HH, &at).unwrap().result;
        let b = levi_civita_as_printed(&m, &x, &y, ConnectionKind::HH, &at).unwrap().result;
        assert!(a.sub(&b).unwrap().max_abs() > 1e-3);
    }

    #[test]
    fn koszul_oracle_is_torsion_free_and_compatible() {
        let chart = RiemannianChart::sphere_stereographic(2);
        let m = TangentMetric::new(IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(), chart.clone());
        let (x, y) = fields();
        let at = sample();
        let f = tbundle::horizontal_field(&chart, &x);
        let g = tbundle::vertical_field(&chart, &y);
        let h = tbundle::horizontal_field(&chart, &y);
        assert!(oracle_torsion_residual(&m, &f, &g, &at).unwrap() < 1e-5);
        assert!(oracle_compatibility_residual(&m, &f, &g, &h, &at).unwrap() < 1e-5);
    }
}
