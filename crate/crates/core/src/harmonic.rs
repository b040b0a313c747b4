//! Vector fields as maps `M → (TM, g_{δ,σ})`: energy, tension, the unit
//! bundle tension `τ₁`, harmonic unit vector field residuals and the first
//! variation of the energy.
//!
//! The Laplacian follows the minus-trace convention
//! `Δ_g X = −Σ_i (∇_{V_i}∇_{V_i}X − ∇_{∇_{V_i}V_i}X)`.

use std::fmt;

use nalgebra::DVector;

use crate::error::{GeomError, Result};
use crate::fd;
use crate::geom::{RiemannianChart, VectorField};
use crate::gmetric::{self, TangentMetric};
use crate::iso::Scalar;
use crate::tbundle::{self, TMPoint, TMVector};
use crate::verdict::{Harmonicity, Thresholds, Verdict};

/// `X_{*p}(V) = V^h + (∇_V X)^v` at `(p, X(p))`.
pub fn pushforward(chart: &RiemannianChart, x: &VectorField, v: &DVector<f64>, p: &DVector<f64>) -> Result<TMVector> {
    let at = TMPoint::new(p.clone(), x.eval(p));
    tbundle::lift(chart, v, &chart.covariant_derivative(x, v, p)?, &at)
}

/// Differential of `p ↦ (p, X(p))` by central differences.
pub fn fd_pushforward(chart: &RiemannianChart, x: &VectorField, v: &DVector<f64>, p: &DVector<f64>) -> Result<TMVector> {
    chart.check(p)?;
    let dy = fd::directional_vector(
        |q| {
            chart.check(q)?;
            Ok(x.eval(q))
        },
        p,
        v,
        chart.fd().first,
        p.len(),
    )?;
    Ok(TMVector::new(TMPoint::new(p.clone(), x.eval(p)), v.clone(), dy))
}

/// `e(X) = ½(nα − 2σ div X + δ‖∇X‖²)` with the structure evaluated at `(p, X(p))`.
pub fn energy_density(m: &TangentMetric, x: &VectorField, p: &DVector<f64>) -> Result<f64> {
    let chart = m.chart();
    let at = TMPoint::new(p.clone(), x.eval(p));
    let s = m.structure().values(chart, &at)?;
    let n = chart.dim() as f64;
    let div = if s.sigma != 0.0 { chart.divergence(x, p)? } else { 0.0 };
    Ok(0.5 * (n * s.alpha - 2.0 * s.sigma * div + s.delta * chart.grad_norm_sq(x, p)?))
}

/// Midpoint tensor grid on an axis-aligned box. Cells whose midpoint lies
/// outside the chart domain are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub grid: usize,
}

impl Quadrature {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>, grid: usize) -> Self {
        Self { lo, hi, grid }
    }

    /// The whole bounding box of the chart domain.
    pub fn chart_box(chart: &RiemannianChart, grid: usize) -> Self {
        let d = chart.domain();
        Self::new(d.lo.clone(), d.hi.clone(), grid)
    }

    pub fn cell_volume(&self) -> f64 {
        (&self.hi - &self.lo).iter().map(|w| w / self.grid as f64).product()
    }

    /// Cell midpoints in lexicographic index order, first axis slowest.
    pub fn nodes(&self) -> Vec<DVector<f64>> {
        let n = self.lo.len();
        let total = self.grid.pow(n as u32);
        let h: Vec<f64> = (0..n).map(|i| (self.hi[i] - self.lo[i]) / self.grid as f64).collect();
        (0..total)
            .map(|mut idx| {
                let mut x = DVector::zeros(n);
                for ax in (0..n).rev() {
                    let k = idx % self.grid;
                    idx /= self.grid;
                    x[ax] = self.lo[ax] + (k as f64 + 0.5) * h[ax];
                }
                x
            })
            .collect()
    }

    /// `(node, √det g · cell volume)` for every node inside the chart domain.
    pub fn weighted_nodes(&self, chart: &RiemannianChart) -> Result<Vec<(DVector<f64>, f64)>> {
        let cv = self.cell_volume();
        self.nodes()
            .into_iter()
            .filter(|x| chart.contains(x))
            .map(|x| {
                let w = chart.volume_density(&x)? * cv;
                Ok((x, w))
            })
            .collect()
    }
}

/// Volume of the unit round sphere `Sⁿ`.
pub fn unit_sphere_volume(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * unit_sphere_volume(n - 2),
    }
}

/// Volume of the polar cap `{|x| > r}` of the stereographic chart of the unit `Sⁿ`,
/// a geodesic ball of radius `θ₀ = 2 arctan(1/r)` about the north pole.
pub fn polar_cap_volume(n: usize, r: f64) -> f64 {
    let theta0 = 2.0 * (1.0 / r).atan();
    // ∫₀^θ₀ sinⁿ⁻¹θ dθ by composite Simpson
    let steps = 2000;
    let h = theta0 / steps as f64;
    let f = |t: f64| t.sin().powi(n as i32 - 1);
    let mut s = f(0.0) + f(theta0);
    for i in 1..steps {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    unit_sphere_volume(n - 1) * s * h / 3.0
}

/// Contribution of the part of a compact space-form chart not covered by
/// the quadrature cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CapCorrection {
    /// Analytic volume of the geometric polar cap outside the chart ball.
    pub cap_volume: f64,
    /// Total volume minus the quadrature of `1` over the covered cells.
    pub uncovered_volume: f64,
    /// Mean density over the outermost shell of covered cells.
    pub shell_density: f64,
    /// `uncovered_volume · shell_density`, added to the total.
    pub correction: f64,
    /// `uncovered_volume · max |density|` on the shell.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    pub grid_total: f64,
    pub nodes: usize,
    pub quadrature: Quadrature,
    pub min_density: f64,
    pub max_density: f64,
    pub cap: Option<CapCorrection>,
}

/// `E(X) = ∫ e(X) dvol_g` by midpoint quadrature. On a stereographic chart
/// of the unit sphere covering the whole domain the excluded polar cap is
/// added back with a [`CapCorrection`].
pub fn energy(m: &TangentMetric, x: &VectorField, quad: &Quadrature) -> Result<EnergyReport> {
    energy_of(m.chart(), quad, |p| energy_density(m, x, p))
}

fn energy_of<F>(chart: &RiemannianChart, quad: &Quadrature, density: F) -> Result<EnergyReport>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let nodes = quad.weighted_nodes(chart)?;
    let mut total = 0.0;
    let mut covered = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let radius = chart.domain().max_radius;
    let n = chart.dim();
    let h_max = (&quad.hi - &quad.lo).amax() / quad.grid as f64;
    let shell_inner = radius.map(|r| r - h_max * (n as f64).sqrt());
    let (mut shell_sum, mut shell_count, mut shell_max) = (0.0, 0usize, 0.0_f64);
    for (p, w) in &nodes {
        let e = density(p)?;
        total += e * w;
        covered += w;
        lo = lo.min(e);
        hi = hi.max(e);
        if let Some(inner) = shell_inner {
            if p.norm() >= inner {
                shell_sum += e;
                shell_count += 1;
                shell_max = shell_max.max(e.abs());
            }
        }
    }
    let covers_chart = quad.lo == chart.domain().lo && quad.hi == chart.domain().hi;
    let cap = match (chart.conformal_factor().and_then(|c| c.curvature()), radius) {
        (Some(k), Some(r)) if k == 1.0 && covers_chart && shell_count > 0 => {
            let uncovered = unit_sphere_volume(n) - covered;
            let shell_density = shell_sum / shell_count as f64;
            Some(CapCorrection {
                cap_volume: polar_cap_volume(n, r),
                uncovered_volume: uncovered,
                shell_density,
                correction: uncovered * shell_density,
                bound: uncovered.abs() * shell_max,
            })
        }
        _ => None,
    };
    Ok(EnergyReport {
        total: total + cap.as_ref().map_or(0.0, |c| c.correction),
        grid_total: total,
        nodes: nodes.len(),
        quadrature: quad.clone(),
        min_density: lo,
        max_density: hi,
        cap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensionSource {
    ClosedForm,
    Sigma0,
    Oracle,
}

impl fmt::Display for TensionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClosedForm => "closed_form",
            Self::Sigma0 => "sigma0",
            Self::Oracle => "oracle",
        })
    }
}

/// A tangent vector to `TM` at `(p, X(p))` split into its horizontal and
/// vertical parts, with an optional per-term breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct TensionReport {
    pub horizontal: DVector<f64>,
    pub vertical: DVector<f64>,
    pub assembled: TMVector,
    pub source: TensionSource,
    pub terms: Vec<(&'static str, DVector<f64>, DVector<f64>)>,
}

impl TensionReport {
    fn new(chart: &RiemannianChart, at: &TMPoint, h: DVector<f64>, v: DVector<f64>, source: TensionSource) -> Result<Self> {
        Ok(Self {
            assembled: tbundle::lift(chart, &h, &v, at)?,
            horizontal: h,
            vertical: v,
            source,
            terms: Vec::new(),
        })
    }

    /// Componentwise max gap between two reports.
    pub fn max_gap(&self, other: &Self) -> f64 {
        (&self.horizontal - &other.horizontal)
            .amax()
            .max((&self.vertical - &other.vertical).amax())
    }

    pub fn max_abs(&self) -> f64 {
        self.horizontal.amax().max(self.vertical.amax())
    }
}

/// Base-manifold quantities entering every tension formula.
struct Ingredients {
    at: TMPoint,
    n: usize,
    frame: Vec<DVector<f64>>,
    w: Vec<DVector<f64>>,
    nabla: nalgebra::DMatrix<f64>,
    g: nalgebra::DMatrix<f64>,
    div: f64,
    grad_sq: f64,
    laplacian: DVector<f64>,
    curvature_trace: DVector<f64>,
}

impl Ingredients {
    fn new(chart: &RiemannianChart, x: &VectorField, p: &DVector<f64>) -> Result<Self> {
        let nabla = chart.nabla(x, p)?;
        let frame = chart.orthonormal_frame(p)?;
        let w: Vec<_> = frame.iter().map(|e| &nabla * e).collect();
        let g = chart.metric(p)?;
        Ok(Self {
            at: TMPoint::new(p.clone(), x.eval(p)),
            n: chart.dim(),
            div: frame.iter().zip(&w).map(|(e, wi)| wi.dot(&(&g * e))).sum(),
            grad_sq: w.iter().map(|wi| wi.dot(&(&g * wi))).sum(),
            laplacian: chart.rough_laplacian(x, p)?,
            curvature_trace: chart.curvature_trace(x, p)?,
            frame,
            w,
            nabla,
            g,
        })
    }

    fn ip(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(&self.g * b))
    }

    /// `Σ g(b, W_i) V_i`.
    fn t(&self, b: &DVector<f64>) -> DVector<f64> {
        self.frame.iter().zip(&self.w).fold(DVector::zeros(self.n), |acc, (e, wi)| acc + e * self.ip(b, wi))
    }

    /// `Σ g(b, W_i) W_i`.
    fn q(&self, b: &DVector<f64>) -> DVector<f64> {
        self.w.iter().fold(DVector::zeros(self.n), |acc, wi| acc + wi * self.ip(b, wi))
    }

    /// `∇_a X`.
    fn nab(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.nabla * a
    }
}

fn split_gradient(m: &TangentMetric, which: Scalar, at: &TMPoint) -> Result<(DVector<f64>, DVector<f64>)> {
    tbundle::decompose(m.chart(), &m.scalar_gradient(which, at)?)
}

/// Tension of `X: M → (TM, g_{δ,σ})` for general `σ`.
///
/// With `u = X(p)`, `W_i = ∇_{V_i}X`, `(Φ₁, Φ₂) = (π_*∇̄φ, K∇̄φ)` for
/// `φ ∈ {α, δ, σ}` (written `X_i`, `Y_i`, `Z_i`), `a_φ = αΦ₁ − σΦ₂`,
/// `b_φ = δΦ₂ − σΦ₁`, `T(b) = Σ g(b,W_i)V_i`, `Q(b) = Σ g(b,W_i)W_i`:
///
/// `P̄ = a_α − σRic(u) − ∇_{a_σ}X + T(b_α) + δ Σ R(u,W_i)V_i − Q(b_σ)`,
/// `Q̄ = −a_σ + ∇_{a_δ}X − T(b_σ) + Q(b_δ)`,
///
/// `τ^h = δP̄ + σQ̄ − (n/2)X₁ + div X·Z₁ − ½‖∇X‖²Y₁`,
/// `τ^v = −Δ_gX + σP̄ + αQ̄ − (n/2)X₂ + div X·Z₂ − ½‖∇X‖²Y₂`.
pub fn tension_closed(m: &TangentMetric, x: &VectorField, p: &DVector<f64>) -> Result<TensionReport> {
    let chart = m.chart();
    let ing = Ingredients::new(chart, x, p)?;
    let at = &ing.at;
    if !m.structure().sigma_vanishes() && !m.structure().has_jets() {
        return Err(GeomError::JetRequired(format!("tension of `{}` with non-zero sigma", m.structure().name())));
    }
    let s = m.structure().values(chart, at)?;
    let (delta, sigma, alpha) = (s.delta, s.sigma, s.alpha);
    let (x1, x2) = split_gradient(m, Scalar::Alpha, at)?;
    let (y1, y2) = split_gradient(m, Scalar::Delta, at)?;
    let (z1, z2) = split_gradient(m, Scalar::Sigma, at)?;
    let a = |f1: &DVector<f64>, f2: &DVector<f64>| f1 * alpha - f2 * sigma;
    let b = |f1: &DVector<f64>, f2: &DVector<f64>| f2 * delta - f1 * sigma;
    let (a_alpha, b_alpha) = (a(&x1, &x2), b(&x1, &x2));
    let (a_delta, b_delta) = (a(&y1, &y2), b(&y1, &y2));
    let (a_sigma, b_sigma) = (a(&z1, &z2), b(&z1, &z2));
    let ric_u = if sigma != 0.0 {
        chart.ricci_operator(p, &at.fiber)?
    } else {
        DVector::zeros(ing.n)
    };

    let p_der = &a_alpha - ing.nab(&a_sigma) + ing.t(&b_alpha) - ing.q(&b_sigma);
    let p_cur = &ing.curvature_trace * delta - &ric_u * sigma;
    let q_der = -&a_sigma + ing.nab(&a_delta) - ing.t(&b_sigma) + ing.q(&b_delta);
    let half_n = ing.n as f64 / 2.0;
    let grad_h = -(&x1 * half_n) + &z1 * ing.div - &y1 * (0.5 * ing.grad_sq);
    let grad_v = -(&x2 * half_n) + &z2 * ing.div - &y2 * (0.5 * ing.grad_sq);

    let terms = vec![
        ("laplacian", DVector::zeros(ing.n), -&ing.laplacian),
        ("curvature", &p_cur * delta, &p_cur * sigma),
        ("derivative", &p_der * delta + &q_der * sigma, &p_der * sigma + &q_der * alpha),
        ("gradient", grad_h, grad_v),
    ];
    let h = terms.iter().fold(DVector::zeros(ing.n), |acc, t| acc + &t.1);
    let v = terms.iter().fold(DVector::zeros(ing.n), |acc, t| acc + &t.2);
    let mut r = TensionReport::new(chart, at, h, v, TensionSource::ClosedForm)?;
    r.terms = terms;
    Ok(r)
}

/// Tension for `σ ≡ 0`, in terms of `α` and `(X₁, X₂)` only:
///
/// `τ^h = (1 − n/2 + ‖∇X‖²/(2α²))X₁ + α⁻² Σ g(X₂,W_i)V_i + α⁻² Σ R(u,W_i)V_i`,
/// `τ^v = −Δ_gX − ∇_{X₁}X − α⁻² Σ g(X₂,W_i)W_i + (‖∇X‖²/(2α²) − n/2)X₂`.
pub fn tension_sigma0(m: &TangentMetric, x: &VectorField, p: &DVector<f64>) -> Result<TensionReport> {
    if !m.structure().sigma_vanishes() {
        return Err(GeomError::SigmaNotZero(m.structure().name().to_string()));
    }
    let chart = m.chart();
    let ing = Ingredients::new(chart, x, p)?;
    let at = &ing.at;
    let alpha = m.structure().values(chart, at)?.alpha;
    let (x1, x2) = split_gradient(m, Scalar::Alpha, at)?;
    let a2 = alpha * alpha;
    let half_n = ing.n as f64 / 2.0;
    let terms = vec![
        ("laplacian", DVector::zeros(ing.n), -&ing.laplacian),
        ("curvature", &ing.curvature_trace / a2, DVector::zeros(ing.n)),
        (
            "x1",
            &x1 * (1.0 - half_n + ing.grad_sq / (2.0 * a2)),
            -ing.nab(&x1),
        ),
        (
            "x2",
            ing.t(&x2) / a2,
            -(ing.q(&x2) / a2) + &x2 * (ing.grad_sq / (2.0 * a2) - half_n),
        ),
    ];
    let h = terms.iter().fold(DVector::zeros(ing.n), |acc, t| acc + &t.1);
    let v = terms.iter().fold(DVector::zeros(ing.n), |acc, t| acc + &t.2);
    let mut r = TensionReport::new(chart, at, h, v, TensionSource::Sigma0)?;
    r.terms = terms;
    Ok(r)
}

/// `τ = Σ_i ∇̄_{X_*V_i} X_*V_i − X_*(∇_{V_i}V_i)` with `∇̄` from the Koszul
/// oracle and the frame taken in the given coordinate order.
pub fn tension_oracle_ordered(m: &TangentMetric, x: &VectorField, p: &DVector<f64>, order: &[usize]) -> Result<TensionReport> {
    let chart = m.chart();
    let at = TMPoint::new(p.clone(), x.eval(p));
    let n = chart.dim();
    let mut total = TMVector::zero(at.clone());
    for i in 0..n {
        let frame_field = {
            let order = order.to_vec();
            let c = chart.clone();
            VectorField::new(format!("frame{i}"), move |q| {
                c.orthonormal_frame_ordered(q, &order).map(|f| f[i].clone()).unwrap_or_else(|_| DVector::from_element(q.len(), f64::NAN))
            })
        };
        let lifted = |q: &TMPoint| {
            let e = frame_field.eval(&q.base);
            tbundle::lift(chart, &e, &chart.covariant_derivative(x, &e, &q.base)?, q)
        };
        let nabla_ff = gmetric::koszul_oracle(m, lifted, lifted, &at)?;
        let vi = frame_field.eval(p);
        let nvv = chart.covariant_derivative(&frame_field, &vi, p)?;
        total = total.add(&nabla_ff)?.sub(&pushforward(chart, x, &nvv, p)?)?;
    }
    let (h, v) = tbundle::decompose(chart, &total)?;
    TensionReport::new(chart, &at, h, v, TensionSource::Oracle)
}

pub fn tension_oracle(m: &TangentMetric, x: &VectorField, p: &DVector<f64>) -> Result<TensionReport> {
    let order: Vec<usize> = (0..m.chart().dim()).collect();
    tension_oracle_ordered(m, x, p, &order)
}

fn require_unit(chart: &RiemannianChart, x: &VectorField, p: &DVector<f64>) -> Result<()> {
    let norm_sq = chart.norm_sq(p, &x.eval(p))?;
    if (norm_sq - 1.0).abs() > 1e-9 {
        return Err(GeomError::NotUnitField { norm_sq });
    }
    Ok(())
}

fn require_sigma0(m: &TangentMetric) -> Result<()> {
    if m.structure().sigma_vanishes() {
        Ok(())
    } else {
        Err(GeomError::SigmaNotZero(m.structure().name().to_string()))
    }
}

/// Tangential part of a tension with respect to the unit normal of `S(M)`.
pub fn project_tangent(m: &TangentMetric, tau: &TensionReport) -> Result<TensionReport> {
    let chart = m.chart();
    let at = &tau.assembled.at;
    let normal = gmetric::unit_normal(m, at)?;
    let c = m.metric_eval(&tau.assembled, &normal)?;
    let t1 = tau.assembled.sub(&normal.scale(c))?;
    let (h, v) = tbundle::decompose(chart, &t1)?;
    TensionReport::new(chart, at, h, v, tau.source)
}

/// `τ₁(X) = τ(X) − g_{δ,0}(τ(X), N) N` for a unit field and `σ ≡ 0`.
pub fn tau1(m: &TangentMetric, x: &VectorField, p: &DVector<f64>, source: TensionSource) -> Result<TensionReport> {
    require_sigma0(m)?;
    require_unit(m.chart(), x, p)?;
    let tau = match source {
        TensionSource::ClosedForm => tension_closed(m, x, p)?,
        TensionSource::Sigma0 => tension_sigma0(m, x, p)?,
        TensionSource::Oracle => tension_oracle(m, x, p)?,
    };
    project_tangent(m, &tau)
}

/// Vertical part of `τ₁` written out for a unit field and `σ ≡ 0`:
/// `−Δ_gX + ‖∇X‖²X − ∇_{X₁}X − α⁻² Σ g(X₂,W_i)W_i + c(X₂ − g(X₂,X)X)`
/// with `c = ‖∇X‖²/(2α²) − n/2`.
pub fn tau1_vertical_expanded(m: &TangentMetric, x: &VectorField, p: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(harmonic_terms(m, x, p)?.vertical_tau1())
}

struct HarmonicTerms {
    laplacian: DVector<f64>,
    grad_term: DVector<f64>,
    x2_term: DVector<f64>,
    x1_term: DVector<f64>,
    trace_term: DVector<f64>,
}

impl HarmonicTerms {
    /// The right-hand side `F` of `Δ_gX = F`.
    fn rhs(&self) -> DVector<f64> {
        &self.grad_term + &self.x2_term - &self.x1_term - &self.trace_term
    }

    fn vertical_tau1(&self) -> DVector<f64> {
        self.rhs() - &self.laplacian
    }
}

fn harmonic_terms(m: &TangentMetric, x: &VectorField, p: &DVector<f64>) -> Result<HarmonicTerms> {
    require_sigma0(m)?;
    let chart = m.chart();
    require_unit(chart, x, p)?;
    let ing = Ingredients::new(chart, x, p)?;
    let xv = &ing.at.fiber;
    let alpha = m.structure().values(chart, &ing.at)?.alpha;
    let (x1, x2) = split_gradient(m, Scalar::Alpha, &ing.at)?;
    let c = ing.grad_sq / (2.0 * alpha * alpha) - ing.n as f64 / 2.0;
    Ok(HarmonicTerms {
        grad_term: xv * ing.grad_sq,
        x2_term: (&x2 - xv * ing.ip(&x2, xv)) * c,
        x1_term: ing.nab(&x1),
        trace_term: ing.q(&x2) / (alpha * alpha),
        laplacian: ing.laplacian,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicityVerdict {
    pub residual_norm: f64,
    pub tolerance: f64,
    pub verdict: Harmonicity,
    pub breakdown: Vec<(&'static str, DVector<f64>)>,
}

/// Residual of the harmonic unit vector field equation
/// `Δ_gX = ‖∇X‖²X + c(X₂ − g(X₂,X)X) − ∇_{X₁}X − α⁻² Σ g(X₂,W_i)W_i`,
/// measured in the `g`-norm.
pub fn harmonic_unit_residual(m: &TangentMetric, x: &VectorField, p: &DVector<f64>, t: &Thresholds) -> Result<HarmonicityVerdict> {
    let terms = harmonic_terms(m, x, p)?;
    let r = &terms.laplacian - terms.rhs();
    let norm = m.chart().norm_sq(p, &r)?.max(0.0).sqrt();
    Ok(HarmonicityVerdict {
        residual_norm: norm,
        tolerance: t.accept,
        verdict: t.classify(norm).into(),
        breakdown: vec![
            ("laplacian", terms.laplacian),
            ("grad_norm_x", terms.grad_term),
            ("x2_normal", terms.x2_term),
            ("nabla_x1", terms.x1_term),
            ("alpha_trace", terms.trace_term),
            ("residual", r),
        ],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCheck {
    /// `g`-norm of `(1 − n/2) X₁`.
    pub horizontal_residual: f64,
    /// `g`-norm of `X₂ − g(X₂,X)X`.
    pub vertical_residual: f64,
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub verdict: Verdict,
}

/// For a parallel unit field and `σ ≡ 0`, `X` is a harmonic map into
/// `S(M)` iff `(1 − n/2)X₁ = 0` and `X₂` is parallel to `X`.
pub fn parallel_field_check(m: &TangentMetric, x: &VectorField, p: &DVector<f64>, t: &Thresholds) -> Result<ParallelCheck> {
    require_sigma0(m)?;
    let chart = m.chart();
    require_unit(chart, x, p)?;
    let grad_sq = chart.grad_norm_sq(x, p)?;
    if grad_sq > 1e-8 {
        return Err(GeomError::NotParallel { norm_sq: grad_sq });
    }
    let at = TMPoint::new(p.clone(), x.eval(p));
    let (x1, x2) = split_gradient(m, Scalar::Alpha, &at)?;
    let n = chart.dim() as f64;
    let h = &x1 * (1.0 - n / 2.0);
    let v = &x2 - &at.fiber * chart.inner(p, &x2, &at.fiber)?;
    let hr = chart.norm_sq(p, &h)?.max(0.0).sqrt();
    let vr = chart.norm_sq(p, &v)?.max(0.0).sqrt();
    Ok(ParallelCheck {
        horizontal_residual: hr,
        vertical_residual: vr,
        x1,
        x2,
        verdict: t.classify(hr.max(vr)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstVariation {
    /// `d/dt E(U_t)` at `t = 0` by Richardson-extrapolated central differences.
    pub lhs: f64,
    /// `−∫ g_{δ,0}(V^v, τ₁(X)) dvol_g`.
    pub rhs: f64,
    /// `|lhs − rhs| / max(|lhs|, |rhs|)`, zero when both vanish.
    pub rel_gap: f64,
}

/// `U_t = (X + tV)/|X + tV|`.
pub fn normalized_variation(chart: &RiemannianChart, x: &VectorField, v: &VectorField, t: f64) -> VectorField {
    let (c, x, v) = (chart.clone(), x.clone(), v.clone());
    VectorField::new(format!("U({t})"), move |p| {
        let w = x.eval(p) + v.eval(p) * t;
        let n = c.metric(p).map(|g| w.dot(&(g * &w)).sqrt()).unwrap_or(f64::NAN);
        w / n
    })
}

/// Compares the derivative of the energy along `U_t` with the first
/// variation formula. `V` must be orthogonal to `X` at every node and
/// should vanish near the boundary of a non-closed region.
pub fn first_variation_check(
    m: &TangentMetric,
    x: &VectorField,
    v: &VectorField,
    quad: &Quadrature,
    t_step: f64,
) -> Result<FirstVariation> {
    require_sigma0(m)?;
    let chart = m.chart();
    let nodes = quad.weighted_nodes(chart)?;
    for (p, _) in &nodes {
        let inner = chart.inner(p, &v.eval(p), &x.eval(p))?;
        if inner.abs() > 1e-9 {
            return Err(GeomError::NotOrthogonal { inner });
        }
    }
    let e = |t: f64| -> Result<f64> {
        let u = normalized_variation(chart, x, v, t);
        let mut s = 0.0;
        for (p, w) in &nodes {
            s += energy_density(m, &u, p)? * w;
        }
        Ok(s)
    };
    let d = |h: f64| -> Result<f64> { Ok((e(h)? - e(-h)?) / (2.0 * h)) };
    let lhs = (4.0 * d(t_step / 2.0)? - d(t_step)?) / 3.0;

    let mut rhs = 0.0;
    for (p, w) in &nodes {
        let vp = v.eval(p);
        if vp.iter().all(|c| *c == 0.0) {
            continue;
        }
        let t1 = tau1(m, x, p, TensionSource::Sigma0)?;
        let at = TMPoint::new(p.clone(), x.eval(p));
        let vv = tbundle::vertical_lift(chart, &vp, &at)?;
        rhs -= m.metric_eval(&vv, &t1.assembled)? * w;
    }
    let scale = lhs.abs().max(rhs.abs());
    Ok(FirstVariation {
        lhs,
        rhs,
        rel_gap: if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale },
    })
}

/// `V = φ(x)(c₀ + c₁x₁ + c₂x₂) X^⊥` on a two-dimensional conformal chart,
/// where `φ = Π(1 − s_i²)²` is a bump supported in the box `[lo, hi]`
/// (`s_i` the box coordinate rescaled to `[−1, 1]`) and `X^⊥` the unit
/// rotation of `X` by a right angle.
pub fn bump_normal_variation(
    chart: &RiemannianChart,
    x: &VectorField,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    coeffs: [f64; 3],
) -> Result<VectorField> {
    if chart.dim() != 2 {
        return Err(GeomError::Parameter("bump variation needs a 2-dimensional chart".into()));
    }
    let (x, lo, hi) = (x.clone(), lo.clone(), hi.clone());
    Ok(VectorField::new("bump_normal", move |p| {
        let mut phi = 1.0;
        for i in 0..2 {
            let s = (2.0 * p[i] - lo[i] - hi[i]) / (hi[i] - lo[i]);
            phi *= if s.abs() < 1.0 { (1.0 - s * s).powi(2) } else { 0.0 };
        }
        let xv = x.eval(p);
        let perp = DVector::from_vec(vec![-xv[1], xv[0]]);
        perp * (phi * (coeffs[0] + coeffs[1] * p[0] + coeffs[2] * p[1]))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{angle_unit_field, hopf_field, normalized_coordinate_field, rotated_unit_field};
    use crate::iso::IsotropicStructure;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn sasaki_s3() -> TangentMetric {
        TangentMetric::new(IsotropicStructure::sasaki(), RiemannianChart::sphere_stereographic(3))
    }

    #[test]
    fn pushforward_matches_fd() {
        let c = RiemannianChart::sphere_stereographic(3);
        let w1 = hopf_field(1).unwrap();
        let p = v(&[0.3, -0.2, 0.8]);
        let dir = v(&[0.5, 1.0, -0.4]);
        let a = pushforward(&c, &w1, &dir, &p).unwrap();
        let b = fd_pushforward(&c, &w1, &dir, &p).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-5);
    }

    #[test]
    fn parallel_field_on_euclidean() {
        let m = TangentMetric::new(IsotropicStructure::sasaki(), RiemannianChart::euclidean(2));
        let x = VectorField::constant("e1", v(&[1.0, 0.0]));
        let p = v(&[0.2, 0.3]);
        assert_eq!(energy_density(&m, &x, &p).unwrap(), 1.0);
        let t = tension_closed(&m, &x, &p).unwrap();
        assert!(t.max_abs() < 1e-12);
        let o = tension_oracle(&m, &x, &p).unwrap();
        assert!(o.max_abs() < 1e-6);
        let pc = parallel_field_check(&m, &x, &p, &Thresholds::default()).unwrap();
        assert_eq!(pc.verdict, Verdict::Holds);
    }

    #[test]
    fn hopf_energy_density_values() {
        let p = v(&[0.7, -0.1, 0.4]);
        let w1 = hopf_field(1).unwrap();
        let e = energy_density(&sasaki_s3(), &w1, &p).unwrap();
        assert!((e - 2.5).abs() < 1e-9);
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, 1.0), RiemannianChart::sphere_stereographic(3));
        let e = energy_density(&m, &w1, &p).unwrap();
        assert!((e - 2.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn sphere_volume_and_cap() {
        use std::f64::consts::PI;
        assert!((unit_sphere_volume(2) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-12);
        let t0 = 2.0 * 0.25f64.atan();
        let exact = 2.0 * PI * (t0 - t0.sin() * t0.cos());
        assert!((polar_cap_volume(3, 4.0) - exact).abs() < 1e-10);
        // S² cap: 2π(1 − cos θ₀)
        assert!((polar_cap_volume(2, 4.0) - 2.0 * PI * (1.0 - t0.cos())).abs() < 1e-10);
    }

    #[test]
    fn sasaki_hopf_tension_matches_oracle() {
        let m = sasaki_s3();
        let w1 = hopf_field(1).unwrap();
        let p = v(&[0.3, -0.2, 0.8]);
        let closed = tension_closed(&m, &w1, &p).unwrap();
        let oracle = tension_oracle(&m, &w1, &p).unwrap();
        assert!(closed.max_gap(&oracle) < 1e-4, "{}", closed.max_gap(&oracle));
        assert!((&oracle.vertical + w1.eval(&p) * 2.0).amax() < 1e-3);
        assert!(closed.horizontal.amax() < 1e-4);
    }

    #[test]
    fn general_family_tension_matches_oracle() {
        let m = TangentMetric::new(
            IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(),
            RiemannianChart::sphere_stereographic(2),
        );
        let x = rotated_unit_field(m.chart(), 0.4, [0.7, -0.3]).unwrap();
        let p = v(&[0.5, -0.6]);
        let closed = tension_closed(&m, &x, &p).unwrap();
        let oracle = tension_oracle(&m, &x, &p).unwrap();
        assert!(closed.max_gap(&oracle) < 1e-4, "{:?} vs {:?}", closed, oracle);
    }

    #[test]
    fn sigma0_forms_agree() {
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, 1.0), RiemannianChart::sphere_stereographic(2));
        let x = normalized_coordinate_field(m.chart(), 0);
        let p = v(&[0.5, -0.6]);
        let a = tension_closed(&m, &x, &p).unwrap();
        let b = tension_sigma0(&m, &x, &p).unwrap();
        assert!(a.max_gap(&b) < 1e-10);
        let o = tension_oracle(&m, &x, &p).unwrap();
        assert!(a.max_gap(&o) < 1e-4, "{}", a.max_gap(&o));
    }

    #[test]
    fn oracle_is_frame_order_independent() {
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, 1.0), RiemannianChart::sphere_stereographic(2));
        let x = rotated_unit_field(m.chart(), 0.1, [0.3, 0.9]).unwrap();
        let p = v(&[0.2, 0.4]);
        let a = tension_oracle_ordered(&m, &x, &p, &[0, 1]).unwrap();
        let b = tension_oracle_ordered(&m, &x, &p, &[1, 0]).unwrap();
        assert!(a.max_gap(&b) < 1e-6);
    }

    #[test]
    fn hopf_is_harmonic_unit_field() {
        let m = sasaki_s3();
        let w1 = hopf_field(1).unwrap();
        let p = v(&[0.3, -0.2, 0.8]);
        let t1 = tau1(&m, &w1, &p, TensionSource::Sigma0).unwrap();
        assert!(t1.max_abs() < 1e-4);
        let n = gmetric::unit_normal(&m, &t1.assembled.at).unwrap();
        assert!(m.metric_eval(&t1.assembled, &n).unwrap().abs() < 1e-9);
        let h = harmonic_unit_residual(&m, &w1, &p, &Thresholds::default()).unwrap();
        assert_eq!(h.verdict, Harmonicity::Harmonic);
        for b in [0.5, 1.0, 2.0] {
            let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, b), RiemannianChart::sphere_stereographic(3));
            let h = harmonic_unit_residual(&m, &w1, &p, &Thresholds::default()).unwrap();
            assert!(h.residual_norm < 1e-4, "b={b}: {}", h.residual_norm);
        }
    }

    #[test]
    fn tau1_forms_agree() {
        let m = TangentMetric::new(IsotropicStructure::family_sigma0(1.0, 0.5), RiemannianChart::sphere_stereographic(2));
        let x = rotated_unit_field(m.chart(), 0.3, [1.0, 0.5]).unwrap();
        let p = v(&[-0.3, 0.7]);
        let projected = tau1(&m, &x, &p, TensionSource::Sigma0).unwrap();
        let expanded = tau1_vertical_expanded(&m, &x, &p).unwrap();
        assert!((projected.vertical - expanded).amax() < 1e-5);
    }

    #[test]
    fn harmonicity_of_angle_fields_on_sphere() {
        let m = TangentMetric::new(IsotropicStructure::sasaki(), RiemannianChart::sphere_stereographic(2));
        let t = Thresholds::default();
        let p = v(&[0.8, 0.5]);
        // a harmonic angle function gives a harmonic unit field in dimension two
        let x = normalized_coordinate_field(m.chart(), 0);
        assert_eq!(harmonic_unit_residual(&m, &x, &p, &t).unwrap().verdict, Harmonicity::Harmonic);
        let x = angle_unit_field(m.chart(), 0.1, [0.3, -0.2], [0.7, 0.0, 0.0]).unwrap();
        assert_eq!(harmonic_unit_residual(&m, &x, &p, &t).unwrap().verdict, Harmonicity::NotHarmonic);
    }

    #[test]
    fn unit_checks() {
        let m = sasaki_s3();
        let x = VectorField::constant("c", v(&[1.0, 0.0, 0.0]));
        let r = tau1(&m, &x, &v(&[0.5, 0.5, 0.5]), TensionSource::Sigma0);
        assert!(matches!(r, Err(GeomError::NotUnitField { .. })));
        let g = TangentMetric::new(IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(), RiemannianChart::euclidean(2));
        let r = tension_sigma0(&g, &VectorField::constant("e", v(&[1.0, 0.0])), &v(&[0.0, 0.0]));
        assert!(matches!(r, Err(GeomError::SigmaNotZero(_))));
    }

    #[test]
    fn first_variation_on_sphere_patch() {
        let chart = RiemannianChart::sphere_stereographic(2);
        let m = TangentMetric::new(IsotropicStructure::sasaki(), chart.clone());
        let x = angle_unit_field(&chart, 0.2, [0.8, -0.5], [0.6, -0.3, 0.4]).unwrap();
        let (lo, hi) = (v(&[-1.0, -0.8]), v(&[0.9, 1.1]));
        let var = bump_normal_variation(&chart, &x, &lo, &hi, [1.0, 0.3, -0.4]).unwrap();
        let quad = Quadrature::new(lo, hi, 48);
        let fv = first_variation_check(&m, &x, &var, &quad, 1e-4).unwrap();
        assert!(fv.rel_gap < 1e-2, "{fv:?}");
        assert!(fv.lhs.abs() > 1e-3);
    }
}
