//! Isotropic almost complex structures `J_{δ,σ}` on `TM`.
//!
//! `J X^h = σ X^h + α X^v` and `J X^v = −δ X^h − σ X^v`, with
//! `α = (1 + σ²)/δ` so that `J² = −1`. The scalar fields `δ` and `σ` live on
//! `TM`; the two closed-form families depend on the fiber only through the
//! kinetic energy `E(u) = ½ g(u, u)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{GeomError, Result};
use crate::fd::{self, FdPolicy};
use crate::geom::RiemannianChart;
use crate::tbundle::{self, TMPoint, TMVector};
use crate::verdict::{Integrability, Thresholds};

/// `E ↦ (f(E), f'(E))`; `None` where the profile is undefined.
pub type Profile = Arc<dyn Fn(f64) -> Option<(f64, f64)> + Send + Sync>;
pub type TMScalar = Arc<dyn Fn(&TMPoint) -> Result<f64> + Send + Sync>;
/// Gradient in the induced coordinates `(x, y)`, length `2n`.
pub type TMScalarJet = Arc<dyn Fn(&TMPoint) -> Result<DVector<f64>> + Send + Sync>;

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Radial(Profile),
    Custom { value: TMScalar, jet: Option<TMScalarJet> },
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Radial(_) => f.write_str("Radial"),
            Self::Custom { jet, .. } => write!(f, "Custom(jet: {})", jet.is_some()),
        }
    }
}

/// `E = ½ g(u, u)`.
pub fn kinetic_energy(chart: &RiemannianChart, at: &TMPoint) -> Result<f64> {
    Ok(0.5 * chart.norm_sq(&at.base, &at.fiber)?)
}

/// Gradient of `E` in induced coordinates: `(½ yᵀ ∂_k g y, g y)`.
pub fn kinetic_energy_gradient(chart: &RiemannianChart, at: &TMPoint) -> Result<DVector<f64>> {
    let n = at.dim();
    let y = &at.fiber;
    let dg = chart.metric_partials(&at.base)?;
    let gy = chart.metric(&at.base)? * y;
    Ok(DVector::from_fn(2 * n, |i, _| {
        if i < n {
            0.5 * y.dot(&(&dg[i] * y))
        } else {
            gy[i - n]
        }
    }))
}

fn undefined_at(name: &str, at: &TMPoint) -> GeomError {
    GeomError::Domain {
        chart: format!("structure `{name}`"),
        point: at.flat().iter().copied().collect(),
    }
}

impl ScalarField {
    fn eval(&self, name: &str, chart: &RiemannianChart, at: &TMPoint) -> Result<f64> {
        match self {
            Self::Constant(c) => Ok(*c),
            Self::Radial(p) => {
                let e = kinetic_energy(chart, at)?;
                p(e).map(|v| v.0).ok_or_else(|| undefined_at(name, at))
            }
            Self::Custom { value, .. } => {
                chart.check(&at.base)?;
                value(at)
            }
        }
    }

    fn gradient(&self, name: &str, chart: &RiemannianChart, at: &TMPoint) -> Result<DVector<f64>> {
        match self {
            Self::Constant(_) => Ok(DVector::zeros(2 * at.dim())),
            Self::Radial(p) => {
                let e = kinetic_energy(chart, at)?;
                let (_, d) = p(e).ok_or_else(|| undefined_at(name, at))?;
                Ok(kinetic_energy_gradient(chart, at)? * d)
            }
            Self::Custom { jet: Some(j), .. } => {
                chart.check(&at.base)?;
                j(at)
            }
            Self::Custom { jet: None, .. } => self.fd_gradient(name, chart, at),
        }
    }

    fn fd_gradient(&self, name: &str, chart: &RiemannianChart, at: &TMPoint) -> Result<DVector<f64>> {
        fd::gradient(|z| self.eval(name, chart, &TMPoint::from_flat(z)), &at.flat(), chart.fd().first)
    }

    fn has_jet(&self) -> bool {
        !matches!(self, Self::Custom { jet: None, .. })
    }
}

/// Values of the three structure scalars at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureValues {
    pub delta: f64,
    pub sigma: f64,
    pub alpha: f64,
}

/// Induced-coordinate gradients of `δ`, `σ` and `α` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureDifferentials {
    pub delta: DVector<f64>,
    pub sigma: DVector<f64>,
    pub alpha: DVector<f64>,
}

impl StructureDifferentials {
    /// Derivatives of `(α, δ, σ)` along `a`.
    pub fn along(&self, a: &TMVector) -> (f64, f64, f64) {
        let c = a.components();
        (self.alpha.dot(&c), self.delta.dot(&c), self.sigma.dot(&c))
    }
}

/// Which structure scalar to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scalar {
    Alpha,
    Delta,
    Sigma,
}

#[derive(Clone)]
pub struct IsotropicStructure {
    name: String,
    delta: ScalarField,
    sigma: ScalarField,
}

impl fmt::Debug for IsotropicStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IsotropicStructure")
            .field("name", &self.name)
            .field("delta", &self.delta)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl IsotropicStructure {
    /// Structure from arbitrary `δ` and `σ` fields; `α` is always derived.
    pub fn new(name: impl Into<String>, delta: ScalarField, sigma: ScalarField) -> Self {
        Self {
            name: name.into(),
            delta,
            sigma,
        }
    }

    /// `J_{1,0}`, whose metric is the Sasaki metric.
    pub fn sasaki() -> Self {
        Self::new("sasaki", ScalarField::Constant(1.0), ScalarField::Constant(0.0))
    }

    pub fn constant(delta: f64, sigma: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(GeomError::Parameter(format!("delta must be positive, got {delta}")));
        }
        Ok(Self::new(
            format!("constant({delta},{sigma})"),
            ScalarField::Constant(delta),
            ScalarField::Constant(sigma),
        ))
    }

    /// `δ = (2kE + b)^{-1/2}`, `σ = 0`.
    pub fn family_sigma0(k: f64, b: f64) -> Self {
        let delta: Profile = Arc::new(move |e| {
            let s = 2.0 * k * e + b;
            (s > 0.0).then(|| (s.powf(-0.5), -k * s.powf(-1.5)))
        });
        Self::new(format!("sigma0(k={k},b={b})"), ScalarField::Radial(delta), ScalarField::Constant(0.0))
    }

    /// `δ⁻² = ½(2kE + b + √((2kE + b)² + 4a²k²))`, `σ = akδ²`, `a ≠ 0`.
    pub fn family_general(k: f64, a: f64, b: f64) -> Result<Self> {
        if a == 0.0 {
            return Err(GeomError::Parameter("family_general requires a != 0".into()));
        }
        let q = move |e: f64| {
            let s = 2.0 * k * e + b;
            let d = (s * s + 4.0 * a * a * k * k).sqrt();
            let q = 0.5 * (s + d);
            let dq = if d > 0.0 { k * (1.0 + s / d) } else { k };
            (q > 0.0).then_some((q, dq))
        };
        let delta: Profile = Arc::new(move |e| q(e).map(|(q, dq)| (q.powf(-0.5), -0.5 * q.powf(-1.5) * dq)));
        let sigma: Profile = Arc::new(move |e| {
            q(e).map(|(q, dq)| {
                let d = q.powf(-0.5);
                let dd = -0.5 * q.powf(-1.5) * dq;
                (a * k * d * d, 2.0 * a * k * d * dd)
            })
        });
        Ok(Self::new(
            format!("general(k={k},a={a},b={b})"),
            ScalarField::Radial(delta),
            ScalarField::Radial(sigma),
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn delta_field(&self) -> &ScalarField {
        &self.delta
    }

    pub fn sigma_field(&self) -> &ScalarField {
        &self.sigma
    }

    /// True when `σ` is the constant zero field.
    pub fn sigma_vanishes(&self) -> bool {
        matches!(self.sigma, ScalarField::Constant(s) if s == 0.0)
    }

    /// True when both scalars are functions of `E` alone.
    pub fn is_radial(&self) -> bool {
        let radial = |f: &ScalarField| matches!(f, ScalarField::Constant(_) | ScalarField::Radial(_));
        radial(&self.delta) && radial(&self.sigma)
    }

    pub fn has_jets(&self) -> bool {
        self.delta.has_jet() && self.sigma.has_jet()
    }

    pub fn values(&self, chart: &RiemannianChart, at: &TMPoint) -> Result<StructureValues> {
        let delta = self.delta.eval(&self.name, chart, at)?;
        let sigma = self.sigma.eval(&self.name, chart, at)?;
        if !(delta > 0.0) {
            return Err(GeomError::Undefined(format!("{}: delta = {delta}", self.name)));
        }
        Ok(StructureValues {
            delta,
            sigma,
            alpha: (1.0 + sigma * sigma) / delta,
        })
    }

    pub fn value(&self, which: Scalar, chart: &RiemannianChart, at: &TMPoint) -> Result<f64> {
        let v = self.values(chart, at)?;
        Ok(match which {
            Scalar::Alpha => v.alpha,
            Scalar::Delta => v.delta,
            Scalar::Sigma => v.sigma,
        })
    }

    fn assemble(&self, v: StructureValues, delta: DVector<f64>, sigma: DVector<f64>) -> StructureDifferentials {
        // α = (1+σ²)/δ  ⇒  dα = (2σ dσ − α dδ)/δ
        let alpha = (&sigma * (2.0 * v.sigma) - &delta * v.alpha) / v.delta;
        StructureDifferentials { delta, sigma, alpha }
    }

    /// Induced-coordinate gradients, from jets where available.
    pub fn differentials(&self, chart: &RiemannianChart, at: &TMPoint) -> Result<StructureDifferentials> {
        let v = self.values(chart, at)?;
        let dd = self.delta.gradient(&self.name, chart, at)?;
        let ds = self.sigma.gradient(&self.name, chart, at)?;
        Ok(self.assemble(v, dd, ds))
    }

    /// Induced-coordinate gradients by central differences only.
    pub fn fd_differentials(&self, chart: &RiemannianChart, at: &TMPoint) -> Result<StructureDifferentials> {
        let v = self.values(chart, at)?;
        let dd = self.delta.fd_gradient(&self.name, chart, at)?;
        let ds = self.sigma.fd_gradient(&self.name, chart, at)?;
        Ok(self.assemble(v, dd, ds))
    }

    /// Compares jets against central differences; `JetMismatch` above `tol`.
    pub fn verify_jets(&self, chart: &RiemannianChart, at: &TMPoint, tol: f64) -> Result<f64> {
        let a = self.differentials(chart, at)?;
        let b = self.fd_differentials(chart, at)?;
        let mut worst = 0.0_f64;
        for (what, x, y) in [("delta", &a.delta, &b.delta), ("sigma", &a.sigma, &b.sigma)] {
            let e = (x - y).amax() / y.amax().max(1.0);
            if e > tol {
                return Err(GeomError::JetMismatch {
                    what: format!("{}.{what}", self.name),
                    rel_err: e,
                });
            }
            worst = worst.max(e);
        }
        Ok(worst)
    }

    /// `(δ(E), σ(E))` as plain functions of `E` for radial structures.
    pub fn radial_profiles(&self) -> Result<(impl Fn(f64) -> Option<f64> + '_, impl Fn(f64) -> Option<f64> + '_)> {
        if !self.is_radial() {
            return Err(GeomError::NotRadial(self.name.clone()));
        }
        let eval = |f: &ScalarField, e: f64| match f {
            ScalarField::Constant(c) => Some(*c),
            ScalarField::Radial(p) => p(e).map(|v| v.0),
            ScalarField::Custom { .. } => None,
        };
        Ok((move |e| eval(&self.delta, e), move |e| eval(&self.sigma, e)))
    }
}

/// `J A = (σX − δY)^h + (αX − σY)^v` with `X = π_*A`, `Y = K A`.
pub fn apply_j(s: &IsotropicStructure, chart: &RiemannianChart, a: &TMVector) -> Result<TMVector> {
    let v = s.values(chart, &a.at)?;
    let (x, y) = tbundle::decompose(chart, a)?;
    tbundle::lift(
        chart,
        &(&x * v.sigma - &y * v.delta),
        &(&x * v.alpha - &y * v.sigma),
        &a.at,
    )
}

/// `N(A,B) = [JA,JB] − J[JA,B] − J[A,JB] − [A,B]` with `A` and `B` extended
/// by constant induced-coordinate components.
pub fn nijenhuis(
    s: &IsotropicStructure,
    chart: &RiemannianChart,
    at: &TMPoint,
    a: &TMVector,
    b: &TMVector,
) -> Result<TMVector> {
    let ext = |v: &TMVector| {
        let (dx, dy) = (v.dx.clone(), v.dy.clone());
        move |q: &TMPoint| Ok(TMVector::new(q.clone(), dx.clone(), dy.clone()))
    };
    let j_ext = |v: &TMVector| {
        let e = ext(v);
        move |q: &TMPoint| apply_j(s, chart, &e(q)?)
    };
    let jajb = tbundle::bracket_fd(chart, j_ext(a), j_ext(b), at)?;
    let ja_b = tbundle::bracket_fd(chart, j_ext(a), ext(b), at)?;
    let a_jb = tbundle::bracket_fd(chart, ext(a), j_ext(b), at)?;
    let ab = tbundle::bracket_fd(chart, ext(a), ext(b), at)?;
    jajb.sub(&apply_j(s, chart, &ja_b)?)?
        .sub(&apply_j(s, chart, &a_jb)?)?
        .sub(&ab)
}

/// Largest Nijenhuis component over all pairs of induced coordinate vectors.
pub fn nijenhuis_max(s: &IsotropicStructure, chart: &RiemannianChart, at: &TMPoint) -> Result<f64> {
    let m = 2 * at.dim();
    let basis = |i: usize| {
        let mut c = DVector::zeros(m);
        c[i] = 1.0;
        TMVector::from_components(at.clone(), &c)
    };
    let mut worst = 0.0_f64;
    for i in 0..m {
        for j in (i + 1)..m {
            worst = worst.max(nijenhuis(s, chart, at, &basis(i), &basis(j))?.max_abs());
        }
    }
    Ok(worst)
}

pub fn classify_integrability(max_component: f64, t: &Thresholds) -> Integrability {
    t.classify(max_component).into()
}

/// `z = (σ + i)/δ`.
pub fn z_map(s: &IsotropicStructure, chart: &RiemannianChart, at: &TMPoint) -> Result<Complex64> {
    let v = s.values(chart, at)?;
    Ok(Complex64::new(v.sigma, 1.0) / v.delta)
}

/// `Φ((u, v), z) = v − z u` for unit `u ⊥ v` in `ℝⁿ⁺¹`.
pub fn phi_map(u: &DVector<f64>, v: &DVector<f64>, z: Complex64) -> Result<Vec<Complex64>> {
    if u.len() != v.len() {
        return Err(GeomError::Parameter("u and v have different lengths".into()));
    }
    if (u.norm_squared() - 1.0).abs() > 1e-9 {
        return Err(GeomError::Parameter(format!("|u|^2 = {} is not 1", u.norm_squared())));
    }
    if u.dot(v).abs() > 1e-9 {
        return Err(GeomError::Parameter(format!("u.v = {} is not 0", u.dot(v))));
    }
    Ok(u.iter().zip(v.iter()).map(|(ui, vi)| Complex64::new(*vi, 0.0) - z * ui).collect())
}

pub type ZFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<Complex64> + Send + Sync>;
/// `(∂z/∂x, ∂z/∂y)`.
pub type ZJet = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<(Vec<Complex64>, Vec<Complex64>)> + Send + Sync>;

/// `z = u + iv` with `u = σ/δ`, `v = 1/δ`, as a function of `(x, y)`.
#[derive(Clone)]
pub struct ComplexFieldZ {
    name: String,
    z: ZFn,
    jet: Option<ZJet>,
    fd: FdPolicy,
}

impl fmt::Debug for ComplexFieldZ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexFieldZ")
            .field("name", &self.name)
            .field("jet", &self.jet.is_some())
            .finish()
    }
}

impl ComplexFieldZ {
    pub fn new<F>(name: impl Into<String>, z: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> Result<Complex64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            z: Arc::new(z),
            jet: None,
            fd: FdPolicy::default(),
        }
    }

    pub fn with_jet<J>(mut self, jet: J) -> Self
    where
        J: Fn(&DVector<f64>, &DVector<f64>) -> Result<(Vec<Complex64>, Vec<Complex64>)> + Send + Sync + 'static,
    {
        self.jet = Some(Arc::new(jet));
        self
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(format!("const({c})"), move |_, _| Ok(c))
            .with_jet(move |x, _| Ok((vec![Complex64::new(0.0, 0.0); x.len()], vec![Complex64::new(0.0, 0.0); x.len()])))
    }

    /// `z = x·y/(1+x·x) + i √((1+x·x)(1+y·y) − (x·y)²)/(1+x·x)` on `Tℝⁿ`.
    pub fn flat_example() -> Self {
        let parts = |x: &DVector<f64>, y: &DVector<f64>| {
            let p = x.dot(y);
            let q = 1.0 + x.norm_squared();
            let d = q * (1.0 + y.norm_squared()) - p * p;
            (p, q, d)
        };
        Self::new("flat_example", move |x, y| {
            let (p, q, d) = parts(x, y);
            Ok(Complex64::new(p / q, d.sqrt() / q))
        })
        .with_jet(move |x, y| {
            let (p, q, d) = parts(x, y);
            let sd = d.sqrt();
            let n = x.len();
            let mut zx = Vec::with_capacity(n);
            let mut zy = Vec::with_capacity(n);
            for l in 0..n {
                let ux = y[l] / q - 2.0 * p * x[l] / (q * q);
                let uy = x[l] / q;
                let dx = 2.0 * x[l] * (1.0 + y.norm_squared()) - 2.0 * p * y[l];
                let dy = 2.0 * q * y[l] - 2.0 * p * x[l];
                let vx = dx / (2.0 * sd * q) - 2.0 * sd * x[l] / (q * q);
                let vy = dy / (2.0 * sd * q);
                zx.push(Complex64::new(ux, vx));
                zy.push(Complex64::new(uy, vy));
            }
            Ok((zx, zy))
        })
    }

    /// `z = (σ + i)/δ` for `s` on `chart`, jets from the structure's jets.
    pub fn from_structure(s: &IsotropicStructure, chart: &RiemannianChart) -> Self {
        let (s1, c1, s2, c2) = (s.clone(), chart.clone(), s.clone(), chart.clone());
        let mut zf = Self::new(format!("z[{}]", s.name()), move |x, y| {
            z_map(&s1, &c1, &TMPoint::new(x.clone(), y.clone()))
        });
        zf.fd = chart.fd();
        if s.has_jets() {
            zf = zf.with_jet(move |x, y| {
                let at = TMPoint::new(x.clone(), y.clone());
                let v = s2.values(&c2, &at)?;
                let d = s2.differentials(&c2, &at)?;
                let n = x.len();
                // dz = (δ dσ − (σ + i) dδ)/δ²
                let dz = |k: usize| {
                    Complex64::new(v.delta * d.sigma[k] - v.sigma * d.delta[k], -d.delta[k]) / (v.delta * v.delta)
                };
                Ok(((0..n).map(dz).collect(), (n..2 * n).map(dz).collect()))
            });
        }
        zf
    }

    /// `δ = 1/v`, `σ = u/v`; points with `v ≤ 0` are rejected at evaluation.
    pub fn to_structure(&self) -> IsotropicStructure {
        let z = self.z.clone();
        let eval = move |at: &TMPoint| {
            let w = z(&at.base, &at.fiber)?;
            if !(w.im > 0.0) {
                return Err(GeomError::Undefined(format!("Im z = {} is not positive", w.im)));
            }
            Ok(w)
        };
        let e1 = eval.clone();
        let delta_val: TMScalar = Arc::new(move |at| Ok(1.0 / e1(at)?.im));
        let e2 = eval.clone();
        let sigma_val: TMScalar = Arc::new(move |at| {
            let w = e2(at)?;
            Ok(w.re / w.im)
        });
        let (delta_jet, sigma_jet): (Option<TMScalarJet>, Option<TMScalarJet>) = match &self.jet {
            Some(j) => {
                let (j1, j2, e3, e4) = (j.clone(), j.clone(), eval.clone(), eval);
                let grad = |jet: ZJet, at: &TMPoint| -> Result<Vec<Complex64>> {
                    let (zx, zy) = jet(&at.base, &at.fiber)?;
                    Ok(zx.into_iter().chain(zy).collect())
                };
                (
                    Some(Arc::new(move |at: &TMPoint| {
                        let w = e3(at)?;
                        let g = grad(j1.clone(), at)?;
                        Ok(DVector::from_iterator(g.len(), g.iter().map(|d| -d.im / (w.im * w.im))))
                    })),
                    Some(Arc::new(move |at: &TMPoint| {
                        let w = e4(at)?;
                        let g = grad(j2.clone(), at)?;
                        Ok(DVector::from_iterator(
                            g.len(),
                            g.iter().map(|d| (d.re * w.im - w.re * d.im) / (w.im * w.im)),
                        ))
                    })),
                )
            }
            None => (None, None),
        };
        IsotropicStructure::new(
            format!("from[{}]", self.name),
            ScalarField::Custom { value: delta_val, jet: delta_jet },
            ScalarField::Custom { value: sigma_val, jet: sigma_jet },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_jet(&self) -> bool {
        self.jet.is_some()
    }

    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<Complex64> {
        (self.z)(x, y)
    }

    /// `(∂z/∂x, ∂z/∂y)` from the jet, or central differences.
    pub fn partials(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        if let Some(j) = &self.jet {
            return j(x, y);
        }
        self.fd_partials(x, y)
    }

    pub fn fd_partials(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let n = x.len();
        let at = TMPoint::new(x.clone(), y.clone()).flat();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..2 * n {
            let h = fd::step_for(self.fd.first, at[i]);
            let mut zp = at.clone();
            let mut zm = at.clone();
            zp[i] += h;
            zm[i] -= h;
            let (pp, pm) = (TMPoint::from_flat(&zp), TMPoint::from_flat(&zm));
            out.push((self.eval(&pp.base, &pp.fiber)? - self.eval(&pm.base, &pm.fiber)?) / (2.0 * h));
        }
        let zy = out.split_off(n);
        Ok((out, zy))
    }
}

/// `∂z/∂xˡ + z ∂z/∂yˡ` for each `l`.
pub fn flat_pde_residual(zf: &ComplexFieldZ, x: &DVector<f64>, y: &DVector<f64>) -> Result<Vec<Complex64>> {
    let z = zf.eval(x, y)?;
    let (zx, zy) = zf.partials(x, y)?;
    Ok(zx.iter().zip(&zy).map(|(a, b)| a + z * b).collect())
}

/// Integrability residual on a conformal chart of constant curvature `k`:
/// `Σᵢ[z_{yⁱ}(y^s μᵢ − μ_s yⁱ) − z_{y^s} yⁱ μᵢ] + k y^s λ² + z_{x^s} + z z_{y^s}`
/// with `μᵢ = ∂ᵢλ/λ` and `s = s0`.
pub fn sphere_pde_residual(
    zf: &ComplexFieldZ,
    chart: &RiemannianChart,
    x: &DVector<f64>,
    y: &DVector<f64>,
    s0: usize,
) -> Result<Complex64> {
    chart.check(x)?;
    let cf = chart
        .conformal_factor()
        .ok_or_else(|| GeomError::Parameter(format!("chart `{}` is not conformal", chart.name())))?;
    let k = cf
        .curvature()
        .ok_or_else(|| GeomError::Parameter(format!("chart `{}` has no constant curvature", chart.name())))?;
    if s0 >= x.len() {
        return Err(GeomError::Parameter(format!("index {s0} out of range")));
    }
    let lambda = cf.lambda(x);
    let mu = cf.mu(x);
    let z = zf.eval(x, y)?;
    let (zx, zy) = zf.partials(x, y)?;
    let mut r = Complex64::new(0.0, 0.0);
    for i in 0..x.len() {
        r += zy[i] * (y[s0] * mu[i] - mu[s0] * y[i]) - zy[s0] * (y[i] * mu[i]);
    }
    Ok(r + k * y[s0] * lambda * lambda + zx[s0] + z * zy[s0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sigma0_values() {
        let e = RiemannianChart::euclidean(2);
        let sas = IsotropicStructure::family_sigma0(0.0, 1.0);
        let at = TMPoint::new(v(&[0.3, 0.1]), v(&[1.0, -2.0]));
        let s = sas.values(&e, &at).unwrap();
        assert_eq!((s.delta, s.sigma, s.alpha), (1.0, 0.0, 1.0));

        // unit fiber on the sphere: 2kE = 1
        let sph = RiemannianChart::sphere_stereographic(2);
        let x = v(&[0.5, 0.5]);
        let lam = 2.0 / 1.5;
        let at = TMPoint::new(x, v(&[1.0 / lam, 0.0]));
        let s = IsotropicStructure::family_sigma0(1.0, 0.0).values(&sph, &at).unwrap();
        assert!((s.delta - 1.0).abs() < 1e-14 && (s.alpha - 1.0).abs() < 1e-14);
    }

    #[test]
    fn general_family_at_zero_section() {
        let e = RiemannianChart::euclidean(2);
        let s = IsotropicStructure::family_general(1.0, 1.0, 0.0).unwrap();
        let at = TMPoint::new(v(&[0.0, 0.0]), v(&[0.0, 0.0]));
        let val = s.values(&e, &at).unwrap();
        assert!((val.delta - 1.0).abs() < 1e-15);
        assert!((val.sigma - 1.0).abs() < 1e-15);
        assert!((val.alpha - 2.0).abs() < 1e-15);
    }

    #[test]
    fn general_family_flat_limit() {
        let e = RiemannianChart::euclidean(2);
        let s = IsotropicStructure::family_general(1e-9, 1.0, 4.0).unwrap();
        let at = TMPoint::new(v(&[0.0, 0.0]), v(&[1.0, 1.0]));
        let val = s.values(&e, &at).unwrap();
        assert!(val.sigma.abs() < 1e-8);
        assert!((val.delta - 0.5).abs() < 1e-8);
    }

    #[test]
    fn general_family_rejects_zero_a() {
        assert!(matches!(IsotropicStructure::family_general(1.0, 0.0, 1.0), Err(GeomError::Parameter(_))));
    }

    #[test]
    fn undefined_region_is_a_domain_error() {
        let e = RiemannianChart::euclidean(2);
        let s = IsotropicStructure::family_sigma0(1.0, -1.0);
        let at = TMPoint::new(v(&[0.0, 0.0]), v(&[0.5, 0.0]));
        assert!(matches!(s.values(&e, &at), Err(GeomError::Domain { .. })));
    }

    #[test]
    fn family_jets_match_fd() {
        let sph = RiemannianChart::sphere_stereographic(2);
        let at = TMPoint::new(v(&[0.4, -0.3]), v(&[0.8, 1.1]));
        for s in [
            IsotropicStructure::family_sigma0(1.0, 0.5),
            IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(),
            IsotropicStructure::family_general(-0.5, 2.0, 3.0).unwrap(),
        ] {
            assert!(s.verify_jets(&sph, &at, 1e-6).is_ok(), "{}", s.name());
        }
    }

    #[test]
    fn sasaki_j_on_lifts() {
        let c = RiemannianChart::sphere_stereographic(2);
        let s = IsotropicStructure::sasaki();
        let at = TMPoint::new(v(&[0.4, -0.3]), v(&[0.8, 1.1]));
        let x = v(&[1.0, 2.0]);
        let h = tbundle::horizontal_lift(&c, &x, &at).unwrap();
        let vl = tbundle::vertical_lift(&c, &x, &at).unwrap();
        assert!(apply_j(&s, &c, &h).unwrap().sub(&vl).unwrap().max_abs() < 1e-15);
        assert!(apply_j(&s, &c, &vl).unwrap().add(&h).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn j_squares_to_minus_one() {
        let c = RiemannianChart::sphere_stereographic(2);
        let s = IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap();
        let at = TMPoint::new(v(&[0.4, -0.3]), v(&[0.8, 1.1]));
        let a = TMVector::new(at, v(&[0.3, -1.0]), v(&[2.0, 0.7]));
        let jja = apply_j(&s, &c, &apply_j(&s, &c, &a).unwrap()).unwrap();
        assert!(jja.add(&a).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn nijenhuis_sasaki_flat_vanishes() {
        let c = RiemannianChart::euclidean(2);
        let at = TMPoint::new(v(&[0.4, -0.3]), v(&[0.8, 1.1]));
        assert!(nijenhuis_max(&IsotropicStructure::sasaki(), &c, &at).unwrap() < 1e-5);
    }

    #[test]
    fn nijenhuis_integrable_family_on_sphere() {
        let c = RiemannianChart::sphere_stereographic(2);
        let at = TMPoint::new(v(&[0.4, -0.3]), v(&[0.8, 1.1]));
        let n = nijenhuis_max(&IsotropicStructure::family_sigma0(1.0, 0.5), &c, &at).unwrap();
        assert!(n < 1e-4, "{n}");
        let n = nijenhuis_max(&IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(), &c, &at).unwrap();
        assert!(n < 1e-4, "{n}");
    }

    #[test]
    fn nijenhuis_sasaki_sphere_is_large() {
        let c = RiemannianChart::sphere_stereographic(2);
        let at = TMPoint::new(v(&[0.4, -0.3]), v(&[0.8, 1.1]));
        let n = nijenhuis_max(&IsotropicStructure::sasaki(), &c, &at).unwrap();
        assert!(n > 1e-2, "{n}");
        assert_eq!(classify_integrability(n, &Thresholds::default()), Integrability::NonIntegrable);
    }

    #[test]
    fn nijenhuis_is_antisymmetric() {
        let c = RiemannianChart::sphere_stereographic(2);
        let s = IsotropicStructure::sasaki();
        let at = TMPoint::new(v(&[0.4, -0.3]), v(&[0.8, 1.1]));
        let a = TMVector::new(at.clone(), v(&[0.3, -1.0]), v(&[2.0, 0.7]));
        let b = TMVector::new(at.clone(), v(&[1.0, 0.2]), v(&[-0.4, 0.5]));
        let nab = nijenhuis(&s, &c, &at, &a, &b).unwrap();
        let nba = nijenhuis(&s, &c, &at, &b, &a).unwrap();
        assert!(nab.add(&nba).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn flat_pde_trivial_cases() {
        let x = v(&[0.3, 0.7]);
        let y = v(&[-1.0, 0.2]);
        let r = flat_pde_residual(&ComplexFieldZ::constant(c(0.5, 2.0)), &x, &y).unwrap();
        assert!(r.iter().all(|z| z.norm() == 0.0));
        let lin = ComplexFieldZ::new("x1+i", |x, _| Ok(c(x[0], 1.0)));
        let r = flat_pde_residual(&lin, &x, &y).unwrap();
        assert!((r[0] - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn flat_example_solves_pde_and_jet_matches() {
        let zf = ComplexFieldZ::flat_example();
        let x = v(&[0.3, -1.2]);
        let y = v(&[0.9, 0.4]);
        let r = flat_pde_residual(&zf, &x, &y).unwrap();
        assert!(r.iter().all(|z| z.norm() < 1e-12));
        let (ax, ay) = zf.partials(&x, &y).unwrap();
        let (bx, by) = zf.fd_partials(&x, &y).unwrap();
        for (p, q) in ax.iter().chain(&ay).zip(bx.iter().chain(&by)) {
            assert!((p - q).norm() < 1e-8);
        }
    }

    #[test]
    fn sphere_pde_for_integrable_families() {
        let c2 = RiemannianChart::sphere_stereographic(2);
        let x = v(&[0.6, -0.2]);
        let y = v(&[0.7, 1.3]);
        for s in [
            IsotropicStructure::family_sigma0(1.0, 0.5),
            IsotropicStructure::family_general(1.0, 1.0, 1.0).unwrap(),
        ] {
            let zf = ComplexFieldZ::from_structure(&s, &c2);
            for s0 in 0..2 {
                let r = sphere_pde_residual(&zf, &c2, &x, &y, s0).unwrap();
                assert!(r.norm() < 1e-10, "{} {r}", s.name());
            }
        }
        let zi = ComplexFieldZ::constant(c(0.0, 1.0));
        let r = sphere_pde_residual(&zi, &c2, &x, &y, 0).unwrap();
        let lam = 2.0 / (1.0 + x.norm_squared());
        assert!((r - c(y[0] * lam * lam, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sphere_pde_flat_limit() {
        let e = RiemannianChart::euclidean(2);
        let zf = ComplexFieldZ::constant(c(0.3, 1.0));
        let r = sphere_pde_residual(&zf, &e, &v(&[0.1, 0.2]), &v(&[1.0, 1.0]), 1).unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn z_and_structure_roundtrip() {
        let e = RiemannianChart::euclidean(2);
        let zf = ComplexFieldZ::flat_example();
        let s = zf.to_structure();
        let at = TMPoint::new(v(&[0.3, -1.2]), v(&[0.9, 0.4]));
        let z = z_map(&s, &e, &at).unwrap();
        assert!((z - zf.eval(&at.base, &at.fiber).unwrap()).norm() < 1e-14);
        assert!(s.verify_jets(&e, &at, 1e-6).is_ok());
        assert_eq!(z_map(&IsotropicStructure::sasaki(), &e, &at).unwrap(), c(0.0, 1.0));
    }

    #[test]
    fn phi_map_examples() {
        let e1 = v(&[1.0, 0.0, 0.0]);
        let e2 = v(&[0.0, 1.0, 0.0]);
        let p = phi_map(&e1, &e2, c(0.0, 1.0)).unwrap();
        assert_eq!(p, vec![c(0.0, -1.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let im: f64 = p.iter().map(|w| w.im * w.im).sum::<f64>().sqrt();
        assert_eq!(im, 1.0);
        assert!(phi_map(&(e1.clone() * 2.0), &e2, c(0.0, 1.0)).is_err());
        assert!(phi_map(&e1, &e1, c(0.0, 1.0)).is_err());
    }
}
