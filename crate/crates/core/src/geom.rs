//! Chart-based Riemannian calculus on the base manifold.
//!
//! A [`RiemannianChart`] is a single coordinate patch carrying the metric
//! components `g_ij(x)` and, optionally, their analytic first partials.
//! Christoffel symbols come from the jet when present and from central
//! differences otherwise; curvature always differentiates the Christoffel
//! symbols numerically.
//!
//! Curvature convention: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, so a
//! space form of curvature `k` has `R(X,Y)Z = k(g(Y,Z)X − g(X,Z)Y)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::fd::{self, FdPolicy};

pub type PointMap<T> = Arc<dyn Fn(&DVector<f64>) -> T + Send + Sync>;

/// Axis-aligned box of admissible chart coordinates, optionally cut down to
/// a centered ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub max_radius: Option<f64>,
}

impl Domain {
    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lo: DVector::from_element(n, -half_width),
            hi: DVector::from_element(n, half_width),
            max_radius: None,
        }
    }

    pub fn ball(n: usize, radius: f64) -> Self {
        Self {
            max_radius: Some(radius),
            ..Self::cube(n, radius)
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        if x.len() != self.lo.len() || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        let in_box = x
            .iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(c, (lo, hi))| *lo <= *c && *c <= *hi);
        in_box && self.max_radius.is_none_or(|r| x.norm() <= r)
    }
}

/// `g = λ² Σ dxⁱ⊗dxⁱ`; `curvature` is recorded when the chart models a
/// space form.
#[derive(Clone)]
pub struct ConformalFactor {
    lambda: PointMap<f64>,
    grad: PointMap<DVector<f64>>,
    curvature: Option<f64>,
}

impl ConformalFactor {
    pub fn lambda(&self, x: &DVector<f64>) -> f64 {
        (self.lambda)(x)
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad)(x)
    }

    /// `μ_i = (1/λ) ∂λ/∂xⁱ`.
    pub fn mu(&self, x: &DVector<f64>) -> DVector<f64> {
        self.grad(x) / self.lambda(x)
    }

    pub fn curvature(&self) -> Option<f64> {
        self.curvature
    }
}

/// Christoffel symbols `Γ^k_ij` stored densely, `k` outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    #[inline]
    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.n + i) * self.n + j] = v;
    }

    /// `Γ(a, b)^k = Γ^k_ij aⁱ bʲ`.
    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                if a[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    s += self.get(k, i, j) * a[i] * b[j];
                }
            }
            s
        })
    }

    /// The matrix `C` with `C_kj = Γ^k_ij yⁱ`, i.e. `C b = Γ(y, b)`.
    pub fn along(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |k, j| (0..n).map(|i| self.get(k, i, j) * y[i]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Riemann tensor `R^l_ijk` with `R(∂_i, ∂_j)∂_k = R^l_ijk ∂_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riemann {
    n: usize,
    data: Vec<f64>,
}

impl Riemann {
    #[inline]
    pub fn get(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.data[((l * n + i) * n + j) * n + k]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `R(X,Y)Z`.
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |l, _| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let xy = x[i] * y[j];
                    if xy == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        s += self.get(l, i, j, k) * xy * z[k];
                    }
                }
            }
            s
        })
    }

    /// `Ric_jk = R^i_ijk`.
    pub fn ricci(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |j, k| (0..n).map(|i| self.get(i, i, j, k)).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A smooth vector field on the chart, `x ↦ Xⁱ(x)`, with an optional
/// analytic Jacobian `∂Xⁱ/∂xʲ`.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    value: PointMap<DVector<f64>>,
    jet: Option<PointMap<DMatrix<f64>>>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("jet", &self.jet.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new<F>(name: impl Into<String>, value: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            value: Arc::new(value),
            jet: None,
        }
    }

    pub fn with_jet<J>(mut self, jet: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jet = Some(Arc::new(jet));
        self
    }

    pub fn constant(name: impl Into<String>, v: DVector<f64>) -> Self {
        let n = v.len();
        Self::new(name, move |_| v.clone()).with_jet(move |_| DMatrix::zeros(n, n))
    }

    /// `X(x) = c + A x`.
    pub fn affine(name: impl Into<String>, c: DVector<f64>, a: DMatrix<f64>) -> Self {
        let a2 = a.clone();
        Self::new(name, move |x| &c + &a * x).with_jet(move |_| a2.clone())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_jet(&self) -> bool {
        self.jet.is_some()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.value)(x)
    }

    /// Analytic Jacobian when available, central differences otherwise.
    pub fn jacobian(&self, x: &DVector<f64>, scale: f64) -> DMatrix<f64> {
        match &self.jet {
            Some(j) => j(x),
            None => self.fd_jacobian(x, scale),
        }
    }

    pub fn fd_jacobian(&self, x: &DVector<f64>, scale: f64) -> DMatrix<f64> {
        fd::jacobian(|z| Ok(self.eval(z)), x, scale).expect("infallible")
    }

    /// Relative max-norm gap between the analytic jet and central differences.
    pub fn jet_discrepancy(&self, x: &DVector<f64>, scale: f64) -> Option<f64> {
        let j = self.jet.as_ref()?(x);
        Some(fd::rel_err_mat(&j, &self.fd_jacobian(x, scale), 1.0))
    }
}

#[derive(Clone)]
pub struct RiemannianChart {
    name: String,
    dim: usize,
    metric: PointMap<DMatrix<f64>>,
    metric_jet: Option<PointMap<Vec<DMatrix<f64>>>>,
    domain: Domain,
    conformal: Option<ConformalFactor>,
    fd: FdPolicy,
}

impl fmt::Debug for RiemannianChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RiemannianChart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("jet", &self.metric_jet.is_some())
            .finish()
    }
}

impl RiemannianChart {
    pub fn new<M>(name: impl Into<String>, dim: usize, metric: M, domain: Domain) -> Self
    where
        M: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            metric: Arc::new(metric),
            metric_jet: None,
            domain,
            conformal: None,
            fd: FdPolicy::default(),
        }
    }

    /// Attach analytic partials: element `k` of the returned vector is `∂_k g`.
    pub fn with_metric_jet<J>(mut self, jet: J) -> Self
    where
        J: Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.metric_jet = Some(Arc::new(jet));
        self
    }

    pub fn with_fd_policy(mut self, fd: FdPolicy) -> Self {
        self.fd = fd;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Flat `ℝⁿ` on the cube `[-10, 10]ⁿ`.
    pub fn euclidean(n: usize) -> Self {
        Self::conformal_with_grad(
            format!("euclidean({n})"),
            n,
            |_| 1.0,
            move |_| DVector::zeros(n),
            Some(0.0),
            Domain::cube(n, 10.0),
        )
    }

    /// Unit round `Sⁿ` through stereographic projection from the north pole,
    /// `λ(x) = 2/(1+|x|²)`, restricted to `|x| ≤ 4`.
    pub fn sphere_stereographic(n: usize) -> Self {
        Self::conformal_with_grad(
            format!("sphere({n})"),
            n,
            |x| 2.0 / (1.0 + x.norm_squared()),
            |x| {
                let l = 2.0 / (1.0 + x.norm_squared());
                x * (-l * l)
            },
            Some(1.0),
            Domain::ball(n, 4.0),
        )
    }

    /// `g = λ² Σ dxⁱ⊗dxⁱ` for an arbitrary positive `λ`; `∂λ` by central
    /// differences.
    pub fn conformal<L>(name: impl Into<String>, n: usize, lambda: L, domain: Domain) -> Self
    where
        L: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        let lambda: PointMap<f64> = Arc::new(lambda);
        let l2 = lambda.clone();
        let scale = FdPolicy::default().first;
        let grad = move |x: &DVector<f64>| {
            fd::gradient(|z| Ok(l2(z)), x, scale).expect("infallible")
        };
        let mut chart = Self::conformal_with_grad(name, n, move |x| lambda(x), grad, None, domain);
        chart.conformal.as_mut().expect("conformal").curvature = None;
        chart
    }

    pub fn conformal_with_grad<L, G>(
        name: impl Into<String>,
        n: usize,
        lambda: L,
        grad: G,
        curvature: Option<f64>,
        domain: Domain,
    ) -> Self
    where
        L: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let lambda: PointMap<f64> = Arc::new(lambda);
        let grad: PointMap<DVector<f64>> = Arc::new(grad);
        let (l1, l2, g2) = (lambda.clone(), lambda.clone(), grad.clone());
        Self {
            name: name.into(),
            dim: n,
            metric: Arc::new(move |x| DMatrix::identity(n, n) * l1(x).powi(2)),
            metric_jet: Some(Arc::new(move |x| {
                let l = l2(x);
                let dl = g2(x);
                (0..n)
                    .map(|k| DMatrix::identity(n, n) * (2.0 * l * dl[k]))
                    .collect()
            })),
            domain,
            conformal: Some(ConformalFactor {
                lambda,
                grad,
                curvature,
            }),
            fd: FdPolicy::default(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn fd(&self) -> FdPolicy {
        self.fd
    }

    pub fn conformal_factor(&self) -> Option<&ConformalFactor> {
        self.conformal.as_ref()
    }

    pub fn has_metric_jet(&self) -> bool {
        self.metric_jet.is_some()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.domain.contains(x)
    }

    pub fn check(&self, x: &DVector<f64>) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(GeomError::Domain {
                chart: self.name.clone(),
                point: x.iter().copied().collect(),
            })
        }
    }

    pub fn metric(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        Ok((self.metric)(x))
    }

    /// `∂_k g` for each `k`, from the jet or by central differences.
    pub fn metric_partials(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check(x)?;
        if let Some(jet) = &self.metric_jet {
            return Ok(jet(x));
        }
        self.fd_metric_partials(x)
    }

    pub fn fd_metric_partials(&self, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let h = fd::step_for(self.fd.first, x[k]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            out.push((self.metric(&xp)? - self.metric(&xm)?) / (2.0 * h));
        }
        Ok(out)
    }

    /// Largest relative gap between the analytic metric jet and central
    /// differences at `x`; `None` without a jet.
    pub fn metric_jet_discrepancy(&self, x: &DVector<f64>) -> Result<Option<f64>> {
        let Some(jet) = &self.metric_jet else {
            return Ok(None);
        };
        let a = jet(x);
        let b = self.fd_metric_partials(x)?;
        let scale = b.iter().map(|m| m.amax()).fold(1.0_f64, f64::max);
        let gap = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).amax())
            .fold(0.0_f64, f64::max);
        Ok(Some(gap / scale))
    }

    pub fn inner(&self, x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        Ok(a.dot(&(self.metric(x)? * b)))
    }

    pub fn norm_sq(&self, x: &DVector<f64>, a: &DVector<f64>) -> Result<f64> {
        self.inner(x, a, a)
    }

    pub fn metric_inverse(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = self.metric(x)?;
        g.cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| GeomError::SingularMetric(format!("{} at {:?}", self.name, x.as_slice())))
    }

    /// Riemannian volume density `√det g`.
    pub fn volume_density(&self, x: &DVector<f64>) -> Result<f64> {
        let g = self.metric(x)?;
        let det = g.determinant();
        if det <= 0.0 {
            return Err(GeomError::SingularMetric(self.name.clone()));
        }
        Ok(det.sqrt())
    }

    pub fn christoffel(&self, x: &DVector<f64>) -> Result<Christoffel> {
        let n = self.dim;
        let ginv = self.metric_inverse(x)?;
        let dg = self.metric_partials(x)?;
        let mut c = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    c.set(k, i, j, 0.5 * s);
                    c.set(k, j, i, 0.5 * s);
                }
            }
        }
        Ok(c)
    }

    pub fn riemann(&self, x: &DVector<f64>) -> Result<Riemann> {
        let n = self.dim;
        let gam = self.christoffel(x)?;
        // dgam[m] holds ∂_m Γ.
        let mut dgam = Vec::with_capacity(n);
        for m in 0..n {
            let h = fd::step_for(self.fd.second, x[m]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[m] += h;
            xm[m] -= h;
            let gp = self.christoffel(&xp)?;
            let gm = self.christoffel(&xm)?;
            let d: Vec<f64> = gp
                .data
                .iter()
                .zip(&gm.data)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            dgam.push(Christoffel { n, data: d });
        }
        let mut data = vec![0.0; n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut v = dgam[i].get(l, j, k) - dgam[j].get(l, i, k);
                        for m in 0..n {
                            v += gam.get(l, i, m) * gam.get(m, j, k) - gam.get(l, j, m) * gam.get(m, i, k);
                        }
                        data[((l * n + i) * n + j) * n + k] = v;
                    }
                }
            }
        }
        Ok(Riemann { n, data })
    }

    pub fn ricci(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.riemann(x)?.ricci())
    }

    /// `Ric(X)` as a vector, i.e. the Ricci form with one index raised.
    pub fn ricci_operator(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.metric_inverse(x)? * (self.ricci(x)? * v))
    }

    /// Sectional curvature of the plane spanned by `a` and `b`.
    pub fn sectional(&self, x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        let g = self.metric(x)?;
        let aa = a.dot(&(&g * a));
        let bb = b.dot(&(&g * b));
        let ab = a.dot(&(&g * b));
        let area = aa * bb - ab * ab;
        if area <= 1e-12 * aa * bb || aa == 0.0 || bb == 0.0 {
            return Err(GeomError::DegeneratePlane);
        }
        let r = self.riemann(x)?;
        let rab = r.apply(a, b, b);
        Ok(rab.dot(&(&g * a)) / area)
    }

    /// Gram–Schmidt on the coordinate basis in index order.
    pub fn orthonormal_frame(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let order: Vec<usize> = (0..self.dim).collect();
        self.orthonormal_frame_ordered(x, &order)
    }

    /// Gram–Schmidt on the coordinate basis vectors taken in `order`.
    pub fn orthonormal_frame_ordered(&self, x: &DVector<f64>, order: &[usize]) -> Result<Vec<DVector<f64>>> {
        let g = self.metric(x)?;
        let mut frame: Vec<DVector<f64>> = Vec::with_capacity(order.len());
        for &i in order {
            let mut v = DVector::zeros(self.dim);
            v[i] = 1.0;
            for e in &frame {
                let c = e.dot(&(&g * &v));
                v -= e * c;
            }
            let nrm = v.dot(&(&g * &v));
            if nrm <= 0.0 {
                return Err(GeomError::SingularMetric(format!("Gram-Schmidt failed in {}", self.name)));
            }
            frame.push(v / nrm.sqrt());
        }
        Ok(frame)
    }

    /// `∇X` as the matrix whose column `j` is `∇_{∂_j} X`.
    pub fn nabla(&self, field: &VectorField, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let gam = self.christoffel(x)?;
        Ok(self.nabla_with(field, x, &gam))
    }

    fn nabla_with(&self, field: &VectorField, x: &DVector<f64>, gam: &Christoffel) -> DMatrix<f64> {
        let xv = field.eval(x);
        field.jacobian(x, self.fd.first) + gam.along(&xv)
    }

    /// `∇_V X` at `x`.
    pub fn covariant_derivative(&self, field: &VectorField, v: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.nabla(field, x)? * v)
    }

    pub fn divergence(&self, field: &VectorField, x: &DVector<f64>) -> Result<f64> {
        let g = self.metric(x)?;
        let nab = self.nabla(field, x)?;
        let frame = self.orthonormal_frame(x)?;
        Ok(frame.iter().map(|e| (&nab * e).dot(&(&g * e))).sum())
    }

    /// `‖∇X‖²` as the norm of a (1,1)-tensor.
    pub fn grad_norm_sq(&self, field: &VectorField, x: &DVector<f64>) -> Result<f64> {
        let g = self.metric(x)?;
        let nab = self.nabla(field, x)?;
        let frame = self.orthonormal_frame(x)?;
        Ok(frame
            .iter()
            .map(|e| {
                let w = &nab * e;
                w.dot(&(&g * &w))
            })
            .sum())
    }

    /// Second covariant derivative; element `i` is the matrix with entries
    /// `(k, j) ↦ (∇²X)(∂_i, ∂_j)^k`.
    pub fn second_covariant(&self, field: &VectorField, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim;
        let gam = self.christoffel(x)?;
        let nab = self.nabla_with(field, x, &gam);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let h = fd::step_for(self.fd.second, x[i]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let np = self.nabla(field, &xp)?;
            let nm = self.nabla(field, &xm)?;
            let d = (np - nm) / (2.0 * h);
            let m = DMatrix::from_fn(n, n, |k, j| {
                let mut v = d[(k, j)];
                for l in 0..n {
                    v += gam.get(k, i, l) * nab[(l, j)] - gam.get(l, i, j) * nab[(k, l)];
                }
                v
            });
            out.push(m);
        }
        Ok(out)
    }

    /// Rough Laplacian with the minus-trace sign convention:
    /// `Δ_g X = −Σ_i (∇²X)(V_i, V_i)` over an orthonormal frame.
    pub fn rough_laplacian(&self, field: &VectorField, x: &DVector<f64>) -> Result<DVector<f64>> {
        let order: Vec<usize> = (0..self.dim).collect();
        self.rough_laplacian_ordered(field, x, &order)
    }

    pub fn rough_laplacian_ordered(
        &self,
        field: &VectorField,
        x: &DVector<f64>,
        order: &[usize],
    ) -> Result<DVector<f64>> {
        let hess = self.second_covariant(field, x)?;
        let frame = self.orthonormal_frame_ordered(x, order)?;
        let mut lap = DVector::zeros(self.dim);
        for e in &frame {
            for (i, hi) in hess.iter().enumerate() {
                lap -= hi * e * e[i];
            }
        }
        Ok(lap)
    }

    /// `tr_g R(X, ∇.X)·  = Σ_i R(X, ∇_{V_i}X) V_i`.
    pub fn curvature_trace(&self, field: &VectorField, x: &DVector<f64>) -> Result<DVector<f64>> {
        let r = self.riemann(x)?;
        let nab = self.nabla(field, x)?;
        let xv = field.eval(x);
        let mut out = DVector::zeros(self.dim);
        for e in self.orthonormal_frame(x)? {
            out += r.apply(&xv, &(&nab * &e), &e);
        }
        Ok(out)
    }
}

/// Inverse stereographic map `ℝⁿ → Sⁿ ⊂ ℝⁿ⁺¹` from the north pole.
pub fn inverse_stereographic(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let s = 1.0 / (1.0 + x.norm_squared());
    DVector::from_fn(n + 1, |a, _| if a < n { 2.0 * x[a] * s } else { 1.0 - 2.0 * s })
}

/// Differential of [`inverse_stereographic`], an `(n+1) × n` matrix.
pub fn inverse_stereographic_jacobian(x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let s = 1.0 / (1.0 + x.norm_squared());
    DMatrix::from_fn(n + 1, n, |a, b| {
        if a < n {
            let d = if a == b { 2.0 * s } else { 0.0 };
            d - 4.0 * x[a] * x[b] * s * s
        } else {
            4.0 * x[b] * s * s
        }
    })
}

/// `∂_c` of [`inverse_stereographic_jacobian`].
fn inverse_stereographic_jacobian_partial(x: &DVector<f64>, c: usize) -> DMatrix<f64> {
    let n = x.len();
    let s = 1.0 / (1.0 + x.norm_squared());
    let (s2, s3) = (s * s, s * s * s);
    let kd = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    DMatrix::from_fn(n + 1, n, |a, b| {
        if a < n {
            -4.0 * s2 * (kd(a, b) * x[c] + kd(a, c) * x[b] + kd(b, c) * x[a]) + 16.0 * x[a] * x[b] * x[c] * s3
        } else {
            4.0 * kd(b, c) * s2 - 16.0 * x[b] * x[c] * s3
        }
    })
}

/// The quaternionic complex structures `J_1, J_2, J_3` on `ℝ⁴`.
pub fn quaternionic_structure(i: usize) -> DMatrix<f64> {
    #[rustfmt::skip]
    let rows: [f64; 16] = match i {
        1 => [0., -1., 0., 0.,
              1., 0., 0., 0.,
              0., 0., 0., -1.,
              0., 0., 1., 0.],
        2 => [0., 0., 1., 0.,
              0., 0., 0., -1.,
              -1., 0., 0., 0.,
              0., 1., 0., 0.],
        3 => [0., 0., 0., 1.,
              0., 0., 1., 0.,
              0., -1., 0., 0.,
              -1., 0., 0., 0.],
        _ => panic!("Hopf index must be 1, 2 or 3"),
    };
    DMatrix::from_row_slice(4, 4, &rows)
}

/// Hopf field `W_i = J_i N` on the stereographic chart of `S³`, pulled back
/// through the closed-form chart differential. Jet is analytic.
pub fn hopf_field(i: usize) -> Result<VectorField> {
    if !(1..=3).contains(&i) {
        return Err(GeomError::Parameter(format!("Hopf index {i} not in 1..=3")));
    }
    let j = quaternionic_structure(i);
    let j2 = j.clone();
    let value = move |x: &DVector<f64>| {
        let p = inverse_stereographic(x);
        let d = inverse_stereographic_jacobian(x);
        let inv_l2 = (1.0 + x.norm_squared()).powi(2) / 4.0;
        d.transpose() * (&j * p) * inv_l2
    };
    let jet = move |x: &DVector<f64>| {
        let p = inverse_stereographic(x);
        let d = inverse_stereographic_jacobian(x);
        let r2 = 1.0 + x.norm_squared();
        let inv_l2 = r2 * r2 / 4.0;
        let jp = &j2 * &p;
        let base = d.transpose() * &jp;
        let mut out = DMatrix::zeros(3, 3);
        for c in 0..3 {
            let dd = inverse_stereographic_jacobian_partial(x, c);
            let col = (dd.transpose() * &jp + d.transpose() * (&j2 * d.column(c))) * inv_l2
                + &base * (r2 * x[c]);
            out.set_column(c, &col);
        }
        out
    };
    Ok(VectorField::new(format!("hopf{i}"), value).with_jet(jet))
}

/// `X = ∂_i / √g_ii`; analytic jet on conformal charts.
pub fn normalized_coordinate_field(chart: &RiemannianChart, i: usize) -> VectorField {
    let n = chart.dim();
    let name = format!("coord{}_normalized", i + 1);
    if let Some(cf) = chart.conformal_factor() {
        let (c1, c2) = (cf.clone(), cf.clone());
        VectorField::new(name, move |x| {
            let mut v = DVector::zeros(n);
            v[i] = 1.0 / c1.lambda(x);
            v
        })
        .with_jet(move |x| {
            let l = c2.lambda(x);
            let dl = c2.grad(x);
            let mut m = DMatrix::zeros(n, n);
            for j in 0..n {
                m[(i, j)] = -dl[j] / (l * l);
            }
            m
        })
    } else {
        let metric = chart.metric.clone();
        VectorField::new(name, move |x| {
            let mut v = DVector::zeros(n);
            v[i] = 1.0 / metric(x)[(i, i)].sqrt();
            v
        })
    }
}

/// Unit field `(cos θ, sin θ)/λ` on a two-dimensional conformal chart with
/// `θ = θ₀ + a·x + b₀x₁² + b₁x₁x₂ + b₂x₂²` and analytic jet.
pub fn angle_unit_field(chart: &RiemannianChart, theta0: f64, a: [f64; 2], b: [f64; 3]) -> Result<VectorField> {
    if chart.dim() != 2 {
        return Err(GeomError::Parameter("angle unit field needs a 2-dimensional chart".into()));
    }
    let cf = chart
        .conformal_factor()
        .cloned()
        .ok_or_else(|| GeomError::Parameter("angle unit field needs a conformal chart".into()))?;
    let cf2 = cf.clone();
    let theta = move |x: &DVector<f64>| theta0 + a[0] * x[0] + a[1] * x[1] + b[0] * x[0] * x[0] + b[1] * x[0] * x[1] + b[2] * x[1] * x[1];
    let dtheta = move |x: &DVector<f64>| [a[0] + 2.0 * b[0] * x[0] + b[1] * x[1], a[1] + b[1] * x[0] + 2.0 * b[2] * x[1]];
    let name = if b == [0.0; 3] {
        format!("rotated({theta0:.3},{:.3},{:.3})", a[0], a[1])
    } else {
        format!("angle({theta0:.3},{:.3},{:.3},{:.3},{:.3},{:.3})", a[0], a[1], b[0], b[1], b[2])
    };
    Ok(VectorField::new(name, move |x| {
        let t = theta(x);
        DVector::from_vec(vec![t.cos(), t.sin()]) / cf.lambda(x)
    })
    .with_jet(move |x| {
        let t = theta(x);
        let dt = dtheta(x);
        let l = cf2.lambda(x);
        let dl = cf2.grad(x);
        let (c, s) = (t.cos(), t.sin());
        DMatrix::from_fn(2, 2, |i, j| {
            let (v, dv) = if i == 0 { (c, -s) } else { (s, c) };
            dv * dt[j] / l - v * dl[j] / (l * l)
        })
    }))
}

/// [`angle_unit_field`] with a linear angle.
pub fn rotated_unit_field(chart: &RiemannianChart, theta0: f64, a: [f64; 2]) -> Result<VectorField> {
    angle_unit_field(chart, theta0, a, [0.0; 3])
}
