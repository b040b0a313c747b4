//! Scenario documents: what to build and which checks to run on it.

use std::collections::BTreeMap;
use std::path::Path;

use isotm_core::geom::{angle_unit_field, hopf_field, normalized_coordinate_field, Domain};
use isotm_core::gmetric::TangentMetric;
use isotm_core::iso::ComplexFieldZ;
use isotm_core::{FdPolicy, IsotropicStructure, RiemannianChart, Thresholds, VectorField};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub manifold: ManifoldSpec,
    pub structure: StructureSpec,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub tolerances: Option<ToleranceSpec>,
    /// Expected verdict per check, for checks that only report by default.
    #[serde(default)]
    pub expect: BTreeMap<CheckName, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Conformal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub dim: usize,
    #[serde(default)]
    pub params: ManifoldParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `λ = 2/(1 − |x|²)` on the unit ball (curvature −1).
    Hyperbolic,
    /// `λ = exp(c|x|²)`.
    Gaussian,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldParams {
    #[serde(default)]
    pub profile: Option<Profile>,
    #[serde(default)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Sasaki,
    Sigma0,
    General,
    CustomNamed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub kind: StructureKind,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    /// For `custom_named`: `flat_example` or `constant`.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Hopf1,
    Hopf2,
    Hopf3,
    Parallel,
    CoordinateNormalized,
    CustomNamed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: FieldKind,
    #[serde(default)]
    pub params: FieldParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldParams {
    /// Coordinate index for `parallel` and `coordinate_normalized`.
    #[serde(default)]
    pub index: Option<usize>,
    /// For `custom_named`: only `angle` is known.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub theta0: Option<f64>,
    #[serde(default)]
    pub linear: Option<[f64; 2]>,
    #[serde(default)]
    pub quadratic: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    NijenhuisScan,
    FlatPde,
    SpherePde,
    ConnectionXval,
    MetricProperties,
    TensionXval,
    Tau1,
    HarmonicResidual,
    FirstVariation,
    Energy,
    ParallelCheck,
    GnaturalCoeffs,
}

impl CheckName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NijenhuisScan => "nijenhuis_scan",
            Self::FlatPde => "flat_pde",
            Self::SpherePde => "sphere_pde",
            Self::ConnectionXval => "connection_xval",
            Self::MetricProperties => "metric_properties",
            Self::TensionXval => "tension_xval",
            Self::Tau1 => "tau1",
            Self::HarmonicResidual => "harmonic_residual",
            Self::FirstVariation => "first_variation",
            Self::Energy => "energy",
            Self::ParallelCheck => "parallel_check",
            Self::GnaturalCoeffs => "gnatural_coeffs",
        }
    }

    pub fn needs_field(self) -> bool {
        matches!(
            self,
            Self::TensionXval | Self::Tau1 | Self::HarmonicResidual | Self::FirstVariation | Self::Energy | Self::ParallelCheck
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_fiber_radius")]
    pub fiber_radius: f64,
    /// Points per axis for quadratures and dumps.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Half-width of the sampling box `[−r, r]ⁿ` in chart coordinates.
    #[serde(default = "default_region")]
    pub region: f64,
    #[serde(default)]
    pub fd_step_overrides: Option<FdOverrides>,
}

fn default_seed() -> u64 {
    1
}
fn default_n_points() -> usize {
    16
}
fn default_fiber_radius() -> f64 {
    1.0
}
fn default_grid() -> usize {
    16
}
fn default_region() -> f64 {
    1.0
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            n_points: default_n_points(),
            fiber_radius: default_fiber_radius(),
            grid: default_grid(),
            region: default_region(),
            fd_step_overrides: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdOverrides {
    #[serde(default)]
    pub first: Option<f64>,
    #[serde(default)]
    pub second: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default)]
    pub accept: Option<f64>,
    #[serde(default)]
    pub reject: Option<f64>,
    /// Per-check overrides of `accept`.
    #[serde(default)]
    pub per_check: BTreeMap<CheckName, f64>,
}

fn config(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn fd_policy(&self) -> FdPolicy {
        let mut fd = FdPolicy::default();
        if let Some(o) = self.sampling.fd_step_overrides {
            fd.first = o.first.unwrap_or(fd.first);
            fd.second = o.second.unwrap_or(fd.second);
        }
        fd
    }

    pub fn thresholds(&self) -> Thresholds {
        let d = Thresholds::default();
        match &self.tolerances {
            Some(t) => Thresholds {
                accept: t.accept.unwrap_or(d.accept),
                reject: t.reject.unwrap_or(d.reject),
            },
            None => d,
        }
    }

    /// Thresholds for one check: the scenario-wide band unless overridden.
    pub fn thresholds_for(&self, check: CheckName, default_accept: Option<f64>) -> Thresholds {
        let mut t = self.thresholds();
        let over = self.tolerances.as_ref().and_then(|s| s.per_check.get(&check).copied());
        if let Some(a) = over.or(default_accept) {
            t.accept = a;
            t.reject = t.reject.max(a);
        }
        t
    }

    fn validate(&self) -> Result<()> {
        let n = self.manifold.dim;
        if n == 0 || n > 6 {
            return Err(config("manifold.dim", format!("must be in 1..=6, got {n}")));
        }
        if self.manifold.kind == ManifoldKind::Sphere && n < 2 {
            return Err(config("manifold.dim", "sphere needs dim >= 2"));
        }
        if self.manifold.kind == ManifoldKind::Conformal && self.manifold.params.profile.is_none() {
            return Err(config("manifold.params.profile", "conformal manifold needs a profile"));
        }
        let s = &self.sampling;
        if s.n_points == 0 {
            return Err(config("sampling.n_points", "must be positive"));
        }
        if s.grid == 0 {
            return Err(config("sampling.grid", "must be positive"));
        }
        if !(s.fiber_radius > 0.0) {
            return Err(config("sampling.fiber_radius", "must be positive"));
        }
        if !(s.region > 0.0) {
            return Err(config("sampling.region", "must be positive"));
        }
        if let Some(o) = s.fd_step_overrides {
            for (name, v) in [("first", o.first), ("second", o.second)] {
                if let Some(h) = v {
                    if !(h > 0.0 && h < 1.0) {
                        return Err(config(format!("sampling.fd_step_overrides.{name}"), "must be in (0, 1)"));
                    }
                }
            }
        }
        let t = self.thresholds();
        if !(t.accept > 0.0 && t.accept <= t.reject) {
            return Err(config("tolerances", "need 0 < accept <= reject"));
        }
        self.validate_structure()?;
        if let Some(f) = &self.field {
            self.validate_field(f)?;
        }
        for (i, c) in self.checks.iter().enumerate() {
            if c.needs_field() && self.field.is_none() {
                return Err(config(format!("checks[{i}]"), format!("`{}` needs a field", c.as_str())));
            }
        }
        for (c, v) in &self.expect {
            if !matches!(v.as_str(), "INTEGRABLE" | "NOT_INTEGRABLE" | "HARMONIC" | "NOT_HARMONIC" | "PASS" | "FAIL" | "INCONCLUSIVE") {
                return Err(config(format!("expect.{}", c.as_str()), format!("unknown verdict `{v}`")));
            }
        }
        Ok(())
    }

    /// Largest `E = ½ g(y,y)` over the sampled fibers.
    fn max_kinetic_energy(&self) -> f64 {
        let r = self.sampling.fiber_radius;
        let lam_max = match self.manifold.kind {
            ManifoldKind::Euclidean => 1.0,
            ManifoldKind::Sphere => 2.0,
            ManifoldKind::Conformal => match self.manifold.params.profile {
                Some(Profile::Hyperbolic) => {
                    let x = hyperbolic_box(self.sampling.region);
                    2.0 / (1.0 - x * x)
                }
                _ => {
                    let c = self.manifold.params.c.unwrap_or(0.0);
                    (c * self.manifold.dim as f64 * self.sampling.region.powi(2)).max(0.0).exp()
                }
            },
        };
        0.5 * lam_max * lam_max * r * r
    }

    fn validate_structure(&self) -> Result<()> {
        let s = &self.structure;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| config(format!("structure.{name}"), "required"));
        match s.kind {
            StructureKind::Sasaki => Ok(()),
            StructureKind::Sigma0 | StructureKind::General => {
                let k = need(s.k, "k")?;
                let b = need(s.b, "b")?;
                if s.kind == StructureKind::General && need(s.a, "a")? == 0.0 {
                    return Err(config("structure.a", "must be non-zero"));
                }
                if s.kind == StructureKind::Sigma0 {
                    let worst = if k >= 0.0 { b } else { 2.0 * k * self.max_kinetic_energy() + b };
                    if !(worst > 0.0) {
                        return Err(config(
                            "structure.b",
                            format!("2kE + b must be positive on the sampled fibers (min {worst})"),
                        ));
                    }
                }
                Ok(())
            }
            StructureKind::CustomNamed => match s.name.as_deref() {
                Some("flat_example") => Ok(()),
                Some("constant") => {
                    if !(need(s.delta, "delta")? > 0.0) {
                        return Err(config("structure.delta", "must be positive"));
                    }
                    need(s.sigma, "sigma").map(|_| ())
                }
                Some(other) => Err(config("structure.name", format!("unknown structure `{other}`"))),
                None => Err(config("structure.name", "required for custom_named")),
            },
        }
    }

    fn validate_field(&self, f: &FieldSpec) -> Result<()> {
        let n = self.manifold.dim;
        match f.kind {
            FieldKind::Hopf1 | FieldKind::Hopf2 | FieldKind::Hopf3 => {
                if !(self.manifold.kind == ManifoldKind::Sphere && n == 3) {
                    return Err(config("field.kind", "Hopf fields live on sphere(3)"));
                }
            }
            FieldKind::Parallel | FieldKind::CoordinateNormalized => {
                if f.params.index.unwrap_or(0) >= n {
                    return Err(config("field.params.index", format!("must be < {n}")));
                }
            }
            FieldKind::CustomNamed => {
                if f.params.name.as_deref() != Some("angle") {
                    return Err(config("field.params.name", "only `angle` is known"));
                }
                if n != 2 {
                    return Err(config("field.params.name", "angle fields need dim 2"));
                }
            }
        }
        Ok(())
    }

    pub fn chart(&self) -> Result<RiemannianChart> {
        let n = self.manifold.dim;
        let chart = match self.manifold.kind {
            ManifoldKind::Euclidean => RiemannianChart::euclidean(n),
            ManifoldKind::Sphere => RiemannianChart::sphere_stereographic(n),
            ManifoldKind::Conformal => match self.manifold.params.profile {
                Some(Profile::Hyperbolic) => RiemannianChart::conformal_with_grad(
                    format!("hyperbolic({n})"),
                    n,
                    |x: &DVector<f64>| 2.0 / (1.0 - x.norm_squared()),
                    |x: &DVector<f64>| x * (4.0 / (1.0 - x.norm_squared()).powi(2)),
                    Some(-1.0),
                    Domain::ball(n, 0.95),
                ),
                _ => {
                    let c = self.manifold.params.c.unwrap_or(0.0);
                    RiemannianChart::conformal_with_grad(
                        format!("gaussian({n},c={c})"),
                        n,
                        move |x: &DVector<f64>| (c * x.norm_squared()).exp(),
                        move |x: &DVector<f64>| x * (2.0 * c * (c * x.norm_squared()).exp()),
                        (c == 0.0).then_some(0.0),
                        Domain::cube(n, 10.0),
                    )
                }
            },
        };
        Ok(chart.with_fd_policy(self.fd_policy()))
    }

    pub fn structure(&self) -> Result<IsotropicStructure> {
        let s = &self.structure;
        let get = |v: Option<f64>| v.unwrap_or(0.0);
        Ok(match s.kind {
            StructureKind::Sasaki => IsotropicStructure::sasaki(),
            StructureKind::Sigma0 => IsotropicStructure::family_sigma0(get(s.k), get(s.b)),
            StructureKind::General => IsotropicStructure::family_general(get(s.k), get(s.a), get(s.b))?,
            StructureKind::CustomNamed => match s.name.as_deref() {
                Some("flat_example") => ComplexFieldZ::flat_example().to_structure(),
                _ => IsotropicStructure::constant(get(s.delta), get(s.sigma))?,
            },
        })
    }

    pub fn metric(&self) -> Result<TangentMetric> {
        Ok(TangentMetric::new(self.structure()?, self.chart()?))
    }

    /// The `z` field whose integrability PDE is checked.
    pub fn z_field(&self, chart: &RiemannianChart) -> Result<ComplexFieldZ> {
        Ok(match (self.structure.kind, self.structure.name.as_deref()) {
            (StructureKind::CustomNamed, Some("flat_example")) => ComplexFieldZ::flat_example(),
            _ => ComplexFieldZ::from_structure(&self.structure()?, chart),
        })
    }

    pub fn vector_field(&self, chart: &RiemannianChart) -> Result<Option<VectorField>> {
        let Some(f) = &self.field else { return Ok(None) };
        let n = chart.dim();
        let idx = f.params.index.unwrap_or(0);
        Ok(Some(match f.kind {
            FieldKind::Hopf1 => hopf_field(1)?,
            FieldKind::Hopf2 => hopf_field(2)?,
            FieldKind::Hopf3 => hopf_field(3)?,
            FieldKind::Parallel => {
                let mut e = DVector::zeros(n);
                e[idx] = 1.0;
                VectorField::constant(format!("e{}", idx + 1), e)
            }
            FieldKind::CoordinateNormalized => normalized_coordinate_field(chart, idx),
            FieldKind::CustomNamed => angle_unit_field(
                chart,
                f.params.theta0.unwrap_or(0.0),
                f.params.linear.unwrap_or([0.0; 2]),
                f.params.quadratic.unwrap_or([0.0; 3]),
            )?,
        }))
    }
}

/// Radius of the ball containing the hyperbolic sampling box.
fn hyperbolic_box(region: f64) -> f64 {
    region.min(0.5)
}

/// Sampling box half-width actually used for `chart`.
pub fn sampling_half_width(s: &Scenario) -> f64 {
    match (s.manifold.kind, s.manifold.params.profile) {
        (ManifoldKind::Conformal, Some(Profile::Hyperbolic)) => hyperbolic_box(s.sampling.region) / (s.manifold.dim as f64).sqrt(),
        _ => s.sampling.region,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOPF: &str = r#"{
        "manifold": {"kind": "sphere", "dim": 3},
        "structure": {"kind": "sasaki"},
        "field": {"kind": "hopf1"},
        "checks": ["harmonic_residual"]
    }"#;

    fn field_of(text: &str) -> String {
        match Scenario::from_json(text) {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_minimal_scenario() {
        let s = Scenario::from_json(HOPF).unwrap();
        assert_eq!(s.checks, vec![CheckName::HarmonicResidual]);
        assert_eq!(s.sampling, Sampling::default());
        assert!(s.vector_field(&s.chart().unwrap()).unwrap().is_some());
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let bad = HOPF.replace(r#""kind": "sasaki""#, r#""kind": "sasaki", "bb": 1"#);
        assert_eq!(field_of(&bad), "structure.bb");
        let bad = HOPF.replace(r#""checks""#, r#""chekcs""#);
        assert_eq!(field_of(&bad), "chekcs");
    }

    #[test]
    fn sigma0_domain_names_b() {
        let text = r#"{
            "manifold": {"kind": "sphere", "dim": 2},
            "structure": {"kind": "sigma0", "k": 1, "b": -1},
            "checks": ["nijenhuis_scan"],
            "sampling": {"fiber_radius": 0.5}
        }"#;
        assert_eq!(field_of(text), "structure.b");
        let text = text.replace("\"k\": 1", "\"k\": -1").replace("-1}", "1}");
        assert_eq!(field_of(&text), "structure.b");
    }

    #[test]
    fn field_requirements() {
        let no_field = HOPF.replace(r#""field": {"kind": "hopf1"},"#, "");
        assert_eq!(field_of(&no_field), "checks[0]");
        let wrong = HOPF.replace(r#""dim": 3"#, r#""dim": 2"#);
        assert_eq!(field_of(&wrong), "field.kind");
        let typo = HOPF.replace("harmonic_residual", "harmonic");
        assert_eq!(field_of(&typo), "checks[0]");
    }
}
