use thiserror::Error;

/// Every failure mode of the geometric kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("point {point:?} lies outside the domain of chart `{chart}`")]
    Domain { chart: String, point: Vec<f64> },

    #[error("structure undefined at this point: {0}")]
    Undefined(String),

    #[error("metric is not positive definite: {0}")]
    SingularMetric(String),

    #[error("plane vectors are linearly dependent")]
    DegeneratePlane,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("tangent vectors are attached to different points of TM")]
    PointMismatch,

    #[error("fiber is not unit: g(u,u) = {norm_sq}")]
    NotUnitFiber { norm_sq: f64 },

    #[error("vector field is not unit: g(X,X) = {norm_sq}")]
    NotUnitField { norm_sq: f64 },

    #[error("structure `{0}` does not depend on the fiber only through g(u,u)")]
    NotRadial(String),

    #[error("structure `{0}` has non-vanishing sigma")]
    SigmaNotZero(String),

    #[error("vector field is not parallel: |nabla X|^2 = {norm_sq}")]
    NotParallel { norm_sq: f64 },

    #[error("variation is not orthogonal to the field: g(V,X) = {inner}")]
    NotOrthogonal { inner: f64 },

    #[error("analytic jets required: {0}")]
    JetRequired(String),

    #[error("analytic jet of `{what}` disagrees with finite differences (relative error {rel_err:.3e})")]
    JetMismatch { what: String, rel_err: f64 },
}

pub type Result<T, E = GeomError> = std::result::Result<T, E>;
