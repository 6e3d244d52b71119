//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by scene construction, discretisation, fitting and analysis.
///
/// Variant names follow the error vocabulary used in configuration and
/// command-line reports (`obstacle_not_interior`, `singular_system`, ...);
/// [`Error::code`] returns that snake-case tag.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("obstacle {0} is not contained in the interior of the domain")]
    ObstacleNotInterior(usize),
    #[error("obstacles {0} and {1} have intersecting closures")]
    ObstaclesOverlap(usize, usize),
    #[error("the complement of the obstacles is disconnected")]
    ComplementDisconnected,
    #[error("invalid needle: {0}")]
    InvalidNeedle(String),
    #[error("mesh quality failure: {0}")]
    MeshQualityFailure(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("fundamental solution evaluated at its pole")]
    SingularPoint,
    #[error("control set is empty for tube radius {0}")]
    EmptyControlSet(f64),
    #[error("ill-conditioned fit (condition estimate {0:.3e})")]
    IllConditionedFit(f64),
    #[error("compact set {0} touches the needle")]
    CompactTouchesNeedle(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("trace basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("smallness conditions violated: {0}")]
    SmallnessViolated(String),
    #[error("Kelvin transform evaluated at the origin")]
    OriginSingularity,
    #[error("needle violates the reflected-needle hypotheses: {0}")]
    NeedleConditionsViolated(String),
    #[error("nonpositive conductivity: {0}")]
    NonpositiveConductivity(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Snake-case tag of the variant, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "invalid_shape",
            Error::ObstacleNotInterior(_) => "obstacle_not_interior",
            Error::ObstaclesOverlap(..) => "obstacles_overlap",
            Error::ComplementDisconnected => "complement_disconnected",
            Error::InvalidNeedle(_) => "invalid_needle",
            Error::MeshQualityFailure(_) => "mesh_quality_failure",
            Error::SingularSystem(_) => "singular_system",
            Error::SingularPoint => "singular_point",
            Error::EmptyControlSet(_) => "empty_control_set",
            Error::IllConditionedFit(_) => "ill_conditioned_fit",
            Error::CompactTouchesNeedle(_) => "compact_touches_needle",
            Error::InsufficientData(_) => "insufficient_data",
            Error::BasisMismatch(_) => "basis_mismatch",
            Error::EigensolverFailure(_) => "eigensolver_failure",
            Error::SmallnessViolated(_) => "smallness_violated",
            Error::OriginSingularity => "origin_singularity",
            Error::NeedleConditionsViolated(_) => "needle_conditions_violated",
            Error::NonpositiveConductivity(_) => "nonpositive_conductivity",
            Error::InvalidInput(_) => "invalid_input",
            Error::Parse(_) => "parse_error",
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::MeshQualityFailure(_)
                | Error::SingularSystem(_)
                | Error::SingularPoint
                | Error::IllConditionedFit(_)
                | Error::EigensolverFailure(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
