use thiserror::Error;

pub type Result<T> = std::result::Result<T, TwistError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwistError {
    #[error("coupling range r = {0} is outside (0, 1/2]")]
    InvalidRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient {0} requires the second mode index m")]
    MissingMode(&'static str),

    #[error("degenerate kernel: W_r(q) vanishes for q = {q}, r = {r}; stabilization impossible")]
    DegenerateKernel { q: u32, r: f64 },

    #[error("iota is singular at upsilon = {0} (g(upsilon) = 0)")]
    SingularPoint(f64),

    #[error("no bifurcation: {0}")]
    NoBifurcation(String),

    #[error("no threshold found: {0}")]
    NoThreshold(String),

    #[error("second-harmonic resonance: c1(q = {q}, 2l = {}) vanishes", 2 * .ell)]
    SecondHarmonicResonance { q: u32, ell: i64 },

    #[error("curve base is not a bifurcation point: |c1(q, l, p0)| = {0:e} exceeds the crossing tolerance")]
    NotCritical(f64),

    #[error("ambiguous critical mode: modes {0:?} are simultaneously critical")]
    AmbiguousCriticalMode(Vec<i64>),

    #[error("no bifurcating branch at s = {s}: -gamma2*s/gamma1 is negative")]
    BranchAbsent { s: f64 },

    #[error("cubic coefficient gamma1 = {0:e} is degenerate")]
    DegenerateGamma1(f64),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error(
        "step size underflow at t = {t} (h = {h:e}); system too stiff for the explicit integrator"
    )]
    Stiffness { t: f64, h: f64 },

    #[error("Jacobian is near-singular (condition estimate {condition:e}); the equilibrium is symmetry-degenerate, try a different branch phase")]
    NearSymmetryDegenerate { condition: f64 },

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

impl TwistError {
    /// Stable machine-readable tag for each variant.
    pub fn kind(&self) -> &'static str {
        match self {
            TwistError::InvalidRange(_) => "invalid_range",
            TwistError::InvalidArgument(_) => "invalid_argument",
            TwistError::MissingMode(_) => "missing_mode",
            TwistError::DegenerateKernel { .. } => "degenerate_kernel",
            TwistError::SingularPoint(_) => "singular_point",
            TwistError::NoBifurcation(_) => "no_bifurcation",
            TwistError::NoThreshold(_) => "no_threshold",
            TwistError::SecondHarmonicResonance { .. } => "second_harmonic_resonance",
            TwistError::NotCritical(_) => "not_critical",
            TwistError::AmbiguousCriticalMode(_) => "ambiguous_critical_mode",
            TwistError::BranchAbsent { .. } => "branch_absent",
            TwistError::DegenerateGamma1(_) => "degenerate_gamma1",
            TwistError::ResourceLimit(_) => "resource_limit",
            TwistError::Stiffness { .. } => "stiffness",
            TwistError::NearSymmetryDegenerate { .. } => "near_symmetry_degenerate",
            TwistError::NewtonNoConvergence { .. } => "newton_no_convergence",
            TwistError::Inconsistent(_) => "inconsistent",
        }
    }

    /// True for errors caused by invalid caller input rather than by the
    /// mathematics of the requested point.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            TwistError::InvalidRange(_)
                | TwistError::InvalidArgument(_)
                | TwistError::MissingMode(_)
        )
    }
}
