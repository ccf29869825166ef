use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension n = {n} is too small, need n >= 3")]
    DimensionTooSmall { n: u32 },

    #[error("gamma = {gamma} outside [0, {lambda_n}) (Hardy constant)")]
    GammaOutOfRange { gamma: f64, lambda_n: f64 },

    #[error("exponent {name} = {value} must be > 1")]
    ExponentTooSmall { name: &'static str, value: f64 },

    #[error("alpha + beta = {sum} but the critical exponent is {two_star}")]
    ExponentSum { sum: f64, two_star: f64 },

    #[error("coupling parameter nu = {nu} must be >= 0")]
    NegativeCoupling { nu: f64 },

    #[error("non-finite parameter {name}")]
    NonFiniteParameter { name: &'static str },

    #[error("radius r = {r} must be positive")]
    NonPositiveRadius { r: f64 },

    #[error("radius r = {r} below the evaluation floor 1e-300")]
    RadiusUnderflow { r: f64 },

    #[error("scale mu = {mu} must be positive and finite")]
    InvalidScale { mu: f64 },

    #[error("vector dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("x0 must lie on the hyperplane x_1 = 0, got x0_1 = {x0_1}")]
    PointOffHyperplane { x0_1: f64 },

    #[error("argument s = {s} must be positive")]
    NonPositiveArgument { s: f64 },

    #[error("|f(C)| = {residual} at C = {c_tilde} exceeds the root tolerance")]
    RootResidualTooLarge { c_tilde: f64, residual: f64 },

    #[error("f vanishes identically; the constants system has a continuum of solutions")]
    VanishingCoupling,

    #[error("constants system residuals ({res1}, {res2}) exceed tolerance")]
    ConstantsResidual { res1: f64, res2: f64 },

    #[error("constants (c1, c2) = ({c1}, {c2}) must be positive")]
    NonPositiveConstants { c1: f64, c2: f64 },

    #[error("classification needs gamma1 == gamma2 (got {gamma1} and {gamma2}); unequal weights only admit the radial symmetry statement")]
    UnequalGamma { gamma1: f64, gamma2: f64 },

    #[error("negative phase component {name} = {value}")]
    NegativeComponent { name: &'static str, value: f64 },

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("tolerance {tol} must be positive")]
    InvalidTolerance { tol: f64 },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("shooting bracket [{lo}, {hi}] does not exhibit the overshoot/undershoot dichotomy")]
    BracketNotFound { lo: f64, hi: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("trajectory did not complete ({termination})")]
    IncompleteTrajectory { termination: String },

    #[error("maximum of {component} lies on the trajectory boundary")]
    MaximumOnBoundary { component: &'static str },

    #[error("tau = {tau} is not a root of tau^2 - (n-2) tau + gamma = 0")]
    TauNotARoot { tau: f64 },

    #[error("grid must be non-empty, positive, finite and strictly increasing")]
    InvalidGrid,

    #[error("finite-difference stencil leaves the domain: r = {r}, h = {h}")]
    StencilLeavesDomain { r: f64, h: f64 },

    #[error("convergence fit needs >= 3 points with strictly decreasing h")]
    InsufficientFitData,

    #[error("degenerate convergence fit: errors at roundoff floor")]
    DegenerateFit,

    #[error("extrapolated limit did not converge: successive estimates {a} and {b}")]
    NonConvergence { a: f64, b: f64 },

    #[error("invalid sweep range: {0}")]
    InvalidRange(String),
}
