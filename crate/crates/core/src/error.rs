use thiserror::Error;

/// Errors raised by the model, integrators, and orbit engine.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("friction is undefined at y = 0, |xi| = mu_s (xi = {xi})")]
    UndefinedFriction { xi: f64 },

    #[error("point is not on the requested tangency set (residual {residual:.3e})")]
    NotOnTangencySet { residual: f64 },

    #[error("gamma = {gamma} is inside the resonance guard band around 1")]
    ResonanceGuard { gamma: f64 },

    #[error("no event within horizon {horizon}")]
    NoEventWithinHorizon { horizon: f64 },

    #[error("event root polishing failed: {0}")]
    RootPolish(String),

    #[error("backward time integration is not supported (T = {0})")]
    BackwardTime(f64),

    #[error("singular stiction solution: hit {set} at t = {t}")]
    SingularSolution { set: &'static str, t: f64 },

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("regularization function violates its shape conditions: {0}")]
    ShapeViolation(String),

    #[error("reduced flow is singular on the fold line (phi'(y) = {dphi:.3e})")]
    SingularLine { dphi: f64 },

    #[error("no folded singularities for |Gamma delta| = {0} > 1")]
    NoSingularities(f64),

    #[error("integration step failure: {0}")]
    StepFailure(String),

    #[error("no sticking periodic solutions for mu_s = {0} <= 1")]
    NoStick(f64),

    #[error("Newton iteration did not converge: {0}")]
    NewtonDivergence(String),

    #[error("solution is inadmissible: {0}")]
    Inadmissible(String),

    #[error("orbit closure error {0:.3e} exceeds tolerance")]
    ClosureFailure(f64),

    #[error("degenerate (tangential) transition at theta = {theta}")]
    DegenerateTransition { theta: f64 },

    #[error("no intersection found: {0}")]
    NoIntersection(String),
}

pub type Result<T> = std::result::Result<T, Error>;
