use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no guaranteed positive root: a + b = {0} >= 0")]
    NoPositiveRoot(f64),

    #[error("ill-posed window: {0}")]
    IllPosedWindow(String),

    #[error("domain inconsistency: {0}")]
    DomainInconsistency(String),

    #[error("entire range has clin = inf (tau_max = {tau_max} <= tau_sharp = {tau_sharp})")]
    AllInfinite { tau_max: f64, tau_sharp: f64 },

    #[error("positive-speed branch absent (k* = {0} >= 1)")]
    PositiveBranchAbsent(f64),

    #[error("negative-speed branch absent (k* = {0} <= 1)")]
    NegativeBranchAbsent(f64),

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("profile escaped at t = {t} (|psi| = {value}) -- speed equation root invalid")]
    ProfileEscaped { t: f64, value: f64 },

    #[error("not bistable on the given interval: found {found} roots of g(u,u) = 0")]
    NotBistable { found: usize },

    #[error("hypothesis (B) violated at {0}")]
    HypothesisB(String),

    #[error("no front found: {0}")]
    NoFront(String),

    #[error("refinement diverged: {0}")]
    RefinementDiverged(String),

    #[error("advanced argument: h = c tau = {0} < 0; reflect the model for negative speeds")]
    AdvancedArgument(f64),

    #[error("domain too small: front within {margin} of the boundary at t = {t}")]
    DomainTooSmall { t: f64, margin: f64 },

    #[error("blow-up: non-finite values at t = {0}")]
    BlowUp(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
