use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HillError {
    #[error("integrator failed to meet tolerance at x = {x} (step {h:e})")]
    IntegratorFailure { x: f64, h: f64 },
    #[error("λ = {re}{im:+}i lies on the spectrum; a side (±) is required")]
    OnSpectrum { re: f64, im: f64 },
    #[error("λ within ε of Dirichlet eigenvalue μ_{n}; column {column} is singular")]
    NearDirichletPole { n: usize, column: &'static str },
    #[error("integration path crosses the spectrum at λ = {at}")]
    PathCrossesSpectrum { at: f64 },
    #[error("root bracket [{lo}, {hi}] does not isolate a root ({what})")]
    RootBracketFailure { lo: f64, hi: f64, what: String },
    #[error("λ within ε of branch point {edge}")]
    BranchPoint { edge: f64 },
    #[error("λ = {lambda} is (within ε) a band edge")]
    OnEdge { lambda: f64 },
    #[error("Richardson extrapolation diverged (stage spread {spread:e})")]
    ExtrapolationDiverged { spread: f64 },
    #[error("μ_{n} is within the edge collar; angle chart required")]
    EdgeChartRequired { n: usize },
    #[error("chart switch failed for gap {n}")]
    ChartSwitchFailure { n: usize },
    #[error("λ is within ε of a pole at {at}")]
    NearPole { at: f64 },
    #[error("spectral tail {tail:e} exceeds resolution threshold")]
    ResolutionLoss { tail: f64 },
    #[error("degenerate curve: edges {a} and {b} coincide")]
    DegenerateCurve { a: f64, b: f64 },
    #[error("theta cutoff exceeded limit {limit}")]
    CutoffExplosion { limit: usize },
    #[error("singular linear system in {what}")]
    LinearSolveSingular { what: String },
    #[error("theta function vanishes (|θ| = {value:e})")]
    ThetaZero { value: f64 },
    #[error("point lies on the pole divisor")]
    OnPoleDivisor,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, HillError>;

impl From<std::io::Error> for HillError {
    fn from(e: std::io::Error) -> Self {
        HillError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for HillError {
    fn from(e: serde_json::Error) -> Self {
        HillError::Config(e.to_string())
    }
}
