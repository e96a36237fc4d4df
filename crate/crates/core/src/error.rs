use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("orbit reached the local stable manifold (entry radius {radius:e})")]
    StableManifoldHit { radius: f64 },
    #[error("orbit reached the local unstable manifold (exit radius {radius:e})")]
    UnstableManifoldHit { radius: f64 },
    #[error("point outside the domain: {0}")]
    DomainError(String),
    #[error("orbit segment never entered the linearization neighbourhood")]
    NoVisits,
    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),
    #[error("turn {turn} cannot be resolved: {reason}")]
    TurnUnresolvable { turn: i64, reason: String },
    #[error("root solve did not converge: {0}")]
    RootNotConverged(String),
    #[error("winding {winding} not resolvable at depth {depth}")]
    WindowExhausted { depth: usize, winding: i64 },
    #[error("no containing neighbourhood found at depth {depth}")]
    ContainmentFailure { depth: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::StableManifoldHit { .. } => "StableManifoldHit",
            Error::UnstableManifoldHit { .. } => "UnstableManifoldHit",
            Error::DomainError(_) => "DomainError",
            Error::NoVisits => "NoVisits",
            Error::InsufficientResolution(_) => "InsufficientResolution",
            Error::TurnUnresolvable { .. } => "TurnUnresolvable",
            Error::RootNotConverged(_) => "RootNotConverged",
            Error::WindowExhausted { .. } => "WindowExhausted",
            Error::ContainmentFailure { .. } => "ContainmentFailure",
            Error::InvalidRequest(_) => "InvalidRequest",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
