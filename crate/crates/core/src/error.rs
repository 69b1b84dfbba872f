use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("mechanism `{mechanism}` is defined for {expected} players, got {got}")]
    PlayerCount {
        mechanism: String,
        expected: usize,
        got: usize,
    },

    /// The allocation derivative vanishes, so the payment/allocation slope
    /// ratio is undefined at this profile.
    #[error("degenerate profile: allocation derivative of player {player} is {derivative:e}")]
    Degenerate { player: usize, derivative: f64 },

    #[error("unknown mechanism `{0}` (expected one of kelly, sh, e2pys, e2sr, shr, mb)")]
    UnknownMechanism(String),

    #[error("root not bracketed on [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("no equilibrium found from {0} initial profiles")]
    NoEquilibrium(usize),

    #[error("construction failed: {0}")]
    ConstructionFailed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
