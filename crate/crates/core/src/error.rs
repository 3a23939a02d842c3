use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrability violated: {0}")]
    Integrability(String),

    #[error("quadrature did not converge on [{lower}, {upper}]: estimated error {error:e}")]
    Quadrature { lower: f64, upper: f64, error: f64 },

    #[error("alpha_nu estimation failed (residual {residual:e}): {reason}")]
    Estimation { residual: f64, reason: String },

    #[error("noise specification error: {0}")]
    Spec(String),

    #[error("refinement error: {0}")]
    Refinement(String),

    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("level construction exhausted at k = {k}: the inverse-square modulus integral converges")]
    LevelExhaustion { k: usize },

    #[error("noise sharing violated: {0}")]
    NoiseSharing(String),

    #[error("blow-up at refinement level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }
}
