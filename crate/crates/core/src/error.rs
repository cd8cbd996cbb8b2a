use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// Shapes, widths or other configuration do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A theorem checker's hypothesis cannot be instantiated.
    #[error("precondition rejected: {0}")]
    Precondition(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// The iterate left the finite region or exceeded the divergence norm.
    #[error("trajectory diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("observable `{name}` is not finite at atom {index}")]
    NonFiniteObservable { name: String, index: usize },

    #[error("telescoping identity violated: direct {direct:e} vs telescoped {telescoped:e}")]
    Telescoping { direct: f64, telescoped: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
