use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model or configuration field failed validation.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("rate matrix violates the q-property: {0}")]
    QProperty(String),

    #[error(
        "step size too large for switching: dt * max exit rate = {product:.4} > 0.1 \
         (dt = {dt}, max exit rate = {max_rate}); use dt <= {suggested:.3e}"
    )]
    StepSize {
        dt: f64,
        max_rate: f64,
        product: f64,
        suggested: f64,
    },

    #[error("model has no declared equilibrium at the origin")]
    NoEquilibrium,

    #[error("rate matrix is reducible; closed classes (1-based): {classes:?}")]
    Reducible { classes: Vec<Vec<usize>> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite value in {term}")]
    NonFinite { term: String },

    #[error("all {n_paths} paths diverged")]
    AllDivergent { n_paths: usize },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
