use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class; the CLI maps each class to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("least squares needs at least as many rows as columns ({rows} < {cols})")]
    Underdetermined { rows: usize, cols: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("row {row}, column '{column}': cannot parse '{cell}' as a number")]
    BadCell { row: usize, column: String, cell: String },

    #[error("no observed values")]
    NoObservations,

    #[error("gap has no seed window (gap starts at index {gap_start}, order {order} needs {order} earlier values)")]
    NoSeedWindow { gap_start: usize, order: usize },

    #[error("gap at indices {gap_start}..{gap_end} runs to the end of the series and has no anchor; pass --allow-open-gap to extrapolate without a terminal constraint")]
    OpenGap { gap_start: usize, gap_end: usize },

    #[error("fit window too short: {len} observations, need at least {needed}")]
    WindowTooShort { len: usize, needed: usize },

    #[error("missing covariate at index {index}")]
    MissingCovariate { index: usize },

    #[error("unreachable terminal constraint: {0}")]
    Unreachable(String),

    #[error(
        "weight overflow: |weight| exceeded {limit:e} at lag {lag}; the model is too explosive for this gap length"
    )]
    WeightOverflow { lag: usize, limit: f64 },

    #[error("imputed value missing for index {0}")]
    MissingImputation(usize),

    #[error("gap {gap_start}..{gap_end}: {source}")]
    AtGap { gap_start: usize, gap_end: usize, source: Box<Error> },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::AtGap { source, .. } => source.class(),
            Error::Unreachable(_) | Error::WeightOverflow { .. } | Error::NonFinite(_) | Error::NotSymmetric(_) => {
                ErrorClass::Numerical
            }
            Error::InvalidInput(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }

    pub fn at_gap(self, gap_start: usize, gap_end: usize) -> Error {
        match self {
            e @ Error::AtGap { .. } => e,
            e => Error::AtGap { gap_start, gap_end, source: Box::new(e) },
        }
    }

    /// Innermost error, skipping gap context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtGap { source, .. } => source.root(),
            e => e,
        }
    }

    /// Short suggestion printed after the diagnostic.
    pub fn hint(&self) -> Option<&'static str> {
        match self.root() {
            Error::NoSeedWindow { .. } => Some("the series must start with at least `order` observed values"),
            Error::OpenGap { .. } => Some("pass --allow-open-gap to extrapolate trailing gaps"),
            Error::WindowTooShort { .. } => Some("lower --order or use --refit-per-gap to include later observations"),
            Error::MissingCovariate { .. } => {
                Some("covariates must be observed at every gap index, its seed, and its anchor")
            }
            Error::Unreachable(_) => Some("the fitted dynamics cannot reach the anchor; try another model or order"),
            Error::WeightOverflow { .. } => Some("the fitted model is explosive over this gap; try a lower order"),
            Error::BadCell { .. } => Some("add the token to --na if it marks a missing value"),
            _ => None,
        }
    }
}
