use thiserror::Error;

/// Errors produced by the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing daily values inside week starting {week_start}: {missing} of 7 days absent")]
    MissingDays { week_start: String, missing: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("normal matrix is ill-conditioned (estimate {cond:.3e}); most collinear columns: {col_a} and {col_b}")]
    IllConditioned {
        cond: f64,
        col_a: String,
        col_b: String,
    },

    #[error("fit diverged: chi2 increased for {count} consecutive iterations; chi2 trace: {trace}")]
    Diverged { count: usize, trace: String },

    #[error("stale stage output: {0}")]
    StaleStage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
