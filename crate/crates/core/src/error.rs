use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("no root of chi1(.; {ell}, {q}) in (0, 1/2)")]
    NoRoot { ell: u32, q: u32 },

    #[error("degenerate normal form: {0}")]
    Degenerate(String),

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("maximum number of steps exceeded at t = {t}")]
    MaxSteps { t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("no twisted-state fit: phases are uniformly spread (|mean| = {magnitude:e})")]
    NoFit { magnitude: f64 },

    #[error("sampling too coarse: {quantity} jumped by {jump} between consecutive samples")]
    SamplingTooCoarse { quantity: &'static str, jump: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
