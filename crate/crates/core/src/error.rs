use thiserror::Error;

/// Errors raised by the simulation library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "target {index} is not on the delay-Doppler grid \
         (delay offset {delay_offset:.3e} bins, Doppler offset {doppler_offset:.3e} bins)"
    )]
    NonIntegerTap {
        index: usize,
        delay_offset: f64,
        doppler_offset: f64,
    },

    #[error("target {index} (R = {range_m} m, V = {velocity_m_s} m/s) is outside the unambiguous region")]
    OutOfAmbiguityRange {
        index: usize,
        range_m: f64,
        velocity_m_s: f64,
    },

    #[error("duplicate tap at Doppler index {doppler}, delay index {delay}")]
    DuplicateTap { doppler: usize, delay: usize },

    #[error("tap (k = {doppler}, l = {delay}) lies outside a {rows}x{cols} grid")]
    TapOutOfGrid {
        doppler: usize,
        delay: usize,
        rows: usize,
        cols: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("signal length mismatch: expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("tap delay {delay} exceeds the cyclic prefix length {cp}")]
    DelayExceedsCp { delay: usize, cp: usize },

    #[error("grid of {size} bins exceeds the materialization limit of {limit}")]
    GridTooLarge { size: usize, limit: usize },

    #[error("a grid with fewer than two bins has no sidelobe")]
    DegenerateGrid,

    #[error("sweep has no points")]
    EmptySweep,

    #[error("{path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
