use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cyclotomic context mismatch (r={0} vs r={1})")]
    ContextMismatch(u32, u32),
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("value is not rational: {0}")]
    NotRational(String),
    #[error("form degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: i32, found: i32 },
    #[error("inadmissible curve (r,s)=({r},{s}): r is not congruent to ±1 mod s")]
    Inadmissible { r: u32, s: u32 },
    #[error("inconsistent shift S_{{{i},{l}}}: {clause}")]
    InconsistentShift { i: u32, l: u32, clause: String },
    #[error("missing dependency: correlator (2g={two_g}, n={n}) not computed")]
    MissingDependency { two_g: u32, n: u32 },
    #[error("unsupported case: {0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
