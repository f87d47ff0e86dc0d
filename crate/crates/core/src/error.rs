use thiserror::Error;

use crate::shift::Word;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("zero matrix has no projective action")]
    ZeroMatrix,
    #[error("matrix is not rank one")]
    NotRankOne,
    #[error("degenerate image vector")]
    Degenerate,
    #[error("invalid cocycle: {0}")]
    InvalidCocycle(String),
    #[error("transition matrix is not primitive")]
    NotPrimitive,
    #[error("word is not admissible at position {0}")]
    Inadmissible(usize),
    #[error("symbol {0} is not singular")]
    NotSingular(usize),
    #[error("enumeration exceeds the cap of {0} words")]
    EnumerationCap(usize),
    #[error("component {0} is singular")]
    SingularComponent(usize),
    #[error("cocycle has no singular symbol")]
    NoSingularSymbol,
    #[error("null word {0}")]
    NullWord(Word),
    #[error("atom at distance {0:e} from a kernel")]
    DivergentObservable(f64),
    #[error("observable undefined at atom {0}")]
    UndefinedPoint(usize),
    #[error("atom graph exceeds {0} nodes")]
    TooManyAtoms(usize),
    #[error("not every letter is rank one")]
    NotAllRankOne,
    #[error("multi-cone is not verified for the invertible letters")]
    NoCone,
    #[error("truncation level {n} does not exceed the log-norm bound {bound}")]
    BadTruncation { n: f64, bound: f64 },
    #[error("variance is zero")]
    ZeroVariance,
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
