use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("row {row}: cell {cell:?} is not a finite number")]
    NonNumeric { row: usize, cell: String },

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("series is empty")]
    EmptySeries,

    #[error("invalid window: n={n} for series of length m={m} (need 1 <= n <= m)")]
    InvalidWindow { n: usize, m: usize },

    #[error("window stride must be positive")]
    InvalidStride,

    #[error("invalid subsection count q={q} for window n={n} (need 1 <= q <= n)")]
    InvalidSubsections { q: usize, n: usize },

    #[error("value {x} lies outside the amplitude domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("at least two subsequences are required, got {0}")]
    TooFewSubsequences(usize),

    #[error("anomaly scores are undefined: every pairwise similarity is zero")]
    DegenerateScores,

    #[error("layout needs {required} qubits, cap is {cap}")]
    QubitCap { required: u32, cap: u32 },

    #[error("unknown register {0:?}")]
    UnknownRegister(String),

    #[error("register {0:?} is already part of the layout")]
    DuplicateRegister(String),

    #[error("register {name:?} is not in |0...0> on every supported basis state")]
    RegisterNotClear { name: String },

    #[error("annotation {0:?} is already present")]
    AnnotationExists(String),

    #[error("annotation {0:?} is not present")]
    AnnotationMissing(String),

    #[error("annotation {0:?} would take two values on one index assignment")]
    NotBasisValued(String),

    #[error("basis map is not injective on the supported basis")]
    NotReversible,

    #[error("uncomputing {0:?} does not restore the empty register")]
    UncomputeMismatch(String),

    #[error("rotation source value {value} outside the admissible range for scale {scale}")]
    RotationOutOfRange { value: f64, scale: f64 },

    #[error("postselection predicate has zero probability")]
    ZeroProbability,

    #[error("fixed-point overflow in {op}")]
    FixedOverflow { op: &'static str },

    #[error("fixed-point operands use different formats")]
    FormatMismatch,

    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("normalizer C is zero: all samples are zero")]
    ZeroScale,

    #[error("global mean similarity estimate is {0}, scores are undefined")]
    ZeroGlobalMean(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}
