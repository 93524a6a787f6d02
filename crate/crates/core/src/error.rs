use thiserror::Error;

/// Errors raised by the grid chaos toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChaosError {
    #[error("images do not form a bijection of 0..{size} (offending value {value})")]
    NotABijection { size: usize, value: usize },

    #[error("permutation has {len} entries but level {level} needs 2^{level}")]
    BadPermutationLength { level: u32, len: usize },

    #[error("level {requested} is coarser than the required level {required}")]
    LevelTooCoarse { requested: u32, required: u32 },

    #[error("level mismatch: expected {expected}, found {found}")]
    LevelMismatch { expected: u32, found: u32 },

    #[error("cell set is empty")]
    EmptySet,

    #[error("a group needs at least one generator")]
    NoGenerators,

    #[error("group closure exceeds the cap of {cap} elements")]
    ClosureCapExceeded { cap: usize },

    #[error("generator moves cell {cell}, which lies outside the tested set")]
    GeneratorMovesComplement { cell: usize },

    #[error("unknown state index {0}")]
    UnknownAtom(usize),

    #[error("kernel atom count {kernel} does not match the model's {model} states")]
    ModelMismatch { kernel: usize, model: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("empty time interval [{start}, {end})")]
    EmptyInterval { start: usize, end: usize },

    #[error("symmetry violated: {0}")]
    BadSymmetry(String),

    #[error("orthogonal basis element {0} has zero norm")]
    DegenerateBasis(usize),

    #[error("degree {degree} exceeds the cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, ChaosError>;
