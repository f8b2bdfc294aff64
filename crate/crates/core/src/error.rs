use thiserror::Error;

use crate::qsim::{Owner, QubitHandle};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown qubit handle {0}")]
    UnknownQubit(QubitHandle),
    #[error("qubit handle {0} given more than once")]
    DuplicateQubit(QubitHandle),
    #[error("matrix is not unitary (max deviation {0:e})")]
    NonUnitary(f64),
    #[error("matrix of {len} entries does not act on {targets} target qubit(s)")]
    GateShape { len: usize, targets: usize },
    #[error("merged group would hold {0} qubits, ceiling is {1}")]
    CapacityExceeded(usize, usize),
    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("forced measurement outcome has zero probability")]
    ImpossibleOutcome,
    #[error("register is entangled with qubit {0} outside it")]
    Entangled(QubitHandle),
    #[error("registers have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("registers overlap at {0}")]
    OverlappingRegisters(QubitHandle),
    #[error("index {index} outside 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
    #[error("GHZ triple {0} has already been consumed")]
    TripleConsumed(usize),
    #[error("one-time signing key has already been used")]
    KeyReused,
    #[error("cheque book has already been used")]
    BookUsed,
    #[error("custody violation: {0} is held by {1:?}")]
    Custody(QubitHandle, Owner),
    #[error("unknown attack strategy `{0}`")]
    UnknownStrategy(String),
    #[error("malformed key or signature encoding: {0}")]
    Encoding(String),
    #[error("snapshot parse error at byte {offset} (line {line}, column {column}): {message}")]
    SnapshotParse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("snapshot version {found} is not supported (expected {expected})")]
    SnapshotVersion { found: u32, expected: u32 },
    #[error("corrupt snapshot: {0}")]
    SnapshotCorrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
