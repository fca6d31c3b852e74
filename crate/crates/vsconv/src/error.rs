use thiserror::Error;

/// Errors produced by the tensor, encoding, mapping and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("empty tensor has no density")]
    EmptyTensor,

    #[error("element {value} does not fit the declared {width}-bit width")]
    ValueOutOfRange { value: i64, width: u8 },

    #[error("accumulator overflow at output (out_c={out_c}, row={row}, col={col})")]
    AccumulatorOverflow { out_c: usize, row: usize, col: usize },

    #[error("unsupported kernel shape {got}; only 3x3 filter columns are encodable")]
    UnsupportedKernel { got: String },

    #[error("layer not mappable: {field} = {value} (requires {required})")]
    UnsupportedMapping {
        field: &'static str,
        value: usize,
        required: &'static str,
    },

    #[error("PE array must have 3 columns, got {got}")]
    BadPeColumns { got: usize },

    #[error("activation vector length {got} does not match PE rows {expected}")]
    VecLenMismatch { expected: usize, got: usize },

    #[error("sparse coordinate {coord:?} inconsistent with dense dims {dims:?}")]
    InconsistentCoord { coord: [u32; 3], dims: Vec<usize> },

    #[error("schedule/operand mismatch: no {kind} vector at {coord:?}")]
    MissingOperand { kind: &'static str, coord: [u32; 3] },

    #[error("partial-sum buffer capacity {limit} exceeded at cycle {cycle} (block {block})")]
    CapacityExceeded {
        limit: usize,
        cycle: u64,
        block: usize,
    },

    #[error("inconsistent cycle counts: dense={dense}, actual={actual}, ideal={ideal}")]
    InconsistentCycles { dense: u64, actual: u64, ideal: u64 },

    #[error("density {value} outside (0, 1]")]
    InvalidDensity { value: f64 },

    #[error("invalid {what} file: {reason}")]
    BadFile { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
