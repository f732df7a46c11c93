use thiserror::Error;

/// Errors produced by the oratorio pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("no usable input: {0}")]
    EmptyInput(String),

    #[error("invalid frame {frame_id}: {reason}")]
    InvalidFrame { frame_id: i64, reason: String },

    #[error("degenerate head in frame {frame_id}: forehead and neck coincide")]
    DegenerateHead { frame_id: i64 },

    #[error("frame {frame_id} is missing joint `{joint}`")]
    MissingJoint { frame_id: i64, joint: String },

    #[error("unknown joint name `{0}`")]
    UnknownJoint(String),

    #[error("reference frame {0} not found among usable frames")]
    ReferenceNotFound(i64),

    #[error("need at least {k} distinct points, found {distinct}")]
    InsufficientPoints { k: usize, distinct: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("invalid gesture names: {0}")]
    InvalidNames(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported audio: {0}")]
    Audio(String),

    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invalid behaviour mode {0} (expected 1..=4)")]
    InvalidMode(u8),

    #[error("gesture `{0}` is not in the gesture library")]
    UnknownGesture(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Converts a serde_json error position (1-based line/column) into a byte offset.
pub(crate) fn json_error_offset(input: &[u8], err: &serde_json::Error) -> usize {
    let line = err.line();
    let column = err.column();
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut line_start = 0;
    for (i, b) in input.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(input.len())
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(input: &[u8]) -> Result<T> {
    serde_json::from_slice(input).map_err(|e| Error::Parse {
        offset: json_error_offset(input, &e),
        message: e.to_string(),
    })
}
