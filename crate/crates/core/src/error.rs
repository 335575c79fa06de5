use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("dataset partition leaves node {node} without samples")]
    EmptyDataset { node: usize },
    #[error("bad sampling range: lo={lo} > hi={hi}")]
    BadRange { lo: f64, hi: f64 },
    #[error("shard is empty")]
    EmptyShard,
    #[error("training diverged (loss = {loss}); learning rate too large?")]
    NonFiniteLoss { loss: f64 },
    #[error("every reputation is zero; nothing to aggregate")]
    AllUntrusted,
    #[error("channel allocation has zero capacity")]
    DegenerateChannel,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("replay buffer holds {len} entries, batch needs {needed}")]
    BufferTooSmall { len: usize, needed: usize },
    #[error("network architectures differ")]
    ArchMismatch,
    #[error("cannot form {k} clusters from {n} nodes")]
    BadK { k: usize, n: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("file truncated: {0}")]
    TruncatedFile(String),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
