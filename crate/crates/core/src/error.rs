use thiserror::Error;

/// Failure modes shared across the pipeline.
///
/// Soft per-item conditions (a beat failing the template gate, a section
/// with no detectable pulse) are handled where they occur; an `Error`
/// means the operation as a whole could not produce a result.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// Signal has no usable variance (standard deviation below 1e-12).
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("insufficient beats: {0}")]
    InsufficientBeats(String),
    /// No window of the recording produced a pulse template.
    #[error("no usable signal: {0}")]
    NoUsableSignal(String),
    #[error("no peaks found: {0}")]
    NoPeaksFound(String),
    #[error("no heart rate available: {0}")]
    NoHrAvailable(String),
    #[error("no data: {0}")]
    NoData(String),
    /// Non-finite loss during optimization. The training entry point
    /// reports this through [`crate::nn::TrainError`], which also carries
    /// the epoch history; this variant is what callers that only keep a
    /// single error type see.
    #[error("training diverged at epoch {0}")]
    TrainingDiverged(usize),
    /// File problem while reading or writing an on-disk artifact. Stored
    /// as text so the enum stays cloneable and comparable.
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Error {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
