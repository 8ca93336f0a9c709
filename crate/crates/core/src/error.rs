use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read wav {path}: {message}")]
    WavRead { path: PathBuf, message: String },

    #[error("unsupported wav encoding in {path}: expected 16-bit integer PCM, found {found}")]
    WavEncoding { path: PathBuf, found: String },

    #[error("unsupported channel count in {path}: expected mono, found {channels} channels")]
    WavChannels { path: PathBuf, channels: u16 },

    #[error("empty audio in {0}")]
    EmptyAudio(PathBuf),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("frame length {frame_len} exceeds signal length {len}")]
    SignalTooShort { frame_len: usize, len: usize },

    #[error("pitch track has no voiced frames")]
    NoVoicedFrames,

    #[error("pitch track is in the wrong domain: expected {expected}")]
    WrongDomain { expected: &'static str },

    #[error("non-positive f0 value {value} at frame {frame}")]
    NonPositiveF0 { frame: usize, value: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("segments overlap: [{prev_start}, {prev_end}) and [{start}, {end})")]
    Overlap {
        prev_start: f64,
        prev_end: f64,
        start: f64,
        end: f64,
    },

    #[error("pitch track ends at {track_end:.3}s but alignment runs to {align_end:.3}s")]
    TrackTooShort { track_end: f64, align_end: f64 },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("degenerate speaker {speaker}: standard deviation is zero")]
    DegenerateSpeaker { speaker: String },

    #[error("unknown phoneme {0:?}")]
    UnknownPhoneme(String),

    #[error("unknown speaker {0:?}")]
    UnknownSpeaker(String),

    #[error("unknown utterance {0:?}")]
    UnknownUtterance(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("stage input mismatch: {0}")]
    StageMismatch(String),

    #[error("checkpoint format version {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{count} utterance(s) failed: {summary}")]
    Batch { count: usize, summary: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
