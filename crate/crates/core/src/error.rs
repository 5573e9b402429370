use alloc::string::String;

use crate::judge::JudgeError;
use crate::model::ImageId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("unknown image `{0}`")]
    UnknownImage(ImageId),
    #[error("rater `{rater}` has no score for image `{image}`")]
    MissingScore { image: ImageId, rater: String },
    #[error("comparison graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("judge failed: {0}")]
    Judge(#[from] JudgeError),
}
