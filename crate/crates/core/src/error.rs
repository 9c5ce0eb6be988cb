use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a {expected_w}x{expected_h} image, got {width}x{height}{}", id.as_ref().map(|i| format!(" ({i})")).unwrap_or_default())]
    ImageSize {
        id: Option<String>,
        width: u32,
        height: u32,
        expected_w: u32,
        expected_h: u32,
    },

    #[error("unknown X11 color name {0:?}")]
    UnknownColorName(String),

    #[error("unknown color class {0:?}; valid classes: {valid}", valid = crate::color::ColorClass::names().join(", "))]
    UnknownClass(String),

    #[error("invalid class code {0}; expected 0..=11")]
    InvalidClassCode(usize),

    #[error("failed to read {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("labeling icon {id}: {source}")]
    Labeling {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("synthetic corpus self-check failed: class {class} (seed {seed}) was labeled {got}")]
    SelfCheck { class: String, seed: u64, got: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite {what} loss at critic step {step} (generator step {gen_step})")]
    NonFinite { what: &'static str, step: u64, gen_step: u64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
