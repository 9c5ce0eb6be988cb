pub mod autograd;
pub mod color;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod service;
pub mod training;

pub use error::{Error, Result};
