pub mod alignment;
pub mod augment;
pub mod clustering;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod mol;
pub mod pipeline;
pub mod pitch;
pub mod predictor;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
