pub mod analysis;
pub mod cli;
pub mod compute;
pub mod error;
pub mod vib;
pub mod training;
pub mod vit;

pub use error::{Error, Result};
