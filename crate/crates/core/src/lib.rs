pub mod bridge;
pub mod denoise;
pub mod diffusion;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod field;
pub mod maps;
pub mod pid;
pub mod priors;

pub use error::{Error, Result};
pub use field::{LatentField, Shape};
