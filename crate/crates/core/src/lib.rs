pub mod align;
pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod segnet;
pub mod train;

pub use error::{Error, Result};
