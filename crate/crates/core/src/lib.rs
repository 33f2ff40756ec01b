pub mod bench;
pub mod config;
pub mod error;
pub mod geometry;
pub mod hashing;
pub mod io;
pub mod kent;
pub mod pattern;
pub mod spin;
pub mod synth;

pub use error::{Error, Result};
