pub mod caching;
pub mod error;
pub mod harness;
pub mod network;
pub mod popularity;
pub mod scheduling;
pub mod theory;
pub mod traffic;

pub use error::{Error, Result};
