pub mod cells;
pub mod density;
pub mod error;
pub mod experiments;
pub mod fractional;
pub mod geometry;
pub mod math;
pub mod ppp;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod table;
pub mod tessellation;

pub use error::{Error, Result};
