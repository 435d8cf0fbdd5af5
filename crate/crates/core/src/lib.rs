pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod inversion;
pub mod neighborhood;
pub mod signal;
pub mod tensor;
pub mod toymodel;
pub mod util;
pub mod wav;

pub use error::{Error, Result};
