pub mod ergodiag;
pub mod experiment;
pub mod error;
pub mod field;
pub mod idlaw;
pub mod kernel;
pub mod levybasis;
pub mod mixdiag;
pub mod mmafield;
pub mod quad;
pub mod realization;
pub mod rng;
pub mod sequence;
pub mod subord;

pub use error::{Error, Result};
