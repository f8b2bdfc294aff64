pub mod adversary;
pub mod comparator;
pub mod error;
pub mod protocol;
pub mod qowf;
pub mod qsim;
pub mod report;
pub mod session;
pub mod teleport;
pub mod uss;

pub use error::{Error, Result};
