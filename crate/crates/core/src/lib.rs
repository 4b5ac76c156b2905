pub mod cleaning;
pub mod cli;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod gateway;
pub mod meteor;
pub mod prompting;
pub mod report;
pub mod shots;

pub use error::{Error, Result};
