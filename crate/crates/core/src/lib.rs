pub mod cohort;
pub mod error;
pub mod experiment;
pub mod featurize;
pub mod ingest;
pub mod linear;
pub mod metrics;
pub mod nn;
pub mod schema;
pub mod synth;

pub use error::{Error, Result};
