pub mod anonloss;
pub mod cli;
pub mod enumerate;
pub mod error;
pub mod fit;
pub mod generator;
pub mod io;
pub mod metrics;
pub mod model;
pub mod multicj;
pub mod numeric;
pub mod preprocess;

pub use error::{Error, Result};
