pub mod bounds;
pub mod epidemic;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod ingest;
pub mod survey;
pub mod timeseries;
pub mod window;

pub use error::{Error, Result};
pub use timeseries::TimeSeries;
