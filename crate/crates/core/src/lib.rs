pub mod batch;
pub mod config;
pub mod des;
pub mod energy;
pub mod error;
pub mod medium;
pub mod metrics;
pub mod packet;
pub mod routing;
pub mod scenarios;
pub mod sim;
pub mod trace;
pub mod traffic;

pub use error::{ConfigError, Result, SimError};
