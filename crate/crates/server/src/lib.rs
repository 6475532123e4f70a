//! HTTP service, backend transports and command-line front end for the
//! cardiac analysis agent.

pub mod api;
pub mod cli;
pub mod config;
mod error;
pub mod remote;

pub use error::{ApiError, ServiceError};
