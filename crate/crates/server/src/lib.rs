//! HTTP service and command-line front end for the `maptrix` layout
//! engine. Sessions live in memory; see [`api`] for the endpoints.

pub mod api;
pub mod cli;
pub mod session;

pub use api::router;
pub use session::{ServiceConfig, Store};
