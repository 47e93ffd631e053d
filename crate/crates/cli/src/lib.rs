//! Command-line tools and an HTTP service over the `trajsim` core.
//!
//! * [`api`]: request/response documents and the operations both front
//!   ends share.
//! * [`store`]: the on-disk store (`runs.log` + append-only `params/`).
//! * [`service`]: the axum router.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

pub mod api;
mod cli;
pub mod service;
pub mod store;

pub use cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
