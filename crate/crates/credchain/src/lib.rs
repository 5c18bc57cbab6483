//! Service, persistence and command-line layer over `credchain-core`.

pub mod api;
pub mod config;
pub mod scenario;
pub mod store;
