//! Command line and HTTP facade over `apifk-core`.

pub mod cli;
pub mod server;

pub use cli::{execute, run_from, Cli, Command};
pub use server::{router, AppState};
