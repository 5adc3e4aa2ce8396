//! Library surface of the `credence` CLI: configuration, offline fixture
//! providers, report rendering, trace writing, and command dispatch. The
//! binary in `main.rs` is a thin wrapper over [`run_command`].

mod app;
pub mod config;
pub mod offline;
pub mod render;
pub mod tracefile;

pub use app::run_command;
