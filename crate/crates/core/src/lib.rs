//! Syscall-description synthesis from kernel C source.

pub mod engine;
pub mod indexer;
pub mod orchestrator;
pub mod pipeline;
pub mod repair;
pub mod syzlang;
