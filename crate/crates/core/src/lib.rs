//! A self-referential agent runtime.
//!
//! The agent's solver and its own improvement loop are script units held in
//! a versioned [`registry::Registry`]. The [`kernel`] drives a recursive
//! decide/execute loop that may rewrite any unit (itself included), scores
//! the solver on a [`tasks::Environment`], and rolls back to the best version
//! at the end. Model access goes through the [`gateway`], either to a live
//! chat-completion endpoint or to a deterministic script.

pub mod cli;
pub mod gateway;
pub mod harness;
pub mod kernel;
pub mod policies;
pub mod registry;
pub mod runtime;
pub mod sandbox;
pub mod tasks;
