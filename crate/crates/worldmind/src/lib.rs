//! WorldMind: a training-free embodied-agent framework.
//!
//! The agent plans against a symbolic household environment while maintaining
//! an explicit world-knowledge repository. Two kinds of experience accumulate
//! at inference time, with no gradient updates:
//!
//! - **process experience** — causal rules synthesized whenever the agent's
//!   predicted next state disagrees with the abstracted actual outcome of an
//!   executed action;
//! - **goal experience** — procedural heuristics distilled from successful
//!   trajectories.
//!
//! Both are stored as plain text, retrieved by semantic similarity to the task
//! instruction, and injected into the planning prompt. The crate ships a
//! deterministic simulator ([`sim`]), the repository ([`repo`]), the learning
//! pipeline ([`learning`]), the episode engine ([`engine`]), model backends
//! ([`backends`]), and a benchmark harness ([`bench`]).

pub mod backends;
pub mod bench;
pub mod engine;
pub mod learning;
pub mod repo;
pub mod sim;
pub mod types;
