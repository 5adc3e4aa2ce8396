//! Confidence-aware deep-research engine.
//!
//! The crate is organized around the stages of a research run:
//!
//! - [`domain`] — shared value types and structural validation
//! - [`providers`] — completion / search / fetch contracts, scripted and
//!   HTTP implementations
//! - [`deliberation`] — the THINK → SEARCH → READ loop with confidence
//!   elicitation and termination policy
//! - [`pipeline`] — planner → researcher → writer orchestration
//! - [`calibration`] — accuracy, ECE, and reliability tables
//! - [`harness`] — benchmark loading, batched runs, metric summaries
//! - [`prompts`] — the versioned prompt-pack templates
//! - [`events`] — structured run events and sinks

pub mod calibration;
pub mod deliberation;
pub mod domain;
pub mod events;
pub mod harness;
pub mod pipeline;
pub mod prompts;
pub mod providers;
pub(crate) mod util;

pub use util::normalize_answer;
