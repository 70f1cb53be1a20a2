//! Codified character profiles.
//!
//! Character profiles are compiled into small executable programs written in a
//! closed profile-logic language ([`dsl`]). The [`engine`] interprets them
//! against a scene with three-valued condition checks and seeded randomness,
//! the [`responder`] turns the triggered statements into a role-play response,
//! and the [`evolver`] revises programs when scored responses disagree with
//! the storyline. [`bench`] drives whole evaluation runs.

pub mod bench;
pub mod codifier;
pub mod dsl;
pub mod engine;
pub mod evolver;
pub mod llm;
pub mod oracles;
pub mod responder;
