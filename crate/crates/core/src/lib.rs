//! Simulation lab for long-horizon robotic Mahjong play.
//!
//! The crate bundles a deterministic missing-suit rules engine ([`game`]), a
//! guarded validate-ground-execute-verify-commit execution layer
//! ([`state_machine`]) driven by parametric fault generators ([`fault`]),
//! interaction monitors ([`monitor`]), rule-based and trainable policies
//! ([`policy`]), the self-play training objectives with gradient checks
//! ([`selfplay`]), and the experiment harness ([`harness`]).

pub mod fault;
pub mod game;
pub mod harness;
pub mod monitor;
pub mod policy;
pub mod selfplay;
pub mod state_machine;
