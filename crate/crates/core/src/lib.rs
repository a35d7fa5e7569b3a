//! Open-world Monopoly: a rule-interpreted game engine with novelty injection,
//! detection, characterization and adaptive planning.

pub mod action;
pub mod board;
pub mod rules;
pub mod state;
pub mod engine;
pub mod kb;
pub mod novelty;
pub mod detect;
pub mod characterize;
pub mod handler;
pub mod planner;
pub mod agents;
pub mod harness;
