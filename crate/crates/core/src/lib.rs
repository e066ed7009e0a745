//! Explicit-state model checking of algorithms over shared registers with
//! safe, regular or atomic semantics, and analysis of register schedules.

pub mod action;
pub mod register;
pub mod schedule;
pub mod bridge;
pub mod algorithms;
pub mod checker;
pub mod cli;
