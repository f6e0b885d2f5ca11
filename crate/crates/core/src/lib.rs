//! Executable interaction protocols: protocol files compile to deterministic
//! state machines, render as prompts at four formality levels, drive scripted
//! sessions against pluggable tutor agents, and are scored for procedural
//! conformance.

pub mod conformance;
pub mod fsm;
pub mod harness;
pub mod protocol;
pub mod render;
pub mod report;
