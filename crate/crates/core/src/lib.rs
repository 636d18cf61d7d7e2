//! Testbed for organized teams of language-model agents in a symbolic household.

pub mod agents;
pub mod analysis;
pub mod comms;
pub mod config;
pub mod gateway;
pub mod orchestrator;
pub mod reflect;
pub mod world;

mod id_keys;
