//! Task DSL front end, kinematic tabletop simulation, goal evaluation,
//! scripted oracle demonstrations, staged verification, an embedding-indexed
//! task library and the LLM-driven task creator.

pub mod creator;
pub mod dsl;
pub mod goal;
pub mod library;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod seeds;
pub mod world;
