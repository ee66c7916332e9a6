//! Test generation and regression oracles for block-structured mini games.
//!
//! The pipeline: parse a `.game` program, build its control dependence
//! graph, then evolve neural networks that play the game and reliably cover
//! each statement. Trained networks double as regression oracles via
//! per-node surprise scoring, exercised by a built-in mutation engine.

pub mod cdg;
pub mod episode;
pub mod fitness;
pub mod harness;
pub mod games;
pub mod mutation;
pub mod neat;
pub mod oracle;
pub mod phenotype;
pub mod rng;
pub mod spec;
pub mod stats;
pub mod vm;

pub use rng::Pcg32;
pub use spec::{parse_game, serialize_game, validate_spec, GameSpec};
pub use vm::{init_vm, InputEvent, VmState};
