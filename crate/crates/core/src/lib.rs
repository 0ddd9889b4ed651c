//! Hierarchy-aware knowledge graph embeddings in polar coordinates.
//!
//! Entities are embedded as a modulus part (radial coordinate, one scale per
//! dimension) and a phase part (angular coordinate). A relation scales the
//! head modulus and shifts the head phase; plausibility is
//! `−(λ1·‖h_m∘r_m − t_m‖₂ + λ2·‖sin((h_p + r_p − t_p)/2)‖₁)`.
//!
//! The crate covers the whole pipeline:
//!
//! * [`data`] / [`synth`]: triple files, vocabularies, the filter index and
//!   synthetic tree-shaped graphs
//! * [`model`] / [`checkpoint`]: parameters, distances, analytic gradients
//! * [`trainer`]: negative sampling, self-adversarial loss, sparse Adam
//! * [`eval`]: filtered MRR and Hits@N
//! * [`analysis`]: CSV diagnostics of trained embeddings
//! * [`gradcheck`]: finite-difference verification of the gradients

pub mod analysis;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod synth;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use data::{build_bundle, parse_triple_file, DatasetBundle, RawTriple, Triple};
pub use error::{HakeError, Result};
pub use eval::{evaluate, rank_one, Direction, MetricsReport};
pub use model::{score, score_gradients, ModelParams, Parts, Variant};
pub use trainer::{train, TrainConfig};
