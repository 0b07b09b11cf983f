//! Knowledge graph embeddings where entities are single spike times of
//! non-leaky integrate-and-fire populations and relations are spike-time
//! differences, alongside the TransE baselines they are compared against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod nlif;
pub mod optim;
pub mod report;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Slot, Split, Triple, TripleStore, Vocabulary};
pub use model::{Label, ModelKind, PopulationMode};
pub use scalar::Scalar;
pub use train::{EpochStats, TrainConfig};

pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type TrainState64 = train::TrainState<f64>;
pub type TrainState32 = train::TrainState<f32>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
pub type Checkpoint32 = checkpoint::Checkpoint<f32>;
