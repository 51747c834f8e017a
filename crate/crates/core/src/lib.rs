//! Multi-partition embedding interaction (MEI) for knowledge graph completion.
//!
//! Every embedding of size `D = K * C` is viewed as `K` partitions of size
//! `C`. Each partition interacts through its own Tucker core (or one shared
//! core), and the triple score is the sum of the `K` local scores, which is a
//! block term decomposition of the score tensor.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, checkpoints and the
//! command line live in the `mei` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod efficiency;
pub mod error;
pub mod eval;
pub mod model;
pub mod score;
pub mod train;

pub use data::{Split, Triple, TripleStore, Vocabulary};
pub use error::{Error, Result};
pub use eval::{evaluate, evaluate_triples, rank_triple, Direction, MetricsReport, RankResult};
pub use model::{FixedPattern, Model, ModelConfig, Site, SiteConfig};
pub use score::{CoreTensor, MatchingMatrix, PartitionedVector};
pub use train::{LossMode, TrainConfig, Trainer};
