//! Two-stage domain adaptive hashing.
//!
//! Stage one learns a shared projection `P`, orthonormal class prototypes `O`
//! and a soft target membership `R` under a linear MMD penalty and an
//! `l2,1` row-sparsity regulariser. Target pseudo-labels are weighted by how
//! well their semantic prediction agrees with the nearest prototype. The
//! learned prototypes then reconstruct every sample, and stage two quantizes
//! the reconstructed features with a pair of coupled, row-orthonormal
//! domain-specific rotations. A ridge-regression encoder extends the codes to
//! unseen queries.
//!
//! Matrices follow the column-sample convention: a feature matrix is `d x n`
//! with one sample per column.

pub mod dataset;
pub mod encoder;
mod error;
pub mod linalg;
pub mod pipeline;
pub mod pseudo_label;
pub mod reconstruction;
pub mod retrieval;
pub mod stage_one;
pub mod stage_two;

pub use dataset::{DomainDataset, SplitSpec, StandardizeStats, SyntheticSpec};
pub use encoder::LinearEncoder;
pub use error::{PscaError, Result};
pub use pipeline::{TrainedModel, Variant};
pub use pseudo_label::{ClassCenters, PseudoLabelTable};
pub use reconstruction::ReconstructedFeatures;
pub use retrieval::{EvalReport, PackedCodes, RankedList, Scenario};
pub use stage_one::{HyperParams, ObjectiveTerms, StageOneState};
pub use stage_two::{HashCodes, QuantizerPair};

/// Dense column-major real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
