//! Preference geometry over frozen text embeddings.
//!
//! Margin decompositions into preference-subspace and nuisance parts,
//! Bradley-Terry fitting of low-rank ideal-point projections, a
//! planted-subspace generator for checking the risk monotonicity result,
//! and the evaluation statistics used alongside them.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod hash;
pub mod ingest;
pub mod linalg;
pub mod rng;
pub mod scorers;
pub mod stats;
pub mod synthetic;
pub mod train;

pub use data::{AnchorTable, IndexedTriplet, TripletData};
pub use error::{Error, Result};
pub use linalg::{Matrix, SubspaceBasis, Vector};
pub use scorers::{Scorer, Variant};
