//! Rank-one completion of partially observed real tensors.
//!
//! Each level flattens the tensor along one mode, reads that mode's factor
//! off the nullspace of a sparse system of pairwise 2x2 minors, and recurses
//! on the reduced tensor of one order less.
//!
//! ```
//! use rankone::completion::{complete, CompletionOptions, Status};
//! use rankone::tensor::{outer_entry, PartialTensor};
//!
//! // Three of the four entries of [[2, 4], [3, 6]].
//! let a = PartialTensor::from_entries(vec![2, 2], [([1, 1], 2.0), ([1, 2], 4.0), ([2, 1], 3.0)])?;
//! let r = complete(&a, &CompletionOptions::default())?;
//! assert_eq!(r.status, Status::Ok);
//! assert!((outer_entry(&r.factors, &[2, 2].into()) - 6.0).abs() < 1e-12);
//! # Ok::<(), rankone::Error>(())
//! ```

pub mod analysis;
pub mod baseline;
pub mod completion;
pub mod error;
pub mod experiment;
pub mod generator;
pub mod linsys;
pub mod metrics;
pub mod tensor;
mod union_find;

pub use error::{Error, Result};
