//! Numeric core for hierarchy-guided scene-graph tooling.
//!
//! - [`tensor`] and [`tape`]: a small dense `f64` tensor type with a reverse-mode
//!   autodiff tape and a finite-difference gradient checker ([`gradcheck`]).
//! - [`hierarchy`]: predicate lexicon cleaning, label embedding, k-means, and
//!   coarse/fine predicate hierarchies.
//! - [`hgm`]: the hierarchy guided module (correlation reasoning between coarse
//!   and fine region features, then residual refinement of the fine features).
//! - [`hgfl`]: two-branch coarse/fine training with a dual cross-entropy loss.
//! - [`sgeval`]: IoU, triplet matching and Recall@K for PredDet/PhrDet/SGGen.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod error;
pub mod gradcheck;
pub mod hgfl;
pub mod hgm;
pub mod hierarchy;
pub mod reference;
pub mod sgeval;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use tape::{BackwardFault, Gradients, PoolMode, Tape, Var};
pub use tensor::Tensor;
