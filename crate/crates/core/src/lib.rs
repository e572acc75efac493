//! Transformation-invariant feature learning.
//!
//! Filters are learned together with a fixed set of sparse linear
//! transformation operators (shifts, translations, rotations, scalings) and
//! the responses are pooled over the set, giving features that are invariant
//! to those transformations. Three learners share the machinery:
//!
//! * [`tirbm`]: restricted Boltzmann machine with probabilistic max pooling
//!   over transformations, trained by contrastive divergence with a
//!   pooled-sparsity penalty.
//! * [`tiae`]: tied-weight autoencoder with a pooled softmax encoder.
//! * [`tiomp`]: sparse coding with a greedy matching-pursuit encoder that
//!   selects at most one transformation per filter.
//!
//! [`features`], [`data`] and [`classify`] provide the patch pipeline and
//! the supervised evaluation head; [`experiment`] wires them into the
//! digit-variation and color-image runs.

mod binio;

pub mod checkpoint;
pub mod classify;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod math;
pub mod metrics;
pub mod tiae;
pub mod tiomp;
pub mod tirbm;
pub mod transform;
pub mod viz;


pub use error::{Error, Result};
pub use transform::{Geometry, SparseTransform, TransformSet, TransformSpec};
