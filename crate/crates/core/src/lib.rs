//! K-shot subspace contrastive learning.
//!
//! Each training instance is represented by the linear subspace spanned by
//! the embeddings of K augmented views. Queries are scored against instance
//! subspaces by projection length inside an InfoNCE objective, with a
//! momentum key encoder and a FIFO queue of past subspaces as negatives.
//!
//! The numeric core ([`linalg`], [`subspace`], [`loss`], [`encoder`],
//! [`queue`]) is generic over [`Scalar`] (`f32` or `f64`). Data generation,
//! training and file formats work in `f64`; see the aliases below.

// Negated comparisons are how NaN gets rejected alongside out-of-range values;
// indexed loops read more clearly than iterator chains in the matrix kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod queue;
pub mod rng;
pub mod scalar;
pub mod selfcheck;
pub mod subspace;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Embedding64 = subspace::Embedding<f64>;
pub type Embedding32 = subspace::Embedding<f32>;
pub type Subspace64 = subspace::InstanceSubspace<f64>;
pub type Subspace32 = subspace::InstanceSubspace<f32>;
pub type Policy64 = subspace::TruncationPolicy<f64>;
pub type Mlp64 = encoder::Mlp<f64>;
pub type Mlp32 = encoder::Mlp<f32>;
pub type EncoderPair64 = encoder::EncoderPair<f64>;
pub type Queue64 = queue::SubspaceQueue<f64>;
