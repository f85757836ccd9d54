//! Gauge fixing and normal forms for asymptotically locally Euclidean
//! Ricci-flat metrics: tensor algebra, jets at a point, expansions at
//! infinity and exterior harmonic-coordinate solvers.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algebra;
pub mod error;
pub mod exterior;
pub mod geometry;
pub mod infinity;
pub mod jet;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod tensor;
pub mod tol;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{GenericTensor, IndexPermutation, Tensor};

/// Tensors with exact rational entries.
pub type ExactTensor = GenericTensor<num::BigRational>;
/// Single-precision tensors.
pub type Tensor32 = GenericTensor<f32>;
