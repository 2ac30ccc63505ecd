//! Dense symmetric tensor arithmetic and the Hermite tensor calculus.
//!
//! Tensors are stored dense in row-major multi-index order behind a hard
//! memory guard; partition sums over pair/singleton partitions of the index
//! set are exact and the enumeration is cached per order as an index plan.

mod calculus;
mod partitions;
mod tensor;

pub use calculus::{
    expected_hermite, expected_hermite_mixture, hermite_from_raw, hermite_tensor_of_point,
    raw_from_hermite, raw_moment_tensor,
};
pub use partitions::{pair_partitions, PairPartition};
pub use tensor::{collapse_modes, DenseTensor, FlatTensor, DEFAULT_ENTRY_GUARD};
