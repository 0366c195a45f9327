//! Factored LT and factored Raptor codes for straggler-tolerant distributed
//! matrix multiplication.
//!
//! The master splits `A` and `B` into column blocks, optionally stretches
//! both with a real MDS code, and hands each worker one product of random
//! block combinations. [`decoder`] recovers `A^T B` from whichever workers
//! answer, and [`simlab`] runs Monte Carlo straggler experiments at scale.

pub mod blockgrid;
pub mod cli;
pub mod decoder;
pub mod degrees;
pub mod error;
pub mod fixtures;
pub mod flt;
pub mod linalg;
pub mod outer;
pub mod simlab;

pub use blockgrid::{assemble_product, Block, BlockGrid, PartitionSpec};
pub use decoder::{decode, inactivation_decode, support_decode, DecodeReport, Outcome};
pub use degrees::{DegreeDistribution, SplitScheme};
pub use error::{Error, Result};
pub use flt::{generate_tasks, CoeffMode, WorkerTask};
pub use outer::{fr_encode, MdsCode, OuterProductCode};
