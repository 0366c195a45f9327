//! A small worked instance: a `(3,2) x (3,2)` outer product code whose
//! parity block is the sum of the two message blocks, ten unit-coefficient
//! worker tasks, and the four workers that return first.

use crate::blockgrid::PartitionSpec;
use crate::degrees::DegreeDistribution;
use crate::flt::WorkerTask;
use crate::outer::{MdsCode, OuterProductCode};

/// `A` and `B` are `3 x 4`, each cut into two blocks, so every output block
/// is `2 x 2`.
pub fn example_spec() -> PartitionSpec {
    PartitionSpec::new(4, 3, 4, 2, 2, 3, 3).expect("fixture spec is valid")
}

pub fn example_outer() -> OuterProductCode {
    OuterProductCode::new(MdsCode::single_parity(2), MdsCode::single_parity(2))
}

/// The degree distribution the fixture tasks are drawn from.
pub fn example_distribution() -> DegreeDistribution {
    DegreeDistribution::small_example()
}

/// Ten tasks over the coded blocks, indices 0-based.
pub fn example_tasks() -> Vec<WorkerTask> {
    let sets: [(&[usize], &[usize]); 10] = [
        (&[0], &[1]),
        (&[0], &[2]),
        (&[0, 1], &[0]),
        (&[0, 2], &[0]),
        (&[0, 1], &[2]),
        (&[0, 2], &[2]),
        (&[0], &[0, 1]),
        (&[1], &[1, 2]),
        (&[2], &[0, 1]),
        (&[1, 2], &[1, 2]),
    ];
    sets.iter()
        .enumerate()
        .map(|(p, (a, b))| WorkerTask::unit(p, a, b))
        .collect()
}

/// Workers whose results reach the master (0-based); the rest straggle.
pub fn example_workers() -> Vec<usize> {
    vec![0, 2, 4, 6]
}

/// Flat indices in the order the decoder recovers them for the fixture.
pub fn example_recovery_order() -> Vec<usize> {
    vec![1, 0, 3, 2, 6, 5, 4, 7, 8]
}
