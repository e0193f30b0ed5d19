//! Worked fixtures shared by unit tests, the acceptance suite, and the
//! shipped example configurations.
//!
//! The planar system from [`crate::system::example1`] moves mass along the
//! second coordinate only: from the bottom region each of the five uniform
//! noise cells produces a reachable box straddling exactly one pair of
//! adjacent regions. Geometry chosen here keeps every reachable set
//! strictly inside the safe box so the successor structure is exact.

use crate::geometry::{Cluster, Rect, StatePartition};
use crate::noise::{NoiseModel, NoisePartition};

/// Six regions stacked along the second axis; no reach tagging.
pub fn example1_partition() -> StatePartition {
    let safe = Rect::bounded(vec![-2.0, -4.0], vec![2.0, 1.76]).unwrap();
    let reach = Rect::bounded(vec![-2.0, -4.0], vec![-2.0, -4.0]).unwrap();
    StatePartition::grid(safe, &[1, 6], &reach, &[]).unwrap()
}

/// Same grid with the two middle regions tagged as the reach set, for
/// synthesis runs on the worked system.
pub fn example1_partition_with_reach() -> StatePartition {
    let safe = Rect::bounded(vec![-2.0, -4.0], vec![2.0, 1.76]).unwrap();
    let reach = Rect::bounded(vec![-2.0, -2.08], vec![2.0, -0.16]).unwrap();
    StatePartition::grid(safe, &[1, 6], &reach, &[]).unwrap()
}

pub fn example1_noise_model() -> NoiseModel {
    NoiseModel::UniformBox { lower: vec![-1.0], upper: vec![1.0] }
}

/// Five uniform cells over `[-1, 1]`, masses 1/5 each, no tail.
pub fn example1_noise_partition() -> NoisePartition {
    NoisePartition::build(&example1_noise_model(), &[5], &[0.0], 1.0).unwrap()
}

/// The non-overlapping pair cover used by the two-layer variant of the
/// worked example.
pub fn example1_coarse_cover() -> Vec<Cluster> {
    vec![
        Cluster::new(vec![0, 1]).unwrap(),
        Cluster::new(vec![2, 3]).unwrap(),
        Cluster::new(vec![4, 5]).unwrap(),
    ]
}

/// The refined variant: the third region is split in half at a point
/// interior to two reachable sets, giving seven regions
/// `(s1, s2, s3', s3'', s4, s5, s6)`.
pub fn example3_partition() -> StatePartition {
    let safe = Rect::bounded(vec![-2.0, -4.0], vec![2.0, 1.76]).unwrap();
    let ys = [-4.0, -3.04, -2.08, -1.6, -1.12, -0.16, 0.8, 1.76];
    let regions = ys
        .windows(2)
        .map(|w| Rect::bounded(vec![-2.0, w[0]], vec![2.0, w[1]]).unwrap())
        .collect();
    StatePartition::from_regions(safe, regions, &[]).unwrap()
}
