//! Axis-aligned rectangle arithmetic and conservative partitions of the
//! state space.
//!
//! A [`StatePartition`] tiles a bounded safe box with axis-aligned regions
//! and adds one synthetic avoid state representing everything outside the
//! safe box together with any tagged avoid cells. Point location follows a
//! half-open convention: a point on a shared face belongs to the region
//! with the larger lower corner, so `locate` is a total deterministic
//! function on ℝⁿ.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack used when checking grid alignment and tiling volumes.
pub const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),
    #[error("{what} face at {value} on axis {axis} does not lie on a grid line")]
    Alignment {
        what: &'static str,
        axis: usize,
        value: f64,
    },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("reach box overlaps an avoid box")]
    ReachAvoidOverlap,
    #[error("cluster is invalid: {0}")]
    InvalidCluster(String),
}

/// Relation between two rectangles under closed-set semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RectRelation {
    /// Closures do not meet.
    Disjoint,
    /// Closures overlap but the first is not a subset of the second.
    Intersects,
    /// The first rectangle is contained in the second (closed containment).
    ContainedIn,
}

/// An axis-aligned box, or the distinguished universal set ℝⁿ.
#[derive(Clone, Debug, PartialEq)]
pub enum Rect {
    /// All of ℝⁿ; contains and intersects every rectangle.
    Universe,
    /// Closed box `[lower, upper]` with `lower[i] <= upper[i]`.
    Bounded { lower: Vec<f64>, upper: Vec<f64> },
}

impl Rect {
    pub fn bounded(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::Dimension(lower.len(), upper.len()));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(GeometryError::InvalidRect(format!(
                    "non-finite bound on axis {i}"
                )));
            }
            if lower[i] > upper[i] {
                return Err(GeometryError::InvalidRect(format!(
                    "lower {} > upper {} on axis {i}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Rect::Bounded { lower, upper })
    }

    /// Dimension of a bounded rect; `None` for the universe.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Rect::Universe => None,
            Rect::Bounded { lower, .. } => Some(lower.len()),
        }
    }

    pub fn is_universe(&self) -> bool {
        matches!(self, Rect::Universe)
    }

    pub fn lower(&self) -> &[f64] {
        match self {
            Rect::Universe => panic!("universe has no bounds"),
            Rect::Bounded { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> &[f64] {
        match self {
            Rect::Universe => panic!("universe has no bounds"),
            Rect::Bounded { upper, .. } => upper,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        let (lo, hi) = (self.lower(), self.upper());
        lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn volume(&self) -> f64 {
        let (lo, hi) = (self.lower(), self.upper());
        lo.iter().zip(hi).map(|(a, b)| b - a).product()
    }

    /// Closed containment of a point.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        match self {
            Rect::Universe => true,
            Rect::Bounded { lower, upper } => {
                x.len() == lower.len()
                    && x.iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            }
        }
    }

    /// Half-open containment `lower <= x < upper`, the point-location rule.
    pub fn contains_point_half_open(&self, x: &[f64]) -> bool {
        match self {
            Rect::Universe => true,
            Rect::Bounded { lower, upper } => {
                x.len() == lower.len()
                    && x.iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .all(|(v, (lo, hi))| *v >= *lo && *v < *hi)
            }
        }
    }

    /// Closed-set intersection test.
    pub fn intersects(&self, other: &Rect) -> Result<bool, GeometryError> {
        match (self, other) {
            (Rect::Universe, _) | (_, Rect::Universe) => Ok(true),
            (
                Rect::Bounded { lower: la, upper: ua },
                Rect::Bounded { lower: lb, upper: ub },
            ) => {
                if la.len() != lb.len() {
                    return Err(GeometryError::Dimension(la.len(), lb.len()));
                }
                Ok((0..la.len()).all(|i| la[i] <= ub[i] && ua[i] >= lb[i]))
            }
        }
    }

    /// Closed containment `self ⊆ other`.
    pub fn contained_in(&self, other: &Rect) -> Result<bool, GeometryError> {
        match (self, other) {
            (_, Rect::Universe) => Ok(true),
            (Rect::Universe, _) => Ok(false),
            (
                Rect::Bounded { lower: la, upper: ua },
                Rect::Bounded { lower: lb, upper: ub },
            ) => {
                if la.len() != lb.len() {
                    return Err(GeometryError::Dimension(la.len(), lb.len()));
                }
                Ok((0..la.len()).all(|i| la[i] >= lb[i] && ua[i] <= ub[i]))
            }
        }
    }

    /// `self` lies strictly inside `other` (no touching faces).
    pub fn strictly_inside(&self, other: &Rect) -> Result<bool, GeometryError> {
        match (self, other) {
            (_, Rect::Universe) => Ok(true),
            (Rect::Universe, _) => Ok(false),
            (
                Rect::Bounded { lower: la, upper: ua },
                Rect::Bounded { lower: lb, upper: ub },
            ) => {
                if la.len() != lb.len() {
                    return Err(GeometryError::Dimension(la.len(), lb.len()));
                }
                Ok((0..la.len()).all(|i| la[i] > lb[i] && ua[i] < ub[i]))
            }
        }
    }

    /// Interiors overlap (strict per-axis overlap).
    pub fn interior_overlaps(&self, other: &Rect) -> Result<bool, GeometryError> {
        match (self, other) {
            (Rect::Universe, _) | (_, Rect::Universe) => Ok(true),
            (
                Rect::Bounded { lower: la, upper: ua },
                Rect::Bounded { lower: lb, upper: ub },
            ) => {
                if la.len() != lb.len() {
                    return Err(GeometryError::Dimension(la.len(), lb.len()));
                }
                Ok((0..la.len()).all(|i| la[i] < ub[i] && ua[i] > lb[i]))
            }
        }
    }
}

/// Classify the relation of `a` to `b`.
///
/// `ContainedIn` and `Intersects` are kept distinct: `ContainedIn` is
/// returned iff `a ⊆ b`, `Intersects` iff the closures overlap but `a ⊄ b`.
/// The universe is contained in nothing except the universe and intersects
/// everything.
pub fn rect_relation(a: &Rect, b: &Rect) -> Result<RectRelation, GeometryError> {
    if a.contained_in(b)? {
        Ok(RectRelation::ContainedIn)
    } else if a.intersects(b)? {
        Ok(RectRelation::Intersects)
    } else {
        Ok(RectRelation::Disjoint)
    }
}

/// A non-empty sorted set of state indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Cluster(Vec<usize>);

impl Cluster {
    pub fn new(mut members: Vec<usize>) -> Result<Self, GeometryError> {
        if members.is_empty() {
            return Err(GeometryError::InvalidCluster("empty cluster".into()));
        }
        members.sort_unstable();
        members.dedup();
        Ok(Cluster(members))
    }

    /// Construct from indices known to be sorted and unique.
    pub(crate) fn from_sorted(members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(!members.is_empty());
        Cluster(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.0.binary_search(&idx).is_ok()
    }

    /// True if every member of `self` is a member of `other`.
    pub fn subset_of(&self, other: &Cluster) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }

    pub fn intersects(&self, other: &Cluster) -> bool {
        self.0.iter().any(|i| other.contains(*i))
    }
}

impl TryFrom<Vec<usize>> for Cluster {
    type Error = GeometryError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Cluster::new(v)
    }
}

impl From<Cluster> for Vec<usize> {
    fn from(c: Cluster) -> Self {
        c.0
    }
}

/// Grid metadata kept when a partition is built from a uniform grid.
#[derive(Clone, Debug)]
struct GridIndex {
    /// Per-axis cell boundaries, `cells_per_dim[d] + 1` entries each.
    boundaries: Vec<Vec<f64>>,
    cells_per_dim: Vec<usize>,
    /// Row-major (last axis fastest) map from grid cell to state index;
    /// cells swallowed by avoid boxes map to the avoid index.
    cell_state: Vec<usize>,
}

impl GridIndex {
    fn linear(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &i) in idx.iter().enumerate() {
            flat = flat * self.cells_per_dim[d] + i;
        }
        flat
    }
}

/// Which states a box can send mass to: the safe regions it meets plus a
/// flag for the avoid state (outside the safe box or a tagged avoid cell).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coverage {
    /// Sorted safe-region indices whose closed cells meet the box.
    pub safe_states: Vec<usize>,
    pub hits_avoid: bool,
}

/// A conservative partition of ℝⁿ: `regions` tile the safe box and one
/// synthetic avoid state absorbs everything else.
#[derive(Clone, Debug)]
pub struct StatePartition {
    safe_box: Rect,
    regions: Vec<Rect>,
    reach: BTreeSet<usize>,
    grid: Option<GridIndex>,
}

impl StatePartition {
    /// Uniform grid over `safe_box` with reach/avoid tagging.
    ///
    /// Reach and avoid boxes must be aligned with the grid; silent rounding
    /// would erode the guarantees, so misalignment is an error.
    pub fn grid(
        safe_box: Rect,
        cells_per_dim: &[usize],
        reach_box: &Rect,
        avoid_boxes: &[Rect],
    ) -> Result<Self, GeometryError> {
        let n = safe_box
            .dim()
            .ok_or_else(|| GeometryError::InvalidRect("safe box must be bounded".into()))?;
        if cells_per_dim.len() != n {
            return Err(GeometryError::Dimension(cells_per_dim.len(), n));
        }
        if cells_per_dim.iter().any(|&m| m == 0) {
            return Err(GeometryError::InvalidPartition(
                "cells_per_dim must be positive".into(),
            ));
        }
        for i in 0..n {
            if safe_box.lower()[i] >= safe_box.upper()[i] {
                return Err(GeometryError::InvalidRect(format!(
                    "safe box has zero width on axis {i}"
                )));
            }
        }

        let boundaries: Vec<Vec<f64>> = (0..n)
            .map(|d| {
                let (lo, hi) = (safe_box.lower()[d], safe_box.upper()[d]);
                let m = cells_per_dim[d];
                (0..=m)
                    .map(|j| {
                        if j == m {
                            hi
                        } else {
                            lo + (hi - lo) * (j as f64) / (m as f64)
                        }
                    })
                    .collect()
            })
            .collect();

        let check_aligned = |what: &'static str, b: &Rect| -> Result<(), GeometryError> {
            if b.dim() != Some(n) {
                return Err(GeometryError::Dimension(b.dim().unwrap_or(0), n));
            }
            if !b.contained_in(&safe_box)? {
                return Err(GeometryError::InvalidPartition(format!(
                    "{what} box must lie inside the safe box"
                )));
            }
            for d in 0..n {
                for v in [b.lower()[d], b.upper()[d]] {
                    if !boundaries[d].iter().any(|g| (g - v).abs() <= ALIGN_TOL) {
                        return Err(GeometryError::Alignment { what, axis: d, value: v });
                    }
                }
            }
            Ok(())
        };
        check_aligned("reach", reach_box)?;
        for b in avoid_boxes {
            check_aligned("avoid", b)?;
        }

        let total_cells: usize = cells_per_dim.iter().product();
        // First pass: tag avoid cells by center membership (exact for
        // aligned boxes), count safe cells.
        let mut is_avoid = vec![false; total_cells];
        let mut idx = vec![0usize; n];
        for flat in 0..total_cells {
            let center: Vec<f64> = (0..n)
                .map(|d| 0.5 * (boundaries[d][idx[d]] + boundaries[d][idx[d] + 1]))
                .collect();
            let in_avoid = avoid_boxes.iter().any(|b| b.contains_point(&center));
            if in_avoid && reach_box.contains_point(&center) {
                return Err(GeometryError::ReachAvoidOverlap);
            }
            is_avoid[flat] = in_avoid;
            // advance row-major counter, last axis fastest
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < cells_per_dim[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let n_safe = is_avoid.iter().filter(|a| !**a).count();
        let avoid_index = n_safe;

        let mut regions = Vec::with_capacity(n_safe);
        let mut reach = BTreeSet::new();
        let mut cell_state = vec![avoid_index; total_cells];
        let mut idx = vec![0usize; n];
        for flat in 0..total_cells {
            if !is_avoid[flat] {
                let lower: Vec<f64> = (0..n).map(|d| boundaries[d][idx[d]]).collect();
                let upper: Vec<f64> = (0..n).map(|d| boundaries[d][idx[d] + 1]).collect();
                let center: Vec<f64> =
                    lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
                let state = regions.len();
                if reach_box.contains_point(&center) {
                    reach.insert(state);
                }
                regions.push(Rect::Bounded { lower, upper });
                cell_state[flat] = state;
            }
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < cells_per_dim[d] {
                    break;
                }
                idx[d] = 0;
            }
        }

        Ok(StatePartition {
            safe_box,
            regions,
            reach,
            grid: Some(GridIndex {
                boundaries,
                cells_per_dim: cells_per_dim.to_vec(),
                cell_state,
            }),
        })
    }

    /// Partition from explicit regions (e.g. non-uniform refinements).
    ///
    /// Regions must tile the safe box: pairwise disjoint interiors, all
    /// contained in the box, and total volume equal to the box volume.
    pub fn from_regions(
        safe_box: Rect,
        regions: Vec<Rect>,
        reach_indices: &[usize],
    ) -> Result<Self, GeometryError> {
        let n = safe_box
            .dim()
            .ok_or_else(|| GeometryError::InvalidRect("safe box must be bounded".into()))?;
        if regions.is_empty() {
            return Err(GeometryError::InvalidPartition("no regions".into()));
        }
        let mut vol = 0.0;
        for (i, r) in regions.iter().enumerate() {
            if r.dim() != Some(n) {
                return Err(GeometryError::Dimension(r.dim().unwrap_or(0), n));
            }
            if !r.contained_in(&safe_box)? {
                return Err(GeometryError::InvalidPartition(format!(
                    "region {i} extends outside the safe box"
                )));
            }
            vol += r.volume();
            for (j, other) in regions.iter().enumerate().take(i) {
                if r.interior_overlaps(other)? {
                    return Err(GeometryError::InvalidPartition(format!(
                        "regions {j} and {i} overlap"
                    )));
                }
            }
        }
        let box_vol = safe_box.volume();
        if (vol - box_vol).abs() > ALIGN_TOL * box_vol.max(1.0) {
            return Err(GeometryError::InvalidPartition(format!(
                "regions cover volume {vol}, safe box has {box_vol}"
            )));
        }
        let mut reach = BTreeSet::new();
        for &i in reach_indices {
            if i >= regions.len() {
                return Err(GeometryError::InvalidPartition(format!(
                    "reach index {i} out of range"
                )));
            }
            reach.insert(i);
        }
        Ok(StatePartition { safe_box, regions, reach, grid: None })
    }

    pub fn dim(&self) -> usize {
        self.safe_box.dim().unwrap()
    }

    pub fn safe_box(&self) -> &Rect {
        &self.safe_box
    }

    /// Number of safe regions (excludes the avoid state).
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Total number of abstract states, avoid included.
    pub fn num_states(&self) -> usize {
        self.regions.len() + 1
    }

    pub fn avoid_index(&self) -> usize {
        self.regions.len()
    }

    pub fn region(&self, idx: usize) -> &Rect {
        &self.regions[idx]
    }

    pub fn regions(&self) -> &[Rect] {
        &self.regions
    }

    pub fn reach_indices(&self) -> &BTreeSet<usize> {
        &self.reach
    }

    pub fn is_reach(&self, idx: usize) -> bool {
        self.reach.contains(&idx)
    }

    /// Safe states that are neither reach nor avoid (the non-terminal set).
    pub fn non_terminal_indices(&self) -> Vec<usize> {
        (0..self.num_regions()).filter(|i| !self.is_reach(*i)).collect()
    }

    /// Map a point to its unique state index (total function; the avoid
    /// index owns everything no half-open region claims).
    pub fn locate(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.dim());
        match &self.grid {
            Some(grid) => {
                let mut idx = Vec::with_capacity(x.len());
                for d in 0..x.len() {
                    let g = &grid.boundaries[d];
                    if x[d] < g[0] || x[d] >= g[g.len() - 1] {
                        return self.avoid_index();
                    }
                    // last j with g[j] <= x: cells are half-open [g[j], g[j+1])
                    let j = g.partition_point(|b| *b <= x[d]) - 1;
                    idx.push(j.min(grid.cells_per_dim[d] - 1));
                }
                grid.cell_state[grid.linear(&idx)]
            }
            None => self
                .regions
                .iter()
                .position(|r| r.contains_point_half_open(x))
                .unwrap_or(self.avoid_index()),
        }
    }

    /// All states whose closed regions meet `b`, plus the avoid flag when
    /// `b` is not strictly inside the safe box. The universe covers
    /// everything.
    pub fn coverage(&self, b: &Rect) -> Coverage {
        if b.is_universe() {
            return Coverage {
                safe_states: (0..self.num_regions()).collect(),
                hits_avoid: true,
            };
        }
        let mut hits_avoid = !b.strictly_inside(&self.safe_box).unwrap_or(false);
        let mut safe_states: Vec<usize>;
        match &self.grid {
            Some(grid) => {
                let n = self.dim();
                let mut ranges = Vec::with_capacity(n);
                for d in 0..n {
                    let g = &grid.boundaries[d];
                    let m = grid.cells_per_dim[d];
                    // closed intersection: cell i hits b iff g[i] <= b.hi and g[i+1] >= b.lo
                    let lo_idx = (0..m).find(|&i| g[i + 1] >= b.lower()[d]);
                    let hi_idx = (0..m).rev().find(|&i| g[i] <= b.upper()[d]);
                    match (lo_idx, hi_idx) {
                        (Some(lo), Some(hi)) if lo <= hi => ranges.push((lo, hi)),
                        _ => {
                            return Coverage { safe_states: Vec::new(), hits_avoid: true };
                        }
                    }
                }
                let mut set = BTreeSet::new();
                let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
                'outer: loop {
                    let state = grid.cell_state[grid.linear(&idx)];
                    if state == self.avoid_index() {
                        hits_avoid = true;
                    } else {
                        set.insert(state);
                    }
                    for d in (0..n).rev() {
                        idx[d] += 1;
                        if idx[d] <= ranges[d].1 {
                            continue 'outer;
                        }
                        idx[d] = ranges[d].0;
                        if d == 0 {
                            break 'outer;
                        }
                    }
                }
                safe_states = set.into_iter().collect();
            }
            None => {
                safe_states = (0..self.num_regions())
                    .filter(|&i| self.regions[i].intersects(b).unwrap_or(false))
                    .collect();
            }
        }
        safe_states.sort_unstable();
        Coverage { safe_states, hits_avoid }
    }
}
