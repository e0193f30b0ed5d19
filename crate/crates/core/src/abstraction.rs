//! Transition-probability bounds and construction of the four uncertain
//! model classes, plus membership tests of candidate distributions against
//! each ambiguity set.
//!
//! Everything is derived from one object: the per-(state, action, cell)
//! successor set `q` — the states whose regions meet the reachable set of
//! that cell, with the avoid state standing in for everything outside the
//! safe box. Singleton interval bounds, coarse-cover bounds, informed
//! clusters and set-valued rows are all set operations over the `q`s with
//! the exact cell masses, which is what makes the containment relations
//! between the classes hold structurally.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Cluster, StatePartition};
use crate::lp::{solve, ConstraintOp, LinearProgram, LpOutcome, Sense};
use crate::noise::NoisePartition;
use crate::system::SystemModel;

/// Absolute tolerance for membership and feasibility decisions.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("invalid coarse cover: {0}")]
    Cover(String),
    #[error("inconsistent abstraction: {0}")]
    Inconsistent(String),
    #[error("state {0} is not a safe region")]
    NotSafe(usize),
    #[error("{0}")]
    Lp(#[from] crate::lp::LpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Imdp,
    #[serde(rename = "2imdp")]
    TwoImdp,
    Mimdp,
    Smdp,
}

impl ModelClass {
    pub const ALL: [ModelClass; 4] =
        [ModelClass::Imdp, ModelClass::TwoImdp, ModelClass::Mimdp, ModelClass::Smdp];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelClass::Imdp => "imdp",
            ModelClass::TwoImdp => "2imdp",
            ModelClass::Mimdp => "mimdp",
            ModelClass::Smdp => "smdp",
        }
    }
}

impl std::fmt::Display for ModelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The pair `(P̲, P̄)` for one transition target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Row of an interval-style model: per-successor bounds plus optional
/// cluster bounds. Successors with a zero upper bound are pruned; any state
/// absent from `singletons` is constrained to zero mass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub singletons: Vec<(usize, TransitionBounds)>,
    pub clusters: Vec<(Cluster, TransitionBounds)>,
}

/// Row of a set-valued model: one (cluster, mass) entry per noise cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SetRow {
    pub entries: Vec<(Cluster, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Row {
    Interval(IntervalRow),
    Set(SetRow),
}

impl Row {
    /// Sorted successor support (states that can carry mass).
    pub fn support(&self) -> Vec<usize> {
        match self {
            Row::Interval(r) => r.singletons.iter().map(|(i, _)| *i).collect(),
            Row::Set(r) => {
                let mut all: Vec<usize> =
                    r.entries.iter().flat_map(|(q, _)| q.members().iter().copied()).collect();
                all.sort_unstable();
                all.dedup();
                all
            }
        }
    }
}

/// Per-(state, action) ambiguity representation for one model class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Abstraction {
    pub class: ModelClass,
    pub num_states: usize,
    pub avoid_index: usize,
    pub action_labels: Vec<String>,
    /// Indexed `state * num_actions + action`; avoid rows are Dirac
    /// self-loops.
    pub rows: Vec<Row>,
}

impl Abstraction {
    pub fn num_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn row(&self, state: usize, action: usize) -> &Row {
        &self.rows[state * self.num_actions() + action]
    }
}

/// The successor sets `q` of one (state, action) pair, one per noise cell,
/// paired with that cell's mass.
pub fn successor_sets(
    sys: &SystemModel,
    partition: &StatePartition,
    noise: &NoisePartition,
    state: usize,
    action: usize,
) -> Result<Vec<(Cluster, f64)>, AbstractionError> {
    if state >= partition.num_regions() {
        return Err(AbstractionError::NotSafe(state));
    }
    let region = partition.region(state);
    let mut out = Vec::with_capacity(noise.num_cells());
    for c in 0..noise.num_cells() {
        let reach = sys.reach(region, action, noise.cell(c));
        let cov = partition.coverage(&reach);
        let mut members = cov.safe_states;
        if cov.hits_avoid {
            members.push(partition.avoid_index());
        }
        if members.is_empty() {
            return Err(AbstractionError::Inconsistent(format!(
                "empty successor set for state {state}, action {action}, cell {c}"
            )));
        }
        out.push((Cluster::from_sorted(members), noise.mass(c)));
    }
    Ok(out)
}

/// Bounds on the probability of transitioning into `target` from every
/// point of region `state` under `action`: the mass of cells whose
/// successor set is inside the target (lower) or meets it (upper).
pub fn transition_bounds(
    sys: &SystemModel,
    partition: &StatePartition,
    noise: &NoisePartition,
    state: usize,
    action: usize,
    target: &Cluster,
) -> Result<TransitionBounds, AbstractionError> {
    let sets = successor_sets(sys, partition, noise, state, action)?;
    Ok(bounds_from_sets(&sets, target))
}

fn bounds_from_sets(sets: &[(Cluster, f64)], target: &Cluster) -> TransitionBounds {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (q, mass) in sets {
        if q.subset_of(target) {
            lower += mass;
        }
        if q.intersects(target) {
            upper += mass;
        }
    }
    TransitionBounds { lower, upper }
}

fn singleton_bounds(sets: &[(Cluster, f64)]) -> Vec<(usize, TransitionBounds)> {
    let mut upper: HashMap<usize, f64> = HashMap::new();
    let mut lower: HashMap<usize, f64> = HashMap::new();
    for (q, mass) in sets {
        for &i in q.members() {
            *upper.entry(i).or_insert(0.0) += mass;
        }
        if q.len() == 1 {
            *lower.entry(q.members()[0]).or_insert(0.0) += mass;
        }
    }
    let mut out: Vec<(usize, TransitionBounds)> = upper
        .into_iter()
        .filter(|(_, u)| *u > 0.0)
        .map(|(i, u)| {
            (i, TransitionBounds { lower: lower.get(&i).copied().unwrap_or(0.0), upper: u })
        })
        .collect();
    out.sort_unstable_by_key(|(i, _)| *i);
    out
}

fn validate_cover(cover: &[Cluster], num_safe: usize) -> Result<(), AbstractionError> {
    let mut seen = vec![false; num_safe];
    for cl in cover {
        for &i in cl.members() {
            if i >= num_safe {
                return Err(AbstractionError::Cover(format!(
                    "cover contains index {i}, but only {num_safe} safe states exist"
                )));
            }
            if seen[i] {
                return Err(AbstractionError::Cover(format!("state {i} covered twice")));
            }
            seen[i] = true;
        }
    }
    if let Some(miss) = seen.iter().position(|s| !s) {
        return Err(AbstractionError::Cover(format!("state {miss} not covered")));
    }
    Ok(())
}

/// Construct one abstraction class.
///
/// `coarse_cover` is required for the two-layer class and optional for the
/// multi-interval class (its cluster family is user-extensible; adding the
/// cover makes the two-layer ambiguity set a superset row by row).
pub fn build_abstraction(
    sys: &SystemModel,
    partition: &StatePartition,
    noise: &NoisePartition,
    class: ModelClass,
    coarse_cover: Option<&[Cluster]>,
) -> Result<Abstraction, AbstractionError> {
    match class {
        ModelClass::TwoImdp if coarse_cover.is_none() => {
            return Err(AbstractionError::Cover("two-layer class needs a coarse cover".into()))
        }
        ModelClass::Imdp | ModelClass::Smdp if coarse_cover.is_some() => {
            return Err(AbstractionError::Cover(format!(
                "{class} does not take a coarse cover"
            )))
        }
        _ => {}
    }
    if let Some(cover) = coarse_cover {
        validate_cover(cover, partition.num_regions())?;
    }

    let num_states = partition.num_states();
    let avoid = partition.avoid_index();
    let num_actions = sys.num_actions();
    let action_labels = sys.actions().iter().map(|a| a.label.clone()).collect();

    let safe_rows: Vec<Row> = (0..partition.num_regions() * num_actions)
        .into_par_iter()
        .map(|flat| {
            let (s, a) = (flat / num_actions, flat % num_actions);
            let sets = successor_sets(sys, partition, noise, s, a)?;
            let row = match class {
                ModelClass::Smdp => Row::Set(SetRow { entries: sets }),
                _ => {
                    let singletons = singleton_bounds(&sets);
                    let mut clusters: Vec<(Cluster, TransitionBounds)> = Vec::new();
                    if class == ModelClass::Mimdp {
                        // informed clusters: the successor sets themselves,
                        // deduplicated per row
                        let mut seen: Vec<&Cluster> = Vec::new();
                        for (q, _) in &sets {
                            if q.len() > 1 && !seen.contains(&q) {
                                seen.push(q);
                                clusters.push((q.clone(), bounds_from_sets(&sets, q)));
                            }
                        }
                    }
                    if class != ModelClass::Imdp {
                        if let Some(cover) = coarse_cover {
                            for cl in cover {
                                if clusters.iter().any(|(c, _)| c == cl) {
                                    continue;
                                }
                                let b = bounds_from_sets(&sets, cl);
                                if b.upper > 0.0 {
                                    clusters.push((cl.clone(), b));
                                }
                            }
                        }
                    }
                    Row::Interval(IntervalRow { singletons, clusters })
                }
            };
            validate_row(&row, s, a)?;
            Ok(row)
        })
        .collect::<Result<_, AbstractionError>>()?;

    let mut rows = safe_rows;
    for _ in 0..num_actions {
        rows.push(dirac_row(class, avoid));
    }

    Ok(Abstraction { class, num_states, avoid_index: avoid, action_labels, rows })
}

fn dirac_row(class: ModelClass, state: usize) -> Row {
    match class {
        ModelClass::Smdp => Row::Set(SetRow {
            entries: vec![(Cluster::from_sorted(vec![state]), 1.0)],
        }),
        _ => Row::Interval(IntervalRow {
            singletons: vec![(state, TransitionBounds { lower: 1.0, upper: 1.0 })],
            clusters: Vec::new(),
        }),
    }
}

fn validate_row(row: &Row, s: usize, a: usize) -> Result<(), AbstractionError> {
    match row {
        Row::Interval(r) => {
            let mut lo_sum = 0.0;
            let mut up_sum = 0.0;
            for (_, b) in &r.singletons {
                if !(0.0..=1.0 + MEMBERSHIP_TOL).contains(&b.lower) || b.lower > b.upper {
                    return Err(AbstractionError::Inconsistent(format!(
                        "bad singleton bounds at ({s},{a}): [{}, {}]",
                        b.lower, b.upper
                    )));
                }
                lo_sum += b.lower;
                up_sum += b.upper;
            }
            if lo_sum > 1.0 + MEMBERSHIP_TOL || up_sum < 1.0 - MEMBERSHIP_TOL {
                return Err(AbstractionError::Inconsistent(format!(
                    "empty ambiguity set at ({s},{a}): sum of lowers {lo_sum}, uppers {up_sum}"
                )));
            }
            for (cl, b) in &r.clusters {
                if cl.is_empty() || b.lower > b.upper {
                    return Err(AbstractionError::Inconsistent(format!(
                        "bad cluster bounds at ({s},{a})"
                    )));
                }
            }
        }
        Row::Set(r) => {
            let total: f64 = r.entries.iter().map(|(_, m)| m).sum();
            if (total - 1.0).abs() > MEMBERSHIP_TOL {
                return Err(AbstractionError::Inconsistent(format!(
                    "set-valued row at ({s},{a}) has mass {total}"
                )));
            }
            if r.entries.iter().any(|(q, m)| q.is_empty() || *m < 0.0) {
                return Err(AbstractionError::Inconsistent(format!(
                    "bad set-valued entry at ({s},{a})"
                )));
            }
        }
    }
    Ok(())
}

/// Is `gamma` a member of the ambiguity set of `(state, action)`?
///
/// Interval classes check their linear constraints directly; set-valued
/// rows solve the transportation feasibility program that asks for one
/// conditional distribution per cluster reproducing `gamma`.
pub fn membership(
    abs: &Abstraction,
    state: usize,
    action: usize,
    gamma: &[f64],
) -> Result<bool, AbstractionError> {
    let tol = MEMBERSHIP_TOL;
    if gamma.len() != abs.num_states {
        return Err(AbstractionError::Inconsistent(format!(
            "gamma has {} entries, expected {}",
            gamma.len(),
            abs.num_states
        )));
    }
    let sum: f64 = gamma.iter().sum();
    if (sum - 1.0).abs() > tol || gamma.iter().any(|g| *g < -tol) {
        return Ok(false);
    }

    match abs.row(state, action) {
        Row::Interval(row) => {
            let mut in_support = vec![false; abs.num_states];
            for (i, b) in &row.singletons {
                in_support[*i] = true;
                if gamma[*i] < b.lower - tol || gamma[*i] > b.upper + tol {
                    return Ok(false);
                }
            }
            if gamma.iter().enumerate().any(|(i, g)| !in_support[i] && *g > tol) {
                return Ok(false);
            }
            for (cl, b) in &row.clusters {
                let mass: f64 = cl.members().iter().map(|&i| gamma[i]).sum();
                if mass < b.lower - tol || mass > b.upper + tol {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Row::Set(row) => {
            let support = abs.row(state, action).support();
            let mut in_support = vec![false; abs.num_states];
            for &i in &support {
                in_support[i] = true;
            }
            if gamma.iter().enumerate().any(|(i, g)| !in_support[i] && *g > tol) {
                return Ok(false);
            }
            // variables z[c][i] = theta_c(i) * mass_c for i in q_c
            let mut var_of: Vec<Vec<(usize, usize)>> = Vec::new(); // per cell: (state, var)
            let mut nvars = 0;
            for (q, _) in &row.entries {
                let vars = q.members().iter().map(|&i| (i, { nvars += 1; nvars - 1 })).collect();
                var_of.push(vars);
            }
            let mut lp = LinearProgram::new(vec![0.0; nvars]);
            for (c, (_, mass)) in row.entries.iter().enumerate() {
                let mut coeffs = vec![0.0; nvars];
                for &(_, v) in &var_of[c] {
                    coeffs[v] = 1.0;
                }
                lp.constrain(coeffs, ConstraintOp::Eq, *mass);
            }
            for &i in &support {
                let mut coeffs = vec![0.0; nvars];
                for vars in &var_of {
                    for &(j, v) in vars {
                        if j == i {
                            coeffs[v] = 1.0;
                        }
                    }
                }
                lp.constrain(coeffs, ConstraintOp::Eq, gamma[i]);
            }
            match solve(&lp, Sense::Min)? {
                LpOutcome::Optimal { .. } => Ok(true),
                LpOutcome::Infeasible => Ok(false),
                LpOutcome::Unbounded => unreachable!("feasibility program with zero objective"),
            }
        }
    }
}

/// Stored-entry counts and size statistics of one abstraction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MemoryReport {
    pub class: ModelClass,
    pub num_states: usize,
    pub num_actions: usize,
    /// Per-successor interval bound pairs.
    pub singleton_bound_pairs: usize,
    /// Cluster-level interval bound pairs.
    pub cluster_bound_pairs: usize,
    /// Total cluster membership indices stored (interval clusters and
    /// set-valued entries combined).
    pub cluster_membership_entries: usize,
    /// Set-valued (cluster, mass) entries.
    pub mass_entries: usize,
    /// Largest cluster (set-valued rows).
    pub n_q: usize,
    /// Largest row support.
    pub n_post: usize,
    /// Largest per-row cluster family (interval rows).
    pub n_clusters: usize,
    pub estimated_bytes: usize,
}

pub fn memory_report(abs: &Abstraction) -> MemoryReport {
    let mut r = MemoryReport {
        class: abs.class,
        num_states: abs.num_states,
        num_actions: abs.num_actions(),
        singleton_bound_pairs: 0,
        cluster_bound_pairs: 0,
        cluster_membership_entries: 0,
        mass_entries: 0,
        n_q: 0,
        n_post: 0,
        n_clusters: 0,
        estimated_bytes: 0,
    };
    for row in &abs.rows {
        r.n_post = r.n_post.max(row.support().len());
        match row {
            Row::Interval(ir) => {
                r.singleton_bound_pairs += ir.singletons.len();
                r.cluster_bound_pairs += ir.clusters.len();
                r.n_clusters = r.n_clusters.max(ir.clusters.len());
                for (cl, _) in &ir.clusters {
                    r.cluster_membership_entries += cl.len();
                }
            }
            Row::Set(sr) => {
                r.mass_entries += sr.entries.len();
                for (q, _) in &sr.entries {
                    r.cluster_membership_entries += q.len();
                    r.n_q = r.n_q.max(q.len());
                }
            }
        }
    }
    // index + two bounds per singleton, one mass per set entry, one index
    // per membership entry
    r.estimated_bytes = 24 * r.singleton_bound_pairs
        + 16 * r.cluster_bound_pairs
        + 8 * r.cluster_membership_entries
        + 16 * r.mass_entries;
    r
}
