//! Robust dynamic programming over the uncertain models: pessimistic and
//! optimistic value passes, class-specific inner optimizers, stationary
//! strategy extraction, and refinement to a state-feedback controller.
//!
//! The pessimistic recursion starts from the indicator of the reach set and
//! sweeps synchronously; reach states are pinned at one and the avoid state
//! at zero in every sweep, which makes the iteration monotone from below.
//! The reported bounds are both evaluated under the extracted stationary
//! strategy: the pessimistic pass re-runs the min-recursion with actions
//! fixed, the optimistic pass runs the max-recursion, so the interval is a
//! guarantee for the controller that actually ships rather than for the
//! time-varying argmax sequence.
//!
//! Inner problems: set-valued rows use the closed form `Σ_c mass_c · min
//! over the cluster`; interval rows without cluster constraints use ordered
//! assignment (sort successors by value, saturate bounds greedily); rows
//! with cluster constraints solve a small linear program.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{Abstraction, IntervalRow, Row, SetRow};
use crate::geometry::StatePartition;
use crate::lp::{solve, ConstraintOp, LinearProgram, LpOutcome, Sense};

/// Monotonicity slack: sweeps may regress by at most this much (simplex
/// noise near a fixpoint) before it is treated as a construction bug.
const MONO_TOL: f64 = 1e-9;
/// Allowed pessimistic-over-optimistic overshoot from finite stopping.
const SANDWICH_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("abstraction inconsistent: {0}")]
    AbstractionInconsistent(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("pessimistic sweep regressed at state {state} by {delta:e}")]
    Monotonicity { state: usize, delta: f64 },
    #[error("lower bound exceeds upper bound at state {state} by {delta:e}")]
    Sandwich { state: usize, delta: f64 },
    #[error("{0}")]
    Lp(#[from] crate::lp::LpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Horizon {
    Unbounded { epsilon: f64, max_iter: usize },
    Finite { steps: usize },
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Unbounded { epsilon: 1e-6, max_iter: 10_000 }
    }
}

/// Reach-avoid specification on the abstract state space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachAvoidSpec {
    pub reach_indices: Vec<usize>,
    pub avoid_index: usize,
    pub horizon: Horizon,
}

impl ReachAvoidSpec {
    pub fn from_partition(partition: &StatePartition, horizon: Horizon) -> Self {
        ReachAvoidSpec {
            reach_indices: partition.reach_indices().iter().copied().collect(),
            avoid_index: partition.avoid_index(),
            horizon,
        }
    }

    fn validate(&self, abs: &Abstraction) -> Result<(), SynthesisError> {
        if self.avoid_index != abs.avoid_index {
            return Err(SynthesisError::Spec(format!(
                "avoid index {} does not match abstraction ({})",
                self.avoid_index, abs.avoid_index
            )));
        }
        for &r in &self.reach_indices {
            if r >= abs.num_states {
                return Err(SynthesisError::Spec(format!("reach index {r} out of range")));
            }
            if r == self.avoid_index {
                return Err(SynthesisError::Spec("reach set contains the avoid state".into()));
            }
        }
        match self.horizon {
            Horizon::Unbounded { epsilon, max_iter } => {
                if !(epsilon > 0.0) || max_iter == 0 {
                    return Err(SynthesisError::Spec(
                        "unbounded horizon needs epsilon > 0 and max_iter > 0".into(),
                    ));
                }
            }
            Horizon::Finite { .. } => {}
        }
        Ok(())
    }
}

/// Pessimistic/optimistic value vectors and the stationary strategy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub p_lower: Vec<f64>,
    pub p_upper: Vec<f64>,
    /// Action index per state (action 0 for reach and avoid states).
    pub strategy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn row_not_found(s: usize, a: usize, what: &str) -> SynthesisError {
    SynthesisError::AbstractionInconsistent(format!("{what} at state {s}, action {a}"))
}

/// `min_{γ ∈ Γ} Σ γ(s') p(s')` over a set-valued row: each cluster
/// contributes its mass at the cheapest member.
fn set_row_min(row: &SetRow, p: &[f64]) -> (f64, Vec<(usize, f64)>) {
    let mut value = 0.0;
    let mut witness: Vec<(usize, f64)> = Vec::new();
    for (q, mass) in &row.entries {
        let mut best = q.members()[0];
        for &i in q.members() {
            if p[i] < p[best] {
                best = i;
            }
        }
        value += mass * p[best];
        match witness.iter_mut().find(|(i, _)| *i == best) {
            Some((_, g)) => *g += mass,
            None => witness.push((best, *mass)),
        }
    }
    witness.sort_unstable_by_key(|(i, _)| *i);
    (value, witness)
}

fn set_row_max(row: &SetRow, p: &[f64]) -> f64 {
    row.entries
        .iter()
        .map(|(q, mass)| {
            mass * q.members().iter().map(|&i| p[i]).fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// Ordered assignment for singleton-only interval rows: start every
/// successor at its lower bound and pour the remaining mass into the
/// cheapest (most expensive, for `max`) successors up to their uppers.
fn ordered_assignment(
    row: &IntervalRow,
    p: &[f64],
    maximize: bool,
    s: usize,
    a: usize,
) -> Result<(f64, Vec<(usize, f64)>), SynthesisError> {
    let mut gamma: Vec<(usize, f64)> =
        row.singletons.iter().map(|(i, b)| (*i, b.lower)).collect();
    let mut rem: f64 = 1.0 - gamma.iter().map(|(_, g)| *g).sum::<f64>();
    if rem < -crate::abstraction::MEMBERSHIP_TOL {
        return Err(row_not_found(s, a, "singleton lower bounds exceed one"));
    }
    rem = rem.max(0.0);
    let mut order: Vec<usize> = (0..row.singletons.len()).collect();
    order.sort_by(|&x, &y| {
        let (px, py) = (p[row.singletons[x].0], p[row.singletons[y].0]);
        let ord = px.partial_cmp(&py).unwrap();
        if maximize {
            ord.reverse()
        } else {
            ord
        }
    });
    for k in order {
        if rem <= 0.0 {
            break;
        }
        let (_, b) = row.singletons[k];
        let add = (b.upper - b.lower).min(rem);
        gamma[k].1 += add;
        rem -= add;
    }
    if rem > crate::abstraction::MEMBERSHIP_TOL {
        return Err(row_not_found(s, a, "singleton upper bounds sum below one"));
    }
    let value = gamma.iter().map(|(i, g)| g * p[*i]).sum();
    Ok((value, gamma))
}

/// Linear program for interval rows with cluster constraints.
fn interval_row_lp(
    row: &IntervalRow,
    p: &[f64],
    sense: Sense,
    s: usize,
    a: usize,
) -> Result<(f64, Vec<(usize, f64)>), SynthesisError> {
    let support: Vec<usize> = row.singletons.iter().map(|(i, _)| *i).collect();
    let n = support.len();
    let pos_of = |i: usize| support.binary_search(&i).ok();

    let mut lp = LinearProgram::new(support.iter().map(|&i| p[i]).collect());
    lp.lower_bounds = row.singletons.iter().map(|(_, b)| b.lower).collect();
    lp.upper_bounds = row.singletons.iter().map(|(_, b)| b.upper).collect();
    lp.constrain(vec![1.0; n], ConstraintOp::Eq, 1.0);
    for (cl, b) in &row.clusters {
        let mut coeffs = vec![0.0; n];
        let mut touched = false;
        for &i in cl.members() {
            if let Some(k) = pos_of(i) {
                coeffs[k] = 1.0;
                touched = true;
            }
        }
        if b.lower > 0.0 {
            if !touched {
                return Err(row_not_found(s, a, "positive lower bound on unreachable cluster"));
            }
            lp.constrain(coeffs.clone(), ConstraintOp::Ge, b.lower);
        }
        if touched && b.upper < 1.0 {
            lp.constrain(coeffs, ConstraintOp::Le, b.upper);
        }
    }
    match solve(&lp, sense)? {
        LpOutcome::Optimal { value, point } => {
            let witness = support.into_iter().zip(point).collect();
            Ok((value, witness))
        }
        LpOutcome::Infeasible => Err(row_not_found(s, a, "empty ambiguity set")),
        LpOutcome::Unbounded => Err(row_not_found(s, a, "unbounded inner problem")),
    }
}

fn row_min(
    row: &Row,
    p: &[f64],
    s: usize,
    a: usize,
) -> Result<(f64, Vec<(usize, f64)>), SynthesisError> {
    match row {
        Row::Set(r) => Ok(set_row_min(r, p)),
        Row::Interval(r) if r.clusters.is_empty() => ordered_assignment(r, p, false, s, a),
        Row::Interval(r) => interval_row_lp(r, p, Sense::Min, s, a),
    }
}

fn row_max(row: &Row, p: &[f64], s: usize, a: usize) -> Result<f64, SynthesisError> {
    match row {
        Row::Set(r) => Ok(set_row_max(r, p)),
        Row::Interval(r) if r.clusters.is_empty() => {
            ordered_assignment(r, p, true, s, a).map(|(v, _)| v)
        }
        Row::Interval(r) => interval_row_lp(r, p, Sense::Max, s, a).map(|(v, _)| v),
    }
}

/// Worst-case expected value of `p` over the ambiguity set of `(s, a)`,
/// with an achieving distribution as witness.
pub fn inner_min(
    abs: &Abstraction,
    s: usize,
    a: usize,
    p: &[f64],
) -> Result<(f64, Vec<(usize, f64)>), SynthesisError> {
    row_min(abs.row(s, a), p, s, a)
}

/// Best-case expected value of `p` over the ambiguity set of `(s, a)`.
pub fn inner_max(abs: &Abstraction, s: usize, a: usize, p: &[f64]) -> Result<f64, SynthesisError> {
    row_max(abs.row(s, a), p, s, a)
}

struct SweepOutcome {
    values: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// Synchronous monotone iteration of one Bellman-style operator.
///
/// `update` maps (state, frozen previous vector) to the new value of that
/// state; reach states stay 1, the avoid state stays 0.
fn iterate<F>(
    spec: &ReachAvoidSpec,
    num_states: usize,
    horizon: Horizon,
    update: F,
) -> Result<SweepOutcome, SynthesisError>
where
    F: Fn(usize, &[f64]) -> Result<f64, SynthesisError> + Sync,
{
    let mut is_terminal = vec![false; num_states];
    is_terminal[spec.avoid_index] = true;
    let mut p = vec![0.0; num_states];
    for &r in &spec.reach_indices {
        p[r] = 1.0;
        is_terminal[r] = true;
    }
    let active: Vec<usize> = (0..num_states).filter(|&s| !is_terminal[s]).collect();
    if active.is_empty() {
        return Ok(SweepOutcome { values: p, iterations: 0, residual: 0.0, converged: true });
    }

    let (max_sweeps, epsilon) = match horizon {
        Horizon::Unbounded { epsilon, max_iter } => (max_iter, Some(epsilon)),
        Horizon::Finite { steps } => (steps, None),
    };

    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let mut converged = epsilon.is_none();
    for _ in 0..max_sweeps {
        let updated: Vec<(usize, f64)> = active
            .par_iter()
            .map(|&s| update(s, &p).map(|v| (s, v.clamp(0.0, 1.0))))
            .collect::<Result<_, _>>()?;
        residual = 0.0;
        for (s, v) in updated {
            let delta = v - p[s];
            if delta < -MONO_TOL {
                return Err(SynthesisError::Monotonicity { state: s, delta });
            }
            // absorb sub-tolerance solver noise so the sequence stays monotone
            let v = v.max(p[s]);
            residual = residual.max(v - p[s]);
            p[s] = v;
        }
        iterations += 1;
        if let Some(eps) = epsilon {
            if residual < eps {
                converged = true;
                break;
            }
        }
    }
    Ok(SweepOutcome { values: p, iterations, residual, converged })
}

/// Full robust synthesis: optimal pessimistic value pass, stationary
/// strategy extraction, then pessimistic and optimistic evaluation of that
/// strategy. Returns values, strategy, and the convergence record.
pub fn rdp(abs: &Abstraction, spec: &ReachAvoidSpec) -> Result<SynthesisResult, SynthesisError> {
    spec.validate(abs)?;
    let n = abs.num_states;
    let num_actions = abs.num_actions();

    // optimal pessimistic values per the max-min recursion
    let value_pass = iterate(spec, n, spec.horizon, |s, p| {
        let mut best = f64::NEG_INFINITY;
        for a in 0..num_actions {
            let (v, _) = row_min(abs.row(s, a), p, s, a)?;
            if v > best {
                best = v;
            }
        }
        Ok(best)
    })?;

    // stationary strategy: argmax on the final sweep, lowest index on ties
    let mut strategy = vec![0usize; n];
    for s in 0..n {
        if s == spec.avoid_index || spec.reach_indices.contains(&s) {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for a in 0..num_actions {
            let (v, _) = row_min(abs.row(s, a), &value_pass.values, s, a)?;
            if v > best {
                best = v;
                arg = a;
            }
        }
        strategy[s] = arg;
    }

    // guarantees for the extracted controller
    let lower_pass = iterate(spec, n, spec.horizon, |s, p| {
        row_min(abs.row(s, strategy[s]), p, s, strategy[s]).map(|(v, _)| v)
    })?;
    let upper_pass = iterate(spec, n, spec.horizon, |s, p| {
        row_max(abs.row(s, strategy[s]), p, s, strategy[s])
    })?;

    for s in 0..n {
        let delta = lower_pass.values[s] - upper_pass.values[s];
        if delta > SANDWICH_TOL {
            return Err(SynthesisError::Sandwich { state: s, delta });
        }
    }
    let mut p_upper = upper_pass.values;
    for (u, l) in p_upper.iter_mut().zip(&lower_pass.values) {
        *u = u.max(*l);
    }

    Ok(SynthesisResult {
        p_lower: lower_pass.values,
        p_upper,
        strategy,
        iterations: value_pass.iterations,
        residual: value_pass.residual.max(lower_pass.residual).max(upper_pass.residual),
        converged: value_pass.converged && lower_pass.converged && upper_pass.converged,
    })
}

/// A state-feedback controller obtained by refining a stationary strategy
/// through the partition: `κ(x) = σ*(locate(x))`, total on ℝⁿ.
pub struct RefinedController<'a> {
    strategy: &'a [usize],
    partition: &'a StatePartition,
}

impl RefinedController<'_> {
    pub fn action(&self, x: &[f64]) -> usize {
        self.strategy[self.partition.locate(x)]
    }
}

pub fn refine_controller<'a>(
    result: &'a SynthesisResult,
    partition: &'a StatePartition,
) -> RefinedController<'a> {
    RefinedController { strategy: &result.strategy, partition }
}
