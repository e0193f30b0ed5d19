//! Closed-loop Monte-Carlo simulation, correctness checking against the
//! synthesized probability interval, and the run metric suite.
//!
//! Trajectories roll the true (untruncated) noise through the refined
//! controller. A trajectory satisfies the specification on first entry
//! into the reach set having never touched the avoid state; hitting the
//! cap undetermined counts against satisfaction, which is the conservative
//! side when comparing to the pessimistic bound.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::MemoryReport;
use crate::geometry::StatePartition;
use crate::noise::NoiseModel;
use crate::synthesis::{Horizon, ReachAvoidSpec, RefinedController, SynthesisResult};
use crate::system::SystemModel;

/// Two-sided 99% normal quantile for the Wilson interval.
const WILSON_Z: f64 = 2.575_829_303_548_900_4;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("metrics need a non-empty non-terminal set")]
    EmptyNonTerminal,
    #[error("no initial states available for simulation")]
    NoInitialStates,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryOutcome {
    Satisfied,
    Violated,
    Undetermined,
}

/// Roll one closed-loop trajectory from `x0` for at most `max_steps`
/// transitions.
pub fn simulate<R: rand::Rng>(
    sys: &SystemModel,
    noise: &NoiseModel,
    controller: &RefinedController<'_>,
    x0: &[f64],
    partition: &StatePartition,
    max_steps: usize,
    finite_horizon: bool,
    rng: &mut R,
) -> TrajectoryOutcome {
    let mut x = x0.to_vec();
    let classify = |x: &[f64]| {
        let s = partition.locate(x);
        if s == partition.avoid_index() {
            Some(TrajectoryOutcome::Violated)
        } else if partition.is_reach(s) {
            Some(TrajectoryOutcome::Satisfied)
        } else {
            None
        }
    };
    if let Some(out) = classify(&x) {
        return out;
    }
    for _ in 0..max_steps {
        let a = controller.action(&x);
        let w = noise.sample(rng);
        x = sys.step(&x, a, &w);
        if let Some(out) = classify(&x) {
            return out;
        }
    }
    if finite_horizon {
        TrajectoryOutcome::Violated
    } else {
        TrajectoryOutcome::Undetermined
    }
}

/// Empirical satisfaction estimate for one initial state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McEstimate {
    pub state: usize,
    pub x0: Vec<f64>,
    pub satisfied: usize,
    pub undetermined: usize,
    pub trials: usize,
    pub rate: f64,
    pub wilson_radius: f64,
}

/// Wilson score radius at 99% confidence.
pub fn wilson_radius(successes: usize, trials: usize) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    WILSON_Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub initial_states: usize,
    pub trajectories: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { initial_states: 100, trajectories: 1000, max_steps: 1000, seed: 0 }
    }
}

fn mix_seed(seed: u64, state: usize, traj: usize) -> u64 {
    // splitmix64 over the packed identifiers, one independent stream each
    let mut z = seed ^ (state as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (traj as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pick the initial set (a deterministic sample of non-terminal states)
/// and estimate the closed-loop satisfaction rate from each.
pub fn monte_carlo(
    sys: &SystemModel,
    noise: &NoiseModel,
    partition: &StatePartition,
    result: &SynthesisResult,
    spec: &ReachAvoidSpec,
    cfg: &McConfig,
) -> Result<Vec<McEstimate>, ValidationError> {
    let nt = partition.non_terminal_indices();
    if nt.is_empty() {
        return Err(ValidationError::NoInitialStates);
    }
    let mut pool = nt;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, usize::MAX, 0));
    // Fisher-Yates prefix shuffle for the sample
    let k = cfg.initial_states.min(pool.len());
    for i in 0..k {
        let j = i + (rng.next_u64() as usize) % (pool.len() - i);
        pool.swap(i, j);
    }
    let mut chosen: Vec<usize> = pool[..k].to_vec();
    chosen.sort_unstable();

    let (max_steps, finite) = match spec.horizon {
        Horizon::Finite { steps } => (steps, true),
        Horizon::Unbounded { .. } => (cfg.max_steps, false),
    };
    let controller = crate::synthesis::refine_controller(result, partition);

    Ok(chosen
        .par_iter()
        .map(|&s| {
            let x0 = partition.region(s).center();
            let mut satisfied = 0usize;
            let mut undetermined = 0usize;
            for t in 0..cfg.trajectories {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, s, t));
                match simulate(
                    sys,
                    noise,
                    &controller,
                    &x0,
                    partition,
                    max_steps,
                    finite,
                    &mut rng,
                ) {
                    TrajectoryOutcome::Satisfied => satisfied += 1,
                    TrajectoryOutcome::Violated => {}
                    TrajectoryOutcome::Undetermined => undetermined += 1,
                }
            }
            McEstimate {
                state: s,
                x0,
                satisfied,
                undetermined,
                trials: cfg.trajectories,
                rate: satisfied as f64 / cfg.trajectories as f64,
                wilson_radius: wilson_radius(satisfied, cfg.trajectories),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub abstraction_seconds: f64,
    pub synthesis_seconds: f64,
    pub simulation_seconds: f64,
}

/// One heatmap entry: region center with its probability interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub center: Vec<f64>,
    pub p_lower: f64,
    pub p_upper: f64,
}

/// Metrics, Monte-Carlo outcomes, timings and memory counts of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub class: crate::abstraction::ModelClass,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_cells: usize,
    /// Mean interval width over the non-terminal states.
    pub e_avg: f64,
    pub p_lower_avg: f64,
    pub p_upper_avg: f64,
    pub mc_avg: f64,
    pub num_initial_states: usize,
    pub mc_estimates: Vec<McEstimate>,
    /// Initial states whose empirical rate falls outside
    /// `[p_lower − δ, p_upper + δ]` with the Wilson 99% radius δ.
    pub violations: Vec<usize>,
    pub timings: Timings,
    pub memory: MemoryReport,
    pub heatmap: Vec<HeatmapCell>,
}

#[allow(clippy::too_many_arguments)]
pub fn compute_metrics(
    result: &SynthesisResult,
    partition: &StatePartition,
    class: crate::abstraction::ModelClass,
    num_cells: usize,
    num_actions: usize,
    mc: &[McEstimate],
    timings: Timings,
    memory: MemoryReport,
) -> Result<RunReport, ValidationError> {
    let nt = partition.non_terminal_indices();
    if nt.is_empty() {
        return Err(ValidationError::EmptyNonTerminal);
    }
    let e_avg = nt
        .iter()
        .map(|&s| (result.p_upper[s] - result.p_lower[s]).clamp(0.0, 1.0))
        .sum::<f64>()
        / nt.len() as f64;

    let k = mc.len().max(1) as f64;
    let p_lower_avg = mc.iter().map(|e| result.p_lower[e.state]).sum::<f64>() / k;
    let p_upper_avg = mc.iter().map(|e| result.p_upper[e.state]).sum::<f64>() / k;
    let mc_avg = mc.iter().map(|e| e.rate).sum::<f64>() / k;

    let violations = mc
        .iter()
        .filter(|e| {
            e.rate < result.p_lower[e.state] - e.wilson_radius
                || e.rate > result.p_upper[e.state] + e.wilson_radius
        })
        .map(|e| e.state)
        .collect();

    let heatmap = (0..partition.num_regions())
        .map(|s| HeatmapCell {
            center: partition.region(s).center(),
            p_lower: result.p_lower[s],
            p_upper: result.p_upper[s],
        })
        .collect();

    Ok(RunReport {
        class,
        num_states: partition.num_states(),
        num_actions,
        num_cells,
        e_avg,
        p_lower_avg,
        p_upper_avg,
        mc_avg,
        num_initial_states: mc.len(),
        mc_estimates: mc.to_vec(),
        violations,
        timings,
        memory,
        heatmap,
    })
}
