//! Sound finite abstractions of discrete-time stochastic systems and
//! robust controller synthesis with guaranteed reach-avoid probability
//! intervals.
//!
//! The pipeline partitions a safe box of the state space and the
//! disturbance set, over-approximates one-step reachable sets per
//! (region, action, noise cell), and compresses the result into one of
//! four uncertain Markov model classes:
//!
//! * interval models bounding each successor probability (`imdp`),
//! * two-layer models adding one non-overlapping coarse cover (`2imdp`),
//! * multi-interval models with arbitrary, possibly overlapping clusters
//!   (`mimdp`),
//! * set-valued models that move to a successor cluster with the exact
//!   cell mass and let an adversary resolve the cluster (`smdp`).
//!
//! Robust dynamic programming then computes pessimistic and optimistic
//! satisfaction probabilities and a stationary strategy whose refinement
//! is a state-feedback controller; Monte-Carlo simulation validates the
//! interval on the true closed loop.

pub mod abstraction;
pub mod config;
pub mod fixtures;
pub mod geometry;
pub mod lp;
pub mod noise;
pub mod pipeline;
pub mod synthesis;
pub mod system;
pub mod validation;

pub use abstraction::{build_abstraction, membership, memory_report, Abstraction, ModelClass};
pub use config::{RunConfig, Setup};
pub use geometry::{rect_relation, Cluster, Rect, RectRelation, StatePartition};
pub use noise::{NoiseModel, NoisePartition};
pub use synthesis::{inner_max, inner_min, rdp, refine_controller, Horizon, ReachAvoidSpec};
pub use system::SystemModel;
pub use validation::{compute_metrics, monte_carlo, simulate, RunReport};
