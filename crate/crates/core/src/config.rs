//! Run configuration: the JSON schema every pipeline stage validates
//! before doing any work.
//!
//! The published schema lives in `docs/config.schema.json`; this module is
//! the executable version of it. Violations carry the offending field path
//! so the CLI can exit with a precise diagnostic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::ModelClass;
use crate::geometry::{Cluster, Rect, StatePartition};
use crate::noise::{NoiseModel, NoisePartition};
use crate::synthesis::Horizon;
use crate::system::{build_system, SystemModel};

#[derive(Debug, Error)]
#[error("config field `{path}`: {message}")]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

fn violation(path: &str, message: impl Into<String>) -> SchemaViolation {
    SchemaViolation { path: path.into(), message: message.into() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSpec {
    pub fn to_rect(&self, path: &str) -> Result<Rect, SchemaViolation> {
        Rect::bounded(self.lower.clone(), self.upper.clone())
            .map_err(|e| violation(path, e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::json!({})
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub safe_box: BoxSpec,
    pub cells_per_dim: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub model: NoiseModel,
    pub cells_per_dim: Vec<usize>,
    pub w0: Vec<f64>,
    pub r_w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default = "default_initial_states")]
    pub initial_states: usize,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_initial_states() -> usize {
    100
}
fn default_trajectories() -> usize {
    1000
}
fn default_max_steps() -> usize {
    1000
}

impl Default for ValidationSection {
    fn default() -> Self {
        ValidationSection {
            initial_states: default_initial_states(),
            trajectories: default_trajectories(),
            max_steps: default_max_steps(),
        }
    }
}

fn default_coarse_factor() -> usize {
    3
}

fn default_out_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub system: SystemSection,
    pub state_grid: GridSection,
    pub reach_box: BoxSpec,
    #[serde(default)]
    pub avoid_boxes: Vec<BoxSpec>,
    pub noise: NoiseSection,
    pub classes: Vec<ModelClass>,
    #[serde(default = "default_coarse_factor")]
    pub coarse_factor: usize,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub validation: ValidationSection,
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, SchemaViolation> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| violation("$", format!("not a valid run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks that do not require building anything.
    pub fn validate(&self) -> Result<(), SchemaViolation> {
        if self.version != 1 {
            return Err(violation("version", format!("unsupported version {}", self.version)));
        }
        let n = self.state_grid.safe_box.lower.len();
        if self.state_grid.safe_box.upper.len() != n || n == 0 {
            return Err(violation("state_grid.safe_box", "lower/upper must be same non-zero dim"));
        }
        if self.state_grid.cells_per_dim.len() != n {
            return Err(violation(
                "state_grid.cells_per_dim",
                format!("expected {n} entries to match the safe box"),
            ));
        }
        if self.state_grid.cells_per_dim.iter().any(|&m| m == 0) {
            return Err(violation("state_grid.cells_per_dim", "entries must be positive"));
        }
        if self.reach_box.lower.len() != n || self.reach_box.upper.len() != n {
            return Err(violation("reach_box", format!("must have dimension {n}")));
        }
        for (i, b) in self.avoid_boxes.iter().enumerate() {
            if b.lower.len() != n || b.upper.len() != n {
                return Err(violation(
                    &format!("avoid_boxes[{i}]"),
                    format!("must have dimension {n}"),
                ));
            }
        }
        let d = self.noise.model.dim();
        self.noise.model.validate().map_err(|e| violation("noise.model", e.to_string()))?;
        if self.noise.cells_per_dim.len() != d {
            return Err(violation(
                "noise.cells_per_dim",
                format!("expected {d} entries to match the noise model"),
            ));
        }
        if self.noise.w0.len() != d {
            return Err(violation("noise.w0", format!("expected {d} entries")));
        }
        if !(self.noise.r_w > 0.0) {
            return Err(violation("noise.r_w", "must be positive"));
        }
        if self.classes.is_empty() {
            return Err(violation("classes", "must name at least one abstraction class"));
        }
        if self.coarse_factor == 0 {
            return Err(violation("coarse_factor", "must be positive"));
        }
        if self.validation.trajectories == 0 || self.validation.initial_states == 0 {
            return Err(violation("validation", "initial_states and trajectories must be positive"));
        }
        if self.validation.max_steps == 0 {
            return Err(violation("validation.max_steps", "must be at least 1"));
        }
        match self.horizon {
            Horizon::Unbounded { epsilon, max_iter } => {
                if !(epsilon > 0.0) {
                    return Err(violation("horizon.epsilon", "must be positive"));
                }
                if max_iter == 0 {
                    return Err(violation("horizon.max_iter", "must be positive"));
                }
            }
            Horizon::Finite { .. } => {}
        }
        Ok(())
    }
}

/// Everything the pipeline stages share, built once from the config.
pub struct Setup {
    pub system: SystemModel,
    pub partition: StatePartition,
    pub noise_partition: NoisePartition,
    pub coarse_cover: Vec<Cluster>,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("system: {0}")]
    System(#[from] crate::system::SystemError),
    #[error("geometry: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("noise: {0}")]
    Noise(#[from] crate::noise::NoiseError),
    #[error("{0}")]
    Mismatch(String),
}

impl Setup {
    pub fn build(cfg: &RunConfig) -> Result<Self, BuildError> {
        let system = build_system(&cfg.system.name, &cfg.system.params)?;
        let safe = Rect::bounded(
            cfg.state_grid.safe_box.lower.clone(),
            cfg.state_grid.safe_box.upper.clone(),
        )?;
        if system.state_dim() != cfg.state_grid.cells_per_dim.len() {
            return Err(BuildError::Mismatch(format!(
                "system `{}` has state dimension {}, grid has {}",
                system.name(),
                system.state_dim(),
                cfg.state_grid.cells_per_dim.len()
            )));
        }
        if system.noise_dim() != cfg.noise.model.dim() {
            return Err(BuildError::Mismatch(format!(
                "system `{}` expects noise dimension {}, model has {}",
                system.name(),
                system.noise_dim(),
                cfg.noise.model.dim()
            )));
        }
        let reach = Rect::bounded(cfg.reach_box.lower.clone(), cfg.reach_box.upper.clone())?;
        let avoid: Vec<Rect> = cfg
            .avoid_boxes
            .iter()
            .map(|b| Rect::bounded(b.lower.clone(), b.upper.clone()))
            .collect::<Result<_, _>>()?;
        let partition =
            StatePartition::grid(safe, &cfg.state_grid.cells_per_dim, &reach, &avoid)?;
        let noise_partition = NoisePartition::build(
            &cfg.noise.model,
            &cfg.noise.cells_per_dim,
            &cfg.noise.w0,
            cfg.noise.r_w,
        )?;
        let coarse_cover = grid_block_cover(
            &partition,
            &cfg.state_grid.cells_per_dim,
            cfg.coarse_factor,
        );
        Ok(Setup { system, partition, noise_partition, coarse_cover })
    }
}

/// Group the grid's safe cells into `k × … × k` super-blocks (ragged at the
/// upper faces) — the default non-overlapping coarse cover.
pub fn grid_block_cover(
    partition: &StatePartition,
    cells_per_dim: &[usize],
    k: usize,
) -> Vec<Cluster> {
    let n = cells_per_dim.len();
    let blocks_per_dim: Vec<usize> =
        cells_per_dim.iter().map(|m| m.div_ceil(k)).collect();
    let total_blocks: usize = blocks_per_dim.iter().product();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); total_blocks];

    let total_cells: usize = cells_per_dim.iter().product();
    let mut idx = vec![0usize; n];
    let mut state = 0usize;
    for _ in 0..total_cells {
        let mut block = 0;
        for d in 0..n {
            block = block * blocks_per_dim[d] + idx[d] / k;
        }
        let cell_center: Vec<f64> = (0..n)
            .map(|d| {
                let lo = partition.safe_box().lower()[d];
                let hi = partition.safe_box().upper()[d];
                let w = (hi - lo) / cells_per_dim[d] as f64;
                lo + (idx[d] as f64 + 0.5) * w
            })
            .collect();
        // cells merged into the avoid state carry no state index; the rest
        // were numbered in this same row-major order
        let located = partition.locate(&cell_center);
        if located != partition.avoid_index() {
            debug_assert_eq!(located, state);
            groups[block].push(state);
            state += 1;
        }
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < cells_per_dim[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(Cluster::from_sorted)
        .collect()
}
