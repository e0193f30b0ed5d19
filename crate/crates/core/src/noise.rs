//! Disturbance models, the partition of the disturbance set, and exact
//! cell masses.
//!
//! For unbounded (Gaussian) noise the bounded window `Ŵ = {w : |w − w₀|∞ ≤
//! r_W}` is tiled uniformly and the remainder `W \ Ŵ` becomes a single
//! unbounded tail cell. Cell masses are computed analytically (per-axis CDF
//! differences for the Gaussian, volume ratios for the uniform model), never
//! by sampling: the transition-bound formulas are only sound when the cell
//! masses are exact.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Rect;

/// Mass bookkeeping must close to one within this slack.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid noise model: {0}")]
    InvalidModel(String),
    #[error("inconsistent partition: {0}")]
    Consistency(String),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
}

/// The disturbance distribution `P_W`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Uniform density on the box `[lower, upper]`.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Independent per-axis normals.
    DiagonalGaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl NoiseModel {
    pub fn dim(&self) -> usize {
        match self {
            NoiseModel::UniformBox { lower, .. } => lower.len(),
            NoiseModel::DiagonalGaussian { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        match self {
            NoiseModel::UniformBox { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(NoiseError::Dimension(lower.len(), upper.len()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(NoiseError::InvalidModel(
                        "uniform box needs lower < upper per axis".into(),
                    ));
                }
            }
            NoiseModel::DiagonalGaussian { mean, std } => {
                if mean.len() != std.len() {
                    return Err(NoiseError::Dimension(mean.len(), std.len()));
                }
                if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(NoiseError::InvalidModel("stds must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// One i.i.d. draw from the true (untruncated) distribution.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            NoiseModel::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| rng.gen_range(*l..*u))
                .collect(),
            NoiseModel::DiagonalGaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| Normal::new(*m, *s).unwrap().sample(rng))
                .collect(),
        }
    }
}

/// Standard normal CDF.
fn phi(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Partition of the disturbance set: bounded interior cells tiling `Ŵ`
/// plus, for unbounded models, one tail cell carrying the leftover mass.
#[derive(Clone, Debug)]
pub struct NoisePartition {
    cells: Vec<Rect>,
    masses: Vec<f64>,
    tail_index: Option<usize>,
    window_center: Vec<f64>,
    window_radius: f64,
}

/// Reference to one cell: its geometry, or the unbounded tail.
#[derive(Clone, Copy, Debug)]
pub enum NoiseCell<'a> {
    Bounded(&'a Rect),
    Tail,
}

impl NoisePartition {
    /// Tile the window `Ŵ(w0, r_W)` uniformly with `cells_per_dim` cells.
    ///
    /// Uniform models admit no tail, so the window must coincide with the
    /// support box. Gaussian models get a tail cell with mass
    /// `1 − Σ interior`.
    pub fn build(
        model: &NoiseModel,
        cells_per_dim: &[usize],
        w0: &[f64],
        r_w: f64,
    ) -> Result<Self, NoiseError> {
        model.validate()?;
        let d = model.dim();
        if cells_per_dim.len() != d {
            return Err(NoiseError::Dimension(cells_per_dim.len(), d));
        }
        if w0.len() != d {
            return Err(NoiseError::Dimension(w0.len(), d));
        }
        if cells_per_dim.iter().any(|&m| m == 0) {
            return Err(NoiseError::InvalidModel("cells_per_dim must be positive".into()));
        }
        if !(r_w > 0.0) {
            return Err(NoiseError::InvalidModel("window radius must be positive".into()));
        }

        // Window bounds per axis; for the uniform model they must match the
        // support exactly (no tail allowed).
        let (win_lo, win_hi): (Vec<f64>, Vec<f64>) = match model {
            NoiseModel::UniformBox { lower, upper } => {
                for i in 0..d {
                    let (wl, wh) = (w0[i] - r_w, w0[i] + r_w);
                    if (wl - lower[i]).abs() > MASS_TOL.max(1e-9)
                        || (wh - upper[i]).abs() > MASS_TOL.max(1e-9)
                    {
                        return Err(NoiseError::InvalidModel(format!(
                            "uniform noise admits no tail: window [{wl}, {wh}] must equal \
                             support [{}, {}] on axis {i}",
                            lower[i], upper[i]
                        )));
                    }
                }
                (lower.clone(), upper.clone())
            }
            NoiseModel::DiagonalGaussian { .. } => (
                w0.iter().map(|c| c - r_w).collect(),
                w0.iter().map(|c| c + r_w).collect(),
            ),
        };

        let boundaries: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let m = cells_per_dim[a];
                (0..=m)
                    .map(|j| {
                        if j == m {
                            win_hi[a]
                        } else {
                            win_lo[a] + (win_hi[a] - win_lo[a]) * (j as f64) / (m as f64)
                        }
                    })
                    .collect()
            })
            .collect();

        let total: usize = cells_per_dim.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut masses = Vec::with_capacity(total + 1);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let lower: Vec<f64> = (0..d).map(|a| boundaries[a][idx[a]]).collect();
            let upper: Vec<f64> = (0..d).map(|a| boundaries[a][idx[a] + 1]).collect();
            let mass = match model {
                NoiseModel::UniformBox { lower: sl, upper: su } => {
                    let vol: f64 = lower.iter().zip(&upper).map(|(l, u)| u - l).product();
                    let support: f64 = sl.iter().zip(su).map(|(l, u)| u - l).product();
                    vol / support
                }
                NoiseModel::DiagonalGaussian { mean, std } => (0..d)
                    .map(|a| {
                        phi((upper[a] - mean[a]) / std[a]) - phi((lower[a] - mean[a]) / std[a])
                    })
                    .product(),
            };
            cells.push(Rect::Bounded { lower, upper });
            masses.push(mass);
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < cells_per_dim[a] {
                    break;
                }
                idx[a] = 0;
            }
        }

        let interior: f64 = masses.iter().sum();
        let tail_index = match model {
            NoiseModel::UniformBox { .. } => {
                if (interior - 1.0).abs() > 1e-9 {
                    return Err(NoiseError::Consistency(format!(
                        "uniform cell masses sum to {interior}"
                    )));
                }
                // Absorb float residue so the row-stochastic invariant is exact.
                let residue = 1.0 - interior;
                if let Some(last) = masses.last_mut() {
                    *last += residue;
                }
                None
            }
            NoiseModel::DiagonalGaussian { .. } => {
                let mut tail = 1.0 - interior;
                if tail < 0.0 {
                    if tail >= -MASS_TOL {
                        tail = 0.0;
                    } else {
                        return Err(NoiseError::Consistency(format!(
                            "negative tail mass {tail}"
                        )));
                    }
                }
                masses.push(tail);
                Some(masses.len() - 1)
            }
        };

        Ok(NoisePartition {
            cells,
            masses,
            tail_index,
            window_center: w0.to_vec(),
            window_radius: r_w,
        })
    }

    pub fn dim(&self) -> usize {
        self.window_center.len()
    }

    /// Total number of cells, tail included.
    pub fn num_cells(&self) -> usize {
        self.masses.len()
    }

    pub fn tail_index(&self) -> Option<usize> {
        self.tail_index
    }

    pub fn mass(&self, idx: usize) -> f64 {
        self.masses[idx]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn cell(&self, idx: usize) -> NoiseCell<'_> {
        if Some(idx) == self.tail_index {
            NoiseCell::Tail
        } else {
            NoiseCell::Bounded(&self.cells[idx])
        }
    }

    pub fn window_center(&self) -> &[f64] {
        &self.window_center
    }

    pub fn window_radius(&self) -> f64 {
        self.window_radius
    }

    /// Which cell a sampled disturbance falls in (half-open interior cells;
    /// everything outside the window is the tail).
    pub fn locate(&self, w: &[f64]) -> Option<usize> {
        for (i, c) in self.cells.iter().enumerate() {
            if c.contains_point_half_open(w) {
                return Some(i);
            }
        }
        // Points on the window's upper faces belong to the last cell along
        // that axis; fold them in so bounded models stay total.
        for (i, c) in self.cells.iter().enumerate() {
            if c.contains_point(w) {
                return Some(i);
            }
        }
        self.tail_index
    }
}
