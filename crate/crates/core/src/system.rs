//! System models `f(x, u, w)`, finite action sets, and the over-approximated
//! one-step reachable-set operator.
//!
//! Reachability uses interval extensions only: exact bounding boxes for
//! affine dynamics (tight per coordinate) and monotone trigonometric range
//! decomposition for the heading model. Over-approximation loosens the
//! resulting guarantees but never breaks them, and the unbounded tail cell
//! maps to the universal set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Rect;
use crate::noise::NoiseCell;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("unknown system `{0}` (available: {1})")]
    Catalog(String, String),
    #[error("bad system parameters: {0}")]
    BadParams(String),
}

/// An opaque control label bound to a concrete input vector. A half-width
/// widens the input to an interval inside the interval extension so a label
/// can stand for a continuous set of controllers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Action {
    pub label: String,
    pub input: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_halfwidth: Option<Vec<f64>>,
}

impl Action {
    pub fn new(label: impl Into<String>, input: Vec<f64>) -> Self {
        Action { label: label.into(), input, input_halfwidth: None }
    }

    fn interval(&self, k: usize) -> (f64, f64) {
        let hw = self.input_halfwidth.as_ref().map_or(0.0, |h| h[k]);
        (self.input[k] - hw, self.input[k] + hw)
    }
}

#[derive(Clone, Debug)]
enum Dynamics {
    /// `x' = A x + B u + b + G w`
    Affine {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        g: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    /// Planar motion with heading: `(x, y)` advance along `cos/sin` of the
    /// heading, the heading integrates the commanded turn rate plus noise.
    Unicycle {
        dt: f64,
        speed: f64,
    },
    /// Linear thermal coupling between rooms with state-scaled noise
    /// `(g0 + g1·x_i)·w_i`; the multiplicative part is folded into an
    /// affine-in-w interval extension by bounding the coefficient over the
    /// state box.
    Rooms {
        a: Vec<Vec<f64>>,
        input_gain: Vec<Vec<f64>>,
        offset: Vec<f64>,
        noise_base: f64,
        noise_slope: f64,
    },
}

/// A discrete-time stochastic system with a finite action set.
#[derive(Clone, Debug)]
pub struct SystemModel {
    name: String,
    state_dim: usize,
    noise_dim: usize,
    actions: Vec<Action>,
    dynamics: Dynamics,
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(c, v)| c * v).sum()).collect()
}

/// Accumulate `coeff · [lo, hi]` onto an output interval.
fn add_scaled(out: &mut (f64, f64), coeff: f64, lo: f64, hi: f64) {
    if coeff >= 0.0 {
        out.0 += coeff * lo;
        out.1 += coeff * hi;
    } else {
        out.0 += coeff * hi;
        out.1 += coeff * lo;
    }
}

/// Hull of the product of two intervals.
fn interval_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let p = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (p.iter().cloned().fold(f64::INFINITY, f64::min), p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Range of `cos` over `[lo, hi]` by monotone decomposition.
pub fn cos_range(lo: f64, hi: f64) -> (f64, f64) {
    use std::f64::consts::{PI, TAU};
    debug_assert!(hi >= lo);
    if hi - lo >= TAU {
        return (-1.0, 1.0);
    }
    let a = lo.rem_euclid(TAU);
    let b = a + (hi - lo);
    let contains = |angle: f64| (a <= angle && angle <= b) || (angle + TAU <= b);
    let (ca, cb) = (a.cos(), b.cos());
    let max = if contains(0.0) { 1.0 } else { ca.max(cb) };
    let min = if contains(PI) { -1.0 } else { ca.min(cb) };
    (min, max)
}

/// Range of `sin` over `[lo, hi]`.
pub fn sin_range(lo: f64, hi: f64) -> (f64, f64) {
    use std::f64::consts::FRAC_PI_2;
    cos_range(lo - FRAC_PI_2, hi - FRAC_PI_2)
}

impl SystemModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Point map `f(x, u_a, w)`.
    pub fn step(&self, x: &[f64], action: usize, w: &[f64]) -> Vec<f64> {
        let u = &self.actions[action];
        match &self.dynamics {
            Dynamics::Affine { a, b, g, offset } => {
                let mut out = mat_vec(a, x);
                let bu = mat_vec(b, &u.input);
                let gw = mat_vec(g, w);
                for i in 0..out.len() {
                    out[i] += bu[i] + gw[i] + offset[i];
                }
                out
            }
            Dynamics::Unicycle { dt, speed } => {
                let theta = x[2];
                vec![
                    x[0] + dt * speed * theta.cos(),
                    x[1] + dt * speed * theta.sin(),
                    x[2] + dt * (u.input[0] + w[0]),
                ]
            }
            Dynamics::Rooms { a, input_gain, offset, noise_base, noise_slope } => {
                let mut out = mat_vec(a, x);
                let bu = mat_vec(input_gain, &u.input);
                for i in 0..out.len() {
                    out[i] += bu[i] + offset[i] + (noise_base + noise_slope * x[i]) * w[i];
                }
                out
            }
        }
    }

    /// One-step reachable set of a region under a noise cell, as a bounding
    /// box. The unbounded tail cell reaches everywhere.
    pub fn reach(&self, s: &Rect, action: usize, cell: NoiseCell<'_>) -> Rect {
        match cell {
            NoiseCell::Tail => Rect::Universe,
            NoiseCell::Bounded(c) => self.reach_box(s, action, c),
        }
    }

    fn reach_box(&self, s: &Rect, action: usize, c: &Rect) -> Rect {
        let u = &self.actions[action];
        let (xl, xu) = (s.lower(), s.upper());
        let (wl, wu) = (c.lower(), c.upper());
        match &self.dynamics {
            Dynamics::Affine { a, b, g, offset } => {
                let n = a.len();
                let mut lower = Vec::with_capacity(n);
                let mut upper = Vec::with_capacity(n);
                for i in 0..n {
                    let mut out = (offset[i], offset[i]);
                    for j in 0..xl.len() {
                        add_scaled(&mut out, a[i][j], xl[j], xu[j]);
                    }
                    for k in 0..u.input.len() {
                        let (ul, uh) = u.interval(k);
                        add_scaled(&mut out, b[i][k], ul, uh);
                    }
                    for l in 0..wl.len() {
                        add_scaled(&mut out, g[i][l], wl[l], wu[l]);
                    }
                    lower.push(out.0);
                    upper.push(out.1);
                }
                Rect::Bounded { lower, upper }
            }
            Dynamics::Unicycle { dt, speed } => {
                let (cmin, cmax) = cos_range(xl[2], xu[2]);
                let (smin, smax) = sin_range(xl[2], xu[2]);
                let (ul, uh) = u.interval(0);
                Rect::Bounded {
                    lower: vec![
                        xl[0] + dt * speed * cmin,
                        xl[1] + dt * speed * smin,
                        xl[2] + dt * (ul + wl[0]),
                    ],
                    upper: vec![
                        xu[0] + dt * speed * cmax,
                        xu[1] + dt * speed * smax,
                        xu[2] + dt * (uh + wu[0]),
                    ],
                }
            }
            Dynamics::Rooms { a, input_gain, offset, noise_base, noise_slope } => {
                let n = a.len();
                let mut lower = Vec::with_capacity(n);
                let mut upper = Vec::with_capacity(n);
                for i in 0..n {
                    let mut out = (offset[i], offset[i]);
                    for j in 0..n {
                        add_scaled(&mut out, a[i][j], xl[j], xu[j]);
                    }
                    for k in 0..u.input.len() {
                        let (ul, uh) = u.interval(k);
                        add_scaled(&mut out, input_gain[i][k], ul, uh);
                    }
                    let coeff = (
                        (noise_base + noise_slope * xl[i]).min(noise_base + noise_slope * xu[i]),
                        (noise_base + noise_slope * xl[i]).max(noise_base + noise_slope * xu[i]),
                    );
                    let (nl, nh) = interval_mul(coeff, (wl[i], wu[i]));
                    out.0 += nl;
                    out.1 += nh;
                    lower.push(out.0);
                    upper.push(out.1);
                }
                Rect::Bounded { lower, upper }
            }
        }
    }

    /// General affine system `x' = A x + B u + b + G w`.
    pub fn affine(
        name: impl Into<String>,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        g: Vec<Vec<f64>>,
        offset: Vec<f64>,
        actions: Vec<Action>,
    ) -> Result<Self, SystemError> {
        let n = a.len();
        if n == 0 || a.iter().any(|r| r.len() != n) {
            return Err(SystemError::BadParams("A must be square and non-empty".into()));
        }
        if b.len() != n || g.len() != n || offset.len() != n {
            return Err(SystemError::BadParams("B, G, b must have one row per state".into()));
        }
        let m = b[0].len();
        let d = g[0].len();
        if b.iter().any(|r| r.len() != m) || g.iter().any(|r| r.len() != d) {
            return Err(SystemError::BadParams("ragged B or G".into()));
        }
        if actions.is_empty() {
            return Err(SystemError::BadParams("need at least one action".into()));
        }
        for act in &actions {
            if act.input.len() != m {
                return Err(SystemError::BadParams(format!(
                    "action `{}` input has dim {}, expected {m}",
                    act.label,
                    act.input.len()
                )));
            }
            if let Some(hw) = &act.input_halfwidth {
                if hw.len() != m || hw.iter().any(|h| *h < 0.0) {
                    return Err(SystemError::BadParams("bad input half-width".into()));
                }
            }
        }
        Ok(SystemModel {
            name: name.into(),
            state_dim: n,
            noise_dim: d,
            actions,
            dynamics: Dynamics::Affine { a, b, g, offset },
        })
    }
}

// ── Built-in catalog ─────────────────────────────────────────────────────

pub const CATALOG: &[&str] = &["example1", "affine2d", "unicycle3d", "rooms_n"];

/// The worked two-state-matrix fixture: a stable planar system driven by a
/// single scalar input and scalar noise entering the second coordinate.
pub fn example1() -> SystemModel {
    SystemModel::affine(
        "example1",
        vec![vec![0.5, 0.2], vec![0.0, 0.5]],
        vec![vec![0.25], vec![0.7]],
        vec![vec![0.0], vec![2.4]],
        vec![0.0, 0.0],
        vec![Action::new("a", vec![1.0])],
    )
    .unwrap()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Affine2dParams {
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
    pub g: [[f64; 1]; 2],
    pub offset: [f64; 2],
    pub step: f64,
}

impl Default for Affine2dParams {
    fn default() -> Self {
        Affine2dParams {
            a: [[0.9, 0.0], [0.0, 0.9]],
            b: [[1.0, 0.0], [0.0, 1.0]],
            g: [[1.0], [0.7]],
            offset: [0.05, 0.05],
            step: 0.1,
        }
    }
}

/// Configurable planar affine benchmark with eight compass moves and scalar
/// Gaussian noise.
pub fn affine2d(p: &Affine2dParams) -> Result<SystemModel, SystemError> {
    let s = p.step;
    let diag = s / std::f64::consts::SQRT_2;
    let actions = vec![
        Action::new("e", vec![s, 0.0]),
        Action::new("w", vec![-s, 0.0]),
        Action::new("n", vec![0.0, s]),
        Action::new("s", vec![0.0, -s]),
        Action::new("ne", vec![diag, diag]),
        Action::new("nw", vec![-diag, diag]),
        Action::new("se", vec![diag, -diag]),
        Action::new("sw", vec![-diag, -diag]),
    ];
    SystemModel::affine(
        "affine2d",
        p.a.iter().map(|r| r.to_vec()).collect(),
        p.b.iter().map(|r| r.to_vec()).collect(),
        p.g.iter().map(|r| r.to_vec()).collect(),
        p.offset.to_vec(),
        actions,
    )
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Unicycle3dParams {
    pub dt: f64,
    pub speed: f64,
    pub turn_rates: Vec<f64>,
}

impl Default for Unicycle3dParams {
    fn default() -> Self {
        Unicycle3dParams { dt: 0.1, speed: 1.0, turn_rates: vec![-1.5, -0.75, 0.0, 0.75, 1.5] }
    }
}

/// Heading-based planar vehicle; noise perturbs the turn rate.
pub fn unicycle3d(p: &Unicycle3dParams) -> Result<SystemModel, SystemError> {
    if !(p.dt > 0.0) || p.turn_rates.is_empty() {
        return Err(SystemError::BadParams("dt must be positive, need turn rates".into()));
    }
    let actions = p
        .turn_rates
        .iter()
        .map(|w| Action::new(format!("turn{w:+.2}"), vec![*w]))
        .collect();
    Ok(SystemModel {
        name: "unicycle3d".into(),
        state_dim: 3,
        noise_dim: 1,
        actions,
        dynamics: Dynamics::Unicycle { dt: p.dt, speed: p.speed },
    })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomsParams {
    pub rooms: usize,
    pub dt: f64,
    pub coupling: f64,
    pub ambient_leak: f64,
    pub ambient: f64,
    pub heat_gain: f64,
    pub heater: Vec<f64>,
    pub noise_base: f64,
    pub noise_slope: f64,
}

impl Default for RoomsParams {
    fn default() -> Self {
        RoomsParams {
            rooms: 2,
            dt: 0.25,
            coupling: 0.06,
            ambient_leak: 0.03,
            ambient: 10.0,
            heat_gain: 0.8,
            heater: Vec::new(), // all-ones by default
            noise_base: 0.02,
            noise_slope: 0.002,
        }
    }
}

/// Chain-coupled room temperatures with state-scaled noise; one fixed
/// heater action by default (verification setting).
pub fn rooms_n(p: &RoomsParams) -> Result<SystemModel, SystemError> {
    let n = p.rooms;
    if !(2..=4).contains(&n) {
        return Err(SystemError::BadParams(format!("rooms must be 2..=4, got {n}")));
    }
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        let neighbors = usize::from(i > 0) + usize::from(i + 1 < n);
        a[i][i] = 1.0 - p.dt * (p.coupling * neighbors as f64 + p.ambient_leak);
        if i > 0 {
            a[i][i - 1] = p.dt * p.coupling;
        }
        if i + 1 < n {
            a[i][i + 1] = p.dt * p.coupling;
        }
    }
    let mut input_gain = vec![vec![0.0; n]; n];
    for (i, row) in input_gain.iter_mut().enumerate() {
        row[i] = p.dt * p.heat_gain;
    }
    let offset = vec![p.dt * p.ambient_leak * p.ambient; n];
    let heater = if p.heater.is_empty() { vec![1.0; n] } else { p.heater.clone() };
    if heater.len() != n {
        return Err(SystemError::BadParams("heater vector length must equal rooms".into()));
    }
    Ok(SystemModel {
        name: format!("rooms_{n}"),
        state_dim: n,
        noise_dim: n,
        actions: vec![Action::new("heater", heater)],
        dynamics: Dynamics::Rooms {
            a,
            input_gain,
            offset,
            noise_base: p.noise_base,
            noise_slope: p.noise_slope,
        },
    })
}

/// Build a named system from JSON parameters (empty object for defaults).
pub fn build_system(name: &str, params: &serde_json::Value) -> Result<SystemModel, SystemError> {
    let bad = |e: serde_json::Error| SystemError::BadParams(e.to_string());
    match name {
        "example1" => Ok(example1()),
        "affine2d" => affine2d(&serde_json::from_value(params.clone()).map_err(bad)?),
        "unicycle3d" => unicycle3d(&serde_json::from_value(params.clone()).map_err(bad)?),
        "rooms_n" => rooms_n(&serde_json::from_value(params.clone()).map_err(bad)?),
        other => Err(SystemError::Catalog(other.to_string(), CATALOG.join(", "))),
    }
}
