//! Small dense linear-program solver.
//!
//! Two-phase primal simplex on the full tableau with bounded variables and
//! Bland's anti-cycling rule. Variable bounds are handled in the ratio test
//! (nonbasic variables sit at a bound and may flip), so the interval
//! constraints of the inner problems never become tableau rows. The inner
//! problems of robust dynamic programming are tiny — tens of variables and
//! a handful of cluster rows — so a dense tableau with no external
//! dependencies is the right trade-off.

use thiserror::Error;

/// Reduced-cost optimality threshold.
const COST_TOL: f64 = 1e-9;
/// Smallest usable pivot magnitude.
const PIVOT_TOL: f64 = 1e-11;
/// Ratio-test tie tolerance.
const RATIO_TOL: f64 = 1e-9;
/// Phase-1 optimum above this means infeasible.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("simplex stalled after {0} pivots")]
    SolverStall(usize),
    #[error("malformed program: {0}")]
    BadShape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintOp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// `objective · x` subject to `rows` and per-variable bounds
/// (`[0, +inf)` by default).
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, ConstraintOp, f64)>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            rows: Vec::new(),
            lower_bounds: vec![0.0; n],
            upper_bounds: vec![f64::INFINITY; n],
        }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, op: ConstraintOp, rhs: f64) {
        self.rows.push((coeffs, op, rhs));
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Max violation of the constraints and bounds at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.num_vars() {
            v = v.max(self.lower_bounds[i] - x[i]);
            v = v.max(x[i] - self.upper_bounds[i]);
        }
        for (coeffs, op, rhs) in &self.rows {
            let lhs: f64 = coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum();
            v = v.max(match op {
                ConstraintOp::Le => lhs - rhs,
                ConstraintOp::Ge => rhs - lhs,
                ConstraintOp::Eq => (lhs - rhs).abs(),
            });
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, PartialEq)]
enum VarStatus {
    Basic(usize),
    AtLower,
    AtUpper,
}

enum RunEnd {
    Optimal,
    Unbounded,
}

/// Dense tableau simplex over shifted variables `y ∈ [0, cap]`.
struct Simplex {
    m: usize,
    ncols: usize,
    /// `B⁻¹ A`, row-major `m × ncols`.
    mat: Vec<f64>,
    /// Reduced costs.
    cost: Vec<f64>,
    /// Values of the basic variables.
    x_b: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<VarStatus>,
    cap: Vec<f64>,
    pivots: usize,
    pivot_cap: usize,
}

impl Simplex {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.mat[i * self.ncols + j]
    }

    fn value_of(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::Basic(i) => self.x_b[i],
            VarStatus::AtLower => 0.0,
            VarStatus::AtUpper => self.cap[j],
        }
    }

    /// Eliminate column `col` everywhere but row `row`, and fold the cost row.
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.at(row, col);
        debug_assert!(piv.abs() > PIVOT_TOL);
        let (r0, r1) = (row * self.ncols, (row + 1) * self.ncols);
        for v in &mut self.mat[r0..r1] {
            *v /= piv;
        }
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = self.at(i, col);
            if factor != 0.0 {
                for j in 0..self.ncols {
                    let v = self.mat[row * self.ncols + j];
                    self.mat[i * self.ncols + j] -= factor * v;
                }
            }
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for j in 0..self.ncols {
                self.cost[j] -= factor * self.mat[row * self.ncols + j];
            }
        }
    }

    /// Bland-guarded iteration of the current cost row. Columns at or past
    /// `frozen_from` may leave the basis but never enter.
    fn run(&mut self, frozen_from: usize) -> Result<RunEnd, LpError> {
        loop {
            let mut entering = None;
            for j in 0..frozen_from {
                match self.status[j] {
                    VarStatus::Basic(_) => {}
                    VarStatus::AtLower => {
                        if self.cost[j] < -COST_TOL && self.cap[j] > 0.0 {
                            entering = Some((j, 1.0));
                            break;
                        }
                    }
                    VarStatus::AtUpper => {
                        if self.cost[j] > COST_TOL {
                            entering = Some((j, -1.0));
                            break;
                        }
                    }
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(RunEnd::Optimal);
            };

            // largest step t >= 0 keeping every basic variable in its bounds;
            // ties prefer a pivot over the bound flip, then the smallest
            // basic index (Bland)
            let mut t_best = self.cap[j]; // bound flip (may be +inf)
            let mut leave: Option<(usize, bool)> = None;
            let candidate = |i: usize,
                                 limit: f64,
                                 hit_upper: bool,
                                 t_best: &mut f64,
                                 leave: &mut Option<(usize, bool)>| {
                let take = if limit < *t_best - RATIO_TOL {
                    true
                } else if limit <= *t_best + RATIO_TOL {
                    match *leave {
                        None => true,
                        Some((li, _)) => self.basis[i] < self.basis[li],
                    }
                } else {
                    false
                };
                if take {
                    *t_best = t_best.min(limit);
                    *leave = Some((i, hit_upper));
                }
            };
            for i in 0..self.m {
                let delta = -self.at(i, j) * dir; // d x_b[i] / d t
                if delta < -PIVOT_TOL {
                    let limit = (self.x_b[i] / -delta).max(0.0);
                    candidate(i, limit, false, &mut t_best, &mut leave);
                } else if delta > PIVOT_TOL {
                    let cap_i = self.cap[self.basis[i]];
                    if cap_i.is_finite() {
                        let limit = ((cap_i - self.x_b[i]) / delta).max(0.0);
                        candidate(i, limit, true, &mut t_best, &mut leave);
                    }
                }
            }
            if t_best.is_infinite() {
                return Ok(RunEnd::Unbounded);
            }
            let t = t_best.max(0.0);
            for i in 0..self.m {
                let delta = -self.at(i, j) * dir;
                self.x_b[i] += delta * t;
            }
            match leave {
                None => {
                    // flip to the opposite bound
                    self.status[j] = match self.status[j] {
                        VarStatus::AtLower => VarStatus::AtUpper,
                        VarStatus::AtUpper => VarStatus::AtLower,
                        VarStatus::Basic(_) => unreachable!(),
                    };
                }
                Some((row, hit_upper)) => {
                    let leaving = self.basis[row];
                    self.status[leaving] =
                        if hit_upper { VarStatus::AtUpper } else { VarStatus::AtLower };
                    let entering_value = match self.status[j] {
                        VarStatus::AtLower => dir * t,
                        VarStatus::AtUpper => self.cap[j] + dir * t,
                        VarStatus::Basic(_) => unreachable!(),
                    };
                    self.pivot(row, j);
                    self.basis[row] = j;
                    self.status[j] = VarStatus::Basic(row);
                    self.x_b[row] = entering_value;
                }
            }
            self.pivots += 1;
            if self.pivots > self.pivot_cap {
                return Err(LpError::SolverStall(self.pivots));
            }
        }
    }
}

/// Solve the program; `Max` is handled by negating the objective.
pub fn solve(lp: &LinearProgram, sense: Sense) -> Result<LpOutcome, LpError> {
    let n = lp.num_vars();
    if lp.lower_bounds.len() != n || lp.upper_bounds.len() != n {
        return Err(LpError::BadShape("bound vector length".into()));
    }
    for (coeffs, _, _) in &lp.rows {
        if coeffs.len() != n {
            return Err(LpError::BadShape("row length".into()));
        }
    }
    for j in 0..n {
        if lp.lower_bounds[j] > lp.upper_bounds[j] {
            return Ok(LpOutcome::Infeasible);
        }
        if !lp.lower_bounds[j].is_finite() {
            return Err(LpError::BadShape("lower bounds must be finite".into()));
        }
    }

    let sign = match sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    // shift y = x - lb, y in [0, cap]
    let obj: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();

    // normalize rows to `a·y <= b` or `a·y = b`
    let m = lp.rows.len();
    let mut norm_rows: Vec<(Vec<f64>, bool, f64)> = Vec::with_capacity(m); // (coeffs, is_eq, rhs)
    for (coeffs, op, rhs) in &lp.rows {
        let shift: f64 = coeffs.iter().zip(&lp.lower_bounds).map(|(c, l)| c * l).sum();
        let b = rhs - shift;
        match op {
            ConstraintOp::Le => norm_rows.push((coeffs.clone(), false, b)),
            ConstraintOp::Ge => {
                norm_rows.push((coeffs.iter().map(|c| -c).collect(), false, -b))
            }
            ConstraintOp::Eq => norm_rows.push((coeffs.clone(), true, b)),
        }
    }

    let n_slack = norm_rows.iter().filter(|(_, is_eq, _)| !is_eq).count();
    let needs_art: Vec<bool> =
        norm_rows.iter().map(|(_, is_eq, b)| *is_eq || *b < 0.0).collect();
    let n_art = needs_art.iter().filter(|x| **x).count();
    let ncols = n + n_slack + n_art;

    let mut sx = Simplex {
        m,
        ncols,
        mat: vec![0.0; m * ncols],
        cost: vec![0.0; ncols],
        x_b: vec![0.0; m],
        basis: vec![0; m],
        status: vec![VarStatus::AtLower; ncols],
        cap: vec![f64::INFINITY; ncols],
        pivots: 0,
        pivot_cap: 2000 + 200 * (m + ncols),
    };
    for j in 0..n {
        sx.cap[j] = lp.upper_bounds[j] - lp.lower_bounds[j];
    }

    let mut slack_at = n;
    let mut art_at = n + n_slack;
    for (i, (coeffs, is_eq, b)) in norm_rows.iter().enumerate() {
        for (j, c) in coeffs.iter().enumerate() {
            sx.mat[i * ncols + j] = *c;
        }
        if !is_eq {
            sx.mat[i * ncols + slack_at] = 1.0;
            if *b >= 0.0 {
                sx.basis[i] = slack_at;
                sx.status[slack_at] = VarStatus::Basic(i);
                sx.x_b[i] = *b;
            }
            slack_at += 1;
        }
        if needs_art[i] {
            let coeff = if *b >= 0.0 { 1.0 } else { -1.0 };
            sx.mat[i * ncols + art_at] = coeff;
            sx.basis[i] = art_at;
            sx.status[art_at] = VarStatus::Basic(i);
            sx.x_b[i] = b.abs();
            if coeff < 0.0 {
                // keep the invariant mat = B⁻¹A: the starting basis column
                // must be +1
                for j in 0..ncols {
                    sx.mat[i * ncols + j] = -sx.mat[i * ncols + j];
                }
            }
            art_at += 1;
        }
    }

    // Phase 1: minimize sum of artificials.
    let art_lo = n + n_slack;
    if n_art > 0 {
        for j in art_lo..ncols {
            sx.cost[j] = 1.0;
        }
        for i in 0..m {
            if sx.basis[i] >= art_lo {
                for j in 0..ncols {
                    let v = sx.mat[i * ncols + j];
                    sx.cost[j] -= v;
                }
            }
        }
        match sx.run(ncols)? {
            RunEnd::Optimal => {}
            RunEnd::Unbounded => unreachable!("phase 1 is bounded below"),
        }
        let infeasibility: f64 =
            (0..m).filter(|&i| sx.basis[i] >= art_lo).map(|i| sx.x_b[i]).sum();
        if infeasibility > FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // pivot leftover artificials out where a real column allows it
        for row in 0..m {
            if sx.basis[row] >= art_lo {
                if let Some(col) =
                    (0..art_lo).find(|&j| {
                        !matches!(sx.status[j], VarStatus::Basic(_))
                            && sx.at(row, j).abs() > 1e-9
                    })
                {
                    let entering_value = sx.value_of(col);
                    let leaving = sx.basis[row];
                    sx.status[leaving] = VarStatus::AtLower;
                    sx.pivot(row, col);
                    sx.basis[row] = col;
                    sx.status[col] = VarStatus::Basic(row);
                    sx.x_b[row] = entering_value;
                }
            }
        }
    }

    // Phase 2 on the real objective; artificials may not re-enter.
    for j in 0..ncols {
        sx.cost[j] = if j < n { obj[j] } else { 0.0 };
    }
    for i in 0..m {
        let b = sx.basis[i];
        if b < n {
            let c = obj[b];
            if c != 0.0 {
                for j in 0..ncols {
                    let v = sx.mat[i * ncols + j];
                    sx.cost[j] -= c * v;
                }
            }
        }
    }
    match sx.run(art_lo)? {
        RunEnd::Optimal => {}
        RunEnd::Unbounded => return Ok(LpOutcome::Unbounded),
    }

    let point: Vec<f64> =
        (0..n).map(|j| sx.value_of(j) + lp.lower_bounds[j]).collect();
    let value_min: f64 = obj.iter().zip(&point).map(|(c, x)| c * x).sum();
    Ok(LpOutcome::Optimal { value: sign * value_min, point })
}
