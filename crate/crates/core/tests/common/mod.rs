//! Shared test oracles, independent of the implementation paths they check.
#![allow(dead_code)] // each integration test pulls a different subset

use rand::Rng;
use stoch_abstract::lp::{ConstraintOp, LinearProgram};

/// Brute-force LP oracle: enumerate all basic points (vertices) of the
/// constraint system including variable bounds, keep the feasible ones,
/// and scan the objective. Only sensible for a handful of variables.
pub fn vertex_enum_optimum(lp: &LinearProgram, maximize: bool) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    // collect all constraints as rows a·x <= b / a·x = b
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new(); // as equalities when active
    for (coeffs, _, rhs) in &lp.rows {
        planes.push((coeffs.clone(), *rhs));
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        planes.push((e.clone(), lp.lower_bounds[i]));
        if lp.upper_bounds[i].is_finite() {
            planes.push((e, lp.upper_bounds[i]));
        }
    }
    let m = planes.len();
    if m < n {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut combo: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&combo, &planes, n) {
            if lp.violation(&x) < 1e-7 {
                let val: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                let better = match &best {
                    None => true,
                    Some((bv, _)) => {
                        if maximize {
                            val > *bv
                        } else {
                            val < *bv
                        }
                    }
                };
                if better {
                    best = Some((val, x));
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if combo[i] != i + m - n {
                combo[i] += 1;
                for j in i + 1..n {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(active: &[usize], planes: &[(Vec<f64>, f64)], n: usize) -> Option<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = active.iter().map(|&i| planes[i].0.clone()).collect();
    let mut b: Vec<f64> = active.iter().map(|&i| planes[i].1).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Fourier-Motzkin feasibility oracle over `a·x <= b` rows (equalities are
/// split, `>=` negated, variable bounds included).
pub fn fourier_motzkin_feasible(lp: &LinearProgram) -> bool {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (coeffs, op, rhs) in &lp.rows {
        match op {
            ConstraintOp::Le => rows.push((coeffs.clone(), *rhs)),
            ConstraintOp::Ge => rows.push((coeffs.iter().map(|c| -c).collect(), -rhs)),
            ConstraintOp::Eq => {
                rows.push((coeffs.clone(), *rhs));
                rows.push((coeffs.iter().map(|c| -c).collect(), -rhs));
            }
        }
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = -1.0;
        rows.push((e, -lp.lower_bounds[i]));
        if lp.upper_bounds[i].is_finite() {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            rows.push((e, lp.upper_bounds[i]));
        }
    }
    for var in (0..n).rev() {
        let mut lows: Vec<(Vec<f64>, f64)> = Vec::new(); // coefficient < 0
        let mut highs: Vec<(Vec<f64>, f64)> = Vec::new(); // coefficient > 0
        let mut rest: Vec<(Vec<f64>, f64)> = Vec::new();
        for (a, b) in rows {
            let c = a[var];
            if c > 1e-9 {
                highs.push((a, b));
            } else if c < -1e-9 {
                lows.push((a, b));
            } else {
                rest.push((a, b));
            }
        }
        let mut next = rest;
        for (al, bl) in &lows {
            for (ah, bh) in &highs {
                // combine to eliminate `var`
                let cl = -al[var];
                let ch = ah[var];
                let a: Vec<f64> =
                    (0..var).map(|k| al[k] / cl + ah[k] / ch).collect();
                let b = bl / cl + bh / ch;
                next.push((a, b));
            }
        }
        // truncate remaining rows to the surviving variables
        rows = next
            .into_iter()
            .map(|(a, b)| (a[..var].to_vec(), b))
            .collect();
    }
    rows.iter().all(|(_, b)| *b >= -1e-7)
}

/// Exact one-step kernel of the worked planar system: the distribution of
/// the successor region from a concrete point under scalar uniform noise.
/// Regions must share the full first-axis range, stacked along axis two.
pub fn exact_kernel_uniform(
    partition: &stoch_abstract::StatePartition,
    x: &[f64],
    noise_lo: f64,
    noise_hi: f64,
) -> Vec<f64> {
    // successor: dim1 = 0.5 x1 + 0.2 x2 + 0.25 (deterministic),
    //            dim2 = 0.5 x2 + 0.7 + 2.4 w
    let d1 = 0.5 * x[0] + 0.2 * x[1] + 0.25;
    let density = 1.0 / (noise_hi - noise_lo);
    let mut gamma = vec![0.0; partition.num_states()];
    let safe = partition.safe_box();
    assert!(
        d1 > safe.lower()[0] && d1 < safe.upper()[0],
        "fixture assumes the first coordinate stays interior"
    );
    let mut total = 0.0;
    for j in 0..partition.num_regions() {
        let r = partition.region(j);
        let (yl, yu) = (r.lower()[1], r.upper()[1]);
        let wl = ((yl - 0.7 - 0.5 * x[1]) / 2.4).max(noise_lo);
        let wu = ((yu - 0.7 - 0.5 * x[1]) / 2.4).min(noise_hi);
        if wu > wl {
            gamma[j] = (wu - wl) * density;
            total += gamma[j];
        }
    }
    gamma[partition.avoid_index()] = (1.0 - total).max(0.0);
    gamma
}

/// Random probability vector over `k` entries (flat Dirichlet).
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| -(rng.gen::<f64>().max(1e-300)).ln()).collect();
    let sum: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / sum).collect()
}

/// A random set-valued row structure: `k` clusters over `n` states with
/// masses summing to one.
pub fn random_row_structure<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_cells: usize,
) -> Vec<(Vec<usize>, f64)> {
    let masses = random_simplex(rng, n_cells);
    (0..n_cells)
        .map(|c| {
            let size = rng.gen_range(1..=n_states.min(4));
            let mut members: Vec<usize> =
                (0..size).map(|_| rng.gen_range(0..n_states)).collect();
            members.sort_unstable();
            members.dedup();
            (members, masses[c])
        })
        .collect()
}
