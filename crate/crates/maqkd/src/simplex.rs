//! Dense two-phase primal simplex for the small decoy-state programs.
//!
//! The problems here have at most ~130 nonnegative variables and ~30
//! inequality rows, so a dense tableau with Bland's anticycling rule is
//! plenty. Constraints are `A x <= b` with free-sign `b`; rows with
//! negative right-hand side get phase-1 artificials.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    /// Row-major constraint matrix for `A x <= b`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Objective to minimize.
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const MAX_ITERS: usize = 100_000;

struct Tableau {
    rows: usize,
    cols: usize, // structural + slack + artificial + rhs
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let piv = self.at(row, col);
        for c in 0..cols {
            *self.at_mut(row, c) /= piv;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..cols {
                let v = self.at(row, c);
                *self.at_mut(r, c) -= factor * v;
            }
        }
        self.basis[row] = col;
    }

    // One simplex phase on the objective stored in the last row.
    // Dantzig pricing normally; strict Bland's rule (smallest entering
    // index, smallest leaving basis index among exact minimum-ratio ties)
    // kicks in after a stall to guarantee termination on degenerate bases.
    fn run(&mut self, active_cols: usize) -> Result<bool> {
        let obj_row = self.rows - 1;
        let mut degenerate_streak = 0usize;
        for _ in 0..MAX_ITERS {
            let bland = degenerate_streak > 20;
            let mut entering = None;
            let mut best = -PIVOT_TOL;
            for c in 0..active_cols {
                let rc = self.at(obj_row, c);
                if rc < best {
                    entering = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..obj_row {
                let coeff = self.at(r, col);
                if coeff > PIVOT_TOL {
                    let ratio = (self.at(r, self.cols - 1) / coeff).max(0.0);
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio
                                || (ratio == lratio && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            match leaving {
                Some((row, ratio)) => {
                    if ratio <= 1e-12 {
                        degenerate_streak += 1;
                    } else {
                        degenerate_streak = 0;
                    }
                    self.pivot(row, col);
                }
                None => return Ok(false), // unbounded direction
            }
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }
}

pub(crate) fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let m = lp.a.len();
    let n = lp.c.len();
    assert_eq!(lp.b.len(), m);
    assert!(lp.a.iter().all(|row| row.len() == n));

    // Equilibrate the constraint matrix: columns to unit max, then rows.
    // The right-hand side is deliberately left out of the scaling so that
    // large counts never push coefficients under the pivot tolerance.
    let mut col_scale = vec![1.0; n];
    for (j, cs) in col_scale.iter_mut().enumerate() {
        let mx = lp.a.iter().map(|row| row[j].abs()).fold(0.0, f64::max);
        if mx > 0.0 {
            *cs = mx;
        }
    }
    let mut scale = vec![1.0; m];
    for (i, row) in lp.a.iter().enumerate() {
        let mx = row
            .iter()
            .zip(&col_scale)
            .map(|(v, cs)| (v / cs).abs())
            .fold(0.0, f64::max);
        if mx > 0.0 {
            scale[i] = 1.0 / mx;
        }
    }

    // Equality form: A x + s = b (slack per row), with rows negated when
    // b < 0 so the RHS is nonnegative; negated rows need artificials.
    let mut needs_artificial = Vec::new();
    for (i, (&b, &sc)) in lp.b.iter().zip(&scale).enumerate() {
        if b * sc < 0.0 {
            needs_artificial.push(i);
        }
    }
    let n_art = needs_artificial.len();
    let cols = n + m + n_art + 1;
    let rows = m + 1;
    let mut t = Tableau {
        rows,
        cols,
        data: vec![0.0; rows * cols],
        basis: vec![0; m],
    };

    let mut art_idx = 0usize;
    for (i, &sc) in scale.iter().enumerate() {
        let flip = if lp.b[i] * sc < 0.0 { -1.0 } else { 1.0 };
        for (j, &cs) in col_scale.iter().enumerate() {
            *t.at_mut(i, j) = flip * sc * lp.a[i][j] / cs;
        }
        *t.at_mut(i, n + i) = flip; // slack
        *t.at_mut(i, cols - 1) = flip * sc * lp.b[i];
        if flip < 0.0 {
            let col = n + m + art_idx;
            *t.at_mut(i, col) = 1.0;
            t.basis[i] = col;
            art_idx += 1;
        } else {
            t.basis[i] = n + i;
        }
    }

    if n_art > 0 {
        // Phase 1: minimize the sum of artificials.
        let obj = rows - 1;
        for a in 0..n_art {
            *t.at_mut(obj, n + m + a) = 1.0;
        }
        // Make the objective row consistent with the artificial basis.
        for i in 0..m {
            if t.basis[i] >= n + m {
                for c in 0..cols {
                    let v = t.at(i, c);
                    *t.at_mut(obj, c) -= v;
                }
            }
        }
        t.run(cols - 1)?;
        let phase1 = -t.at(rows - 1, cols - 1);
        let b_scale = lp
            .b
            .iter()
            .zip(&scale)
            .map(|(b, s)| (b * s).abs())
            .fold(1.0, f64::max);
        if phase1 > FEAS_TOL * b_scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive any artificial still in the basis onto a structural column.
        for i in 0..m {
            if t.basis[i] >= n + m {
                if let Some(col) = (0..n + m).find(|&c| t.at(i, c).abs() > PIVOT_TOL) {
                    t.pivot(i, col);
                }
            }
        }
        // Clear the phase-1 objective and artificial columns.
        for c in 0..cols {
            *t.at_mut(rows - 1, c) = 0.0;
        }
        for i in 0..m {
            for a in 0..n_art {
                *t.at_mut(i, n + m + a) = 0.0;
            }
        }
    }

    // Phase 2 objective in the column-scaled variables.
    let c_scaled: Vec<f64> = lp.c.iter().zip(&col_scale).map(|(c, cs)| c * cs).collect();
    let obj = rows - 1;
    for (j, &cj) in c_scaled.iter().enumerate() {
        *t.at_mut(obj, j) = cj;
    }
    for i in 0..m {
        let b = t.basis[i];
        if b < n && c_scaled[b] != 0.0 {
            let factor = c_scaled[b];
            for c in 0..cols {
                let v = t.at(i, c);
                *t.at_mut(obj, c) -= factor * v;
            }
        }
    }
    let optimal = t.run(n + m)?;
    if !optimal {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = (t.at(i, cols - 1) / col_scale[t.basis[i]]).max(0.0);
        }
    }
    let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { objective, x })
}
