//! Bounded-variable primal simplex for
//! `maximize c^T x  s.t.  A x <= b,  lo <= x <= hi` with finite bounds.
//!
//! Dense tableau with two phases; artificial variables only for rows whose
//! right-hand side is negative after shifting to the lower bounds. Pricing
//! is Dantzig's rule, switching to Bland's rule once the iteration count
//! exceeds `5 (rows + cols)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

struct Tableau {
    /// `B^{-1} [A I art]`.
    t: RMatrix,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    iterations: usize,
    bland_after: usize,
    max_iter: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Continue,
}

impl Tableau {
    fn step(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Step {
        let (rows, cols) = self.t.shape();
        let bland = self.iterations >= self.bland_after;
        // Reduced costs d_j = c_j - c_B^T T_j.
        let mut enter = None;
        let mut best = 0.0;
        for j in 0..cols {
            if self.is_basic[j] || !allowed(j) || self.upper[j] == 0.0 {
                continue;
            }
            let mut d = cost[j];
            for i in 0..rows {
                d -= cost[self.basis[i]] * self.t[(i, j)];
            }
            let gain = if self.at_upper[j] { -d } else { d };
            if gain > COST_TOL {
                if bland {
                    enter = Some(j);
                    break;
                }
                if gain > best {
                    best = gain;
                    enter = Some(j);
                }
            }
        }
        let Some(j) = enter else { return Step::Optimal };
        let sigma = if self.at_upper[j] { -1.0 } else { 1.0 };

        // Ratio test; ties go to the smallest basic index.
        let mut limit = self.upper[j];
        let mut leave: Option<(usize, bool)> = None;
        for i in 0..rows {
            let alpha = sigma * self.t[(i, j)];
            let bi = self.basis[i];
            let (ratio, to_upper) = if alpha > PIVOT_TOL {
                (self.beta[i].max(0.0) / alpha, false)
            } else if alpha < -PIVOT_TOL && self.upper[bi].is_finite() {
                ((self.upper[bi] - self.beta[i]).max(0.0) / -alpha, true)
            } else {
                continue;
            };
            let better = match leave {
                None => ratio < limit,
                Some((r, _)) => {
                    ratio < limit - 1e-12 || (ratio <= limit + 1e-12 && bi < self.basis[r])
                }
            };
            if better {
                limit = ratio;
                leave = Some((i, to_upper));
            }
        }
        if !limit.is_finite() {
            return Step::Unbounded;
        }
        self.iterations += 1;
        for i in 0..rows {
            self.beta[i] -= sigma * limit * self.t[(i, j)];
        }
        match leave {
            None => {
                // Bound flip of the entering variable.
                self.at_upper[j] = !self.at_upper[j];
            }
            Some((r, to_upper)) => {
                let entering_value = if self.at_upper[j] { self.upper[j] - limit } else { limit };
                let old = self.basis[r];
                self.is_basic[old] = false;
                self.at_upper[old] = to_upper;
                self.basis[r] = j;
                self.is_basic[j] = true;
                self.at_upper[j] = false;
                self.beta[r] = entering_value;
                let piv = self.t[(r, j)];
                for c in 0..cols {
                    self.t[(r, c)] /= piv;
                }
                for i in 0..rows {
                    if i != r {
                        let f = self.t[(i, j)];
                        if f != 0.0 {
                            for c in 0..cols {
                                let v = self.t[(r, c)];
                                self.t[(i, c)] -= f * v;
                            }
                        }
                    }
                }
            }
        }
        Step::Continue
    }

    fn run(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> LpStatus {
        loop {
            if self.iterations >= self.max_iter {
                return LpStatus::IterationLimit;
            }
            match self.step(cost, allowed) {
                Step::Optimal => return LpStatus::Optimal,
                Step::Unbounded => return LpStatus::Unbounded,
                Step::Continue => {}
            }
        }
    }
}

/// Solves the LP. Bounds must be finite with `lo <= hi`.
pub fn lp_solve(c: &[f64], a: &RMatrix, b: &[f64], bounds: &[(f64, f64)]) -> Result<LpResult> {
    let (rows, n) = a.shape();
    if c.len() != n || bounds.len() != n || b.len() != rows {
        return Err(Error::Dimension("LP data have inconsistent sizes".into()));
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Validation(format!("variable {k} has invalid bounds [{lo}, {hi}]")));
        }
    }
    // Shift x = lo + x', rhs b' = b - A lo.
    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let rhs: Vec<f64> = (0..rows).map(|i| b[i] - (0..n).map(|k| a[(i, k)] * lo[k]).sum::<f64>()).collect();
    let negative: Vec<usize> = (0..rows).filter(|&i| rhs[i] < 0.0).collect();
    let n_art = negative.len();
    let cols = n + rows + n_art;

    let mut t = RMatrix::zeros(rows, cols);
    let mut beta = vec![0.0; rows];
    let mut basis = vec![0; rows];
    let mut art = 0;
    for i in 0..rows {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            t[(i, k)] = sign * a[(i, k)];
        }
        t[(i, n + i)] = sign;
        beta[i] = sign * rhs[i];
        if sign < 0.0 {
            t[(i, n + rows + art)] = 1.0;
            basis[i] = n + rows + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut upper: Vec<f64> = bounds.iter().map(|&(l, h)| h - l).collect();
    upper.extend(std::iter::repeat(f64::INFINITY).take(rows + n_art));
    let mut is_basic = vec![false; cols];
    for &bv in &basis {
        is_basic[bv] = true;
    }
    let size = rows + n;
    let mut tab = Tableau {
        t,
        beta,
        basis,
        upper,
        at_upper: vec![false; cols],
        is_basic,
        iterations: 0,
        bland_after: 5 * size,
        max_iter: 50 * size + 100,
    };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for v in phase1.iter_mut().skip(n + rows) {
            *v = -1.0;
        }
        let status = tab.run(&phase1, &|_| true);
        let infeas: f64 = (0..rows).filter(|&i| tab.basis[i] >= n + rows).map(|i| tab.beta[i]).sum();
        if status == LpStatus::IterationLimit {
            return Ok(finish(&tab, LpStatus::IterationLimit, a, b, c, &lo, n));
        }
        if infeas > FEAS_TOL * (1.0 + rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
            return Ok(finish(&tab, LpStatus::Infeasible, a, b, c, &lo, n));
        }
        for k in n + rows..cols {
            tab.upper[k] = 0.0;
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let status = tab.run(&cost, &|j| j < n + rows);
    Ok(finish(&tab, status, a, b, c, &lo, n))
}

/// Reads the primal solution, recomputing the basic values from the
/// original data for accuracy.
fn finish(tab: &Tableau, status: LpStatus, a: &RMatrix, b: &[f64], c: &[f64], lo: &[f64], n: usize) -> LpResult {
    let cols = tab.t.ncols();
    let mut x = vec![0.0; cols];
    for j in 0..cols {
        if !tab.is_basic[j] && tab.at_upper[j] {
            x[j] = tab.upper[j];
        }
    }
    for (i, &bv) in tab.basis.iter().enumerate() {
        x[bv] = tab.beta[i];
    }
    if status == LpStatus::Optimal {
        if let Some(refined) = refine(tab, a, b, lo, n, &x) {
            x = refined;
        }
    }
    let xs: Vec<f64> = (0..n).map(|k| lo[k] + x[k]).collect();
    let objective = xs.iter().zip(c).map(|(x, c)| x * c).sum();
    LpResult { status, x: xs, objective, iterations: tab.iterations }
}

/// Re-solves `B x_B = b' - N x_N` with the original (shifted) constraint
/// matrix so that the residual does not carry tableau round-off.
fn refine(tab: &Tableau, a: &RMatrix, b: &[f64], lo: &[f64], n: usize, x: &[f64]) -> Option<Vec<f64>> {
    let rows = a.nrows();
    // Columns of [A I] (artificials are at zero in phase 2 and enter as unit columns).
    let column = |j: usize, i: usize| -> f64 {
        if j < n {
            a[(i, j)]
        } else if j < n + rows {
            if j - n == i { 1.0 } else { 0.0 }
        } else {
            0.0
        }
    };
    if tab.basis.iter().any(|&j| j >= n + rows) {
        return None;
    }
    if rows == 0 {
        return Some(x.to_vec());
    }
    let bmat = RMatrix::from_fn(rows, rows, |i, r| column(tab.basis[r], i));
    let mut rhs = DVector::from_fn(rows, |i, _| b[i] - (0..n).map(|k| a[(i, k)] * lo[k]).sum::<f64>());
    for j in 0..n + rows {
        if !tab.is_basic[j] && x[j] != 0.0 {
            for i in 0..rows {
                rhs[i] -= column(j, i) * x[j];
            }
        }
    }
    let sol = bmat.lu().solve(&rhs)?;
    let mut out = x.to_vec();
    for (r, &bv) in tab.basis.iter().enumerate() {
        if (sol[r] - x[bv]).abs() > 1e-6 * (1.0 + x[bv].abs()) {
            return None;
        }
        out[bv] = sol[r].clamp(0.0, tab.upper[bv]);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bounded_variable() {
        let r = lp_solve(&[1.0], &RMatrix::zeros(0, 1), &[], &[(0.0, 1.0)]).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_eq!(r.x, vec![1.0]);
    }

    #[test]
    fn two_variables_one_row() {
        let a = RMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let r = lp_solve(&[1.0, 1.0], &a, &[1.0], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // x + y >= 1.5 written as -x - y <= -1.5; minimize x + 2y.
        let a = RMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        let r = lp_solve(&[-1.0, -2.0], &a, &[-1.5], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let a = RMatrix::from_row_slice(1, 1, &[-1.0]);
        let r = lp_solve(&[1.0], &a, &[-2.0], &[(0.0, 1.0)]).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn shifted_lower_bounds() {
        let a = RMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let r = lp_solve(&[1.0, 0.0], &a, &[0.0], &[(-3.0, 5.0), (-2.0, 2.0)]).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_infinite_bounds() {
        assert!(lp_solve(&[1.0], &RMatrix::zeros(0, 1), &[], &[(0.0, f64::INFINITY)]).is_err());
    }
}
