//! Rectangular-state, current and current-magnitude sensitivities.
//!
//! Currents are the entries of `u = diag(w) A x`: branch currents (measured
//! from the `from` end) followed by shunt currents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::voltage::{InjectionSens, VoltageSens};
use super::wirtinger::{components, wirtinger_c};
use crate::error::Result;
use crate::linalg::{scale_rows, CMatrix, RMatrix};
use crate::netmodel::{AdmittanceState, IncidenceOperator};
use crate::pfsolve::PowerFlowSolution;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Currents at or below this magnitude (per-unit) are treated as zero when
/// differentiating `|u|`.
pub const EPS_CURRENT: f64 = 1e-9;

/// Chain rule on `x_k = v_k e^{j delta_k}` for one pair of polar blocks.
fn rect_block(sol: &PowerFlowSolution, dd: &RMatrix, dv: &RMatrix) -> CMatrix {
    CMatrix::from_fn(dd.nrows(), dd.ncols(), |k, c| {
        let rot = Complex64::from_polar(1.0, sol.delta[k]);
        rot * (dv[(k, c)] + J * sol.v[k] * dd[(k, c)])
    })
}

/// `(dx/dg, dx/db)` in component form.
pub fn rect_components(sol: &PowerFlowSolution, vs: &VoltageSens) -> (CMatrix, CMatrix) {
    (rect_block(sol, &vs.kdelta_g, &vs.kv_g), rect_block(sol, &vs.kdelta_b, &vs.kv_b))
}

/// `(dx/dw, dx/dw̄)`.
pub fn rect_state_sensitivities(
    sol: &PowerFlowSolution,
    vs: &VoltageSens,
) -> Result<(CMatrix, CMatrix)> {
    let (dg, db) = rect_components(sol, vs);
    wirtinger_c(&dg, &db)
}

/// `(dx/dp, dx/dq)` over the reduced injection columns.
pub fn rect_injection(sol: &PowerFlowSolution, is: &InjectionSens) -> (CMatrix, CMatrix) {
    (rect_block(sol, &is.kdelta_p, &is.kv_p), rect_block(sol, &is.kdelta_q, &is.kv_q))
}

/// `A M` for a bus-indexed matrix `M`.
pub(crate) fn apply_incidence(op: &IncidenceOperator, mat: &CMatrix) -> CMatrix {
    let (m, cols) = (op.m(), mat.ncols());
    let mut out = CMatrix::zeros(op.rows(), cols);
    for (e, &(f, t)) in op.ends().iter().enumerate() {
        for c in 0..cols {
            out[(e, c)] = mat[(f, c)] - mat[(t, c)];
        }
    }
    out.rows_mut(m, op.n()).copy_from(mat);
    out
}

/// Current vector `u = diag(w) A x`.
pub fn current_values(x: &[Complex64], ast: &AdmittanceState, op: &IncidenceOperator) -> Vec<Complex64> {
    op.apply(x).iter().zip(ast.w()).map(|(d, w)| w * d).collect()
}

/// `du/dw = diag(A x) + diag(w) A dx/dw` and `du/dw̄ = diag(w) A dx/dw̄`.
pub fn current_sensitivities(
    sol: &PowerFlowSolution,
    op: &IncidenceOperator,
    dx_dw: &CMatrix,
    dx_dwbar: &CMatrix,
) -> (CMatrix, CMatrix) {
    let w = sol.w_at_solve.w();
    let ax = op.apply(&sol.x);
    let mut du_dw = scale_rows(&w, &apply_incidence(op, dx_dw));
    for (e, d) in ax.iter().enumerate() {
        du_dw[(e, e)] += d;
    }
    let du_dwbar = scale_rows(&w, &apply_incidence(op, dx_dwbar));
    (du_dw, du_dwbar)
}

/// Magnitude sensitivities of the currents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeSens {
    pub kl_g: RMatrix,
    pub kl_b: RMatrix,
    /// Rows with `|u| <= EPS_CURRENT`; they are zero in every block.
    pub degenerate: Vec<usize>,
    /// Largest imaginary part dropped when recovering the real blocks.
    pub imag_residue: f64,
}

/// `dl/dw = diag(l)^{-1} (diag(conj u) du/dw + diag(u) conj(du/dw̄)) / 2`,
/// then `d/dg = d/dw + d/dw̄`, `d/db = j (d/dw - d/dw̄)`.
pub fn current_magnitude_sensitivities(
    u: &[Complex64],
    du_dw: &CMatrix,
    du_dwbar: &CMatrix,
) -> Result<MagnitudeSens> {
    let (rows, cols) = du_dw.shape();
    let mut dl_dw = CMatrix::zeros(rows, cols);
    let mut dl_dwbar = CMatrix::zeros(rows, cols);
    let mut degenerate = Vec::new();
    for r in 0..rows {
        let l = u[r].norm();
        if l <= EPS_CURRENT {
            degenerate.push(r);
            continue;
        }
        let scale = 0.5 / l;
        for c in 0..cols {
            dl_dw[(r, c)] =
                (u[r].conj() * du_dw[(r, c)] + u[r] * du_dwbar[(r, c)].conj()) * scale;
            dl_dwbar[(r, c)] =
                (u[r].conj() * du_dwbar[(r, c)] + u[r] * du_dw[(r, c)].conj()) * scale;
        }
    }
    let (dg, db) = components(&dl_dw, &dl_dwbar)?;
    let imag_residue = dg.iter().chain(db.iter()).fold(0.0_f64, |a, z| a.max(z.im.abs()));
    Ok(MagnitudeSens { kl_g: dg.map(|z| z.re), kl_b: db.map(|z| z.re), degenerate, imag_residue })
}

/// `dl/dp`-style block for a state derivative `dx` that does not move `w`:
/// `Re(conj(u) * diag(w) A dx) / l`.
pub fn magnitude_wrt_state(
    u: &[Complex64],
    w: &[Complex64],
    op: &IncidenceOperator,
    dx: &CMatrix,
) -> RMatrix {
    let du = scale_rows(w, &apply_incidence(op, dx));
    RMatrix::from_fn(du.nrows(), du.ncols(), |r, c| {
        let l = u[r].norm();
        if l <= EPS_CURRENT {
            0.0
        } else {
            (u[r].conj() * du[(r, c)]).re / l
        }
    })
}

/// Direct component-form branch-current derivatives, valid when every shunt
/// weight is zero:
///
/// ```text
/// du_e/dg_c = [e = c](x_f - x_t) + w_e (dx_f/dg_c - dx_t/dg_c)
/// du_e/db_c = j[e = c](x_f - x_t) + w_e (dx_f/db_c - dx_t/db_c)
/// ```
///
/// Returns `m x (m + n)` blocks (branch rows only).
pub fn branch_current_components(
    sol: &PowerFlowSolution,
    op: &IncidenceOperator,
    dx_dg: &CMatrix,
    dx_db: &CMatrix,
) -> (CMatrix, CMatrix) {
    let cols = dx_dg.ncols();
    let m = op.m();
    let w = &sol.w_at_solve.w_branch;
    let mut dg = CMatrix::zeros(m, cols);
    let mut db = CMatrix::zeros(m, cols);
    for (e, &(f, t)) in op.ends().iter().enumerate() {
        let diff = sol.x[f] - sol.x[t];
        for c in 0..cols {
            dg[(e, c)] = w[e] * (dx_dg[(f, c)] - dx_dg[(t, c)]);
            db[(e, c)] = w[e] * (dx_db[(f, c)] - dx_db[(t, c)]);
        }
        dg[(e, e)] += diff;
        db[(e, e)] += J * diff;
    }
    (dg, db)
}
