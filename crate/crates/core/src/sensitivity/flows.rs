//! Line and shunt power flows and their Wirtinger derivatives.
//!
//! Flow rows are ordered as the flow operator `C`: sending-end flows of every
//! branch, then shunt flows, then receiving-end flows.

use num_complex::Complex64;

use crate::linalg::CMatrix;
use crate::netmodel::IncidenceOperator;
use crate::pfsolve::PowerFlowSolution;

use super::currents::current_values;

/// `[u; -u_br]`, the current leaving each flow measurement point.
fn outgoing(u: &[Complex64], m: usize) -> Vec<Complex64> {
    u.iter().copied().chain(u[..m].iter().map(|z| -z)).collect()
}

/// Same stacking for a derivative block.
fn outgoing_block(du: &CMatrix, m: usize) -> CMatrix {
    let (rows, cols) = du.shape();
    CMatrix::from_fn(rows + m, cols, |r, c| if r < rows { du[(r, c)] } else { -du[(r - rows, c)] })
}

/// `s_fl = diag(C x) conj([u; -u_br])`, length `2m + n`.
pub fn flow_values(sol: &PowerFlowSolution, op: &IncidenceOperator) -> Vec<Complex64> {
    let u = current_values(&sol.x, &sol.w_at_solve, op);
    let cx = op.flow_apply(&sol.x);
    cx.iter().zip(outgoing(&u, op.m())).map(|(x, i)| x * i.conj()).collect()
}

/// Flow from bus `i` towards bus `j` over a series admittance
/// `w = |w| e^{j phi}` in polar form:
///
/// ```text
/// p_ij =  v_i |w| (v_i cos(phi) - v_j cos(d_ij - phi))
/// q_ij = -v_i |w| (v_i sin(phi) + v_j sin(d_ij - phi))
/// ```
pub fn polar_line_flow(vi: f64, vj: f64, dij: f64, w: Complex64) -> Complex64 {
    let (mag, phi) = w.to_polar();
    Complex64::new(
        vi * mag * (vi * phi.cos() - vj * (dij - phi).cos()),
        -vi * mag * (vi * phi.sin() + vj * (dij - phi).sin()),
    )
}

/// Polar series flows `(sending, receiving)` for every branch.
pub fn polar_flows(sol: &PowerFlowSolution, op: &IncidenceOperator) -> (Vec<Complex64>, Vec<Complex64>) {
    let w = &sol.w_at_solve.w_branch;
    let (v, d) = (&sol.v, &sol.delta);
    op.ends()
        .iter()
        .enumerate()
        .map(|(e, &(f, t))| {
            (
                polar_line_flow(v[f], v[t], d[f] - d[t], w[e]),
                polar_line_flow(v[t], v[f], d[t] - d[f], w[e]),
            )
        })
        .unzip()
}

/// ```text
/// ds/dw = diag(conj([u; -u_br])) C dx/dw + diag(C x) conj([du/dw̄; -du_br/dw̄])
/// ds/dw̄ = diag(conj([u; -u_br])) C dx/dw̄ + diag(C x) conj([du/dw; -du_br/dw])
/// ```
pub fn flow_sensitivities(
    sol: &PowerFlowSolution,
    op: &IncidenceOperator,
    dx_dw: &CMatrix,
    dx_dwbar: &CMatrix,
    du_dw: &CMatrix,
    du_dwbar: &CMatrix,
) -> (CMatrix, CMatrix) {
    let m = op.m();
    let u = outgoing(&current_values(&sol.x, &sol.w_at_solve, op), m);
    let cx = op.flow_apply(&sol.x);
    let gw = outgoing_block(du_dw, m);
    let gwb = outgoing_block(du_dwbar, m);
    let (rows, cols) = gw.shape();
    let ds_dw = CMatrix::from_fn(rows, cols, |r, c| {
        u[r].conj() * dx_dw[(op.flow_bus(r), c)] + cx[r] * gwb[(r, c)].conj()
    });
    let ds_dwbar = CMatrix::from_fn(rows, cols, |r, c| {
        u[r].conj() * dx_dwbar[(op.flow_bus(r), c)] + cx[r] * gw[(r, c)].conj()
    });
    (ds_dw, ds_dwbar)
}

/// Direct component-form line-flow derivatives for a network without
/// shunts: `ds_ij/dg = dx_i/dg conj(u_ij) + x_i conj(du_ij/dg)`, likewise for
/// `b`. Returns `2m` rows, sending ends first, then receiving ends.
pub fn line_flow_components(
    sol: &PowerFlowSolution,
    op: &IncidenceOperator,
    dx_dg: &CMatrix,
    dx_db: &CMatrix,
    du_dg: &CMatrix,
    du_db: &CMatrix,
) -> (CMatrix, CMatrix) {
    let m = op.m();
    let u = current_values(&sol.x, &sol.w_at_solve, op);
    let block = |dx: &CMatrix, du: &CMatrix| {
        CMatrix::from_fn(2 * m, dx.ncols(), |r, c| {
            let (e, sign) = if r < m { (r, 1.0) } else { (r - m, -1.0) };
            let (f, t) = op.ends()[e];
            let bus = if r < m { f } else { t };
            dx[(bus, c)] * (u[e] * sign).conj() + sol.x[bus] * (du[(e, c)] * sign).conj()
        })
    };
    (block(dx_dg, du_dg), block(dx_db, du_db))
}
