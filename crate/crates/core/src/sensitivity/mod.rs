//! Derivatives of the power-flow solution with respect to admittance
//! parameters `(g, b)` and scheduled injections `(p, q)`.
//!
//! Every block is obtained from a single factorization of the power-flow
//! Jacobian at the operating point. Parameter columns follow the weight
//! vector order (branches, then shunts).

mod currents;
mod export;
mod flows;
mod params;
mod voltage;
mod wirtinger;

pub use currents::{
    branch_current_components, current_magnitude_sensitivities, current_sensitivities,
    current_values, magnitude_wrt_state, rect_components, rect_injection,
    rect_state_sensitivities, MagnitudeSens, EPS_CURRENT,
};
pub use export::{export_blocks, LabeledMatrix, Wrt};
pub use flows::{flow_sensitivities, flow_values, line_flow_components, polar_flows, polar_line_flow};
pub use params::{dkappa_dparams, dkappa_dparams_at, dkappa_dparams_via_f, ParamJacobian};
pub use voltage::{
    injection_sensitivities, voltage_sensitivities, InjectionSens, Linearization, VoltageSens,
};
pub use wirtinger::{components, wirtinger, wirtinger_c};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, RMatrix};
use crate::netmodel::{IncidenceOperator, Network};
use crate::pfsolve::{MismatchLayout, PowerFlowSolution};

/// All sensitivity blocks at one operating point.
///
/// Injection columns (`*_p`, `*_q`) follow `layout`: non-slack buses for
/// `p`, PQ buses for `q`. Current rows are branches then shunts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensitivityBundle {
    pub kdelta_g: RMatrix,
    pub kdelta_b: RMatrix,
    pub kv_g: RMatrix,
    pub kv_b: RMatrix,
    pub kv_p: RMatrix,
    pub kv_q: RMatrix,
    pub kdelta_p: RMatrix,
    pub kdelta_q: RMatrix,
    pub kl_g: RMatrix,
    pub kl_b: RMatrix,
    pub kl_p: RMatrix,
    pub kl_q: RMatrix,
    pub dx_dw: CMatrix,
    pub dx_dwbar: CMatrix,
    pub du_dw: CMatrix,
    pub du_dwbar: CMatrix,
    pub dsfl_dw: CMatrix,
    pub dsfl_dwbar: CMatrix,
    /// Current rows whose magnitude is too small to differentiate.
    pub degenerate_currents: Vec<usize>,
    pub layout: MismatchLayout,
    pub point: PowerFlowSolution,
}

/// Runs the full pipeline at a converged solution.
pub fn bundle(sol: &PowerFlowSolution, net: &Network) -> Result<SensitivityBundle> {
    if !sol.converged {
        return Err(Error::Validation("sensitivities need a converged solution".into()));
    }
    let lin = Linearization::new(sol, net)?;
    let pj = dkappa_dparams(sol, net);
    let vs = voltage::voltage_from(&lin, &pj, net)?;
    let is = voltage::injection_from(&lin, net)?;
    let op = IncidenceOperator::new(net);

    let (dx_dw, dx_dwbar) = rect_state_sensitivities(sol, &vs)?;
    let (du_dw, du_dwbar) = current_sensitivities(sol, &op, &dx_dw, &dx_dwbar);
    let u = current_values(&sol.x, &sol.w_at_solve, &op);
    let mag = current_magnitude_sensitivities(&u, &du_dw, &du_dwbar)?;
    let (dx_dp, dx_dq) = rect_injection(sol, &is);
    let w = sol.w_at_solve.w();
    let kl_p = magnitude_wrt_state(&u, &w, &op, &dx_dp);
    let kl_q = magnitude_wrt_state(&u, &w, &op, &dx_dq);
    let (dsfl_dw, dsfl_dwbar) =
        flow_sensitivities(sol, &op, &dx_dw, &dx_dwbar, &du_dw, &du_dwbar);
    if !mag.degenerate.is_empty() {
        log::debug!("{} current rows are degenerate (|u| <= {EPS_CURRENT:e})", mag.degenerate.len());
    }

    Ok(SensitivityBundle {
        kdelta_g: vs.kdelta_g,
        kdelta_b: vs.kdelta_b,
        kv_g: vs.kv_g,
        kv_b: vs.kv_b,
        kv_p: is.kv_p,
        kv_q: is.kv_q,
        kdelta_p: is.kdelta_p,
        kdelta_q: is.kdelta_q,
        kl_g: mag.kl_g,
        kl_b: mag.kl_b,
        kl_p,
        kl_q,
        dx_dw,
        dx_dwbar,
        du_dw,
        du_dwbar,
        dsfl_dw,
        dsfl_dwbar,
        degenerate_currents: mag.degenerate,
        layout: lin.layout,
        point: sol.clone(),
    })
}
