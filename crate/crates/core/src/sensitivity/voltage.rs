//! Implicit-function derivatives of the polar voltage state.

use serde::{Deserialize, Serialize};

use super::params::{dkappa_dparams, ParamJacobian};
use crate::error::Result;
use crate::linalg::{Factorization, RMatrix};
use crate::netmodel::Network;
use crate::pfsolve::{jacobian, MismatchLayout, PowerFlowSolution};

/// Derivatives of `(delta, v)` with respect to the branch/shunt conductances
/// and susceptances, `n x (m + n)` each. The slack angle row and the rows of
/// voltage-controlled magnitudes are exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageSens {
    pub kdelta_g: RMatrix,
    pub kdelta_b: RMatrix,
    pub kv_g: RMatrix,
    pub kv_b: RMatrix,
}

/// Derivatives of `(delta, v)` with respect to the scheduled injections.
///
/// Columns follow the reduced layout: `*_p` has one column per non-slack bus
/// (ascending), `*_q` one per PQ bus. Injections that are not free variables
/// (slack `p`, slack/PV `q`) have no column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionSens {
    pub kv_p: RMatrix,
    pub kv_q: RMatrix,
    pub kdelta_p: RMatrix,
    pub kdelta_q: RMatrix,
}

/// Factorized power-flow Jacobian at an operating point.
pub struct Linearization {
    pub layout: MismatchLayout,
    fac: Factorization,
}

impl Linearization {
    pub fn new(sol: &PowerFlowSolution, net: &Network) -> Result<Self> {
        let fac = Factorization::new(jacobian(&sol.state(), &sol.w_at_solve, net))?;
        Ok(Self { layout: MismatchLayout::new(net), fac })
    }

    /// `J^{-1} rhs`.
    pub fn solve(&self, rhs: &RMatrix) -> Result<RMatrix> {
        self.fac.solve(rhs)
    }

    /// Scatters reduced rows `[d delta; d v_P]` into full `n`-row angle and
    /// magnitude blocks.
    pub fn embed(&self, reduced: &RMatrix, n: usize) -> (RMatrix, RMatrix) {
        let cols = reduced.ncols();
        let na = self.layout.n_active();
        let mut dd = RMatrix::zeros(n, cols);
        let mut dv = RMatrix::zeros(n, cols);
        for (r, &i) in self.layout.angle_cols().iter().enumerate() {
            dd.row_mut(i).copy_from(&reduced.row(r));
        }
        for (r, &i) in self.layout.vmag_cols().iter().enumerate() {
            dv.row_mut(i).copy_from(&reduced.row(na + r));
        }
        (dd, dv)
    }
}

pub fn voltage_sensitivities(sol: &PowerFlowSolution, net: &Network) -> Result<VoltageSens> {
    let lin = Linearization::new(sol, net)?;
    voltage_from(&lin, &dkappa_dparams(sol, net), net)
}

pub(crate) fn voltage_from(
    lin: &Linearization,
    pj: &ParamJacobian,
    net: &Network,
) -> Result<VoltageSens> {
    let cols = pj.dkappa_dg.ncols();
    let dim = lin.layout.dim();
    let mut rhs = RMatrix::zeros(dim, 2 * cols);
    rhs.columns_mut(0, cols).copy_from(&pj.dkappa_dg);
    rhs.columns_mut(cols, cols).copy_from(&pj.dkappa_db);
    let reduced = -lin.solve(&rhs)?;
    let (dd, dv) = lin.embed(&reduced, net.n());
    Ok(VoltageSens {
        kdelta_g: dd.columns(0, cols).into_owned(),
        kdelta_b: dd.columns(cols, cols).into_owned(),
        kv_g: dv.columns(0, cols).into_owned(),
        kv_b: dv.columns(cols, cols).into_owned(),
    })
}

pub fn injection_sensitivities(sol: &PowerFlowSolution, net: &Network) -> Result<InjectionSens> {
    injection_from(&Linearization::new(sol, net)?, net)
}

pub(crate) fn injection_from(lin: &Linearization, net: &Network) -> Result<InjectionSens> {
    // kappa_P = Re(Fw) - p, kappa_Q = Im(Fw) + q, so
    // dz/dp = J^{-1} E_P and dz/dq = -J^{-1} E_Q.
    let dim = lin.layout.dim();
    let na = lin.layout.n_active();
    let nq = dim - na;
    let mut rhs = RMatrix::zeros(dim, dim);
    for k in 0..na {
        rhs[(k, k)] = 1.0;
    }
    for k in 0..nq {
        rhs[(na + k, na + k)] = -1.0;
    }
    let reduced = lin.solve(&rhs)?;
    let (dd, dv) = lin.embed(&reduced, net.n());
    Ok(InjectionSens {
        kv_p: dv.columns(0, na).into_owned(),
        kv_q: dv.columns(na, nq).into_owned(),
        kdelta_p: dd.columns(0, na).into_owned(),
        kdelta_q: dd.columns(na, nq).into_owned(),
    })
}
