//! Partial derivatives of the mismatch with respect to the admittance
//! parameters at a fixed voltage state.

use serde::{Deserialize, Serialize};

use crate::linalg::RMatrix;
use crate::netmodel::{build_f, IncidenceOperator, Network};
use crate::pfsolve::{MismatchLayout, PolarState, PowerFlowSolution};

/// `d kappa / d g` and `d kappa / d b`, rows in [`MismatchLayout`] order,
/// columns ordered as the weight vector (branches, then shunts).
///
/// Reactive rows are stored in mismatch convention, i.e. they hold
/// `-dq/d(.)`; use [`ParamJacobian::dq_dg`] / [`ParamJacobian::dq_db`] for
/// the physical reactive-power derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamJacobian {
    pub dkappa_dg: RMatrix,
    pub dkappa_db: RMatrix,
    pub n_active: usize,
}

impl ParamJacobian {
    pub fn dp_dg(&self) -> RMatrix {
        self.dkappa_dg.rows(0, self.n_active).into_owned()
    }

    pub fn dp_db(&self) -> RMatrix {
        self.dkappa_db.rows(0, self.n_active).into_owned()
    }

    /// Physical `dq/dg` over the PQ buses.
    pub fn dq_dg(&self) -> RMatrix {
        let r = self.dkappa_dg.nrows() - self.n_active;
        -self.dkappa_dg.rows(self.n_active, r).into_owned()
    }

    /// Physical `dq/db` over the PQ buses.
    pub fn dq_db(&self) -> RMatrix {
        let r = self.dkappa_db.nrows() - self.n_active;
        -self.dkappa_db.rows(self.n_active, r).into_owned()
    }
}

/// Parameter Jacobian at a solved operating point.
pub fn dkappa_dparams(sol: &PowerFlowSolution, net: &Network) -> ParamJacobian {
    dkappa_dparams_at(&sol.state(), net)
}

/// Closed-form entries: for a branch `(i, j)`,
///
/// ```text
/// dp_i/dg_ij =  v_i^2 - v_i v_j cos(d_ij)     dp_i/db_ij = -v_i v_j sin(d_ij)
/// dq_i/dg_ij = -v_i v_j sin(d_ij)             dq_i/db_ij = -v_i^2 + v_i v_j cos(d_ij)
/// ```
///
/// and for the shunt of bus `i` the same with the cross terms dropped.
pub fn dkappa_dparams_at(state: &PolarState, net: &Network) -> ParamJacobian {
    let layout = MismatchLayout::new(net);
    let (n, m) = (net.n(), net.m());
    let na = layout.n_active();
    let mut active_pos = vec![None; n];
    let mut reactive_pos = vec![None; n];
    for (r, &i) in layout.active_rows.iter().enumerate() {
        active_pos[i] = Some(r);
    }
    for (r, &i) in layout.reactive_rows.iter().enumerate() {
        reactive_pos[i] = Some(na + r);
    }
    let (v, d) = (&state.v, &state.delta);
    let mut dg = RMatrix::zeros(layout.dim(), m + n);
    let mut db = RMatrix::zeros(layout.dim(), m + n);

    let mut fill = |bus: usize, col: usize, other: Option<usize>| {
        let (cross_cos, cross_sin) = match other {
            Some(o) => {
                let dij = d[bus] - d[o];
                (v[bus] * v[o] * dij.cos(), v[bus] * v[o] * dij.sin())
            }
            None => (0.0, 0.0),
        };
        let vi2 = v[bus] * v[bus];
        if let Some(r) = active_pos[bus] {
            dg[(r, col)] = vi2 - cross_cos;
            db[(r, col)] = -cross_sin;
        }
        if let Some(r) = reactive_pos[bus] {
            let dq_dg = -cross_sin;
            let dq_db = -vi2 + cross_cos;
            dg[(r, col)] = -dq_dg;
            db[(r, col)] = -dq_db;
        }
    };
    for (e, br) in net.branches().iter().enumerate() {
        fill(br.from, e, Some(br.to));
        fill(br.to, e, Some(br.from));
    }
    for i in 0..n {
        fill(i, m + i, None);
    }
    ParamJacobian { dkappa_dg: dg, dkappa_db: db, n_active: na }
}

/// Same Jacobian read off `F(x)`: `d conj(s)/dg = F`, `d conj(s)/db = jF`.
pub fn dkappa_dparams_via_f(state: &PolarState, net: &Network) -> ParamJacobian {
    let layout = MismatchLayout::new(net);
    let f = build_f(&state.x(), &IncidenceOperator::new(net));
    let na = layout.n_active();
    let cols = f.ncols();
    let mut dg = RMatrix::zeros(layout.dim(), cols);
    let mut db = RMatrix::zeros(layout.dim(), cols);
    for c in 0..cols {
        for (r, &i) in layout.active_rows.iter().enumerate() {
            dg[(r, c)] = f[(i, c)].re;
            db[(r, c)] = -f[(i, c)].im;
        }
        for (r, &i) in layout.reactive_rows.iter().enumerate() {
            dg[(na + r, c)] = f[(i, c)].im;
            db[(na + r, c)] = f[(i, c)].re;
        }
    }
    ParamJacobian { dkappa_dg: dg, dkappa_db: db, n_active: na }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::netmodel::parse_case;

    fn three_bus() -> Network {
        parse_case(
            "mpc.baseMVA = 1;\nmpc.bus = [1 3 0 0 0 0 1; 2 1 0.1 0.05 0 0.02 1; 3 2 -0.05 0 0 0 1.01];\n\
             mpc.gen = [1 0 0 1; 3 0.05 0 1.01];\n\
             mpc.branch = [1 2 0.01 0.1 0 0 1; 2 3 0.02 0.08 0 0 1; 1 3 0.03 0.2 0 0 1];\n",
        )
        .unwrap()
    }

    #[test]
    fn flat_state_values() {
        let net = three_bus();
        let pj = dkappa_dparams_at(&PolarState::flat(&net), &net);
        // bus 2 (active row 0, reactive row 2), branch 1-2 (column 0)
        assert!(pj.dkappa_dg[(0, 0)].abs() < 1e-15);
        assert!(pj.dkappa_db[(0, 0)].abs() < 1e-15);
        assert!(pj.dq_db()[(0, 0)].abs() < 1e-15);
        // shunt of bus 2 (column m + 1)
        assert_eq!(pj.dkappa_dg[(0, 4)], 1.0);
        assert_eq!(pj.dq_db()[(0, 4)], -1.0);
    }

    #[test]
    fn closed_form_matches_f_route_and_is_local() {
        let net = three_bus();
        let state = PolarState {
            v: vec![1.0, 0.97, 1.01],
            delta: vec![0.0, -0.03, 0.02],
        };
        let a = dkappa_dparams_at(&state, &net);
        let b = dkappa_dparams_via_f(&state, &net);
        assert!(max_abs(&(&a.dkappa_dg - &b.dkappa_dg)) < 1e-15);
        assert!(max_abs(&(&a.dkappa_db - &b.dkappa_db)) < 1e-15);
        // bus 2 is not incident to branch 1-3 (column 2) nor to shunt of bus 3
        assert_eq!(a.dkappa_dg[(0, 2)], 0.0);
        assert_eq!(a.dkappa_db[(0, 5)], 0.0);
    }
}
