//! Newton-Raphson AC power flow in polar coordinates.
//!
//! The mismatch is `kappa = [Re(F(x) w) - p; Im(F(x) w) + q]` over the
//! active rows (every non-slack bus) and reactive rows (PQ buses). The
//! slack bus absorbs losses: its active row and its angle column are
//! dropped from the system.

use std::sync::RwLock;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Factorization, RMatrix};
use crate::netmodel::{assemble_y, AdmittanceState, BusKind, IncidenceOperator, Network};

/// Scheduled net injections per bus (per-unit). Slack entries are ignored
/// for `p`; Slack/PV entries are ignored for `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Schedule {
    pub fn from_network(net: &Network) -> Self {
        Self {
            p: (0..net.n()).map(|i| net.p_inject(i)).collect(),
            q: (0..net.n()).map(|i| net.q_inject(i)).collect(),
        }
    }
}

/// Row/column ordering of the reduced power-flow system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchLayout {
    /// Non-slack buses, ascending; also the angle columns.
    pub active_rows: Vec<usize>,
    /// PQ buses, ascending; also the magnitude columns.
    pub reactive_rows: Vec<usize>,
}

impl MismatchLayout {
    pub fn new(net: &Network) -> Self {
        let active_rows = (0..net.n()).filter(|&i| net.kind(i) != BusKind::Slack).collect();
        let reactive_rows = (0..net.n()).filter(|&i| net.kind(i) == BusKind::Pq).collect();
        Self { active_rows, reactive_rows }
    }

    pub fn angle_cols(&self) -> &[usize] {
        &self.active_rows
    }

    pub fn vmag_cols(&self) -> &[usize] {
        &self.reactive_rows
    }

    pub fn dim(&self) -> usize {
        self.active_rows.len() + self.reactive_rows.len()
    }

    pub fn n_active(&self) -> usize {
        self.active_rows.len()
    }
}

/// Polar voltage state over all buses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
}

impl PolarState {
    pub fn flat(net: &Network) -> Self {
        let v = (0..net.n())
            .map(|i| if net.kind(i).is_voltage_controlled() { net.v_setpoint(i) } else { 1.0 })
            .collect();
        Self { v, delta: vec![0.0; net.n()] }
    }

    pub fn x(&self) -> Vec<Complex64> {
        self.v.iter().zip(&self.delta).map(|(&v, &d)| Complex64::from_polar(v, d)).collect()
    }

    /// Copy with the reduced-system variables shifted by `step`.
    fn stepped(&self, layout: &MismatchLayout, step: &DVector<f64>, scale: f64) -> Self {
        let mut out = self.clone();
        let na = layout.n_active();
        for (k, &i) in layout.angle_cols().iter().enumerate() {
            out.delta[i] += scale * step[k];
        }
        for (k, &i) in layout.vmag_cols().iter().enumerate() {
            out.v[i] += scale * step[na + k];
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    pub x: Vec<Complex64>,
    pub converged: bool,
    pub iterations: usize,
    pub mismatch_inf: f64,
    /// Mismatch infinity-norm at the start of every iteration, then at exit.
    pub mismatch_history: Vec<f64>,
    pub w_at_solve: AdmittanceState,
    pub schedule: Schedule,
}

impl PowerFlowSolution {
    pub fn state(&self) -> PolarState {
        PolarState { v: self.v.clone(), delta: self.delta.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Halve the Newton step (up to 10 times) when the mismatch grows.
    pub backtracking: bool,
    /// Extra Newton steps taken after reaching `tol`, kept only while they
    /// reduce the mismatch. Used by finite-difference probes.
    pub polish: usize,
}

static PROCESS_DEFAULT: RwLock<Option<(f64, usize)>> = RwLock::new(None);

impl Default for SolveOptions {
    fn default() -> Self {
        let (tol, max_iter) = PROCESS_DEFAULT.read().ok().and_then(|g| *g).unwrap_or((1e-8, 50));
        Self { tol, max_iter, backtracking: false, polish: 0 }
    }
}

impl SolveOptions {
    /// Overrides the tolerance and iteration cap returned by `default()`
    /// for the rest of the process (used by the command-line front end).
    pub fn set_process_default(tol: f64, max_iter: usize) -> Result<()> {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::Config("tolerance must be positive and max-iter at least 1".into()));
        }
        if let Ok(mut g) = PROCESS_DEFAULT.write() {
            *g = Some((tol, max_iter));
        }
        Ok(())
    }
}

/// Complex power injections `s = conj(F(x) w)`.
pub fn injections(x: &[Complex64], ast: &AdmittanceState, op: &IncidenceOperator) -> Vec<Complex64> {
    // F(x) w = diag(conj x) A^T diag(w) A x
    let ax = op.apply(x);
    let mut yx = vec![Complex64::new(0.0, 0.0); op.n()];
    for (e, &(f, t)) in op.ends().iter().enumerate() {
        let u = ast.w_branch[e] * ax[e];
        yx[f] += u;
        yx[t] -= u;
    }
    for i in 0..op.n() {
        yx[i] += ast.w_shunt[i] * x[i];
    }
    x.iter().zip(&yx).map(|(xi, ii)| xi * ii.conj()).collect()
}

/// Mismatch vector in [`MismatchLayout`] order.
pub fn mismatch(
    state: &PolarState,
    ast: &AdmittanceState,
    net: &Network,
    schedule: &Schedule,
) -> Vec<f64> {
    let layout = MismatchLayout::new(net);
    let op = IncidenceOperator::new(net);
    let s = injections(&state.x(), ast, &op);
    let mut out = Vec::with_capacity(layout.dim());
    // Re(conj s) = p, Im(conj s) = -q
    out.extend(layout.active_rows.iter().map(|&i| s[i].re - schedule.p[i]));
    out.extend(layout.reactive_rows.iter().map(|&i| -s[i].im + schedule.q[i]));
    out
}

/// Power-flow Jacobian `[d kappa / d delta, d kappa / d v_P]`.
pub fn jacobian(state: &PolarState, ast: &AdmittanceState, net: &Network) -> RMatrix {
    let layout = MismatchLayout::new(net);
    let y = assemble_y(net, ast);
    let x = state.x();
    let n = net.n();
    let ibus: Vec<Complex64> = (0..n).map(|i| (0..n).map(|k| y[(i, k)] * x[k]).sum()).collect();
    let j = Complex64::new(0.0, 1.0);

    // dS_i/d delta_k and dS_i/d v_k
    let ds_dang = |i: usize, k: usize| -> Complex64 {
        let diag = if i == k { ibus[i] } else { Complex64::new(0.0, 0.0) };
        j * x[i] * (diag - y[(i, k)] * x[k]).conj()
    };
    let ds_dmag = |i: usize, k: usize| -> Complex64 {
        let unit_k = x[k] / state.v[k];
        let mut d = x[i] * (y[(i, k)] * unit_k).conj();
        if i == k {
            d += unit_k * ibus[i].conj();
        }
        d
    };

    let dim = layout.dim();
    let na = layout.n_active();
    let mut jac = RMatrix::zeros(dim, dim);
    for (r, &i) in layout.active_rows.iter().enumerate() {
        for (c, &k) in layout.angle_cols().iter().enumerate() {
            jac[(r, c)] = ds_dang(i, k).re;
        }
        for (c, &k) in layout.vmag_cols().iter().enumerate() {
            jac[(r, na + c)] = ds_dmag(i, k).re;
        }
    }
    for (r, &i) in layout.reactive_rows.iter().enumerate() {
        for (c, &k) in layout.angle_cols().iter().enumerate() {
            jac[(na + r, c)] = -ds_dang(i, k).im;
        }
        for (c, &k) in layout.vmag_cols().iter().enumerate() {
            jac[(na + r, na + c)] = -ds_dmag(i, k).im;
        }
    }
    jac
}

/// Solves the power flow for the network's own schedule.
pub fn solve(
    net: &Network,
    ast: &AdmittanceState,
    start: Option<&PolarState>,
) -> Result<PowerFlowSolution> {
    solve_with(net, ast, &Schedule::from_network(net), start, &SolveOptions::default())
}

/// Solves the power flow for an explicit schedule and solver options.
pub fn solve_with(
    net: &Network,
    ast: &AdmittanceState,
    schedule: &Schedule,
    start: Option<&PolarState>,
    opts: &SolveOptions,
) -> Result<PowerFlowSolution> {
    if ast.w_branch.len() != net.m() || ast.w_shunt.len() != net.n() {
        return Err(Error::Dimension("admittance state does not match the network".into()));
    }
    let unreachable = net.unreachable_count(&ast.energized());
    if unreachable > 0 {
        return Err(Error::Islanded { unreachable });
    }
    let layout = MismatchLayout::new(net);
    let flat = PolarState::flat(net);
    let mut state = match start {
        Some(s) => {
            let mut s = s.clone();
            for i in 0..net.n() {
                if net.kind(i).is_voltage_controlled() {
                    s.v[i] = flat.v[i];
                }
            }
            s.delta[net.slack()] = 0.0;
            s
        }
        None => flat,
    };

    let mut history = Vec::new();
    let mut kappa = mismatch(&state, ast, net, schedule);
    let mut norm = inf_norm(&kappa);
    let mut iterations = 0;
    let mut polish_left = opts.polish;
    loop {
        history.push(norm);
        if !norm.is_finite() {
            return Err(Error::NonConvergence { iterations, mismatch: norm });
        }
        if norm <= opts.tol {
            if polish_left == 0 || norm == 0.0 {
                break;
            }
            polish_left -= 1;
            let fac = Factorization::new(jacobian(&state, ast, net))?;
            let step = -fac.solve_vec(&DVector::from_vec(kappa.clone()))?;
            let next = state.stepped(&layout, &step, 1.0);
            let next_kappa = mismatch(&next, ast, net, schedule);
            let next_norm = inf_norm(&next_kappa);
            if !(next_norm < norm) {
                break;
            }
            state = next;
            kappa = next_kappa;
            norm = next_norm;
            continue;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence { iterations, mismatch: norm });
        }
        let jac = jacobian(&state, ast, net);
        let fac = Factorization::new(jac)?;
        let step = -fac.solve_vec(&DVector::from_vec(kappa.clone()))?;

        let mut scale = 1.0;
        let mut next = state.stepped(&layout, &step, scale);
        let mut next_kappa = mismatch(&next, ast, net, schedule);
        let mut next_norm = inf_norm(&next_kappa);
        if opts.backtracking {
            let mut halvings = 0;
            while !(next_norm < norm) && halvings < 10 {
                scale *= 0.5;
                halvings += 1;
                next = state.stepped(&layout, &step, scale);
                next_kappa = mismatch(&next, ast, net, schedule);
                next_norm = inf_norm(&next_kappa);
            }
        }
        if next.v.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::NonConvergence { iterations: iterations + 1, mismatch: next_norm });
        }
        state = next;
        kappa = next_kappa;
        norm = next_norm;
        iterations += 1;
    }

    log::debug!("power flow converged in {iterations} iterations (mismatch {norm:.3e})");
    let x = state.x();
    Ok(PowerFlowSolution {
        v: state.v,
        delta: state.delta,
        x,
        converged: true,
        iterations,
        mismatch_inf: norm,
        mismatch_history: history,
        w_at_solve: ast.clone(),
        schedule: schedule.clone(),
    })
}

#[derive(Serialize, Deserialize)]
pub struct BusRecord {
    pub id: usize,
    pub vm: f64,
    pub va_deg: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Serialize, Deserialize)]
pub struct SolutionExport {
    pub bus: Vec<BusRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Solution export record; `p`/`q` are the computed injections in per-unit.
pub fn export_solution(net: &Network, sol: &PowerFlowSolution) -> SolutionExport {
    let s = injections(&sol.x, &sol.w_at_solve, &IncidenceOperator::new(net));
    let bus = (0..net.n())
        .map(|i| BusRecord {
            id: net.buses()[i].id,
            vm: sol.v[i],
            va_deg: sol.delta[i].to_degrees(),
            p: s[i].re,
            q: s[i].im,
        })
        .collect();
    SolutionExport {
        bus,
        converged: sol.converged,
        iterations: sol.iterations,
        mismatch: sol.mismatch_inf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{make_admittance_state, parse_case, Sidecar};

    fn two_bus(load: &str) -> Network {
        parse_case(&format!(
            "mpc.baseMVA = 1;\nmpc.bus = [1 3 0 0 0 0 1; 2 1 {load} 0 0 1];\n\
             mpc.gen = [1 0 0 1];\n\
             mpc.branch = [1 2 0.009900990099009901 0.09900990099009901 0 0 1];\n"
        ))
        .unwrap()
    }

    #[test]
    fn flat_state_has_zero_injection() {
        let net = two_bus("0.1 0.05");
        let ast = make_admittance_state(&net, &[]).unwrap();
        let s = injections(&PolarState::flat(&net).x(), &ast, &IncidenceOperator::new(&net));
        assert!(s.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn flat_mismatch_is_negated_schedule() {
        let net = two_bus("0.1 0.05");
        let ast = make_admittance_state(&net, &[]).unwrap();
        let k = mismatch(&PolarState::flat(&net), &ast, &net, &Schedule::from_network(&net));
        assert_eq!(k, vec![0.1, -0.05]);
    }

    #[test]
    fn zero_injection_converges_immediately() {
        let net = two_bus("0 0");
        let ast = make_admittance_state(&net, &[]).unwrap();
        let sol = solve(&net, &ast, None).unwrap();
        assert!(sol.iterations <= 2);
        assert!((sol.v[1] - 1.0).abs() < 1e-12 && sol.delta[1].abs() < 1e-12);
    }

    #[test]
    fn two_bus_flat_jacobian_matches_hand_expansion() {
        // y = 1 - j10: dP2/dd2 = B21 = 10, dP2/dv2 = 2 G22 + G21 = 1,
        // dQ2/dd2 = G21 = -1, dQ2/dv2 = -2 B22 - B21 = 10 (Q rows negated).
        let net = two_bus("0 0");
        let ast = make_admittance_state(&net, &[]).unwrap();
        let jac = jacobian(&PolarState::flat(&net), &ast, &net);
        let want = RMatrix::from_row_slice(2, 2, &[10.0, 1.0, 1.0, -10.0]);
        assert!((jac - want).abs().max() < 1e-9);
    }

    #[test]
    fn islanding_is_reported_by_solve() {
        let net = two_bus("0.1 0.05");
        let net = Sidecar::from_json(r#"{"controllable":[{"from":1,"to":2}]}"#)
            .unwrap()
            .apply(&net)
            .unwrap();
        let ast = make_admittance_state(&net, &[Complex64::new(0.0, 0.0)]).unwrap();
        let jac = jacobian(&PolarState::flat(&net), &ast, &net);
        assert_eq!(jac.nrows(), 2);
        assert!(matches!(solve(&net, &ast, None), Err(Error::Islanded { unreachable: 1 })));
    }
}
