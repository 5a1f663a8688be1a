//! Finite-difference sensitivities and brute-force topology enumeration,
//! used to check the analytic derivatives and the switching heuristics.
//!
//! Every probe re-solves the AC power flow from the base solution (warm
//! start) so that both sides of a difference stay on the same solution
//! branch.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;
use crate::netmodel::{make_admittance_state, AdmittanceState, IncidenceOperator, Network};
use nalgebra::DVector;

use crate::linalg::{inf_norm, Factorization};
use crate::pfsolve::{
    jacobian, mismatch, solve_with, MismatchLayout, PolarState, PowerFlowSolution, Schedule,
    SolveOptions,
};
use crate::sensitivity::{components, current_values, dkappa_dparams, SensitivityBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Central,
    /// Second-order one-sided stencil towards `+h`.
    Forward,
    /// Second-order one-sided stencil towards `-h`.
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub h: f64,
    pub scheme: Scheme,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Values below this magnitude are compared with `abs_tol`.
    pub small: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { h: 1e-6, scheme: Scheme::Central, rel_tol: 1e-5, abs_tol: 1e-8, small: 1e-6 }
    }
}

impl FdConfig {
    pub fn with_step(h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
        }
        Ok(Self { h, ..Self::default() })
    }

    /// Error measure and pass/fail for one analytic/FD pair.
    pub fn compare(&self, analytic: Complex64, fd: Complex64) -> (f64, bool) {
        let diff = (analytic - fd).norm();
        if fd.norm().max(analytic.norm()) < self.small {
            (diff, diff <= self.abs_tol)
        } else {
            let rel = diff / fd.norm().max(analytic.norm());
            (rel, rel <= self.rel_tol)
        }
    }
}

/// Quantity read off a solved operating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    Vm(usize),
    Va(usize),
    /// Rectangular voltage `x_k`.
    X(usize),
    /// Entry of `u = diag(w) A x` (branches, then shunts).
    Current(usize),
    CurrentMag(usize),
    /// Entry of the flow vector (sending ends, shunts, receiving ends).
    Flow(usize),
}

/// Parameter being perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Param {
    /// Real part of weight column `c`.
    G(usize),
    /// Imaginary part of weight column `c`.
    B(usize),
    /// Scheduled active injection at bus `i`.
    P(usize),
    /// Scheduled reactive injection at bus `i`.
    Q(usize),
}

/// Probe solution stored as an increment over the base point, so that the
/// difference of two probes does not lose digits to the base value.
struct Increment {
    /// Polar increments over all buses.
    dv: Vec<f64>,
    dtheta: Vec<f64>,
    /// `x - x0`.
    dx: Vec<Complex64>,
    /// `w - w0`.
    dw: Vec<Complex64>,
}

/// `e^{j t} - 1` without cancellation.
fn expm1_j(t: f64) -> Complex64 {
    let s = (0.5 * t).sin();
    Complex64::new(-2.0 * s * s, t.sin())
}

struct ProbeBase<'a> {
    net: &'a Network,
    op: IncidenceOperator,
    layout: MismatchLayout,
    base: &'a PowerFlowSolution,
    w0: Vec<Complex64>,
    /// Base branch-plus-shunt currents `diag(w0) A x0`.
    u0: Vec<Complex64>,
    /// Base nodal currents `A^T u0`.
    i0: Vec<Complex64>,
    kappa0: Vec<f64>,
}

impl<'a> ProbeBase<'a> {
    fn new(net: &'a Network, base: &'a PowerFlowSolution) -> Self {
        let op = IncidenceOperator::new(net);
        let w0 = base.w_at_solve.w();
        let u0 = current_values(&base.x, &base.w_at_solve, &op);
        let i0 = nodal(&op, &u0);
        let kappa0 = mismatch(&base.state(), &base.w_at_solve, net, &base.schedule);
        Self { net, layout: MismatchLayout::new(net), op, base, w0, u0, i0, kappa0 }
    }

    fn dx(&self, dv: &[f64], dtheta: &[f64]) -> Vec<Complex64> {
        let (v0, x0) = (&self.base.v, &self.base.x);
        (0..x0.len())
            .map(|k| {
                let rot = expm1_j(dtheta[k]);
                x0[k] * (rot + (rot + 1.0) * (dv[k] / v0[k]))
            })
            .collect()
    }

    /// `u - u0` for a state increment `dx` and weight increment `dw`.
    fn du(&self, dx: &[Complex64], dw: &[Complex64]) -> Vec<Complex64> {
        let adx = self.op.apply(dx);
        let ax0 = self.op.apply(&self.base.x);
        (0..adx.len()).map(|r| self.w0[r] * adx[r] + dw[r] * (ax0[r] + adx[r])).collect()
    }

    /// Mismatch `kappa0 + (kappa(x, w, schedule) - kappa(x0, w0, schedule0))`.
    fn residual(&self, dx: &[Complex64], dw: &[Complex64], dp: &[f64], dq: &[f64]) -> Vec<f64> {
        let di = nodal(&self.op, &self.du(dx, dw));
        let x0 = &self.base.x;
        // conj(s_i) = conj(x_i) I_i
        let dconj_s: Vec<Complex64> = (0..x0.len())
            .map(|i| dx[i].conj() * self.i0[i] + (x0[i] + dx[i]).conj() * di[i])
            .collect();
        let na = self.layout.n_active();
        let mut out = self.kappa0.clone();
        for (r, &i) in self.layout.active_rows.iter().enumerate() {
            out[r] += dconj_s[i].re - dp[i];
        }
        for (r, &i) in self.layout.reactive_rows.iter().enumerate() {
            out[na + r] += dconj_s[i].im + dq[i];
        }
        out
    }

    fn solve(&self, param: Param, t: f64) -> Result<Increment> {
        let n = self.net.n();
        let mut dw = vec![Complex64::new(0.0, 0.0); self.w0.len()];
        let (mut dp, mut dq) = (vec![0.0; n], vec![0.0; n]);
        match param {
            Param::G(c) => dw[c] = Complex64::new(t, 0.0),
            Param::B(c) => dw[c] = Complex64::new(0.0, t),
            Param::P(i) => dp[i] = t,
            Param::Q(i) => dq[i] = t,
        }
        let mut ast = self.base.w_at_solve.clone();
        for (c, d) in dw.iter().enumerate() {
            if d.norm() > 0.0 {
                ast = ast.perturbed(c, *d);
            }
        }
        let (mut dv, mut dtheta) = (vec![0.0; n], vec![0.0; n]);
        let mut dx = self.dx(&dv, &dtheta);
        let mut kappa = self.residual(&dx, &dw, &dp, &dq);
        let mut norm = inf_norm(&kappa);
        let na = self.layout.n_active();
        let mut polish = 3;
        for iter in 0..PROBE_MAX_ITER {
            if norm <= PROBE_TOL {
                if polish == 0 || norm == 0.0 {
                    break;
                }
                polish -= 1;
            }
            let state = PolarState {
                v: (0..n).map(|k| self.base.v[k] + dv[k]).collect(),
                delta: (0..n).map(|k| self.base.delta[k] + dtheta[k]).collect(),
            };
            let fac = Factorization::new(jacobian(&state, &ast, self.net))?;
            let step = fac.solve_vec(&DVector::from_vec(kappa.clone()))?;
            let (mut ndv, mut ndt) = (dv.clone(), dtheta.clone());
            for (k, &i) in self.layout.angle_cols().iter().enumerate() {
                ndt[i] -= step[k];
            }
            for (k, &i) in self.layout.vmag_cols().iter().enumerate() {
                ndv[i] -= step[na + k];
            }
            let ndx = self.dx(&ndv, &ndt);
            let nk = self.residual(&ndx, &dw, &dp, &dq);
            let nn = inf_norm(&nk);
            if norm <= PROBE_TOL && !(nn < norm) {
                break;
            }
            if !nn.is_finite() || iter + 1 == PROBE_MAX_ITER && nn > PROBE_TOL {
                return Err(Error::NonConvergence { iterations: iter + 1, mismatch: nn });
            }
            (dv, dtheta, dx, kappa, norm) = (ndv, ndt, ndx, nk, nn);
        }
        if norm > PROBE_TOL {
            return Err(Error::NonConvergence { iterations: PROBE_MAX_ITER, mismatch: norm });
        }
        Ok(Increment { dv, dtheta, dx, dw })
    }

    /// `f(probe) - f(base)` for the selected quantity.
    fn delta(&self, q: Quantity, inc: &Increment) -> Complex64 {
        let re = |v: f64| Complex64::new(v, 0.0);
        match q {
            Quantity::Vm(i) => re(inc.dv[i]),
            Quantity::Va(i) => re(inc.dtheta[i]),
            Quantity::X(i) => inc.dx[i],
            Quantity::Current(r) => self.du(&inc.dx, &inc.dw)[r],
            Quantity::CurrentMag(r) => {
                let du = self.du(&inc.dx, &inc.dw)[r];
                let (u0, u) = (self.u0[r], self.u0[r] + du);
                let denom = u.norm() + u0.norm();
                if denom == 0.0 {
                    re(0.0)
                } else {
                    re((2.0 * (u0.conj() * du).re + du.norm_sqr()) / denom)
                }
            }
            Quantity::Flow(r) => {
                let m = self.op.m();
                let du = self.du(&inc.dx, &inc.dw);
                let (cu0, cdu) = if r < m + self.net.n() {
                    (self.u0[r], du[r])
                } else {
                    let e = r - m - self.net.n();
                    (-self.u0[e], -du[e])
                };
                let bus = self.op.flow_bus(r);
                let x0 = self.base.x[bus];
                inc.dx[bus] * (cu0 + cdu).conj() + x0 * cdu.conj()
            }
        }
    }
}

/// `A^T u`: net current leaving every bus.
fn nodal(op: &IncidenceOperator, u: &[Complex64]) -> Vec<Complex64> {
    let m = op.m();
    let mut out: Vec<Complex64> = u[m..].to_vec();
    for (e, &(f, t)) in op.ends().iter().enumerate() {
        out[f] += u[e];
        out[t] -= u[e];
    }
    out
}

const PROBE_TOL: f64 = 1e-11;
const PROBE_MAX_ITER: usize = 30;

/// Finite-difference derivative of `target` with respect to `param` at the
/// solved point `base`. Real quantities come back with a zero imaginary part.
///
/// Each probe solves the full AC equations, written in increment form around
/// the base point: `x = x0 + d`, with the base residual shared by every probe.
/// Differences of probes then carry no round-off from the base value itself.
pub fn fd_sensitivity(
    net: &Network,
    base: &PowerFlowSolution,
    target: Quantity,
    param: Param,
    cfg: &FdConfig,
) -> Result<Complex64> {
    let pb = ProbeBase::new(net, base);
    let f = |t: f64| -> Result<Complex64> { Ok(pb.delta(target, &pb.solve(param, t)?)) };
    let h = cfg.h;
    match cfg.scheme {
        Scheme::Central => Ok((f(h)? - f(-h)?) / (2.0 * h)),
        Scheme::Forward => Ok((f(0.0)? * -3.0 + f(h)? * 4.0 - f(2.0 * h)?) / (2.0 * h)),
        Scheme::Backward => Ok((f(0.0)? * 3.0 - f(-h)? * 4.0 + f(-2.0 * h)?) / (2.0 * h)),
    }
}

/// Central differences with a one-sided fallback when a probe fails.
pub fn fd_sensitivity_robust(
    net: &Network,
    base: &PowerFlowSolution,
    target: Quantity,
    param: Param,
    cfg: &FdConfig,
) -> Result<Complex64> {
    let mut first_err = None;
    for scheme in [Scheme::Central, Scheme::Forward, Scheme::Backward] {
        let c = FdConfig { scheme, ..cfg.clone() };
        match fd_sensitivity(net, base, target, param, &c) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_numerical() => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(first_err.unwrap_or(Error::SingularJacobian))
}

/// Evaluates many probes; rows keep the input order.
pub fn fd_many(
    net: &Network,
    base: &PowerFlowSolution,
    probes: &[(Quantity, Param)],
    cfg: &FdConfig,
) -> Vec<Result<Complex64>> {
    probes.par_iter().map(|&(q, p)| fd_sensitivity_robust(net, base, q, p, cfg)).collect()
}

/// Central-difference Jacobian of the mismatch with respect to the reduced
/// state `[delta (non-slack); v (PQ)]`.
pub fn fd_mismatch_jacobian(
    net: &Network,
    ast: &AdmittanceState,
    state: &PolarState,
    schedule: &Schedule,
    h: f64,
) -> RMatrix {
    let layout = MismatchLayout::new(net);
    let na = layout.n_active();
    let dim = layout.dim();
    let mut jac = RMatrix::zeros(dim, dim);
    for c in 0..dim {
        let shift = |t: f64| {
            let mut s = state.clone();
            if c < na {
                s.delta[layout.angle_cols()[c]] += t;
            } else {
                s.v[layout.vmag_cols()[c - na]] += t;
            }
            mismatch(&s, ast, net, schedule)
        };
        let (plus, minus) = (shift(h), shift(-h));
        for r in 0..dim {
            jac[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    jac
}

/// Central-difference `(d kappa/dg, d kappa/db)` at a fixed state.
pub fn fd_mismatch_params(
    net: &Network,
    ast: &AdmittanceState,
    state: &PolarState,
    schedule: &Schedule,
    h: f64,
) -> (RMatrix, RMatrix) {
    let dim = MismatchLayout::new(net).dim();
    let cols = ast.len();
    let mut dg = RMatrix::zeros(dim, cols);
    let mut db = RMatrix::zeros(dim, cols);
    for c in 0..cols {
        for (out, dir) in [(&mut dg, Complex64::new(h, 0.0)), (&mut db, Complex64::new(0.0, h))] {
            let plus = mismatch(state, &ast.perturbed(c, dir), net, schedule);
            let minus = mismatch(state, &ast.perturbed(c, -dir), net, schedule);
            for r in 0..dim {
                out[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
    }
    (dg, db)
}

/// One binary switching configuration and its AC outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopologyRow {
    pub index: usize,
    /// On/off state of each switchable branch, in the order given.
    pub closed: Vec<bool>,
    pub islanded: bool,
    pub converged: bool,
    pub iterations: usize,
    pub min_vm: Option<f64>,
    #[serde(skip)]
    pub solution: Option<PowerFlowSolution>,
}

/// Default cap on the number of switchable branches (4096 solves).
pub const ENUMERATION_LIMIT: usize = 12;

/// Control vector over `net.controllable()` for one configuration: listed
/// switchable branches follow `closed`, other controllables keep their
/// default.
pub fn configuration_gamma(net: &Network, switchable: &[usize], closed: &[bool]) -> Vec<Complex64> {
    let mut gamma = net.default_gamma();
    for (pos, k) in net.controllable().into_iter().enumerate() {
        if let Some(s) = switchable.iter().position(|&b| b == k) {
            gamma[pos] = Complex64::new(if closed[s] { 1.0 } else { 0.0 }, 0.0);
        }
    }
    gamma
}

/// Solves every binary configuration of `switchable` (branch indices).
/// Configuration `i` closes branch `switchable[k]` when bit `k` of `i` is set.
pub fn enumerate_topologies(
    net: &Network,
    switchable: &[usize],
    limit: usize,
) -> Result<Vec<TopologyRow>> {
    if switchable.len() > limit {
        return Err(Error::Config(format!(
            "{} switchable branches exceed the enumeration limit of {limit}",
            switchable.len()
        )));
    }
    let spec: Vec<(usize, f64, f64)> = switchable
        .iter()
        .filter(|&&k| k >= net.m() || !net.branches()[k].controllable)
        .map(|&k| (k, 0.0, 1.0))
        .collect();
    let net = net.with_controllable(&spec)?;
    let rows = (0..1usize << switchable.len())
        .into_par_iter()
        .map(|index| {
            let closed: Vec<bool> = (0..switchable.len()).map(|k| index >> k & 1 == 1).collect();
            let gamma = configuration_gamma(&net, switchable, &closed);
            let mut row = TopologyRow {
                index,
                closed,
                islanded: false,
                converged: false,
                iterations: 0,
                min_vm: None,
                solution: None,
            };
            let ast = match make_admittance_state(&net, &gamma) {
                Ok(a) => a,
                Err(_) => return row,
            };
            if net.unreachable_count(&ast.energized()) > 0 {
                row.islanded = true;
                return row;
            }
            let schedule = Schedule::from_network(&net);
            if let Ok(sol) = solve_with(&net, &ast, &schedule, None, &SolveOptions::default()) {
                row.converged = true;
                row.iterations = sol.iterations;
                row.min_vm = sol.v.iter().copied().reduce(f64::min);
                row.solution = Some(sol);
            }
            row
        })
        .collect();
    Ok(rows)
}

/// CSV dump: `index,<branch labels...>,islanded,converged,iterations,min_vm`.
pub fn topology_csv(net: &Network, switchable: &[usize], rows: &[TopologyRow]) -> String {
    let mut out = String::from("index");
    for &k in switchable {
        let _ = write!(out, ",{}", net.branch_label(k));
    }
    out.push_str(",islanded,converged,iterations,min_vm\n");
    for r in rows {
        let _ = write!(out, "{}", r.index);
        for &c in &r.closed {
            out.push_str(if c { ",1" } else { ",0" });
        }
        let vm = r.min_vm.map(|v| format!("{v}")).unwrap_or_default();
        let _ = writeln!(out, ",{},{},{},{}", r.islanded as u8, r.converged as u8, r.iterations, vm);
    }
    out
}

/// One analytic-vs-FD comparison, as written by `fdcheck`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub block: String,
    pub row: usize,
    pub col: usize,
    pub analytic_re: f64,
    pub analytic_im: f64,
    pub fd_re: f64,
    pub fd_im: f64,
    pub error: f64,
    pub pass: bool,
}

pub fn probes_csv(records: &[ProbeRecord]) -> String {
    let mut out = String::from("block,row,col,analytic_re,analytic_im,fd_re,fd_im,error,pass\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{}",
            r.block, r.row, r.col, r.analytic_re, r.analytic_im, r.fd_re, r.fd_im, r.error, r.pass as u8
        );
    }
    out
}

/// Compares `per_block` randomly chosen entries of every block of `bundle`
/// against finite differences. Entry selection is seeded.
pub fn check_bundle(
    net: &Network,
    bundle: &SensitivityBundle,
    per_block: usize,
    seed: u64,
    cfg: &FdConfig,
) -> Result<Vec<ProbeRecord>> {
    let sol = &bundle.point;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (net.n(), net.m());
    let cols = m + n;
    let layout = &bundle.layout;
    let re = |v: f64| Complex64::new(v, 0.0);
    let (dx_dg, dx_db) = components(&bundle.dx_dw, &bundle.dx_dwbar)?;
    let (du_dg, du_db) = components(&bundle.du_dw, &bundle.du_dwbar)?;
    let (ds_dg, ds_db) = components(&bundle.dsfl_dw, &bundle.dsfl_dwbar)?;
    let live_currents: Vec<usize> =
        (0..cols).filter(|r| !bundle.degenerate_currents.contains(r)).collect();
    let flow_rows = 2 * m + n;

    let mut records = Vec::new();

    // Mismatch parameter Jacobian: FD at the fixed solved state.
    let pj = dkappa_dparams(sol, net);
    for (name, analytic, imag) in [("dkappa_g", &pj.dkappa_dg, false), ("dkappa_b", &pj.dkappa_db, true)] {
        for _ in 0..per_block {
            let (r, c) = (rng.gen_range(0..layout.dim()), rng.gen_range(0..cols));
            let dir = if imag { Complex64::new(0.0, cfg.h) } else { Complex64::new(cfg.h, 0.0) };
            let plus = mismatch(&sol.state(), &sol.w_at_solve.perturbed(c, dir), net, &sol.schedule);
            let minus = mismatch(&sol.state(), &sol.w_at_solve.perturbed(c, -dir), net, &sol.schedule);
            let fd = re((plus[r] - minus[r]) / (2.0 * cfg.h));
            records.push(record(name, r, c, re(analytic[(r, c)]), fd, cfg));
        }
    }

    // Blocks evaluated by re-solving the power flow.
    type Pick<'a> = Box<dyn Fn(&mut ChaCha8Rng) -> (usize, usize, Quantity, Param, Complex64) + 'a>;
    let angle_rows = layout.angle_cols();
    let mag_rows = layout.vmag_cols();
    let blocks: Vec<(&str, Pick)> = vec![
        ("va_g", Box::new(|g: &mut ChaCha8Rng| {
            let (i, c) = (angle_rows[g.gen_range(0..angle_rows.len())], g.gen_range(0..cols));
            (i, c, Quantity::Va(i), Param::G(c), re(bundle.kdelta_g[(i, c)]))
        })),
        ("va_b", Box::new(|g: &mut ChaCha8Rng| {
            let (i, c) = (angle_rows[g.gen_range(0..angle_rows.len())], g.gen_range(0..cols));
            (i, c, Quantity::Va(i), Param::B(c), re(bundle.kdelta_b[(i, c)]))
        })),
        ("vm_g", Box::new(|g: &mut ChaCha8Rng| {
            let (i, c) = (mag_rows[g.gen_range(0..mag_rows.len())], g.gen_range(0..cols));
            (i, c, Quantity::Vm(i), Param::G(c), re(bundle.kv_g[(i, c)]))
        })),
        ("vm_b", Box::new(|g: &mut ChaCha8Rng| {
            let (i, c) = (mag_rows[g.gen_range(0..mag_rows.len())], g.gen_range(0..cols));
            (i, c, Quantity::Vm(i), Param::B(c), re(bundle.kv_b[(i, c)]))
        })),
        ("vm_p", Box::new(|g: &mut ChaCha8Rng| {
            let (i, k) = (mag_rows[g.gen_range(0..mag_rows.len())], g.gen_range(0..angle_rows.len()));
            (i, k, Quantity::Vm(i), Param::P(angle_rows[k]), re(bundle.kv_p[(i, k)]))
        })),
        ("vm_q", Box::new(|g: &mut ChaCha8Rng| {
            let (i, k) = (mag_rows[g.gen_range(0..mag_rows.len())], g.gen_range(0..mag_rows.len()));
            (i, k, Quantity::Vm(i), Param::Q(mag_rows[k]), re(bundle.kv_q[(i, k)]))
        })),
        ("x_g", Box::new(|g: &mut ChaCha8Rng| {
            let (i, c) = (g.gen_range(0..n), g.gen_range(0..cols));
            (i, c, Quantity::X(i), Param::G(c), dx_dg[(i, c)])
        })),
        ("x_b", Box::new(|g: &mut ChaCha8Rng| {
            let (i, c) = (g.gen_range(0..n), g.gen_range(0..cols));
            (i, c, Quantity::X(i), Param::B(c), dx_db[(i, c)])
        })),
        ("u_g", Box::new(|g: &mut ChaCha8Rng| {
            let (r, c) = (g.gen_range(0..cols), g.gen_range(0..cols));
            (r, c, Quantity::Current(r), Param::G(c), du_dg[(r, c)])
        })),
        ("u_b", Box::new(|g: &mut ChaCha8Rng| {
            let (r, c) = (g.gen_range(0..cols), g.gen_range(0..cols));
            (r, c, Quantity::Current(r), Param::B(c), du_db[(r, c)])
        })),
        ("l_g", Box::new(|g: &mut ChaCha8Rng| {
            let (r, c) = (live_currents[g.gen_range(0..live_currents.len())], g.gen_range(0..cols));
            (r, c, Quantity::CurrentMag(r), Param::G(c), re(bundle.kl_g[(r, c)]))
        })),
        ("l_b", Box::new(|g: &mut ChaCha8Rng| {
            let (r, c) = (live_currents[g.gen_range(0..live_currents.len())], g.gen_range(0..cols));
            (r, c, Quantity::CurrentMag(r), Param::B(c), re(bundle.kl_b[(r, c)]))
        })),
        ("l_p", Box::new(|g: &mut ChaCha8Rng| {
            let (r, k) = (live_currents[g.gen_range(0..live_currents.len())], g.gen_range(0..angle_rows.len()));
            (r, k, Quantity::CurrentMag(r), Param::P(angle_rows[k]), re(bundle.kl_p[(r, k)]))
        })),
        ("l_q", Box::new(|g: &mut ChaCha8Rng| {
            let (r, k) = (live_currents[g.gen_range(0..live_currents.len())], g.gen_range(0..mag_rows.len()));
            (r, k, Quantity::CurrentMag(r), Param::Q(mag_rows[k]), re(bundle.kl_q[(r, k)]))
        })),
        ("s_g", Box::new(|g: &mut ChaCha8Rng| {
            let (r, c) = (g.gen_range(0..flow_rows), g.gen_range(0..cols));
            (r, c, Quantity::Flow(r), Param::G(c), ds_dg[(r, c)])
        })),
        ("s_b", Box::new(|g: &mut ChaCha8Rng| {
            let (r, c) = (g.gen_range(0..flow_rows), g.gen_range(0..cols));
            (r, c, Quantity::Flow(r), Param::B(c), ds_db[(r, c)])
        })),
    ];

    let mut jobs = Vec::new();
    for (name, pick) in &blocks {
        if (name.starts_with("va") && angle_rows.is_empty())
            || ((name.starts_with("vm") || name.ends_with("_q")) && mag_rows.is_empty())
            || (name.starts_with('l') && live_currents.is_empty())
        {
            continue;
        }
        for _ in 0..per_block {
            let (r, c, q, p, a) = pick(&mut rng);
            jobs.push((*name, r, c, q, p, a));
        }
    }
    let probes: Vec<(Quantity, Param)> = jobs.iter().map(|j| (j.3, j.4)).collect();
    let fds = fd_many(net, sol, &probes, cfg);
    for (job, fd) in jobs.iter().zip(fds) {
        records.push(record(job.0, job.1, job.2, job.5, fd?, cfg));
    }
    Ok(records)
}

fn record(block: &str, row: usize, col: usize, analytic: Complex64, fd: Complex64, cfg: &FdConfig) -> ProbeRecord {
    let (error, pass) = cfg.compare(analytic, fd);
    ProbeRecord {
        block: block.to_string(),
        row,
        col,
        analytic_re: analytic.re,
        analytic_im: analytic.im,
        fd_re: fd.re,
        fd_im: fd.im,
        error,
        pass,
    }
}
