//! Voltage regulation / hosting capacity by continuous admittance control:
//! a sequence of LPs over the linearized power flow, each verified by an AC
//! solve at its optimum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lp::{lp_solve, LpStatus};
use super::{ControlResult, IterationRecord};
use crate::error::{Error, Result};
use crate::linalg::{l2_norm, RMatrix};
use crate::netmodel::{make_admittance_state, IncidenceOperator, Network};
use crate::pfsolve::{solve_with, PowerFlowSolution, Schedule, SolveOptions};
use crate::sensitivity::{bundle, current_values, SensitivityBundle};

/// Bounds and settings of the regulation LP. Injection bounds are per-unit:
/// `p_*` over the non-slack buses, `q_*` over the PQ buses (ascending bus
/// order). The `gamma_*` box applies to every controllable branch, with one
/// real multiplier scaling both `g` and `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VregSpec {
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Number of LP solves (each after re-linearizing at the previous optimum).
    pub iters: usize,
    /// Verification slack for output bounds, per-unit.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_slack() -> f64 {
    1e-6
}

impl VregSpec {
    pub fn validate(&self, net: &Network) -> Result<()> {
        let np = (0..net.n()).filter(|&i| i != net.slack()).count();
        let nq = (0..net.n()).filter(|&i| net.kind(i) == crate::netmodel::BusKind::Pq).count();
        if self.p_min.len() != np || self.p_max.len() != np {
            return Err(Error::Validation(format!("p bounds need {np} entries")));
        }
        if self.q_min.len() != nq || self.q_max.len() != nq {
            return Err(Error::Validation(format!("q bounds need {nq} entries")));
        }
        let pairs = self.p_min.iter().zip(&self.p_max).chain(self.q_min.iter().zip(&self.q_max));
        for (lo, hi) in pairs.chain([(&self.v_min, &self.v_max), (&self.gamma_min, &self.gamma_max)]) {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Validation(format!("invalid bound pair [{lo}, {hi}]")));
            }
        }
        for k in net.controllable() {
            let br = &net.branches()[k];
            if self.gamma_min < br.gamma_min - 1e-12 || self.gamma_max > br.gamma_max + 1e-12 {
                return Err(Error::Validation(format!(
                    "gamma box [{}, {}] exceeds the bounds of branch {}",
                    self.gamma_min,
                    self.gamma_max,
                    net.branch_label(k)
                )));
            }
        }
        if self.iters == 0 {
            return Err(Error::Validation("iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Hosting-capacity experiment: every in-service branch controllable on
/// `gamma in [1 - pct, 1 + pct]`; net active injection of each non-slack bus
/// between its scheduled value and three times its active load; reactive
/// injection within half the reactive load of its scheduled value; voltages
/// in `[0.9, 1.05]`.
pub fn hosting_capacity_recipe(net: &Network, pct: f64, iters: usize) -> Result<(Network, VregSpec)> {
    let net = net.with_all_in_service_controllable(1.0 - pct, 1.0 + pct)?;
    let base = net.base_mva;
    let nonslack: Vec<usize> = (0..net.n()).filter(|&i| i != net.slack()).collect();
    let pq: Vec<usize> = (0..net.n()).filter(|&i| net.kind(i) == crate::netmodel::BusKind::Pq).collect();
    let p_min: Vec<f64> = nonslack.iter().map(|&i| net.p_inject(i)).collect();
    let p_max: Vec<f64> =
        nonslack.iter().map(|&i| (3.0 * net.buses()[i].pd / base).max(net.p_inject(i))).collect();
    let q_half: Vec<f64> = pq.iter().map(|&i| 0.5 * net.buses()[i].qd.abs() / base).collect();
    let q_min = pq.iter().zip(&q_half).map(|(&i, h)| net.q_inject(i) - h).collect();
    let q_max = pq.iter().zip(&q_half).map(|(&i, h)| net.q_inject(i) + h).collect();
    let spec = VregSpec {
        p_min,
        p_max,
        q_min,
        q_max,
        v_min: 0.9,
        v_max: 1.05,
        gamma_min: 1.0 - pct,
        gamma_max: 1.0 + pct,
        iters,
        slack: default_slack(),
    };
    Ok((net, spec))
}

/// Operating point of the control loop.
#[derive(Clone, Debug)]
struct Iterate {
    p: Vec<f64>,
    q: Vec<f64>,
    gamma: Vec<f64>,
}

/// The regulation LP at one linearization point.
pub struct VregLp {
    pub c: Vec<f64>,
    pub a: RMatrix,
    pub b: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    /// Affine voltage prediction over the PQ buses: `v = v0 + Kz (z - z0)`.
    v_rows: Vec<usize>,
    v0: Vec<f64>,
    kv: RMatrix,
    z0: Vec<f64>,
}

impl VregLp {
    /// Predicted magnitudes of every bus at LP point `z` (fixed buses keep
    /// their value).
    pub fn predict_v(&self, z: &[f64], n_bus: usize, v_point: &[f64]) -> Vec<f64> {
        let mut v = v_point[..n_bus].to_vec();
        for (r, &i) in self.v_rows.iter().enumerate() {
            v[i] = self.v0[r] + (0..z.len()).map(|c| self.kv[(r, c)] * (z[c] - self.z0[c])).sum::<f64>();
        }
        v
    }
}

/// `d(.)/d gamma_k = d(.)/dg_k Re(y_k) + d(.)/db_k Im(y_k)` over the
/// controllable branches.
fn gamma_columns(net: &Network, kg: &RMatrix, kb: &RMatrix) -> RMatrix {
    let ctrl = net.controllable();
    RMatrix::from_fn(kg.nrows(), ctrl.len(), |r, c| {
        let y = net.branches()[ctrl[c]].y_nominal();
        kg[(r, ctrl[c])] * y.re + kb[(r, ctrl[c])] * y.im
    })
}

/// Builds the LP around the bundle's operating point with decision vector
/// `z = [p (non-slack); q (PQ); gamma (controllable)]`.
pub fn build_lp(net: &Network, spec: &VregSpec, b: &SensitivityBundle, at: &[f64]) -> VregLp {
    let layout = &b.layout;
    let (na, nq, nc) = (layout.n_active(), layout.reactive_rows.len(), net.controllable().len());
    let nz = na + nq + nc;
    let pq = &layout.reactive_rows;

    // Output sensitivities with respect to z.
    let kvg = gamma_columns(net, &b.kv_g, &b.kv_b);
    let mut kv = RMatrix::zeros(pq.len(), nz);
    for (r, &i) in pq.iter().enumerate() {
        for c in 0..na {
            kv[(r, c)] = b.kv_p[(i, c)];
        }
        for c in 0..nq {
            kv[(r, na + c)] = b.kv_q[(i, c)];
        }
        for c in 0..nc {
            kv[(r, na + nq + c)] = kvg[(i, c)];
        }
    }
    let v0: Vec<f64> = pq.iter().map(|&i| b.point.v[i]).collect();

    let limited: Vec<(usize, f64)> =
        (0..net.m()).filter_map(|k| net.current_limit(k).map(|l| (k, l))).collect();
    let klg = gamma_columns(net, &b.kl_g, &b.kl_b);
    let op = IncidenceOperator::new(net);
    let u = current_values(&b.point.x, &b.point.w_at_solve, &op);

    let rows = 2 * pq.len() + limited.len();
    let mut a = RMatrix::zeros(rows, nz);
    let mut rhs = vec![0.0; rows];
    let kz0: Vec<f64> = (0..pq.len()).map(|r| (0..nz).map(|c| kv[(r, c)] * at[c]).sum()).collect();
    for r in 0..pq.len() {
        // v0 + K (z - z0) <= v_max  and  -(v0 + K (z - z0)) <= -v_min
        for c in 0..nz {
            a[(2 * r, c)] = kv[(r, c)];
            a[(2 * r + 1, c)] = -kv[(r, c)];
        }
        rhs[2 * r] = spec.v_max - v0[r] + kz0[r];
        rhs[2 * r + 1] = -spec.v_min + v0[r] - kz0[r];
    }
    for (s, &(k, lmax)) in limited.iter().enumerate() {
        let row = 2 * pq.len() + s;
        let mut kz = 0.0;
        for c in 0..nz {
            let coef = if c < na {
                b.kl_p[(k, c)]
            } else if c < na + nq {
                b.kl_q[(k, c - na)]
            } else {
                klg[(k, c - na - nq)]
            };
            a[(row, c)] = coef;
            kz += coef * at[c];
        }
        rhs[row] = lmax - u[k].norm() + kz;
    }

    let mut bounds = Vec::with_capacity(nz);
    bounds.extend(spec.p_min.iter().zip(&spec.p_max).map(|(&l, &h)| (l, h)));
    bounds.extend(spec.q_min.iter().zip(&spec.q_max).map(|(&l, &h)| (l, h)));
    bounds.extend(std::iter::repeat((spec.gamma_min, spec.gamma_max)).take(nc));
    let mut c = vec![0.0; nz];
    c[..na].iter_mut().for_each(|v| *v = 1.0);
    VregLp { c, a, b: rhs, bounds, v_rows: pq.clone(), v0, kv, z0: at.to_vec() }
}

fn schedule_for(net: &Network, sol_layout: &crate::pfsolve::MismatchLayout, it: &Iterate) -> Schedule {
    let mut s = Schedule::from_network(net);
    for (k, &i) in sol_layout.active_rows.iter().enumerate() {
        s.p[i] = it.p[k];
    }
    for (k, &i) in sol_layout.reactive_rows.iter().enumerate() {
        s.q[i] = it.q[k];
    }
    s
}

fn solve_iterate(net: &Network, it: &Iterate, start: Option<&PowerFlowSolution>) -> Result<PowerFlowSolution> {
    let layout = crate::pfsolve::MismatchLayout::new(net);
    let gamma: Vec<Complex64> = it.gamma.iter().map(|&g| Complex64::new(g, 0.0)).collect();
    let ast = make_admittance_state(net, &gamma)?;
    let schedule = schedule_for(net, &layout, it);
    let opts = SolveOptions { backtracking: true, ..SolveOptions::default() };
    solve_with(net, &ast, &schedule, start.map(|s| s.state()).as_ref(), &opts)
}

/// Output-bound violations at an AC solution: largest excess over the
/// voltage box (PQ buses) and over the current limits, per-unit.
pub fn output_violation(net: &Network, sol: &PowerFlowSolution, v_min: f64, v_max: f64) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..net.n() {
        if net.kind(i) == crate::netmodel::BusKind::Pq {
            worst = worst.max(v_min - sol.v[i]).max(sol.v[i] - v_max);
        }
    }
    let op = IncidenceOperator::new(net);
    let u = current_values(&sol.x, &sol.w_at_solve, &op);
    for k in 0..net.m() {
        if let Some(l) = net.current_limit(k) {
            worst = worst.max(u[k].norm() - l);
        }
    }
    worst
}

/// Runs the re-linearized LP loop starting from the network's own schedule
/// and `gamma = 1` on the controllable branches.
pub fn solve_vreg(net: &Network, spec: &VregSpec) -> Result<ControlResult> {
    spec.validate(net)?;
    let layout = crate::pfsolve::MismatchLayout::new(net);
    let nc = net.controllable().len();
    let base_sched = Schedule::from_network(net);
    let mut current = Iterate {
        p: layout.active_rows.iter().map(|&i| base_sched.p[i]).collect(),
        q: layout.reactive_rows.iter().map(|&i| base_sched.q[i]).collect(),
        gamma: vec![1.0; nc],
    };
    let mut sol = solve_iterate(net, &current, None)?;
    let mut history = Vec::new();
    let mut last_pred = sol.v.clone();
    let mut objective = current.p.iter().sum::<f64>();
    let mut lp_feasible = true;

    for iteration in 0..spec.iters {
        let b = bundle(&sol, net)?;
        let z0: Vec<f64> = current.p.iter().chain(&current.q).chain(&current.gamma).copied().collect();
        let lp = build_lp(net, spec, &b, &z0);
        let res = lp_solve(&lp.c, &lp.a, &lp.b, &lp.bounds)?;
        if res.status != LpStatus::Optimal {
            log::warn!("regulation LP returned {:?} at iteration {iteration}", res.status);
            lp_feasible = false;
            history.push(IterationRecord {
                iteration,
                objective: f64::NAN,
                rel_l2_error: f64::NAN,
                max_violation: output_violation(net, &sol, spec.v_min, spec.v_max),
                step: 0.0,
                lp_status: Some(res.status),
                congestion: None,
            });
            break;
        }
        let (na, nq) = (current.p.len(), current.q.len());
        let target = Iterate {
            p: res.x[..na].to_vec(),
            q: res.x[na..na + nq].to_vec(),
            gamma: res.x[na + nq..].to_vec(),
        };
        // Verify; halve the step towards the previous iterate on failure.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=5 {
            let trial = blend(&current, &target, step);
            match solve_iterate(net, &trial, Some(&sol)) {
                Ok(s) => {
                    accepted = Some((trial, s));
                    break;
                }
                Err(e) if e.is_numerical() => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((next, next_sol)) = accepted else {
            return Err(Error::NonConvergence { iterations: iteration + 1, mismatch: f64::NAN });
        };
        let zt: Vec<f64> = next.p.iter().chain(&next.q).chain(&next.gamma).copied().collect();
        let pred = lp.predict_v(&zt, net.n(), &sol.v);
        let err = rel_l2_pq(net, &pred, &next_sol.v);
        objective = next.p.iter().sum();
        history.push(IterationRecord {
            iteration,
            objective,
            rel_l2_error: err,
            max_violation: output_violation(net, &next_sol, spec.v_min, spec.v_max),
            step,
            lp_status: Some(res.status),
            congestion: None,
        });
        log::info!("vreg iteration {iteration}: objective {objective:.6} pu, rel l2 error {err:.3e}");
        current = next;
        sol = next_sol;
        last_pred = pred;
    }

    let violation = output_violation(net, &sol, spec.v_min, spec.v_max);
    let feasible = lp_feasible && violation <= spec.slack;
    Ok(ControlResult {
        gamma_star: current.gamma.clone(),
        z_star: None,
        p_star: current.p.clone(),
        q_star: current.q.clone(),
        predicted_v: last_pred.clone(),
        rel_l2_error: rel_l2_pq(net, &last_pred, &sol.v),
        objective_value: objective,
        objective_mw: objective * net.base_mva,
        feasible,
        max_violation: violation,
        history,
        verified_solution: sol,
    })
}

fn blend(a: &Iterate, b: &Iterate, t: f64) -> Iterate {
    let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + t * (q - p)).collect();
    Iterate { p: mix(&a.p, &b.p), q: mix(&a.q, &b.q), gamma: mix(&a.gamma, &b.gamma) }
}

/// Relative l2 difference over the PQ buses.
pub fn rel_l2_pq(net: &Network, pred: &[f64], truth: &[f64]) -> f64 {
    let pq: Vec<usize> = (0..net.n()).filter(|&i| net.kind(i) == crate::netmodel::BusKind::Pq).collect();
    let d: Vec<f64> = pq.iter().map(|&i| pred[i] - truth[i]).collect();
    let t: Vec<f64> = pq.iter().map(|&i| truth[i]).collect();
    l2_norm(&d) / l2_norm(&t)
}
