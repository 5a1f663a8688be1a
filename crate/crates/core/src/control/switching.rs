//! Discrete switching: congestion objective, its gradient with respect to
//! the relaxed switch variables, the budgeted linear subproblem and the
//! greedy AC loop around them.

use std::collections::HashSet;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{output_violation, ControlResult, IterationRecord};
use crate::error::{Error, Result};
use crate::netmodel::{make_admittance_state, BusKind, IncidenceOperator, Network};
use crate::pfsolve::{solve, PowerFlowSolution};
use crate::sensitivity::{bundle, current_values, SensitivityBundle};

/// `C = sum over energized branches with a capacity of |u|^2 / cap^2`.
pub fn congestion(net: &Network, sol: &PowerFlowSolution, capacity: &[Option<f64>]) -> f64 {
    let op = IncidenceOperator::new(net);
    let u = current_values(&sol.x, &sol.w_at_solve, &op);
    let on = sol.w_at_solve.energized();
    (0..net.m())
        .filter_map(|k| match capacity[k] {
            Some(cap) if on[k] => Some(u[k].norm_sqr() / (cap * cap)),
            _ => None,
        })
        .fold(0.0, |a, b| a + b)
}

/// `dC/d gamma_e` for every branch `e`, with `gamma_e` scaling the nominal
/// admittance: `sum_l 2 l_l (Kl_g[l,e] Re y_e + Kl_b[l,e] Im y_e) / cap_l^2`
/// over energized, capacity-limited branches `l`. Which branches count as
/// energized is held fixed; degenerate current rows contribute zero.
pub fn congestion_gradient(
    net: &Network,
    b: &SensitivityBundle,
    capacity: &[Option<f64>],
) -> Vec<f64> {
    let sol = &b.point;
    let op = IncidenceOperator::new(net);
    let u = current_values(&sol.x, &sol.w_at_solve, &op);
    let on = sol.w_at_solve.energized();
    let weights: Vec<(usize, f64)> = (0..net.m())
        .filter_map(|l| match capacity[l] {
            Some(cap) if on[l] && !b.degenerate_currents.contains(&l) => {
                Some((l, 2.0 * u[l].norm() / (cap * cap)))
            }
            _ => None,
        })
        .collect();
    (0..net.m())
        .map(|e| {
            let y = net.branches()[e].y_nominal();
            weights
                .iter()
                .map(|&(l, wgt)| wgt * (b.kl_g[(l, e)] * y.re + b.kl_b[(l, e)] * y.im))
                .sum()
        })
        .collect()
}

/// `min c^T g  s.t.  sum(g) <= budget, 0 <= g <= 1`: closes the `budget`
/// most negative entries (ties by index), never a non-negative one.
/// `pinned[i] = Some(v)` fixes entry `i` to `v`, which counts against the
/// budget when it is 1.
pub fn knapsack_relax(c: &[f64], budget: usize, pinned: &[Option<bool>]) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    let mut left = budget;
    for (i, p) in pinned.iter().enumerate() {
        if let Some(v) = p {
            out[i] = if *v { 1.0 } else { 0.0 };
            if *v {
                left = left.saturating_sub(1);
            }
        }
    }
    let mut order: Vec<usize> =
        (0..c.len()).filter(|&i| pinned.get(i).copied().flatten().is_none() && c[i] < 0.0).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
    for &i in order.iter().take(left) {
        out[i] = 1.0;
    }
    out
}

/// Draws `z_i ~ Bernoulli(gamma_i)` until `test` accepts (returns
/// `(accepted, violation)`), at most 100 times. Returns the draw, whether it
/// was accepted, and the number of draws. Without an accepted draw the one
/// with the smallest violation is returned.
pub fn randomized_round(
    gamma: &[f64],
    test: &dyn Fn(&[bool]) -> (bool, f64),
    seed: u64,
) -> (Vec<bool>, bool, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<bool>, f64)> = None;
    for draw in 1..=100 {
        let z: Vec<bool> = gamma.iter().map(|&g| rng.gen::<f64>() < g.clamp(0.0, 1.0)).collect();
        let (ok, violation) = test(&z);
        if ok {
            return (z, true, draw);
        }
        if best.as_ref().map_or(true, |b| violation < b.1) {
            best = Some((z, violation));
        }
    }
    let (z, _) = best.expect("at least one draw");
    (z, false, 100)
}

/// Switching problem over branch indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchProblem {
    pub switchable: Vec<usize>,
    /// At most this many switchable branches closed.
    pub budget: usize,
    pub z0: Vec<bool>,
    /// Per-branch current capacity (per-unit); `None` means unconstrained.
    pub capacity: Vec<Option<f64>>,
    pub v_min: f64,
    pub v_max: f64,
    pub seed: u64,
    pub max_iter: usize,
}

#[derive(Deserialize)]
struct LineRef {
    from: usize,
    to: usize,
}

#[derive(Deserialize)]
struct CapacityRef {
    from: usize,
    to: usize,
    max: f64,
}

/// JSON form of [`SwitchProblem`] using external bus ids. Capacities not
/// listed come from the case ratings.
#[derive(Deserialize)]
pub struct SwitchSpec {
    switchable: Vec<LineRef>,
    budget: usize,
    #[serde(default)]
    z0: Option<Vec<bool>>,
    #[serde(default)]
    capacities: Vec<CapacityRef>,
    #[serde(default = "v_lo")]
    v_min: f64,
    #[serde(default = "v_hi")]
    v_max: f64,
}

fn v_lo() -> f64 {
    0.9
}

fn v_hi() -> f64 {
    1.1
}

impl SwitchSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(self, net: &Network, seed: u64, budget_override: Option<usize>) -> Result<SwitchProblem> {
        let find = |a: usize, b: usize| {
            net.branch_index(a, b)
                .ok_or_else(|| Error::Validation(format!("unknown branch {a}-{b}")))
        };
        let switchable: Vec<usize> =
            self.switchable.iter().map(|l| find(l.from, l.to)).collect::<Result<_>>()?;
        let z0 = self
            .z0
            .unwrap_or_else(|| switchable.iter().map(|&k| net.branches()[k].in_service).collect());
        let mut capacity: Vec<Option<f64>> = (0..net.m()).map(|k| net.current_limit(k)).collect();
        for c in &self.capacities {
            if !(c.max > 0.0) {
                return Err(Error::Validation(format!("capacity of {}-{} must be positive", c.from, c.to)));
            }
            capacity[find(c.from, c.to)?] = Some(c.max);
        }
        SwitchProblem::new(
            net,
            switchable,
            budget_override.unwrap_or(self.budget),
            z0,
            capacity,
            (self.v_min, self.v_max),
            seed,
        )
    }
}

impl SwitchProblem {
    pub fn new(
        net: &Network,
        switchable: Vec<usize>,
        budget: usize,
        z0: Vec<bool>,
        capacity: Vec<Option<f64>>,
        v_box: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        if z0.len() != switchable.len() {
            return Err(Error::Dimension("z0 must have one entry per switchable branch".into()));
        }
        if capacity.len() != net.m() {
            return Err(Error::Dimension("capacity must have one entry per branch".into()));
        }
        if budget > switchable.len() {
            return Err(Error::Validation("budget exceeds the number of switchable branches".into()));
        }
        if switchable.iter().any(|&k| k >= net.m()) {
            return Err(Error::Validation("switchable branch index out of range".into()));
        }
        Ok(Self { switchable, budget, z0, capacity, v_min: v_box.0, v_max: v_box.1, seed, max_iter: 20 })
    }

    /// The network with every switchable branch controllable on `[0, 1]`.
    pub fn network(&self, net: &Network) -> Result<Network> {
        let spec: Vec<_> = self.switchable.iter().map(|&k| (k, 0.0, 1.0)).collect();
        net.with_controllable(&spec)
    }

    /// Control vector over `net.controllable()` for switch states `z`.
    pub fn gamma(&self, net: &Network, z: &[bool]) -> Vec<Complex64> {
        let mut gamma = net.default_gamma();
        for (pos, k) in net.controllable().into_iter().enumerate() {
            if let Some(s) = self.switchable.iter().position(|&b| b == k) {
                gamma[pos] = Complex64::new(if z[s] { 1.0 } else { 0.0 }, 0.0);
            }
        }
        gamma
    }

    pub fn within_budget(&self, z: &[bool]) -> bool {
        z.iter().filter(|&&c| c).count() <= self.budget
    }

    pub fn islanded(&self, net: &Network, z: &[bool]) -> Result<bool> {
        let ast = make_admittance_state(net, &self.gamma(net, z))?;
        Ok(net.unreachable_count(&ast.energized()) > 0)
    }

    /// Largest bound excess at an AC solution: voltage box on PQ buses and
    /// capacities of energized branches.
    pub fn violation(&self, net: &Network, sol: &PowerFlowSolution) -> f64 {
        let op = IncidenceOperator::new(net);
        let u = current_values(&sol.x, &sol.w_at_solve, &op);
        let on = sol.w_at_solve.energized();
        let mut worst = f64::NEG_INFINITY;
        for i in (0..net.n()).filter(|&i| net.kind(i) == BusKind::Pq) {
            worst = worst.max(self.v_min - sol.v[i]).max(sol.v[i] - self.v_max);
        }
        for k in 0..net.m() {
            if let (Some(cap), true) = (self.capacity[k], on[k]) {
                worst = worst.max(u[k].norm() - cap);
            }
        }
        worst
    }

    pub fn solve_config(&self, net: &Network, z: &[bool]) -> Result<PowerFlowSolution> {
        solve(net, &make_admittance_state(net, &self.gamma(net, z))?, None)
    }
}

/// Greedy AC knapsack switching. `net` must already have the switchable
/// branches controllable (see [`SwitchProblem::network`]).
pub fn quick_switch(net: &Network, prob: &SwitchProblem) -> Result<ControlResult> {
    if prob.islanded(net, &prob.z0)? {
        return Err(Error::Islanded { unreachable: 0 });
    }
    let tol = 1e-6;
    let mut z = prob.z0.clone();
    let mut sol = prob.solve_config(net, &z)?;
    let mut viol = prob.violation(net, &sol);
    let mut cong = congestion(net, &sol, &prob.capacity);
    let mut history = vec![IterationRecord {
        iteration: 0,
        objective: cong,
        rel_l2_error: 0.0,
        max_violation: viol,
        step: 1.0,
        lp_status: None,
        congestion: Some(cong),
    }];
    let mut best = (viol, cong, z.clone(), sol.clone());
    let mut visited: HashSet<Vec<bool>> = HashSet::from([z.clone()]);
    let mut pinned: Vec<Option<bool>> = vec![None; z.len()];

    let mut iteration = 0;
    while viol > tol && iteration < prob.max_iter {
        iteration += 1;
        let b = bundle(&sol, net)?;
        let grad_all = congestion_gradient(net, &b, &prob.capacity);
        let grad: Vec<f64> = prob.switchable.iter().map(|&k| grad_all[k]).collect();
        let relaxed = knapsack_relax(&grad, prob.budget, &pinned);
        let test = |cand: &[bool]| -> (bool, f64) {
            let over = cand.iter().filter(|&&c| c).count().saturating_sub(prob.budget);
            (over == 0, over as f64)
        };
        let (cand, _, _) = randomized_round(&relaxed, &test, prob.seed.wrapping_add(iteration as u64));

        if prob.islanded(net, &cand)? {
            // Pin the branches this move would open to their previous state.
            let opened: Vec<usize> = (0..z.len()).filter(|&i| z[i] && !cand[i]).collect();
            let mut culprits = Vec::new();
            for &i in &opened {
                let mut fixed = cand.clone();
                fixed[i] = true;
                if !prob.islanded(net, &fixed)? {
                    culprits.push(i);
                }
            }
            if culprits.is_empty() {
                culprits = opened;
            }
            if culprits.is_empty() {
                log::warn!("switching move islands the network and no opened branch to pin");
                break;
            }
            for i in culprits {
                pinned[i] = Some(z[i]);
            }
            continue;
        }
        if !visited.insert(cand.clone()) {
            log::info!("switching loop revisited a configuration; stopping");
            break;
        }
        let next = match prob.solve_config(net, &cand) {
            Ok(s) => s,
            Err(e) if e.is_numerical() => {
                log::warn!("AC solve failed for a candidate configuration: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        z = cand;
        sol = next;
        viol = prob.violation(net, &sol);
        cong = congestion(net, &sol, &prob.capacity);
        history.push(IterationRecord {
            iteration,
            objective: cong,
            rel_l2_error: 0.0,
            max_violation: viol,
            step: 1.0,
            lp_status: None,
            congestion: Some(cong),
        });
        let better = (viol <= tol && (best.0 > tol || cong < best.1)) || (best.0 > tol && viol < best.0);
        if better {
            best = (viol, cong, z.clone(), sol.clone());
        }
    }

    let (viol, cong, z, sol) = best;
    let gamma_star: Vec<f64> = prob.gamma(net, &z).iter().map(|g| g.re).collect();
    Ok(ControlResult {
        gamma_star,
        z_star: Some(z),
        p_star: Vec::new(),
        q_star: Vec::new(),
        predicted_v: sol.v.clone(),
        rel_l2_error: 0.0,
        objective_value: cong,
        objective_mw: f64::NAN,
        feasible: viol <= tol,
        max_violation: viol.max(output_violation(net, &sol, prob.v_min, prob.v_max)),
        history,
        verified_solution: sol,
    })
}
