//! First-order prediction of voltage and current magnitudes under changes
//! of the controllable admittances, and scenario sweeps comparing
//! linearization points.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;
use crate::netmodel::{make_admittance_state, BusKind, IncidenceOperator, Network};
use crate::pfsolve::{solve, PowerFlowSolution};
use crate::sensitivity::{bundle, current_values, SensitivityBundle};

/// `v = v0 + Kv_g (g - g0) + Kv_b (b - b0)`, and the same for the branch
/// current magnitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModel {
    pub v0: Vec<f64>,
    /// Branch current magnitudes (first `m` current rows).
    pub l0: Vec<f64>,
    pub g0: Vec<f64>,
    pub b0: Vec<f64>,
    pub kv_g: RMatrix,
    pub kv_b: RMatrix,
    pub kl_g: RMatrix,
    pub kl_b: RMatrix,
}

impl LinearModel {
    /// `[Kv_g Kv_b; Kl_g Kl_b]`.
    pub fn stacked(&self) -> RMatrix {
        let (n, m, c) = (self.kv_g.nrows(), self.kl_g.nrows(), self.kv_g.ncols());
        let mut k = RMatrix::zeros(n + m, 2 * c);
        k.view_mut((0, 0), (n, c)).copy_from(&self.kv_g);
        k.view_mut((0, c), (n, c)).copy_from(&self.kv_b);
        k.view_mut((n, 0), (m, c)).copy_from(&self.kl_g);
        k.view_mut((n, c), (m, c)).copy_from(&self.kl_b);
        k
    }
}

pub fn linearize(b: &SensitivityBundle, net: &Network) -> LinearModel {
    let m = net.m();
    let sol = &b.point;
    let op = IncidenceOperator::new(net);
    let u = current_values(&sol.x, &sol.w_at_solve, &op);
    let w = sol.w_at_solve.w();
    LinearModel {
        v0: sol.v.clone(),
        l0: u[..m].iter().map(|z| z.norm()).collect(),
        g0: w.iter().map(|z| z.re).collect(),
        b0: w.iter().map(|z| z.im).collect(),
        kv_g: b.kv_g.clone(),
        kv_b: b.kv_b.clone(),
        kl_g: b.kl_g.rows(0, m).into_owned(),
        kl_b: b.kl_b.rows(0, m).into_owned(),
    }
}

/// Prediction at an arbitrary weight vector `w = g + jb`.
pub fn predict_weights(model: &LinearModel, w: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let dg: Vec<f64> = w.iter().zip(&model.g0).map(|(z, g)| z.re - g).collect();
    let db: Vec<f64> = w.iter().zip(&model.b0).map(|(z, b)| z.im - b).collect();
    let apply = |base: &[f64], kg: &RMatrix, kb: &RMatrix| -> Vec<f64> {
        (0..base.len())
            .map(|r| {
                let mut acc = base[r];
                for c in 0..dg.len() {
                    if dg[c] != 0.0 {
                        acc += kg[(r, c)] * dg[c];
                    }
                    if db[c] != 0.0 {
                        acc += kb[(r, c)] * db[c];
                    }
                }
                acc
            })
            .collect()
    };
    (apply(&model.v0, &model.kv_g, &model.kv_b), apply(&model.l0, &model.kl_g, &model.kl_b))
}

/// Prediction for a control vector over `net.controllable()`.
pub fn predict(model: &LinearModel, net: &Network, gamma: &[Complex64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ast = make_admittance_state(net, gamma)?;
    Ok(predict_weights(model, &ast.w()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    /// One entry per controllable branch, in branch order.
    pub gamma: Vec<Complex64>,
}

#[derive(Deserialize)]
struct GammaEntry {
    from: usize,
    to: usize,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Deserialize)]
struct ScenarioEntry {
    id: String,
    gamma: Vec<GammaEntry>,
}

/// Reads `[{"id": .., "gamma": [{"from", "to", "re", "im"}]}]`. Controllable
/// branches not listed keep their default multiplier.
pub fn scenarios_from_json(net: &Network, text: &str) -> Result<Vec<Scenario>> {
    let raw: Vec<ScenarioEntry> = serde_json::from_str(text)?;
    if raw.is_empty() {
        return Err(Error::Validation("scenario file lists no scenarios".into()));
    }
    let ctrl = net.controllable();
    raw.into_iter()
        .map(|s| {
            let mut gamma = net.default_gamma();
            for g in s.gamma {
                let k = net.branch_index(g.from, g.to).ok_or_else(|| {
                    Error::Validation(format!("scenario {} names unknown branch {}-{}", s.id, g.from, g.to))
                })?;
                let pos = ctrl.iter().position(|&c| c == k).ok_or_else(|| {
                    Error::Validation(format!("scenario {}: branch {}-{} is not controllable", s.id, g.from, g.to))
                })?;
                gamma[pos] = Complex64::new(g.re, g.im);
            }
            Ok(Scenario { id: s.id, gamma })
        })
        .collect()
}

/// Every on/off combination of the listed branches (which must be
/// controllable); other controllables keep their default.
pub fn powerset_scenarios(net: &Network, lines: &[usize]) -> Result<Vec<Scenario>> {
    let ctrl = net.controllable();
    let pos: Vec<usize> = lines
        .iter()
        .map(|k| {
            ctrl.iter().position(|c| c == k).ok_or_else(|| {
                Error::Validation(format!("branch {} is not controllable", net.branch_label(*k)))
            })
        })
        .collect::<Result<_>>()?;
    Ok((0..1usize << lines.len())
        .map(|mask| {
            let mut gamma = net.default_gamma();
            let mut id = String::new();
            for (bit, &p) in pos.iter().enumerate() {
                let on = mask >> bit & 1 == 1;
                gamma[p] = Complex64::new(if on { 1.0 } else { 0.0 }, 0.0);
                id.push(if on { '1' } else { '0' });
            }
            Scenario { id, gamma }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Base-case solution used as the prediction (no linearization).
    None,
    Base,
    Midpoint,
    AllAverage,
    EndpointsAverage,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Base => "base",
            Strategy::Midpoint => "midpoint",
            Strategy::AllAverage => "all-average",
            Strategy::EndpointsAverage => "endpoints-average",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::None, Self::Base, Self::Midpoint, Self::AllAverage, Self::EndpointsAverage]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// Linearization point did not solve; base-point model used instead.
    Fallback,
    Islanded,
    NonConvergent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario_id: String,
    pub strategy: Strategy,
    pub rel_err_l2: f64,
    pub max_abs_err: f64,
    pub ac_iterations: usize,
    pub status: RowStatus,
}

/// Relative l2 error and max abs error of `v_hat` over the PQ buses.
pub fn voltage_error(net: &Network, v_hat: &[f64], v_ac: &[f64]) -> (f64, f64) {
    let (mut num, mut den, mut max) = (0.0, 0.0, 0.0_f64);
    for i in (0..net.n()).filter(|&i| net.kind(i) == BusKind::Pq) {
        let d = v_hat[i] - v_ac[i];
        num += d * d;
        den += v_ac[i] * v_ac[i];
        max = max.max(d.abs());
    }
    ((num / den).sqrt(), max)
}

fn solve_at(net: &Network, gamma: &[Complex64]) -> Result<PowerFlowSolution> {
    solve(net, &make_admittance_state(net, gamma)?, None)
}

fn model_at(net: &Network, gamma: &[Complex64]) -> Result<LinearModel> {
    let sol = solve_at(net, gamma)?;
    Ok(linearize(&bundle(&sol, net)?, net))
}

fn mean_gamma<'a>(gammas: impl Iterator<Item = &'a Vec<Complex64>>, len: usize) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut count = 0.0;
    for g in gammas {
        for (a, v) in acc.iter_mut().zip(g) {
            *a += v;
        }
        count += 1.0;
    }
    acc.iter().map(|a| a / count).collect()
}

/// Mean of the all-on and all-off settings: the middle of every
/// controllable branch's declared `[gamma_min, gamma_max]`.
pub fn endpoints_average_gamma(net: &Network) -> Vec<Complex64> {
    net.controllable()
        .iter()
        .map(|&k| {
            let br = &net.branches()[k];
            Complex64::new(0.5 * (br.gamma_min + br.gamma_max), 0.0)
        })
        .collect()
}

/// Evaluates every scenario under every strategy. Rows are grouped by
/// scenario in input order, strategies in the order given.
pub fn sweep(net: &Network, scenarios: &[Scenario], strategies: &[Strategy]) -> Result<Vec<SweepRow>> {
    if scenarios.is_empty() {
        return Err(Error::Validation("sweep needs at least one scenario".into()));
    }
    let nc = net.controllable().len();
    for s in scenarios {
        if s.gamma.len() != nc {
            return Err(Error::Dimension(format!(
                "scenario {} has {} entries, expected {nc}",
                s.id,
                s.gamma.len()
            )));
        }
    }
    let base_gamma = net.default_gamma();
    let base_sol = solve_at(net, &base_gamma)?;
    let base_model = linearize(&bundle(&base_sol, net)?, net);
    let shared = |gamma: Vec<Complex64>| -> Option<LinearModel> {
        match model_at(net, &gamma) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("shared linearization point failed ({e}); falling back to base");
                None
            }
        }
    };
    let all_avg = strategies
        .contains(&Strategy::AllAverage)
        .then(|| shared(mean_gamma(scenarios.iter().map(|s| &s.gamma), nc)))
        .flatten();
    let ends_avg = strategies
        .contains(&Strategy::EndpointsAverage)
        .then(|| shared(endpoints_average_gamma(net)))
        .flatten();

    let rows: Vec<Vec<SweepRow>> = scenarios
        .par_iter()
        .map(|sc| {
            let row = |strategy, err: (f64, f64), iters, status| SweepRow {
                scenario_id: sc.id.clone(),
                strategy,
                rel_err_l2: err.0,
                max_abs_err: err.1,
                ac_iterations: iters,
                status,
            };
            let truth = match solve_at(net, &sc.gamma) {
                Ok(t) => t,
                Err(e) => {
                    let status = match e {
                        Error::Islanded { .. } => RowStatus::Islanded,
                        _ => RowStatus::NonConvergent,
                    };
                    return strategies.iter().map(|&s| row(s, (f64::NAN, f64::NAN), 0, status)).collect();
                }
            };
            let w = match make_admittance_state(net, &sc.gamma) {
                Ok(a) => a.w(),
                Err(_) => return Vec::new(),
            };
            strategies
                .iter()
                .map(|&s| {
                    let (model, status) = match s {
                        Strategy::None => {
                            let e = voltage_error(net, &base_sol.v, &truth.v);
                            return row(s, e, truth.iterations, RowStatus::Ok);
                        }
                        Strategy::Base => (base_model.clone(), RowStatus::Ok),
                        Strategy::Midpoint => {
                            let mid: Vec<Complex64> =
                                base_gamma.iter().zip(&sc.gamma).map(|(a, b)| (a + b) * 0.5).collect();
                            match model_at(net, &mid) {
                                Ok(m) => (m, RowStatus::Ok),
                                Err(_) => (base_model.clone(), RowStatus::Fallback),
                            }
                        }
                        Strategy::AllAverage => match &all_avg {
                            Some(m) => (m.clone(), RowStatus::Ok),
                            None => (base_model.clone(), RowStatus::Fallback),
                        },
                        Strategy::EndpointsAverage => match &ends_avg {
                            Some(m) => (m.clone(), RowStatus::Ok),
                            None => (base_model.clone(), RowStatus::Fallback),
                        },
                    };
                    let (v_hat, _) = predict_weights(&model, &w);
                    row(s, voltage_error(net, &v_hat, &truth.v), truth.iterations, status)
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// One scenario's first-order prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub scenario_id: String,
    pub strategy: Strategy,
    pub v_hat: Vec<f64>,
    /// Branch current magnitudes.
    pub l_hat: Vec<f64>,
    /// The linearization point failed to solve and the base model was used.
    pub fallback: bool,
}

/// Predicts every scenario under `strategy` without solving the scenarios
/// themselves. `Strategy::None` returns the base-case values.
pub fn predict_scenarios(net: &Network, scenarios: &[Scenario], strategy: Strategy) -> Result<Vec<Prediction>> {
    if scenarios.is_empty() {
        return Err(Error::Validation("prediction needs at least one scenario".into()));
    }
    let nc = net.controllable().len();
    let base_gamma = net.default_gamma();
    let base_model = model_at(net, &base_gamma)?;
    let shared = match strategy {
        Strategy::AllAverage => Some(mean_gamma(scenarios.iter().map(|s| &s.gamma), nc)),
        Strategy::EndpointsAverage => Some(endpoints_average_gamma(net)),
        _ => None,
    }
    .map(|g| model_at(net, &g));
    scenarios
        .par_iter()
        .map(|sc| {
            let ast = make_admittance_state(net, &sc.gamma)?;
            let out = |(v_hat, l_hat): (Vec<f64>, Vec<f64>), fallback| Prediction {
                scenario_id: sc.id.clone(),
                strategy,
                v_hat,
                l_hat,
                fallback,
            };
            let model = match (strategy, &shared) {
                (Strategy::None, _) => {
                    return Ok(out((base_model.v0.clone(), base_model.l0.clone()), false));
                }
                (Strategy::Base, _) => Ok(base_model.clone()),
                (Strategy::Midpoint, _) => {
                    let mid: Vec<Complex64> =
                        base_gamma.iter().zip(&sc.gamma).map(|(a, b)| (a + b) * 0.5).collect();
                    model_at(net, &mid)
                }
                (_, Some(Ok(m))) => Ok(m.clone()),
                (_, Some(Err(e))) => Err(Error::Config(e.to_string())),
                (_, None) => unreachable!("shared model computed for averaging strategies"),
            };
            Ok(match model {
                Ok(m) => out(predict_weights(&m, &ast.w()), false),
                Err(e) => {
                    log::warn!("scenario {}: linearization point failed ({e}); using base", sc.id);
                    out(predict_weights(&base_model, &ast.w()), true)
                }
            })
        })
        .collect()
}

/// Long-format CSV: `scenario_id,strategy,kind,index,predicted,fallback`.
pub fn predictions_csv(net: &Network, preds: &[Prediction]) -> String {
    let mut out = String::from("scenario_id,strategy,kind,index,predicted,fallback\n");
    for p in preds {
        let tag = (p.scenario_id.as_str(), p.strategy.name(), p.fallback as u8);
        for (i, v) in p.v_hat.iter().enumerate() {
            let _ = writeln!(out, "{},{},vm,{},{v},{}", tag.0, tag.1, net.buses()[i].id, tag.2);
        }
        for (k, l) in p.l_hat.iter().enumerate() {
            let _ = writeln!(out, "{},{},l,{},{l},{}", tag.0, tag.1, net.branch_label(k), tag.2);
        }
    }
    out
}

/// Report CSV. The first line records the error metric.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("# rel_err_l2 = ||v_hat - v_ac||_2 / ||v_ac||_2 over PQ-bus magnitudes\n");
    out.push_str("scenario_id,strategy,rel_err_l2,max_abs_err,ac_iterations,status\n");
    for r in rows {
        let status = match r.status {
            RowStatus::Ok => "ok",
            RowStatus::Fallback => "fallback",
            RowStatus::Islanded => "islanded",
            RowStatus::NonConvergent => "nonconvergent",
        };
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{},{}",
            r.scenario_id,
            r.strategy.name(),
            r.rel_err_l2,
            r.max_abs_err,
            r.ac_iterations,
            status
        );
    }
    out
}

/// Fraction of scenarios (with a converged AC truth) in which `challenger`
/// has a smaller relative error than `reference`. Exact ties at zero error
/// count as wins.
pub fn win_rate(rows: &[SweepRow], challenger: Strategy, reference: Strategy) -> (usize, usize) {
    let mut wins = 0;
    let mut total = 0;
    for r in rows.iter().filter(|r| r.strategy == challenger && r.rel_err_l2.is_finite()) {
        if let Some(base) = rows
            .iter()
            .find(|b| b.strategy == reference && b.scenario_id == r.scenario_id && b.rel_err_l2.is_finite())
        {
            total += 1;
            if r.rel_err_l2 < base.rel_err_l2 || (r.rel_err_l2 <= 1e-12 && base.rel_err_l2 <= 1e-12) {
                wins += 1;
            }
        }
    }
    (wins, total)
}

/// AC values and first-order predictions along a straight path in `gamma`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSweep {
    pub t: Vec<f64>,
    pub v_ac: Vec<Vec<f64>>,
    pub v_base: Vec<Vec<f64>>,
    pub v_mid: Vec<Vec<f64>>,
    pub l_ac: Vec<Vec<f64>>,
    pub l_base: Vec<Vec<f64>>,
    pub l_mid: Vec<Vec<f64>>,
}

impl PathSweep {
    /// `(base, midpoint)` maximum absolute voltage error over the path.
    pub fn max_voltage_errors(&self) -> (f64, f64) {
        (max_err(&self.v_base, &self.v_ac), max_err(&self.v_mid, &self.v_ac))
    }

    /// `(base, midpoint)` maximum absolute current-magnitude error.
    pub fn max_current_errors(&self) -> (f64, f64) {
        (max_err(&self.l_base, &self.l_ac), max_err(&self.l_mid, &self.l_ac))
    }

    /// Long-format CSV: `t,kind,index,ac,base,midpoint` with `kind` in
    /// `{vm, l}`, `index` the bus id or branch label.
    pub fn to_csv(&self, net: &Network) -> String {
        let mut out = String::from("t,kind,index,ac,base,midpoint\n");
        for (s, &t) in self.t.iter().enumerate() {
            for i in 0..net.n() {
                let _ = writeln!(
                    out,
                    "{t},vm,{},{},{},{}",
                    net.buses()[i].id,
                    self.v_ac[s][i],
                    self.v_base[s][i],
                    self.v_mid[s][i]
                );
            }
            for k in 0..net.m() {
                let _ = writeln!(
                    out,
                    "{t},l,{},{},{},{}",
                    net.branch_label(k),
                    self.l_ac[s][k],
                    self.l_base[s][k],
                    self.l_mid[s][k]
                );
            }
        }
        out
    }
}

fn max_err(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    pred.iter()
        .zip(truth)
        .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// Walks `gamma(t) = (1 - t) start + t end` for `steps` evenly spaced `t` in
/// `[0, 1]`, comparing AC solutions with the models linearized at `t = 0`
/// and `t = 1/2`.
pub fn path_sweep(
    net: &Network,
    start: &[Complex64],
    end: &[Complex64],
    steps: usize,
) -> Result<PathSweep> {
    if steps < 2 {
        return Err(Error::Config("a path sweep needs at least two steps".into()));
    }
    let at = |t: f64| -> Vec<Complex64> { start.iter().zip(end).map(|(a, b)| a * (1.0 - t) + b * t).collect() };
    let base = model_at(net, &at(0.0))?;
    let mid = model_at(net, &at(0.5))?;
    let op = IncidenceOperator::new(net);
    let mut out = PathSweep {
        t: Vec::new(),
        v_ac: Vec::new(),
        v_base: Vec::new(),
        v_mid: Vec::new(),
        l_ac: Vec::new(),
        l_base: Vec::new(),
        l_mid: Vec::new(),
    };
    for s in 0..steps {
        let t = s as f64 / (steps - 1) as f64;
        let gamma = at(t);
        let ast = make_admittance_state(net, &gamma)?;
        let sol = solve(net, &ast, None)?;
        let u = current_values(&sol.x, &ast, &op);
        let (vb, lb) = predict_weights(&base, &ast.w());
        let (vm, lm) = predict_weights(&mid, &ast.w());
        out.t.push(t);
        out.v_ac.push(sol.v.clone());
        out.l_ac.push(u[..net.m()].iter().map(|z| z.norm()).collect());
        out.v_base.push(vb);
        out.l_base.push(lb);
        out.v_mid.push(vm);
        out.l_mid.push(lm);
    }
    Ok(out)
}
