//! Acceptance gate: one line per criterion, `PASS`/`FAIL` with the measured
//! values, thresholds and runtime. Run with `--nocapture` to see the table.

use std::io::Write;
use std::time::{Duration, Instant};

use gridsens::cases;
use gridsens::control::{self, build_lp, hosting_capacity_recipe, lp_solve, quick_switch, LpStatus, SwitchProblem};
use gridsens::fdoracle::{check_bundle, FdConfig};
use gridsens::linalg::l2_norm;
use gridsens::netmodel::{assemble_y, build_f, make_admittance_state, IncidenceOperator, Network};
use gridsens::pfsolve::{injections, solve, PowerFlowSolution};
use gridsens::predictor::{self, linearize, path_sweep, powerset_scenarios, predict, Strategy};
use gridsens::sensitivity::{
    branch_current_components, bundle, components, current_values, flow_values, line_flow_components,
    rect_components, wirtinger, wirtinger_c,
};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C: fn(f64) -> Complex64 = |v| Complex64::new(v, 0.0);

struct Line {
    id: u8,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

fn timed(id: u8, limit_s: u64, f: impl FnOnce() -> (bool, String)) -> Line {
    let t = Instant::now();
    let (pass, detail) = f();
    let elapsed = t.elapsed();
    let limit = Duration::from_secs(limit_s);
    let line = Line { id, pass: pass && elapsed < limit, detail, elapsed, limit };
    // Straight to the handle so the report shows without --nocapture.
    let _ = writeln!(
        std::io::stdout().lock(),
        "criterion {}: {} | {} | {:.2}s (limit {}s)",
        line.id,
        if line.pass { "PASS" } else { "FAIL" },
        line.detail,
        line.elapsed.as_secs_f64(),
        line.limit.as_secs()
    );
    line
}

fn base_solution(net: &Network) -> PowerFlowSolution {
    solve(net, &make_admittance_state(net, &net.default_gamma()).unwrap(), None).unwrap()
}

fn fd_suite() -> (bool, String) {
    let net = cases::case33bw();
    let b = bundle(&base_solution(&net), &net).unwrap();
    let cfg = FdConfig::default();
    let records = check_bundle(&net, &b, 20, 2024, &cfg).unwrap();
    let mut blocks: Vec<&str> = records.iter().map(|r| r.block.as_str()).collect();
    blocks.dedup();
    let worst = records.iter().map(|r| r.error).fold(0.0, f64::max);
    let failed = records.iter().filter(|r| !r.pass).count();
    let short = blocks.iter().filter(|blk| records.iter().filter(|r| r.block == **blk).count() < 20).count();
    (
        failed == 0 && short == 0,
        format!(
            "{} blocks x 20 probes, h = {:e}, max error {worst:.2e} (gate rel {:e} / abs {:e}), {failed} failed",
            blocks.len(),
            cfg.h,
            cfg.rel_tol,
            cfg.abs_tol
        ),
    )
}

fn implicit_ratio() -> (bool, String) {
    let net = cases::case33bw().with_all_in_service_controllable(0.5, 1.5).unwrap();
    let model = linearize(&bundle(&base_solution(&net), &net).unwrap(), &net);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dir: Vec<f64> = net.controllable().iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let errors: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&step| {
            let gamma: Vec<Complex64> = dir.iter().map(|d| C(1.0 + step * d)).collect();
            let (v_hat, _) = predict(&model, &net, &gamma).unwrap();
            let v_ac = solve(&net, &make_admittance_state(&net, &gamma).unwrap(), None).unwrap().v;
            l2_norm(&v_hat.iter().zip(&v_ac).map(|(a, b)| a - b).collect::<Vec<_>>())
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    (
        ratios.iter().all(|&r| r >= 3.0),
        format!("errors {:.3e} {:.3e} {:.3e} {:.3e}, ratios {:.2} {:.2} {:.2} (gate >= 3)",
            errors[0], errors[1], errors[2], errors[3], ratios[0], ratios[1], ratios[2]),
    )
}

fn five_bus_path() -> (bool, String) {
    let net = cases::five_bus_switchable().unwrap();
    let ps = path_sweep(&net, &[C(1.0), C(0.0)], &[C(0.0), C(1.0)], 21).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = ps.to_csv(&net);
    std::fs::write(dir.path().join("five_bus_path.csv"), &csv).unwrap();
    let rows = csv.lines().count() - 1;
    let (vb, vm) = ps.max_voltage_errors();
    let (lb, lm) = ps.max_current_errors();
    (
        vm < vb && lm < lb && ps.t.len() == 21,
        format!("21 steps ({rows} csv rows); max |v err| midpoint {vm:.3e} < base {vb:.3e}; max |l err| midpoint {lm:.3e} < base {lb:.3e}"),
    )
}

fn powerset_sweep() -> (bool, String) {
    let net = cases::with_switchable_ties(&cases::case33bw()).unwrap();
    let lines = cases::open_branches(&net);
    let scenarios = powerset_scenarios(&net, &lines).unwrap();
    let rows = predictor::sweep(&net, &scenarios, &[Strategy::None, Strategy::Midpoint]).unwrap();
    let (wins, total) = predictor::win_rate(&rows, Strategy::Midpoint, Strategy::None);
    let rate = wins as f64 / total as f64;
    (
        scenarios.len() == 32 && total > 0 && rate >= 0.9,
        format!("{} scenarios, midpoint beats none in {wins}/{total} convergent ({:.1}%, gate >= 90%)", scenarios.len(), 100.0 * rate),
    )
}

struct HostingRun {
    increase_pct: f64,
    err: f64,
    first_err: f64,
    feasible: bool,
    monotone: bool,
}

/// LP objectives at one linearization point for growing gamma boxes.
fn lp_monotone(net: &Network, pcts: &[f64]) -> bool {
    let mut last = f64::NEG_INFINITY;
    for &pct in pcts {
        let (n, spec) = hosting_capacity_recipe(net, pct, 1).unwrap();
        let b = bundle(&base_solution(&n), &n).unwrap();
        let mut at: Vec<f64> = b.layout.active_rows.iter().map(|&i| n.p_inject(i)).collect();
        at.extend(b.layout.reactive_rows.iter().map(|&i| n.q_inject(i)));
        at.extend(n.controllable().iter().map(|_| 1.0));
        let lp = build_lp(&n, &spec, &b, &at);
        let res = lp_solve(&lp.c.iter().map(|v| -v).collect::<Vec<_>>(), &lp.a, &lp.b, &lp.bounds).unwrap();
        if res.status != LpStatus::Optimal {
            return false;
        }
        let obj = -res.objective;
        if obj < last - 1e-9 {
            return false;
        }
        last = obj;
    }
    true
}

fn hosting(net: &Network, pct: f64) -> HostingRun {
    let (n0, s0) = hosting_capacity_recipe(net, 0.0, 10).unwrap();
    let base = control::solve_vreg(&n0, &s0).unwrap();
    let (n1, s1) = hosting_capacity_recipe(net, pct, 10).unwrap();
    let wide = control::solve_vreg(&n1, &s1).unwrap();
    HostingRun {
        increase_pct: 100.0 * (wide.objective_mw / base.objective_mw - 1.0),
        err: wide.rel_l2_error,
        first_err: wide.history[0].rel_l2_error,
        feasible: base.feasible && wide.feasible,
        monotone: lp_monotone(net, &[0.0, pct / 2.0, pct]),
    }
}

fn hosting_capacity() -> (bool, String) {
    let cases_ = [
        ("case33bw", cases::case33bw(), 0.2, 7.50, 1.0),
        ("case69bw", cases::case69bw(), 0.4, 9.38, 1.5),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, net, pct, target, err_gate) in cases_ {
        let r = hosting(&net, pct);
        let in_band = (r.increase_pct - target).abs() <= 3.0 && 100.0 * r.err <= err_gate;
        let fallback = r.monotone && 100.0 * r.err <= 2.0;
        pass &= r.feasible && (in_band || fallback);
        parts.push(format!(
            "{name} +-{:.0}%: increase {:.2}% (band {:.2} +- 3), rel l2 {:.2e}% (gate {err_gate}%, first LP {:.2}%), monotone {}, {}",
            100.0 * pct,
            r.increase_pct,
            target,
            100.0 * r.err,
            100.0 * r.first_err,
            r.monotone,
            if in_band { "in band" } else if fallback { "fallback rule" } else { "out" }
        ));
    }
    (pass, parts.join("; "))
}

fn quickswitch() -> (bool, String) {
    let net = cases::case33bw();
    let ties = cases::open_branches(&net);
    let z0 = vec![false; ties.len()];
    let probe = SwitchProblem::new(&net, ties.clone(), 2, z0.clone(), vec![None; net.m()], (0.9, 1.1), 0).unwrap();
    let snet = probe.network(&net).unwrap();
    // Synthetic overload: trunk branches 3-4, 4-5, 5-6 rated at 80% of
    // their radial-base current.
    let base = probe.solve_config(&snet, &z0).unwrap();
    let u = current_values(&base.x, &base.w_at_solve, &IncidenceOperator::new(&snet));
    let mut cap = vec![None; net.m()];
    for (a, b) in [(3, 4), (4, 5), (5, 6)] {
        let k = net.branch_index(a, b).unwrap();
        cap[k] = Some(0.8 * u[k].norm());
    }
    let prob = SwitchProblem::new(&net, ties.clone(), 2, z0, cap.clone(), (0.9, 1.1), 11).unwrap();
    let r = quick_switch(&snet, &prob).unwrap();
    let z = r.z_star.clone().unwrap();

    let mut best = f64::INFINITY;
    let mut admissible = 0;
    for mask in 0..1u32 << ties.len() {
        let cand: Vec<bool> = (0..ties.len()).map(|i| mask >> i & 1 == 1).collect();
        if !prob.within_budget(&cand) || prob.islanded(&snet, &cand).unwrap() {
            continue;
        }
        let Ok(sol) = prob.solve_config(&snet, &cand) else { continue };
        if prob.violation(&snet, &sol) <= 1e-6 {
            admissible += 1;
            best = best.min(control::congestion(&snet, &sol, &cap));
        }
    }
    let connected = !prob.islanded(&snet, &z).unwrap();
    let verify = prob.solve_config(&snet, &z).unwrap();
    let ac_feasible = prob.violation(&snet, &verify) <= 1e-6;
    let ratio = r.objective_value / best;
    (
        r.feasible && ac_feasible && connected && prob.within_budget(&z) && ratio <= 1.1,
        format!(
            "closed {:?}, C = {:.4} vs brute-force optimum {:.4} over {admissible} admissible configs (ratio {:.3}, gate 1.10), AC-feasible {ac_feasible}, connected {connected}",
            z,
            r.objective_value,
            best,
            ratio
        ),
    )
}

fn golden() -> (bool, String) {
    let sol = base_solution(&cases::case33bw());
    let min = sol.v.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = 0.9130904793610559;
    ((min - reference).abs() <= 5e-4, format!("min |V| {min:.10} vs reference {reference:.10} (gate 5e-4)"))
}

fn structural() -> (bool, String) {
    let net = cases::case33bw();
    let sol = base_solution(&net);
    let op = IncidenceOperator::new(&net);
    let ast = &sol.w_at_solve;

    // Nodal-matrix and incidence representations of the injections.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut lemma = 0.0_f64;
    for trial in 0..3 {
        let x: Vec<Complex64> = if trial == 0 {
            sol.x.clone()
        } else {
            (0..net.n()).map(|_| Complex64::from_polar(rng.gen_range(0.9..1.1), rng.gen_range(-0.1..0.1))).collect()
        };
        let xv = DVector::from_column_slice(&x);
        let yx = assemble_y(&net, ast) * &xv;
        let fw = build_f(&x, &op) * DVector::from_vec(ast.w());
        for i in 0..net.n() {
            lemma = lemma.max((fw[i] - (x[i] * yx[i].conj()).conj()).norm());
        }
    }

    // General current and flow sensitivities against the shuntless formulas.
    let b = bundle(&sol, &net).unwrap();
    let (dx_dg, dx_db) = components(&b.dx_dw, &b.dx_dwbar).unwrap();
    let (du_dg, du_db) = components(&b.du_dw, &b.du_dwbar).unwrap();
    let (ds_dg, ds_db) = components(&b.dsfl_dw, &b.dsfl_dwbar).unwrap();
    let (bu_g, bu_b) = branch_current_components(&sol, &op, &dx_dg, &dx_db);
    let (fl_g, fl_b) = line_flow_components(&sol, &op, &dx_dg, &dx_db, &du_dg, &du_db);
    let (m, n) = (net.m(), net.n());
    let mut reduction = 0.0_f64;
    for c in 0..m + n {
        for e in 0..m {
            reduction = reduction
                .max((du_dg[(e, c)] - bu_g[(e, c)]).norm())
                .max((du_db[(e, c)] - bu_b[(e, c)]).norm())
                .max((ds_dg[(e, c)] - fl_g[(e, c)]).norm())
                .max((ds_db[(e, c)] - fl_b[(e, c)]).norm())
                .max((ds_dg[(m + n + e, c)] - fl_g[(m + e, c)]).norm())
                .max((ds_db[(m + n + e, c)] - fl_b[(m + e, c)]).norm());
        }
    }

    // Wirtinger round trip on the rectangular state sensitivities.
    let (rg, rb) = rect_components(&sol, &gridsens::sensitivity::voltage_sensitivities(&sol, &net).unwrap());
    let (dw, dwbar) = wirtinger_c(&rg, &rb).unwrap();
    let (g2, b2) = components(&dw, &dwbar).unwrap();
    let scale = rg.iter().chain(rb.iter()).map(|z| z.norm()).fold(0.0, f64::max);
    let complex_trip =
        (g2 - &rg).iter().chain((b2 - &rb).iter()).map(|z| z.norm()).fold(0.0, f64::max) / scale;
    // Real-valued functions (voltage magnitudes) round-trip bit for bit.
    let (vw, vwbar) = wirtinger(&b.kv_g, &b.kv_b).unwrap();
    let (vg2, vb2) = components(&vw, &vwbar).unwrap();
    let real_exact = vg2.iter().zip(b.kv_g.iter()).all(|(a, x)| a.re == *x && a.im == 0.0)
        && vb2.iter().zip(b.kv_b.iter()).all(|(a, x)| a.re == *x && a.im == 0.0);

    // No-load network: every sensitivity with respect to a branch is zero.
    let idle_net = net.with_scaled_loads(0.0);
    let idle_b = bundle(&base_solution(&idle_net), &idle_net).unwrap();
    let mut no_load = 0.0_f64;
    for blk in [&idle_b.kv_g, &idle_b.kv_b, &idle_b.kdelta_g, &idle_b.kdelta_b, &idle_b.kl_g, &idle_b.kl_b] {
        no_load = no_load.max(blk.columns(0, m).abs().max());
    }
    for blk in [&idle_b.dx_dw, &idle_b.du_dw, &idle_b.dsfl_dw] {
        no_load = no_load.max(blk.columns(0, m).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    // Power balance: every bus injection equals its outgoing flows, and the
    // scheduled injections are met.
    let s = injections(&sol.x, ast, &op);
    let flows = flow_values(&sol, &op);
    let mut balance = 0.0_f64;
    for i in 0..n {
        let mut out = flows[m + i];
        for (e, &(f, t)) in op.ends().iter().enumerate() {
            if f == i {
                out += flows[e];
            }
            if t == i {
                out += flows[m + n + e];
            }
        }
        balance = balance.max((s[i] - out).norm());
    }
    balance = balance.max(sol.mismatch_inf);

    let pass = lemma <= 1e-12 && reduction <= 1e-12 && real_exact && complex_trip <= 1e-15 && no_load <= 1e-12 && balance <= 1e-8;
    (
        pass,
        format!(
            "representation {lemma:.1e} (<= 1e-12), shuntless reduction {reduction:.1e} (<= 1e-12), Wirtinger round trip exact on real blocks {real_exact}, {complex_trip:.1e} relative on complex blocks (<= 1e-15), no-load {no_load:.1e}, power balance {balance:.1e} (<= 1e-8)"
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let lines = vec![
        timed(1, 30, fd_suite),
        timed(2, 10, implicit_ratio),
        timed(3, 5, five_bus_path),
        timed(4, 60, powerset_sweep),
        timed(5, 60, hosting_capacity),
        timed(6, 120, quickswitch),
        timed(7, 1, golden),
        timed(8, 30, structural),
    ];
    let failed: Vec<u8> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
