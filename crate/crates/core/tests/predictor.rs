use gridsens::cases;
use gridsens::netmodel::{make_admittance_state, Network};
use gridsens::pfsolve::solve;
use gridsens::predictor::{
    endpoints_average_gamma, linearize, path_sweep, powerset_scenarios, predict, predict_scenarios, predict_weights,
    predictions_csv, scenarios_from_json, sweep, sweep_csv, win_rate, RowStatus, Scenario, Strategy, SweepRow,
};
use gridsens::sensitivity::bundle;
use gridsens::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn ties33() -> Network {
    cases::with_switchable_ties(&cases::case33bw()).unwrap()
}

fn row(id: &str, strategy: Strategy, err: f64) -> SweepRow {
    SweepRow {
        scenario_id: id.into(),
        strategy,
        rel_err_l2: err,
        max_abs_err: err,
        ac_iterations: 3,
        status: RowStatus::Ok,
    }
}

#[test]
fn zero_step_prediction_is_exact() {
    let net = ties33();
    let gamma = net.default_gamma();
    let sol = solve(&net, &make_admittance_state(&net, &gamma).unwrap(), None).unwrap();
    let model = linearize(&bundle(&sol, &net).unwrap(), &net);
    let (v, l) = predict(&model, &net, &gamma).unwrap();
    assert_eq!(v, sol.v);
    assert_eq!(l, model.l0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prediction_is_affine_in_the_step(
        d in proptest::collection::vec(-0.5f64..0.5, 5),
        a in -2.0f64..2.0,
    ) {
        let net = cases::case33bw();
        let k: Vec<usize> = (0..5).map(|i| 4 * i + 1).collect();
        let net = net.with_controllable(&k.iter().map(|&k| (k, 0.0, 2.0)).collect::<Vec<_>>()).unwrap();
        let sol = solve(&net, &make_admittance_state(&net, &net.default_gamma()).unwrap(), None).unwrap();
        let model = linearize(&bundle(&sol, &net).unwrap(), &net);
        let g1: Vec<Complex64> = d.iter().map(|x| c(1.0 + x)).collect();
        let ga: Vec<Complex64> = d.iter().map(|x| c(1.0 + a * x)).collect();
        let (v1, _) = predict(&model, &net, &g1).unwrap();
        let (va, _) = predict(&model, &net, &ga).unwrap();
        for i in 0..net.n() {
            let lhs = va[i] - model.v0[i];
            let rhs = a * (v1[i] - model.v0[i]);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }
}

#[test]
fn weight_form_and_gamma_form_agree() {
    let net = cases::five_bus_switchable().unwrap();
    let sol = solve(&net, &make_admittance_state(&net, &net.default_gamma()).unwrap(), None).unwrap();
    let model = linearize(&bundle(&sol, &net).unwrap(), &net);
    let gamma = vec![c(0.3), c(0.7)];
    let w = make_admittance_state(&net, &gamma).unwrap().w();
    assert_eq!(predict(&model, &net, &gamma).unwrap(), predict_weights(&model, &w));
    assert!(predict(&model, &net, &[c(0.3)]).is_err());
}

#[test]
fn powerset_of_three_lines_has_eight_scenarios() {
    let net = ties33();
    let lines = &cases::open_branches(&net)[..3];
    let sc = powerset_scenarios(&net, lines).unwrap();
    assert_eq!(sc.len(), 8);
    assert_eq!(sc[0].id, "000");
    assert_eq!(sc[5].id, "101");
    // Lines outside the set keep their default.
    assert!(sc.iter().all(|s| s.gamma[3] == c(0.0) && s.gamma[4] == c(0.0)));
    assert_eq!(sc[7].gamma[..3], [c(1.0), c(1.0), c(1.0)]);
    let not_ctrl = net.branch_index(1, 2).unwrap();
    assert!(matches!(powerset_scenarios(&net, &[not_ctrl]), Err(Error::Validation(_))));
}

#[test]
fn scenario_json_validation() {
    let net = ties33();
    assert!(matches!(scenarios_from_json(&net, "[]"), Err(Error::Validation(_))));
    let sc = scenarios_from_json(&net, r#"[{"id": "a", "gamma": [{"from": 8, "to": 21, "re": 1}]}]"#).unwrap();
    let k = net.branch_index(8, 21).unwrap();
    let pos = net.controllable().iter().position(|&c| c == k).unwrap();
    assert_eq!(sc[0].gamma[pos], c(1.0));
    assert_eq!(sc[0].gamma.iter().filter(|g| g.re == 1.0).count(), 1);
    let unknown = scenarios_from_json(&net, r#"[{"id": "a", "gamma": [{"from": 1, "to": 33, "re": 1}]}]"#);
    assert!(matches!(unknown, Err(Error::Validation(_))));
    let fixed = scenarios_from_json(&net, r#"[{"id": "a", "gamma": [{"from": 1, "to": 2, "re": 1}]}]"#);
    assert!(matches!(fixed, Err(Error::Validation(_))));
    assert!(scenarios_from_json(&net, "{").is_err());
}

#[test]
fn win_rate_counts_zero_error_ties_as_wins() {
    let rows = vec![
        row("a", Strategy::None, 0.0),
        row("a", Strategy::Midpoint, 0.0),
        row("b", Strategy::None, 1e-3),
        row("b", Strategy::Midpoint, 1e-4),
        row("c", Strategy::None, 1e-3),
        row("c", Strategy::Midpoint, 1e-3),
        row("d", Strategy::None, f64::NAN),
        row("d", Strategy::Midpoint, f64::NAN),
    ];
    assert_eq!(win_rate(&rows, Strategy::Midpoint, Strategy::None), (2, 3));
}

#[test]
fn islanded_scenarios_are_reported_not_fatal() {
    let net = cases::five_bus_switchable().unwrap();
    let sc = powerset_scenarios(&net, &net.controllable()).unwrap();
    let strategies = [Strategy::None, Strategy::Base, Strategy::Midpoint];
    let rows = sweep(&net, &sc, &strategies).unwrap();
    assert_eq!(rows.len(), 4 * 3);
    // "00": both switches open strands bus 4.
    for r in rows.iter().filter(|r| r.scenario_id == "00") {
        assert_eq!(r.status, RowStatus::Islanded);
        assert!(r.rel_err_l2.is_nan());
    }
    assert!(rows.iter().filter(|r| r.scenario_id != "00").all(|r| r.rel_err_l2.is_finite()));
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with('#'));
    assert!(csv.contains("00,none,NaN,NaN,0,islanded"));
}

#[test]
fn sweep_rejects_bad_input() {
    let net = ties33();
    assert!(matches!(sweep(&net, &[], &[Strategy::None]), Err(Error::Validation(_))));
    let short = Scenario { id: "x".into(), gamma: vec![c(1.0)] };
    assert!(matches!(sweep(&net, &[short], &[Strategy::None]), Err(Error::Dimension(_))));
}

#[test]
fn endpoints_average_is_the_middle_of_the_bounds() {
    let net = ties33();
    assert!(endpoints_average_gamma(&net).iter().all(|g| *g == c(0.5)));
}

#[test]
fn predict_scenarios_strategies() {
    let net = ties33();
    let lines = &cases::open_branches(&net)[..2];
    let sc = powerset_scenarios(&net, lines).unwrap();
    let none = predict_scenarios(&net, &sc, Strategy::None).unwrap();
    assert!(none.windows(2).all(|p| p[0].v_hat == p[1].v_hat));
    let base = predict_scenarios(&net, &sc, Strategy::Base).unwrap();
    // The all-open scenario is the base point itself.
    assert_eq!(base[0].v_hat, none[0].v_hat);
    assert_ne!(base[3].v_hat, none[3].v_hat);
    let mid = predict_scenarios(&net, &sc, Strategy::Midpoint).unwrap();
    assert!(mid.iter().all(|p| !p.fallback));
    let csv = predictions_csv(&net, &mid);
    assert!(csv.starts_with("scenario_id,strategy,kind,index,predicted,fallback\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * (net.n() + net.m()));
    assert!(predict_scenarios(&net, &[], Strategy::Base).is_err());
}

#[test]
fn averaging_strategies_share_one_model() {
    let net = ties33();
    let sc = powerset_scenarios(&net, &cases::open_branches(&net)[..2]).unwrap();
    for s in [Strategy::AllAverage, Strategy::EndpointsAverage] {
        let p = predict_scenarios(&net, &sc, s).unwrap();
        // All scenarios are predicted from the same point, so the prediction
        // is affine in gamma: p(11) - p(10) = p(01) - p(00).
        for i in 0..net.n() {
            let d1 = p[3].v_hat[i] - p[1].v_hat[i];
            let d2 = p[2].v_hat[i] - p[0].v_hat[i];
            assert!((d1 - d2).abs() <= 1e-12);
        }
    }
}

#[test]
fn path_sweep_is_exact_at_its_linearization_points() {
    let net = cases::five_bus_switchable().unwrap();
    let ps = path_sweep(&net, &[c(1.0), c(0.0)], &[c(0.0), c(1.0)], 3).unwrap();
    assert_eq!(ps.t, [0.0, 0.5, 1.0]);
    for i in 0..net.n() {
        assert!((ps.v_base[0][i] - ps.v_ac[0][i]).abs() <= 1e-12);
        assert!((ps.v_mid[1][i] - ps.v_ac[1][i]).abs() <= 1e-12);
    }
    let (vb, vm) = ps.max_voltage_errors();
    assert!(vm < vb);
    assert!(path_sweep(&net, &[c(1.0), c(0.0)], &[c(0.0), c(1.0)], 1).is_err());
}
