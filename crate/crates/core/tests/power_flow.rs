use gridsens::cases;
use gridsens::netmodel::{make_admittance_state, parse_case, read_case, write_case, Network, Sidecar};
use gridsens::pfsolve::{export_solution, solve, PowerFlowSolution};
use gridsens::Error;

fn solved(net: &Network) -> PowerFlowSolution {
    solve(net, &make_admittance_state(net, &net.default_gamma()).unwrap(), None).unwrap()
}

fn min_vm(sol: &PowerFlowSolution) -> (usize, f64) {
    sol.v.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a })
}

#[test]
fn case33bw_matches_independent_solver() {
    let sol = solved(&cases::case33bw());
    let (bus, v) = min_vm(&sol);
    assert_eq!(bus, 17);
    assert!((v - 0.9130904793610559).abs() <= 5e-4);
    // Same Newton method, same data: agreement is far tighter than the gate.
    assert!((v - 0.9130904793610559).abs() <= 1e-8);
}

#[test]
fn case69bw_minimum_voltage() {
    let sol = solved(&cases::case69bw());
    let (bus, v) = min_vm(&sol);
    assert_eq!(bus, 64);
    assert!((v - 0.90919).abs() <= 5e-4, "{v}");
}

#[test]
fn two_bus_matches_closed_form() {
    // |V2|^4 + (2(PR + QX) - 1)|V2|^2 + |Z|^2 |S|^2 = 0 for a load S at the
    // end of a line Z fed at 1 pu.
    let (r, x, p, q): (f64, f64, f64, f64) = (0.02, 0.04, 0.3, 0.15);
    let net = parse_case(&format!(
        "mpc.baseMVA = 10;\nmpc.bus = [1 3 0 0 0 0 1; 2 1 {} {} 0 0 1];\nmpc.gen = [1 0 0 1];\n\
         mpc.branch = [1 2 {r} {x} 0 0 1];\n",
        p * 10.0,
        q * 10.0
    ))
    .unwrap();
    let b = 2.0 * (p * r + q * x) - 1.0;
    let c = (r * r + x * x) * (p * p + q * q);
    let v2 = ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt();
    let sol = solved(&net);
    assert!((sol.v[1] - v2).abs() <= 1e-10, "{} vs {v2}", sol.v[1]);
}

#[test]
fn newton_converges_quadratically() {
    let sol = solved(&cases::case69bw());
    let h = &sol.mismatch_history;
    assert!(sol.iterations <= 6);
    // Below eps * max|y| the mismatch is round-off, not Newton error.
    let ymax = sol.w_at_solve.w_branch.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let floor = 10.0 * f64::EPSILON * ymax;
    for k in 1..h.len() - 1 {
        if h[k] < 1e-2 && h[k + 1] > floor {
            assert!(h[k + 1] <= 10.0 * h[k] * h[k], "{h:?}");
        }
    }
}

#[test]
fn warm_start_at_solution_takes_no_step() {
    let net = cases::case33bw();
    let sol = solved(&net);
    let again = solve(&net, &sol.w_at_solve, Some(&sol.state())).unwrap();
    assert_eq!(again.iterations, 0);
    assert_eq!(again.v, sol.v);
}

#[test]
fn solves_are_bit_identical() {
    let net = cases::case69bw();
    let (a, b) = (solved(&net), solved(&net));
    assert_eq!(a.v.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.v.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn export_has_one_record_per_bus() {
    let net = cases::case33bw();
    let e = export_solution(&net, &solved(&net));
    assert_eq!(e.bus.len(), 33);
    assert_eq!(e.bus[0].id, 1);
    // Slack supplies load plus losses: 3.715 MW of load, 0.2027 MW lost.
    assert!((e.bus[0].p * net.base_mva - 3.9177).abs() < 1e-3);
    let load: f64 = e.bus[1..].iter().map(|b| b.p).sum();
    assert!((load * net.base_mva + 3.715).abs() < 1e-6);
}

#[test]
fn opening_a_feeder_branch_islands() {
    let net = cases::case33bw();
    let k = net.branch_index(17, 18).unwrap();
    let sidecar = Sidecar::from_json(r#"{"controllable": [{"from": 17, "to": 18}]}"#).unwrap();
    let ctrl = sidecar.apply(&net).unwrap();
    assert_eq!(ctrl.controllable(), vec![k]);
    let err = solve(&ctrl, &make_admittance_state(&ctrl, &[0.0.into()]).unwrap(), None).unwrap_err();
    assert!(matches!(err, Error::Islanded { unreachable: 1 }));
}

#[test]
fn closing_a_tie_keeps_the_network_solvable() {
    let net = cases::with_switchable_ties(&cases::case33bw()).unwrap();
    let mut gamma = net.default_gamma();
    gamma[3] = 1.0.into();
    let sol = solve(&net, &make_admittance_state(&net, &gamma).unwrap(), None).unwrap();
    assert!(min_vm(&sol).1 > 0.9130904793610559);
}

#[test]
fn case_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case69.m");
    let net = cases::case69bw();
    std::fs::write(&path, write_case(&net, "case69")).unwrap();
    let back = read_case(&path).unwrap();
    assert_eq!(back, net);
    assert!(matches!(read_case(dir.path().join("missing.m")), Err(Error::Io(_))));
}
