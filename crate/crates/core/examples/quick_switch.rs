//! Overloads the head of the 33-bus feeder and lets the greedy switching
//! loop close tie lines to relieve it.

use gridsens::cases;
use gridsens::control::{congestion, quick_switch, SwitchProblem};

fn main() -> gridsens::Result<()> {
    let net = cases::case33bw();
    let ties = cases::open_branches(&net);
    let mut capacity = vec![None; net.m()];
    for (f, t) in [(2, 3), (3, 4), (4, 5)] {
        capacity[net.branch_index(f, t).unwrap()] = Some(0.31);
    }
    let prob = SwitchProblem::new(&net, ties.clone(), 2, vec![false; ties.len()], capacity, (0.9, 1.1), 1)?;
    let ctrl = prob.network(&net)?;
    let start = prob.solve_config(&ctrl, &prob.z0)?;
    println!("start: congestion {:.4}, violation {:.4}", congestion(&ctrl, &start, &prob.capacity), prob.violation(&ctrl, &start));
    let res = quick_switch(&ctrl, &prob)?;
    let z = res.z_star.as_ref().unwrap();
    for (k, on) in ties.iter().zip(z) {
        println!("tie {:>6}: {}", net.branch_label(*k), if *on { "closed" } else { "open" });
    }
    println!("end: congestion {:.4}, violation {:.4}, feasible {}", res.objective_value, res.max_violation, res.feasible);
    Ok(())
}
