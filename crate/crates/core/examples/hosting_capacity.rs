//! Extra active power the 33-bus feeder can host when line admittances may
//! move by up to 20%, compared with fixed lines.

use gridsens::control::{hosting_capacity_recipe, solve_vreg};

fn main() -> gridsens::Result<()> {
    let net = gridsens::cases::case33bw();
    let (fixed_net, fixed) = hosting_capacity_recipe(&net, 0.0, 10)?;
    let (wide_net, wide) = hosting_capacity_recipe(&net, 0.2, 10)?;
    let base = solve_vreg(&fixed_net, &fixed)?;
    let res = solve_vreg(&wide_net, &wide)?;
    for h in &res.history {
        println!(
            "iteration {}: objective {:.6} pu, prediction error {:.2e}, violation {:.2e}, step {}",
            h.iteration, h.objective, h.rel_l2_error, h.max_violation, h.step
        );
    }
    println!("fixed lines: {:.4} MW", base.objective_mw);
    println!("controllable lines: {:.4} MW ({:+.2}%)", res.objective_mw, 100.0 * (res.objective_mw / base.objective_mw - 1.0));
    println!("verified feasible: {}", res.feasible);
    Ok(())
}
