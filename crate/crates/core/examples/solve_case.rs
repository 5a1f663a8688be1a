//! Solves a bundled feeder (or a case file given as the first argument) and
//! prints the voltage profile.

use gridsens::netmodel::{make_admittance_state, read_case};
use gridsens::pfsolve::{export_solution, solve};

fn main() -> gridsens::Result<()> {
    let net = match std::env::args().nth(1) {
        Some(path) => read_case(path)?,
        None => gridsens::cases::case33bw(),
    };
    let sol = solve(&net, &make_admittance_state(&net, &net.default_gamma())?, None)?;
    println!("converged in {} iterations, mismatch history {:?}", sol.iterations, sol.mismatch_history);
    for b in export_solution(&net, &sol).bus {
        println!("bus {:>3}  |V| = {:.6}  angle = {:>8.4} deg", b.id, b.vm, b.va_deg);
    }
    Ok(())
}
