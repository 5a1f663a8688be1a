//! Which line, made 10% stronger, lifts the weakest bus the most?

use gridsens::netmodel::{make_admittance_state, BusKind};
use gridsens::pfsolve::solve;
use gridsens::sensitivity::bundle;

fn main() -> gridsens::Result<()> {
    let net = gridsens::cases::case33bw();
    let sol = solve(&net, &make_admittance_state(&net, &net.default_gamma())?, None)?;
    let b = bundle(&sol, &net)?;
    let weakest = (0..net.n()).min_by(|&i, &j| sol.v[i].total_cmp(&sol.v[j])).unwrap();
    println!("weakest bus {} at {:.5} pu", net.buses()[weakest].id, sol.v[weakest]);

    // d|V|/d(gamma) for a line whose admittance is scaled by gamma.
    let mut effect: Vec<(usize, f64)> = (0..net.m())
        .filter(|&k| net.branches()[k].in_service)
        .map(|k| {
            let y = net.branches()[k].y_nominal();
            (k, b.kv_g[(weakest, k)] * y.re + b.kv_b[(weakest, k)] * y.im)
        })
        .collect();
    effect.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (k, d) in effect.iter().take(5) {
        println!("line {:>6}: +{:.5} pu for a 10% stronger line", net.branch_label(*k), 0.1 * d);
    }
    // Injection columns run over the PQ buses in order.
    let col = (0..net.n()).filter(|&i| net.kind(i) == BusKind::Pq).position(|i| i == weakest).unwrap();
    println!("reactive injection at that bus: d|V|/dq = {:.5} pu/pu", b.kv_q[(weakest, col)]);
    Ok(())
}
