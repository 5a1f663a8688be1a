//! Spot-checks analytic sensitivities of the 69-bus feeder against central
//! differences.

use gridsens::fdoracle::{check_bundle, FdConfig};
use gridsens::netmodel::make_admittance_state;
use gridsens::pfsolve::solve;
use gridsens::sensitivity::bundle;

fn main() -> gridsens::Result<()> {
    let net = gridsens::cases::case69bw();
    let sol = solve(&net, &make_admittance_state(&net, &net.default_gamma())?, None)?;
    let b = bundle(&sol, &net)?;
    let records = check_bundle(&net, &b, 5, 42, &FdConfig::default())?;
    let mut blocks: Vec<&str> = records.iter().map(|r| r.block.as_str()).collect();
    blocks.dedup();
    for name in blocks {
        let worst = records.iter().filter(|r| r.block == name).map(|r| r.error).fold(0.0, f64::max);
        println!("{name:>12}: worst error {worst:.2e}");
    }
    let failed = records.iter().filter(|r| !r.pass).count();
    println!("{} probes, {failed} failed", records.len());
    Ok(())
}
