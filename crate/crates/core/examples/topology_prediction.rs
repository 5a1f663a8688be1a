//! Moves the five-bus feeder from one radial configuration to the other and
//! compares linear predictions made at the start and at the midpoint.

use gridsens::predictor::path_sweep;
use num_complex::Complex64;

fn main() -> gridsens::Result<()> {
    let net = gridsens::cases::five_bus_switchable()?;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let ps = path_sweep(&net, &[one, zero], &[zero, one], 11)?;
    println!("{:>5} {:>10} {:>10} {:>10}", "t", "|V4| ac", "base", "midpoint");
    for s in 0..ps.t.len() {
        println!("{:>5.2} {:>10.6} {:>10.6} {:>10.6}", ps.t[s], ps.v_ac[s][3], ps.v_base[s][3], ps.v_mid[s][3]);
    }
    let (vb, vm) = ps.max_voltage_errors();
    let (lb, lm) = ps.max_current_errors();
    println!("max |V| error: base {vb:.2e}, midpoint {vm:.2e}");
    println!("max current error: base {lb:.2e}, midpoint {lm:.2e}");
    Ok(())
}
