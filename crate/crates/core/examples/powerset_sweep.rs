//! Every open/closed combination of the five tie switches of the 33-bus
//! feeder, predicted from different linearization points.

use gridsens::cases;
use gridsens::predictor::{powerset_scenarios, sweep, win_rate, Strategy};

fn main() -> gridsens::Result<()> {
    let net = cases::with_switchable_ties(&cases::case33bw())?;
    let scenarios = powerset_scenarios(&net, &cases::open_branches(&net))?;
    let strategies = [Strategy::None, Strategy::Base, Strategy::Midpoint, Strategy::AllAverage, Strategy::EndpointsAverage];
    let rows = sweep(&net, &scenarios, &strategies)?;
    for &s in &strategies {
        let errs: Vec<f64> = rows.iter().filter(|r| r.strategy == s).map(|r| r.rel_err_l2).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let worst = errs.iter().copied().fold(0.0, f64::max);
        print!("{:>18}: mean rel error {mean:.3e}, worst {worst:.3e}", s.name());
        if s != Strategy::None {
            let (w, t) = win_rate(&rows, s, Strategy::None);
            print!(", beats no prediction in {w}/{t}");
        }
        println!();
    }
    Ok(())
}
