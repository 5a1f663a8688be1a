//! Bundled test networks.

use crate::error::Result;
use crate::netmodel::{parse_case, Network};

pub const CASE33BW: &str = include_str!("../data/case33bw.m");
pub const CASE69BW: &str = include_str!("../data/case69bw.m");
pub const FIVE_BUS: &str = include_str!("../data/five_bus.m");

/// 33-bus radial feeder with its five normally-open tie lines.
pub fn case33bw() -> Network {
    parse_case(CASE33BW).expect("bundled case33bw parses")
}

/// 69-bus radial feeder.
pub fn case69bw() -> Network {
    parse_case(CASE69BW).expect("bundled case69bw parses")
}

/// 5-bus feeder whose branches 3-4 and 4-5 form the two radial options.
pub fn five_bus() -> Network {
    parse_case(FIVE_BUS).expect("bundled five_bus parses")
}

/// Branches that are out of service in the case file.
pub fn open_branches(net: &Network) -> Vec<usize> {
    (0..net.m()).filter(|&k| !net.branches()[k].in_service).collect()
}

/// `net` with its open branches marked controllable on `[0, 1]`.
pub fn with_switchable_ties(net: &Network) -> Result<Network> {
    let spec: Vec<_> = open_branches(net).into_iter().map(|k| (k, 0.0, 1.0)).collect();
    net.with_controllable(&spec)
}

/// The 5-bus network with both switches controllable on `[0, 1]`.
pub fn five_bus_switchable() -> Result<Network> {
    let net = five_bus();
    let k34 = net.branch_index(3, 4).expect("branch 3-4");
    let k45 = net.branch_index(4, 5).expect("branch 4-5");
    net.with_controllable(&[(k34, 0.0, 1.0), (k45, 0.0, 1.0)])
}

