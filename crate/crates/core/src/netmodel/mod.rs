//! Network data model: buses, branches, the admittance parameterization
//! and the incidence operators used to assemble the power-flow equations.
//!
//! Records keep the values exactly as read from the case file (MW, MVAr,
//! per-unit impedances) so that a parsed network can be written back out
//! without loss. Per-unit quantities used by the numerics are derived once
//! at construction and exposed through accessors.

mod admittance;
mod case;
mod incidence;
mod sidecar;

pub use admittance::{make_admittance_state, AdmittanceState};
pub use case::{parse_case, read_case, write_case};
pub use incidence::{assemble_y, build_f, IncidenceOperator};
pub use sidecar::{Controllable, Sidecar};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    /// MATPOWER bus type code.
    pub fn code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BusKind::Pq),
            2 => Some(BusKind::Pv),
            3 => Some(BusKind::Slack),
            _ => None,
        }
    }

    /// Slack and PV buses have a fixed voltage magnitude.
    pub fn is_voltage_controlled(self) -> bool {
        !matches!(self, BusKind::Pq)
    }
}

/// A bus record. Loads and shunts are in MW / MVAr (shunts at 1 pu voltage).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External (case-file) identifier.
    pub id: usize,
    pub kind: BusKind,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Internal bus index.
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub vg: f64,
    pub in_service: bool,
}

/// A series branch between two buses (`from < to` in internal ordering).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series resistance, per-unit.
    pub r: f64,
    /// Series reactance, per-unit.
    pub x: f64,
    /// Total line-charging susceptance, per-unit.
    pub b_charging: f64,
    /// MVA rating; 0 means unlimited.
    pub rate_a: f64,
    /// Whether the branch exists in the nominal topology.
    pub in_service: bool,
    pub controllable: bool,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Branch {
    /// Nominal series admittance `1 / (r + jx)`.
    pub fn y_nominal(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(self.r, self.x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    branches: Vec<Branch>,
    slack: usize,
}

impl Network {
    /// Validates the records and builds a network.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::Validation("baseMVA must be positive".into()));
        }
        if buses.is_empty() {
            return Err(Error::Validation("network has no buses".into()));
        }
        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(Error::Validation(format!(
                "exactly one slack bus required, found {}",
                slacks.len()
            )));
        }
        let n = buses.len();
        for g in &generators {
            if g.bus >= n {
                return Err(Error::Validation(format!("generator at unknown bus {}", g.bus)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (k, br) in branches.iter().enumerate() {
            if br.from >= n || br.to >= n {
                return Err(Error::Validation(format!("branch {} has an invalid endpoint", k + 1)));
            }
            if br.from >= br.to {
                return Err(Error::Validation(format!(
                    "branch {} must satisfy from < to (got {} -> {})",
                    k + 1,
                    buses[br.from].id,
                    buses[br.to].id
                )));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::Validation(format!("branch {} has zero impedance", k + 1)));
            }
            if br.gamma_min > br.gamma_max {
                return Err(Error::Validation(format!("branch {} has gamma_min > gamma_max", k + 1)));
            }
            if !seen.insert((br.from, br.to)) {
                return Err(Error::Validation(format!(
                    "duplicate branch {}-{}",
                    buses[br.from].id, buses[br.to].id
                )));
            }
        }
        let net = Self { base_mva, buses, generators, branches, slack: slacks[0] };
        for i in 0..n {
            if net.buses[i].kind.is_voltage_controlled() && !(net.v_setpoint(i) > 0.0) {
                return Err(Error::Validation(format!(
                    "voltage setpoint of bus {} must be positive",
                    net.buses[i].id
                )));
            }
        }
        let all: Vec<bool> = vec![true; net.m()];
        if net.unreachable_count(&all) > 0 {
            return Err(Error::Validation("network graph is not connected".into()));
        }
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn m(&self) -> usize {
        self.branches.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn kind(&self, bus: usize) -> BusKind {
        self.buses[bus].kind
    }

    /// Internal index of the bus with external id `id`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Index of the branch joining external bus ids `a` and `b` (either order).
    pub fn branch_index(&self, a: usize, b: usize) -> Option<usize> {
        let (i, j) = (self.bus_index(a)?, self.bus_index(b)?);
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.branches.iter().position(|br| br.from == i && br.to == j)
    }

    /// Indices of the controllable branches, in branch order.
    pub fn controllable(&self) -> Vec<usize> {
        (0..self.m()).filter(|&k| self.branches[k].controllable).collect()
    }

    /// Scheduled net active injection (generation minus load), per-unit.
    pub fn p_inject(&self, bus: usize) -> f64 {
        let gen: f64 = self
            .generators
            .iter()
            .filter(|g| g.in_service && g.bus == bus)
            .map(|g| g.pg)
            .sum();
        (gen - self.buses[bus].pd) / self.base_mva
    }

    /// Scheduled net reactive injection, per-unit.
    pub fn q_inject(&self, bus: usize) -> f64 {
        let gen: f64 = self
            .generators
            .iter()
            .filter(|g| g.in_service && g.bus == bus)
            .map(|g| g.qg)
            .sum();
        (gen - self.buses[bus].qd) / self.base_mva
    }

    /// Voltage magnitude setpoint: the first in-service generator's `Vg`,
    /// falling back to the bus table `Vm`.
    pub fn v_setpoint(&self, bus: usize) -> f64 {
        self.generators
            .iter()
            .find(|g| g.in_service && g.bus == bus)
            .map(|g| g.vg)
            .unwrap_or(self.buses[bus].vm)
    }

    /// Nodal shunt admittance in per-unit: the bus shunt plus half the
    /// charging susceptance of every in-service incident branch.
    pub fn shunt(&self, bus: usize) -> Complex64 {
        let b = &self.buses[bus];
        let mut y = Complex64::new(b.gs, b.bs) / self.base_mva;
        for br in &self.branches {
            if br.in_service && (br.from == bus || br.to == bus) {
                y.im += br.b_charging / 2.0;
            }
        }
        y
    }

    /// Current magnitude limit in per-unit (rating at 1 pu voltage).
    pub fn current_limit(&self, branch: usize) -> Option<f64> {
        let r = self.branches[branch].rate_a;
        (r > 0.0).then(|| r / self.base_mva)
    }

    /// Default control vector: `1` for in-service controllable branches,
    /// `0` for controllable branches that are open in the case file.
    pub fn default_gamma(&self) -> Vec<Complex64> {
        self.controllable()
            .into_iter()
            .map(|k| {
                if self.branches[k].in_service {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// Returns a copy with the listed branches marked controllable.
    pub fn with_controllable(&self, branches: &[(usize, f64, f64)]) -> Result<Network> {
        let mut net = self.clone();
        for &(k, lo, hi) in branches {
            if k >= net.m() {
                return Err(Error::Validation(format!("branch index {} out of range", k)));
            }
            if lo > hi {
                return Err(Error::Validation(format!("branch {} has gamma_min > gamma_max", k + 1)));
            }
            let br = &mut net.branches[k];
            br.controllable = true;
            br.gamma_min = lo;
            br.gamma_max = hi;
        }
        Ok(net)
    }

    /// Returns a copy with every in-service branch controllable on `[lo, hi]`
    /// and every other branch fixed.
    pub fn with_all_in_service_controllable(&self, lo: f64, hi: f64) -> Result<Network> {
        let mut net = self.clone();
        for br in &mut net.branches {
            br.controllable = br.in_service;
            br.gamma_min = lo;
            br.gamma_max = hi;
        }
        Ok(net)
    }

    /// Returns a copy with every bus load multiplied by `factor`.
    pub fn with_scaled_loads(&self, factor: f64) -> Network {
        let mut net = self.clone();
        for b in &mut net.buses {
            b.pd *= factor;
            b.qd *= factor;
        }
        net
    }

    /// Replaces the branch rating (MVA) of branch `k`.
    pub fn with_rating(&self, k: usize, rate_mva: f64) -> Network {
        let mut net = self.clone();
        net.branches[k].rate_a = rate_mva;
        net
    }

    /// Number of buses not reachable from the slack bus using branches
    /// flagged in `energized`.
    pub fn unreachable_count(&self, energized: &[bool]) -> usize {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for (k, br) in self.branches.iter().enumerate() {
            if energized[k] {
                adj[br.from].push(br.to);
                adj[br.to].push(br.from);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.slack];
        seen[self.slack] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().filter(|s| !**s).count()
    }

    /// Label of a branch using external ids, e.g. `12-13`.
    pub fn branch_label(&self, k: usize) -> String {
        let br = &self.branches[k];
        format!("{}-{}", self.buses[br.from].id, self.buses[br.to].id)
    }
}
