//! Labeled matrix dumps of sensitivity blocks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SensitivityBundle;
use crate::linalg::RMatrix;
use crate::netmodel::Network;

/// Which parameter family to export.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wrt {
    Admittance,
    Injection,
    Both,
}

/// One block with row and column labels such as `bus:17:vm` or
/// `branch:12-13:g`. Values are in physical convention (radians for angles,
/// per-unit otherwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub name: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    fn new(name: &str, rows: Vec<String>, cols: Vec<String>, mat: &RMatrix) -> Self {
        let data = (0..mat.nrows()).map(|r| mat.row(r).iter().copied().collect()).collect();
        Self { name: name.to_string(), rows, cols, data }
    }

    /// Keeps only the listed columns.
    fn select_cols(mut self, keep: &[usize]) -> Self {
        self.cols = keep.iter().map(|&c| self.cols[c].clone()).collect();
        for row in &mut self.data {
            *row = keep.iter().map(|&c| row[c]).collect();
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for c in &self.cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.rows.iter().zip(&self.data) {
            out.push_str(label);
            for v in row {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }
}

fn bus_labels(net: &Network, what: &str, buses: impl Iterator<Item = usize>) -> Vec<String> {
    buses.map(|i| format!("bus:{}:{what}", net.buses()[i].id)).collect()
}

fn param_labels(net: &Network, what: &str) -> Vec<String> {
    let branches = (0..net.m()).map(|k| format!("branch:{}:{what}", net.branch_label(k)));
    let shunts = net.buses().iter().map(|b| format!("shunt:{}:{what}", b.id));
    branches.chain(shunts).collect()
}

fn current_labels(net: &Network) -> Vec<String> {
    let branches = (0..net.m()).map(|k| format!("branch:{}:l", net.branch_label(k)));
    let shunts = net.buses().iter().map(|b| format!("shunt:{}:l", b.id));
    branches.chain(shunts).collect()
}

/// Export blocks for `wrt`. With `include_open = false` the columns of
/// branches that are out of service in the case file are dropped.
pub fn export_blocks(
    bundle: &SensitivityBundle,
    net: &Network,
    wrt: Wrt,
    include_open: bool,
) -> Vec<LabeledMatrix> {
    let all = 0..net.n();
    let va = bus_labels(net, "va", all.clone());
    let vm = bus_labels(net, "vm", all);
    let g = param_labels(net, "g");
    let b = param_labels(net, "b");
    let p = bus_labels(net, "p", bundle.layout.active_rows.iter().copied());
    let q = bus_labels(net, "q", bundle.layout.reactive_rows.iter().copied());
    let keep: Vec<usize> = (0..net.m() + net.n())
        .filter(|&c| include_open || c >= net.m() || net.branches()[c].in_service)
        .collect();

    let mut out = Vec::new();
    if matches!(wrt, Wrt::Admittance | Wrt::Both) {
        out.push(LabeledMatrix::new("va_g", va.clone(), g.clone(), &bundle.kdelta_g));
        out.push(LabeledMatrix::new("va_b", va.clone(), b.clone(), &bundle.kdelta_b));
        out.push(LabeledMatrix::new("vm_g", vm.clone(), g.clone(), &bundle.kv_g));
        out.push(LabeledMatrix::new("vm_b", vm.clone(), b.clone(), &bundle.kv_b));
    }
    if matches!(wrt, Wrt::Injection | Wrt::Both) {
        out.push(LabeledMatrix::new("va_p", va.clone(), p.clone(), &bundle.kdelta_p));
        out.push(LabeledMatrix::new("va_q", va, q.clone(), &bundle.kdelta_q));
        out.push(LabeledMatrix::new("vm_p", vm.clone(), p.clone(), &bundle.kv_p));
        out.push(LabeledMatrix::new("vm_q", vm, q.clone(), &bundle.kv_q));
    }
    if wrt == Wrt::Both {
        let l = current_labels(net);
        out.push(LabeledMatrix::new("l_g", l.clone(), g, &bundle.kl_g));
        out.push(LabeledMatrix::new("l_b", l.clone(), b, &bundle.kl_b));
        out.push(LabeledMatrix::new("l_p", l.clone(), p, &bundle.kl_p));
        out.push(LabeledMatrix::new("l_q", l, q, &bundle.kl_q));
    }
    out.into_iter()
        .map(|lm| if lm.name.ends_with("_g") || lm.name.ends_with("_b") { lm.select_cols(&keep) } else { lm })
        .collect()
}
