//! Controllable-line sidecar file:
//! `{"controllable": [{"from": i, "to": j, "gamma_min": a, "gamma_max": b}, ...]}`
//! with external bus ids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Controllable {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub gamma_min: f64,
    #[serde(default = "one")]
    pub gamma_max: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub controllable: Vec<Controllable>,
}

impl Sidecar {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Marks the listed branches controllable on a copy of `net`.
    pub fn apply(&self, net: &Network) -> Result<Network> {
        let mut marks = Vec::with_capacity(self.controllable.len());
        for c in &self.controllable {
            let k = net.branch_index(c.from, c.to).ok_or_else(|| {
                Error::Validation(format!("sidecar names unknown branch {}-{}", c.from, c.to))
            })?;
            marks.push((k, c.gamma_min, c.gamma_max));
        }
        net.with_controllable(&marks)
    }

    /// Sidecar describing the controllable branches of `net`.
    pub fn from_network(net: &Network) -> Self {
        let controllable = net
            .controllable()
            .into_iter()
            .map(|k| {
                let br = &net.branches()[k];
                Controllable {
                    from: net.buses()[br.from].id,
                    to: net.buses()[br.to].id,
                    gamma_min: br.gamma_min,
                    gamma_max: br.gamma_max,
                }
            })
            .collect();
        Self { controllable }
    }
}
