use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

/// Admittance weights of every branch and shunt for one control setting.
///
/// The full weight vector is ordered as the branch list followed by the
/// bus list (`w = [w_branch; w_shunt]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceState {
    /// Multipliers for the controllable branches, in branch order.
    pub gamma: Vec<Complex64>,
    pub w_branch: Vec<Complex64>,
    pub w_shunt: Vec<Complex64>,
    /// Positions in `gamma` whose magnitude lies outside the branch's
    /// declared bounds. Informational only.
    pub out_of_bounds: Vec<usize>,
}

impl AdmittanceState {
    pub fn len(&self) -> usize {
        self.w_branch.len() + self.w_shunt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenated weight vector.
    pub fn w(&self) -> Vec<Complex64> {
        self.w_branch.iter().chain(&self.w_shunt).copied().collect()
    }

    pub fn weight(&self, col: usize) -> Complex64 {
        let m = self.w_branch.len();
        if col < m {
            self.w_branch[col]
        } else {
            self.w_shunt[col - m]
        }
    }

    /// Copy with the weight at column `col` shifted by `delta`. The `gamma`
    /// record is left untouched, so the result is a raw parameter probe.
    pub fn perturbed(&self, col: usize, delta: Complex64) -> AdmittanceState {
        let mut out = self.clone();
        let m = out.w_branch.len();
        if col < m {
            out.w_branch[col] += delta;
        } else {
            out.w_shunt[col - m] += delta;
        }
        out
    }

    /// Builds a state directly from a weight vector.
    pub fn from_weights(net: &Network, w: &[Complex64]) -> Result<Self> {
        if w.len() != net.m() + net.n() {
            return Err(Error::Dimension(format!(
                "weight vector has {} entries, expected {}",
                w.len(),
                net.m() + net.n()
            )));
        }
        let gamma = net
            .controllable()
            .iter()
            .map(|&k| {
                let y = net.branches()[k].y_nominal();
                w[k] / y
            })
            .collect();
        Ok(Self {
            gamma,
            w_branch: w[..net.m()].to_vec(),
            w_shunt: w[net.m()..].to_vec(),
            out_of_bounds: Vec::new(),
        })
    }

    /// Whether branch `k` carries a nonzero weight.
    pub fn energized(&self) -> Vec<bool> {
        self.w_branch.iter().map(|w| w.norm() > 0.0).collect()
    }
}

/// Applies the admittance parameterization: controllable branches get
/// `gamma * y_nominal`, fixed in-service branches keep `y_nominal`, fixed
/// out-of-service branches get zero. Shunt weights are the nodal shunts.
pub fn make_admittance_state(net: &Network, gamma: &[Complex64]) -> Result<AdmittanceState> {
    let controllable = net.controllable();
    if gamma.len() != controllable.len() {
        return Err(Error::Dimension(format!(
            "gamma has {} entries but the network has {} controllable branches",
            gamma.len(),
            controllable.len()
        )));
    }
    let mut w_branch: Vec<Complex64> = net
        .branches()
        .iter()
        .map(|br| if br.in_service { br.y_nominal() } else { Complex64::new(0.0, 0.0) })
        .collect();
    let mut out_of_bounds = Vec::new();
    for (pos, (&k, &g)) in controllable.iter().zip(gamma).enumerate() {
        let br = &net.branches()[k];
        w_branch[k] = g * br.y_nominal();
        let mag = g.norm();
        if mag < br.gamma_min - 1e-12 || mag > br.gamma_max + 1e-12 {
            out_of_bounds.push(pos);
        }
    }
    if !out_of_bounds.is_empty() {
        log::warn!("{} gamma entries lie outside their declared bounds", out_of_bounds.len());
    }
    let w_shunt = (0..net.n()).map(|i| net.shunt(i)).collect();
    Ok(AdmittanceState { gamma: gamma.to_vec(), w_branch, w_shunt, out_of_bounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{parse_case, Sidecar};

    fn net() -> Network {
        let net = parse_case(
            "mpc.baseMVA = 1;\nmpc.bus = [1 3 0 0 0 0 1; 2 1 0 0 0 0.5 1; 3 1 0 0 0 0 1];\n\
             mpc.branch = [1 2 0.009900990099009901 0.09900990099009901 0 0 1; 2 3 0 0.1 0 0 1];\n",
        )
        .unwrap();
        Sidecar::from_json(r#"{"controllable":[{"from":1,"to":2,"gamma_min":0,"gamma_max":1}]}"#)
            .unwrap()
            .apply(&net)
            .unwrap()
    }

    #[test]
    fn unit_gamma_is_nominal() {
        let net = net();
        let ast = make_admittance_state(&net, &[Complex64::new(1.0, 0.0)]).unwrap();
        for (w, br) in ast.w_branch.iter().zip(net.branches()) {
            assert_eq!(*w, br.y_nominal());
        }
        assert_eq!(ast.w_shunt[1], Complex64::new(0.0, 0.5));
    }

    #[test]
    fn zero_gamma_opens_the_line() {
        let net = net();
        let ast = make_admittance_state(&net, &[Complex64::new(0.0, 0.0)]).unwrap();
        assert_eq!(ast.w_branch[0], Complex64::new(0.0, 0.0));
        assert_eq!(ast.w_branch[1], net.branches()[1].y_nominal());
    }

    #[test]
    fn half_gamma_scales_admittance() {
        let net = net();
        let ast = make_admittance_state(&net, &[Complex64::new(0.5, 0.0)]).unwrap();
        assert!((net.branches()[0].y_nominal() - Complex64::new(1.0, -10.0)).norm() < 1e-12);
        assert!((ast.w_branch[0] - Complex64::new(0.5, -5.0)).norm() < 1e-12);
    }

    #[test]
    fn length_mismatch_and_bounds_flag() {
        let net = net();
        assert!(make_admittance_state(&net, &[]).is_err());
        let ast = make_admittance_state(&net, &[Complex64::new(1.5, 0.0)]).unwrap();
        assert_eq!(ast.out_of_bounds, vec![0]);
    }
}
