//! Continuous admittance control (LP-based voltage regulation) and discrete
//! line switching (greedy knapsack over implicit-function gradients).

pub mod lp;
pub mod switching;
pub mod vreg;

pub use lp::{lp_solve, LpResult, LpStatus};
pub use switching::{
    congestion, congestion_gradient, knapsack_relax, quick_switch, randomized_round,
    SwitchProblem, SwitchSpec,
};
pub use vreg::{build_lp, hosting_capacity_recipe, output_violation, solve_vreg, VregSpec};

use serde::{Deserialize, Serialize};

use crate::pfsolve::PowerFlowSolution;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// LP objective (regulation) or congestion (switching) after the step.
    pub objective: f64,
    /// Relative l2 error of the predicted PQ voltages against the AC solve.
    pub rel_l2_error: f64,
    pub max_violation: f64,
    /// Fraction of the proposed step that was taken.
    pub step: f64,
    pub lp_status: Option<LpStatus>,
    pub congestion: Option<f64>,
}

/// Outcome of a control run, verified by an AC solve at the returned
/// controls.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlResult {
    /// Multipliers of the controllable branches (relaxed values for
    /// switching runs are reported in `z_star`).
    pub gamma_star: Vec<f64>,
    /// Switch states over the switchable branches.
    pub z_star: Option<Vec<bool>>,
    /// Active injections of the non-slack buses, per-unit.
    pub p_star: Vec<f64>,
    /// Reactive injections of the PQ buses, per-unit.
    pub q_star: Vec<f64>,
    pub predicted_v: Vec<f64>,
    pub rel_l2_error: f64,
    pub objective_value: f64,
    pub objective_mw: f64,
    /// True only when the AC solution meets every output bound.
    pub feasible: bool,
    pub max_violation: f64,
    pub history: Vec<IterationRecord>,
    pub verified_solution: PowerFlowSolution,
}
