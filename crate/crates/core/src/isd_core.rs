//! Iterative support detection, in block and scalar flavours.
//!
//! Each iteration solves a truncated BP with the current support unpenalized,
//! sorts the estimate's magnitudes, places a threshold at the first gap larger
//! than `τ = ‖g‖∞ / (L·NT)` and re-detects the support from scratch. The block
//! variant then keeps a block of `NT` indexes only when strictly more than half
//! of them were detected individually.
//!
//! Neither loop takes a sparsity level.

use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l1_solver::{AdmmState, BpdnSolver, SolverParams, SolverResult};
use crate::pilot_system::{ColumnOrder, Measurement, SensingMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsdParams {
    pub iteration_cap: usize,
    /// Multiplier applied to the default fidelity tolerance (see [`default_delta`]).
    pub delta_scale: f64,
    /// Start each truncated BP from the previous iteration's ADMM state.
    pub warm_start: bool,
    pub solver: SolverParams,
}

impl Default for IsdParams {
    fn default() -> Self {
        Self {
            iteration_cap: 12,
            delta_scale: 1.0,
            warm_start: true,
            solver: SolverParams::default(),
        }
    }
}

impl IsdParams {
    pub fn validate(&self) -> Result<()> {
        if self.iteration_cap == 0 {
            return Err(Error::Config("iteration_cap must be positive".into()));
        }
        if !(self.delta_scale >= 0.0 && self.delta_scale.is_finite()) {
            return Err(Error::Config("delta_scale must be finite and >= 0".into()));
        }
        self.solver.validate()
    }

    /// Fidelity tolerance for a measurement: `delta_scale · default_delta`.
    pub fn delta_for(&self, m: &Measurement) -> f64 {
        self.delta_scale * default_delta(m.noise_variance, m.y.len())
    }
}

/// `δ = √(σ² p) · (1 + 2/√p)`, and 0 for noiseless data.
pub fn default_delta(noise_variance: f64, n_pilots: usize) -> f64 {
    if noise_variance <= 0.0 || n_pilots == 0 {
        return 0.0;
    }
    let p = n_pilots as f64;
    (noise_variance * p).sqrt() * (1.0 + 2.0 / p.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// The detected support reached `NT·L − p` entries.
    SupportCap,
    /// The support repeated the previous iteration's support.
    SupportStable,
    /// No gap in the sorted magnitudes exceeded `τ`.
    NoJumpFound,
    IterationCap,
    /// Non-iterative estimators (BP, oracle LS).
    SingleSolve,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SupportCap => "support_cap",
            Self::SupportStable => "support_stable",
            Self::NoJumpFound => "no_jump_found",
            Self::IterationCap => "iteration_cap",
            Self::SingleSolve => "single_solve",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutput {
    /// Estimate in block order, length `NT·L`.
    pub g_hat: DVector<Complex64>,
    /// Sorted support detected in the last iteration.
    pub final_support: Vec<usize>,
    /// Number of truncated BP solves performed.
    pub iterations_used: usize,
    pub termination_reason: TerminationReason,
    /// False if any solve hit its iteration cap without converging.
    pub solver_converged: bool,
    /// Support detected after each solve, in order.
    pub support_history: Vec<Vec<usize>>,
}

/// Which support update follows thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportRule {
    /// Keep blocks with a strict majority of detected entries.
    BlockVote,
    /// Keep detected entries as they are (classical ISD).
    Scalar,
}

/// `‖v‖∞ / (L·NT)`.
pub fn jump_threshold(v: &DVector<Complex64>, len_per_antenna: usize, n_antennas: usize) -> f64 {
    let max = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    max / (len_per_antenna * n_antennas) as f64
}

/// Smallest `i` with `sorted[i+1] − sorted[i] > τ`.
pub fn first_significant_jump(sorted: &[f64], tau: f64) -> Option<usize> {
    let tau = tau.abs();
    sorted.windows(2).position(|w| w[1] - w[0] > tau)
}

/// Positions of `g` whose modulus strictly exceeds `eps`.
pub fn detect_support(g: &DVector<Complex64>, eps: f64) -> Vec<usize> {
    g.iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > eps)
        .map(|(k, _)| k)
        .collect()
}

/// Union of the blocks `{l·NT, …, l·NT + NT − 1}` holding strictly more than
/// `NT/2` indexes of `scalar_support`.
pub fn block_vote(scalar_support: &[usize], n_antennas: usize, len_per_antenna: usize) -> Vec<usize> {
    let mut counts = vec![0usize; len_per_antenna];
    for &k in scalar_support {
        let block = k / n_antennas;
        if block < len_per_antenna {
            counts[block] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        // count > NT/2  ⇔  2·count > NT
        .filter(|(_, &c)| 2 * c > n_antennas)
        .flat_map(|(l, _)| l * n_antennas..(l + 1) * n_antennas)
        .collect()
}

/// Thresholds chosen by one detection step.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub tau: f64,
    pub eps: f64,
    pub scalar_support: Vec<usize>,
    pub support: Vec<usize>,
}

/// Sort, jump search, thresholding and (optionally) the block vote.
///
/// Depends only on the current estimate. Returns `None` when no jump exceeds `τ`.
pub fn detect(
    g: &DVector<Complex64>,
    n_antennas: usize,
    len_per_antenna: usize,
    rule: SupportRule,
) -> Option<Detection> {
    let mut order: Vec<(usize, f64)> = g.iter().map(|c| c.norm()).enumerate().collect();
    // Stable: equal magnitudes stay in index order.
    order.sort_by(|a, b| a.1.total_cmp(&b.1));
    let sorted: Vec<f64> = order.iter().map(|&(_, m)| m).collect();
    let tau = jump_threshold(g, len_per_antenna, n_antennas);
    let i = first_significant_jump(&sorted, tau)?;
    let eps = sorted[i];
    let scalar_support = detect_support(g, eps);
    let support = match rule {
        SupportRule::BlockVote => block_vote(&scalar_support, n_antennas, len_per_antenna),
        SupportRule::Scalar => scalar_support.clone(),
    };
    Some(Detection {
        tau,
        eps,
        scalar_support,
        support,
    })
}

fn check_block_order(theta: &SensingMatrix) -> Result<()> {
    if theta.order != ColumnOrder::Block {
        return Err(Error::Dimension(
            "ISD expects the sensing matrix in block column order".into(),
        ));
    }
    Ok(())
}

/// Block-ISD recovery of the block-sparse channel from `y = Θ g + n`.
pub fn block_isd_recover(
    theta: &SensingMatrix,
    y: &Measurement,
    params: &IsdParams,
) -> Result<RecoveryOutput> {
    check_block_order(theta)?;
    params.validate()?;
    let solver = BpdnSolver::new(&theta.entries, params.solver.clone())?;
    run_isd(&solver, theta, y, params, SupportRule::BlockVote)
}

/// Classical ISD: the same loop without the block vote.
pub fn isd_recover(
    theta: &SensingMatrix,
    y: &Measurement,
    params: &IsdParams,
) -> Result<RecoveryOutput> {
    check_block_order(theta)?;
    params.validate()?;
    let solver = BpdnSolver::new(&theta.entries, params.solver.clone())?;
    run_isd(&solver, theta, y, params, SupportRule::Scalar)
}

/// The ISD loop on a pre-factored solver built from `theta.entries`.
pub fn run_isd(
    solver: &BpdnSolver,
    theta: &SensingMatrix,
    y: &Measurement,
    params: &IsdParams,
    rule: SupportRule,
) -> Result<RecoveryOutput> {
    check_block_order(theta)?;
    let n = theta.n_cols();
    let p = theta.n_rows();
    let (nt, l) = (theta.n_antennas, theta.len_per_antenna);
    let delta = params.delta_for(y);
    let support_cap = n.saturating_sub(p);

    let mut support: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut all_converged = true;
    let mut warm: Option<AdmmState> = None;
    let mut last: Option<SolverResult> = None;
    let mut iterations = 0;

    let reason = loop {
        // The first solve always runs, even when p ≥ NT·L makes the cap zero.
        if iterations > 0 {
            if support.len() >= support_cap {
                break TerminationReason::SupportCap;
            }
            if iterations >= params.iteration_cap {
                break TerminationReason::IterationCap;
            }
        }

        let mut penalized = vec![true; n];
        for &k in &support {
            penalized[k] = false;
        }
        let start = if params.warm_start { warm.as_ref() } else { None };
        let (result, state) = solver.solve_from(&y.y, &penalized, delta, start)?;
        iterations += 1;
        all_converged &= result.converged;
        warm = Some(state);

        let detection = detect(&result.g_hat, nt, l, rule);
        last = Some(result);
        let Some(detection) = detection else {
            break TerminationReason::NoJumpFound;
        };
        history.push(detection.support.clone());
        if detection.support == support {
            break TerminationReason::SupportStable;
        }
        support = detection.support;
    };

    let last = last.expect("at least one solve runs");
    Ok(RecoveryOutput {
        g_hat: last.g_hat,
        final_support: support,
        iterations_used: iterations,
        termination_reason: reason,
        solver_converged: all_converged,
        support_history: history,
    })
}
