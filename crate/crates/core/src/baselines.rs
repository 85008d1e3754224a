//! Reference estimators: single-shot BP and least squares on the true support.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::isd_core::{RecoveryOutput, TerminationReason};
use crate::l1_solver::{least_squares, BpdnSolver, SolverParams};
use crate::pilot_system::{ColumnOrder, Measurement, SensingMatrix};

/// Genie knowledge of which blocks of `g` are nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleInfo {
    /// Sorted block indexes `l` in `0..L`.
    pub true_block_support: Vec<usize>,
}

/// One BPDN solve penalizing every entry.
pub fn bp_recover(
    theta: &SensingMatrix,
    y: &Measurement,
    delta: f64,
    params: &SolverParams,
) -> Result<RecoveryOutput> {
    let solver = BpdnSolver::new(&theta.entries, params.clone())?;
    bp_recover_with(&solver, y, delta)
}

/// [`bp_recover`] on a pre-factored solver.
pub fn bp_recover_with(solver: &BpdnSolver, y: &Measurement, delta: f64) -> Result<RecoveryOutput> {
    let n = solver.theta().ncols();
    let result = solver.solve(&y.y, &vec![true; n], delta)?;
    let final_support = (0..n).filter(|&k| result.g_hat[k].norm_sqr() > 0.0).collect();
    Ok(RecoveryOutput {
        g_hat: result.g_hat,
        final_support,
        iterations_used: 1,
        termination_reason: TerminationReason::SingleSolve,
        solver_converged: result.converged,
        support_history: Vec::new(),
    })
}

/// Least squares restricted to the columns of the true nonzero blocks.
///
/// Fails with [`Error::RankDeficient`] if those columns are not linearly
/// independent (e.g. `p < NT · |blocks|`).
pub fn oracle_ls(
    theta: &SensingMatrix,
    y: &Measurement,
    oracle: &OracleInfo,
) -> Result<RecoveryOutput> {
    if theta.order != ColumnOrder::Block {
        return Err(Error::Dimension(
            "oracle LS expects the sensing matrix in block column order".into(),
        ));
    }
    let nt = theta.n_antennas;
    if let Some(&l) = oracle.true_block_support.iter().find(|&&l| l >= theta.len_per_antenna) {
        return Err(Error::Dimension(format!(
            "block {l} is outside 0..{}",
            theta.len_per_antenna
        )));
    }
    let columns: Vec<usize> = oracle
        .true_block_support
        .iter()
        .flat_map(|&l| l * nt..(l + 1) * nt)
        .collect();
    let mut g_hat = DVector::zeros(theta.n_cols());
    if !columns.is_empty() {
        let sub = theta.entries.select_columns(&columns);
        let coef = least_squares(&sub, &y.y)?;
        for (&k, &c) in columns.iter().zip(coef.iter()) {
            g_hat[k] = c;
        }
    }
    Ok(RecoveryOutput {
        g_hat,
        final_support: columns,
        iterations_used: 1,
        termination_reason: TerminationReason::SingleSolve,
        solver_converged: true,
        support_history: Vec::new(),
    })
}
