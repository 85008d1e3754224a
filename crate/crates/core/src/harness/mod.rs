//! Monte-Carlo NMSE-versus-SNR experiments.
//!
//! A trial draws a channel, a pilot plan and noise, runs every selected
//! estimator on the same measurement and records one NMSE per estimator.
//! Each trial owns a random stream derived from `(master_seed, snr index,
//! trial index)`, so results do not depend on scheduling or worker count.

mod config;
mod output;

use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Algorithm, IsdSettings, OutputPaths, RunConfig};
pub use output::{read_trials_csv, write_results, write_summary_csv, write_trials_csv};

use crate::baselines::{bp_recover_with, oracle_ls, OracleInfo};
use crate::channel_model::{generate_cir, Cir};
use crate::error::{Error, Result};
use crate::isd_core::{run_isd, RecoveryOutput, SupportRule, TerminationReason};
use crate::l1_solver::BpdnSolver;
use crate::pilot_system::{build_sensing_matrix, make_pilot_plan, measure, BlockCir, PilotPlan};

/// `‖ĝ − g‖² / ‖g‖²`.
pub fn nmse(g_hat: &DVector<Complex64>, g_true: &DVector<Complex64>) -> Result<f64> {
    if g_hat.len() != g_true.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} entries, reference has {}",
            g_hat.len(),
            g_true.len()
        )));
    }
    let energy = g_true.norm_squared();
    if energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((g_hat - g_true).norm_squared() / energy)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One row of the per-trial results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseRecord {
    pub snr_db: f64,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub nmse: f64,
    pub iterations: usize,
    pub termination_reason: TerminationReason,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub algorithm: Algorithm,
    pub mean_nmse: f64,
    pub mean_nmse_db: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResults {
    pub records: Vec<NmseRecord>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResults {
    pub fn mean_nmse(&self, algorithm: Algorithm, snr_db: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.algorithm == algorithm && r.snr_db == snr_db)
            .map(|r| r.mean_nmse)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `splitmix64(master ⊕ splitmix64(splitmix64(snr_index) ⊕ trial))`.
pub fn trial_seed(master_seed: u64, snr_index: usize, trial: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(splitmix64(snr_index as u64) ^ trial as u64))
}

// ChaCha stream ids separating the random draws of a trial.
const CHANNEL_STREAM: u64 = 1;
const PILOT_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything produced by one trial, for verbose inspection.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub cir: Cir,
    pub g_true: BlockCir,
    pub pilot_plan: PilotPlan,
    pub noise_variance: f64,
    pub delta: f64,
    pub outputs: Vec<(Algorithm, RecoveryOutput)>,
    pub records: Vec<NmseRecord>,
    /// Estimators that failed, with the reason.
    pub skipped: Vec<(Algorithm, String)>,
}

/// Runs every selected estimator on trial `trial` at `snr_grid_db[snr_index]`.
pub fn run_trial_detailed(config: &RunConfig, snr_index: usize, trial: usize) -> Result<TrialOutcome> {
    let snr_db = *config.snr_grid_db.get(snr_index).ok_or_else(|| {
        Error::Config(format!(
            "SNR index {snr_index} is outside a grid of {} points",
            config.snr_grid_db.len()
        ))
    })?;
    let seed = trial_seed(config.master_seed, snr_index, trial);
    let fixed_seed = splitmix64(config.master_seed);
    let channel_seed = if config.fix_channel { fixed_seed } else { seed };
    let pilot_seed = if config.fix_pilot_plan { fixed_seed } else { seed };

    let cir = generate_cir(
        &config.channel_profile,
        config.n_antennas,
        &mut stream(channel_seed, CHANNEL_STREAM),
    )?;
    let pilot_plan = make_pilot_plan(
        config.n_subcarriers,
        config.p,
        config.n_antennas,
        &mut stream(pilot_seed, PILOT_STREAM),
    )?;
    let theta = build_sensing_matrix(&pilot_plan, config.channel_length)?.to_block_order()?;
    let g_true = BlockCir::from_cir(&cir)?;
    let measurement = measure(&theta, &g_true.coeffs, snr_db, &mut stream(seed, NOISE_STREAM))?;

    let params = config.isd_params();
    let delta = params.delta_for(&measurement);
    let needs_solver = config.algorithms.iter().any(|a| *a != Algorithm::OracleLs);
    let solver = if needs_solver {
        Some(BpdnSolver::new(&theta.entries, params.solver.clone())?)
    } else {
        None
    };

    let mut outputs = Vec::new();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &algorithm in &config.algorithms {
        let result = match (algorithm, &solver) {
            (Algorithm::Bp, Some(s)) => bp_recover_with(s, &measurement, delta),
            (Algorithm::Isd, Some(s)) => run_isd(s, &theta, &measurement, &params, SupportRule::Scalar),
            (Algorithm::BlockIsd, Some(s)) => {
                run_isd(s, &theta, &measurement, &params, SupportRule::BlockVote)
            }
            (Algorithm::OracleLs, _) => oracle_ls(
                &theta,
                &measurement,
                &OracleInfo {
                    true_block_support: g_true.block_support(),
                },
            ),
            (_, None) => unreachable!("solver is built for every non-oracle algorithm"),
        };
        match result {
            Ok(out) => {
                records.push(NmseRecord {
                    snr_db,
                    algorithm,
                    trial,
                    nmse: nmse(&out.g_hat, &g_true.coeffs)?,
                    iterations: out.iterations_used,
                    termination_reason: out.termination_reason,
                });
                outputs.push((algorithm, out));
            }
            Err(err @ Error::RankDeficient { .. }) => {
                log::warn!("snr {snr_db} dB trial {trial}: {algorithm} skipped: {err}");
                skipped.push((algorithm, err.to_string()));
            }
            Err(err) => return Err(err),
        }
    }

    Ok(TrialOutcome {
        snr_db,
        trial,
        seed,
        cir,
        g_true,
        pilot_plan,
        noise_variance: measurement.noise_variance,
        delta,
        outputs,
        records,
        skipped,
    })
}

/// One NMSE record per selected estimator (oracle rank failures are skipped).
pub fn run_trial(config: &RunConfig, snr_index: usize, trial: usize) -> Result<Vec<NmseRecord>> {
    run_trial_detailed(config, snr_index, trial).map(|t| t.records)
}

/// Runs `n_trials` trials at every grid SNR on a pool of `config.workers` threads.
///
/// Records are ordered by (SNR grid position, algorithm, trial) whatever the
/// completion order.
pub fn run_sweep(config: &RunConfig) -> Result<SweepResults> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.snr_grid_db.len())
        .flat_map(|s| (0..config.n_trials).map(move |t| (s, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_trial: Vec<Vec<NmseRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, t)| run_trial(config, s, t))
            .collect::<Result<_>>()
    })?;

    let mut keyed: Vec<(usize, NmseRecord)> = jobs
        .iter()
        .zip(per_trial)
        .flat_map(|(&(s, _), recs)| recs.into_iter().map(move |r| (s, r)))
        .collect();
    keyed.sort_by_key(|(s, r)| (*s, r.algorithm, r.trial));
    let records: Vec<NmseRecord> = keyed.into_iter().map(|(_, r)| r).collect();
    let summary = summarize(&records);
    Ok(SweepResults { records, summary })
}

/// Arithmetic mean of NMSE per (SNR, algorithm), in record order.
pub fn summarize(records: &[NmseRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for rec in records {
        let key_matches =
            |row: &SummaryRow| row.snr_db.to_bits() == rec.snr_db.to_bits() && row.algorithm == rec.algorithm;
        match rows.iter_mut().find(|row| key_matches(row)) {
            Some(row) => {
                row.mean_nmse += rec.nmse;
                row.n_trials += 1;
            }
            None => rows.push(SummaryRow {
                snr_db: rec.snr_db,
                algorithm: rec.algorithm,
                mean_nmse: rec.nmse,
                mean_nmse_db: 0.0,
                n_trials: 1,
            }),
        }
    }
    for row in &mut rows {
        row.mean_nmse /= row.n_trials as f64;
        row.mean_nmse_db = to_db(row.mean_nmse);
    }
    rows
}

/// Pilot requirement of full-rank LS/MMSE versus the configured pilot count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadReport {
    /// `L · N_T`.
    pub conventional_pilots: usize,
    pub configured_pilots: usize,
    /// `(L·N_T − p) / (L·N_T)`.
    pub reduction: f64,
}

pub fn overhead_report(channel_length: usize, n_antennas: usize, n_pilots: usize) -> OverheadReport {
    let conventional = channel_length * n_antennas;
    let reduction = if conventional == 0 {
        0.0
    } else {
        (conventional as f64 - n_pilots as f64) / conventional as f64
    };
    OverheadReport {
        conventional_pilots: conventional,
        configured_pilots: n_pilots,
        reduction,
    }
}

impl fmt::Display for OverheadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conventional pilots (L*N_T): {}", self.conventional_pilots)?;
        writeln!(f, "configured pilots (p):       {}", self.configured_pilots)?;
        write!(f, "pilot overhead reduction:    {:.3}%", 100.0 * self.reduction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot_system::g_to_h;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig {
            n_subcarriers: 128,
            n_antennas: 4,
            channel_length: 16,
            p: 32,
            snr_grid_db: vec![10.0, 20.0],
            n_trials: 3,
            algorithms: vec![Algorithm::BlockIsd, Algorithm::OracleLs],
            channel_profile: crate::channel_model::ChannelProfile::vehicular_a(6e6, 16),
            ..RunConfig::default()
        };
        cfg.normalize().unwrap();
        cfg
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn nmse_examples() {
        let g = DVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0)]);
        assert_eq!(nmse(&g, &g).unwrap(), 0.0);
        assert_eq!(nmse(&DVector::zeros(3), &g).unwrap(), 1.0);
        assert!((nmse(&(&g * c(2.0, 0.0)), &g).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(nmse(&g, &DVector::zeros(3)), Err(Error::ZeroReference)));
        assert!(nmse(&g, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = small_config();
        assert_eq!(run_trial(&cfg, 1, 2).unwrap(), run_trial(&cfg, 1, 2).unwrap());
        assert_ne!(run_trial(&cfg, 1, 2).unwrap(), run_trial(&cfg, 1, 1).unwrap());
    }

    #[test]
    fn oracle_only_gives_one_record() {
        let cfg = RunConfig {
            algorithms: vec![Algorithm::OracleLs],
            ..small_config()
        };
        let recs = run_trial(&cfg, 0, 0).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].algorithm, Algorithm::OracleLs);
    }

    #[test]
    fn noiseless_block_isd_trial_is_exact() {
        let cfg = RunConfig {
            snr_grid_db: vec![f64::INFINITY],
            n_subcarriers: 256,
            n_antennas: 8,
            channel_length: 16,
            p: 48,
            algorithms: vec![Algorithm::BlockIsd],
            channel_profile: crate::channel_model::ChannelProfile {
                tap_delays_ns: vec![0.0, 300.0, 900.0],
                tap_powers_db: vec![0.0, -3.0, -6.0],
                bandwidth_hz: 10e6,
                max_length: 16,
            },
            ..small_config()
        };
        for trial in 0..3 {
            let recs = run_trial(&cfg, 0, trial).unwrap();
            assert!(recs[0].nmse < 1e-6, "trial {trial}: {}", recs[0].nmse);
        }
    }

    #[test]
    fn nmse_is_the_same_in_both_orderings() {
        let cfg = RunConfig {
            algorithms: vec![Algorithm::BlockIsd],
            ..small_config()
        };
        let t = run_trial_detailed(&cfg, 0, 0).unwrap();
        let g_hat = &t.outputs[0].1.g_hat;
        let h_hat = g_to_h(g_hat, cfg.n_antennas, cfg.channel_length).unwrap();
        let via_h = nmse(&h_hat, &t.cir.coeffs).unwrap();
        assert!((via_h - t.records[0].nmse).abs() <= 1e-12 * via_h);
    }

    #[test]
    fn fixed_channel_and_pilots_are_shared() {
        let cfg = RunConfig {
            fix_channel: true,
            fix_pilot_plan: true,
            ..small_config()
        };
        let a = run_trial_detailed(&cfg, 0, 0).unwrap();
        let b = run_trial_detailed(&cfg, 1, 2).unwrap();
        assert_eq!(a.cir, b.cir);
        assert_eq!(a.pilot_plan, b.pilot_plan);
        let free = small_config();
        let c = run_trial_detailed(&free, 0, 0).unwrap();
        let d = run_trial_detailed(&free, 0, 1).unwrap();
        assert_ne!(c.cir, d.cir);
        assert_ne!(c.pilot_plan, d.pilot_plan);
    }

    #[test]
    fn sweep_cardinality_and_summary() {
        let cfg = small_config();
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.records.len(), 2 * 3 * 2);
        assert_eq!(res.summary.len(), 4);
        for row in &res.summary {
            let matching: Vec<f64> = res
                .records
                .iter()
                .filter(|r| r.algorithm == row.algorithm && r.snr_db == row.snr_db)
                .map(|r| r.nmse)
                .collect();
            let mean = matching.iter().sum::<f64>() / matching.len() as f64;
            assert_eq!(row.n_trials, 3);
            assert!((row.mean_nmse - mean).abs() <= 1e-15 * mean);
            assert!((row.mean_nmse_db - to_db(mean)).abs() < 1e-12);
        }
        // Ordered by SNR, then algorithm, then trial.
        let keys: Vec<(u64, Algorithm, usize)> = res
            .records
            .iter()
            .map(|r| (r.snr_db as u64, r.algorithm, r.trial))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let one = RunConfig { workers: 1, ..small_config() };
        let three = RunConfig { workers: 3, ..small_config() };
        assert_eq!(run_sweep(&one).unwrap(), run_sweep(&three).unwrap());
    }

    #[test]
    fn bad_snr_index_is_an_error() {
        assert!(run_trial(&small_config(), 5, 0).is_err());
    }

    #[test]
    fn seeds_differ_across_keys() {
        let a = trial_seed(1, 0, 0);
        assert_ne!(a, trial_seed(1, 0, 1));
        assert_ne!(a, trial_seed(1, 1, 0));
        assert_ne!(a, trial_seed(2, 0, 0));
        assert_eq!(a, trial_seed(1, 0, 0));
    }

    #[test]
    fn overhead_examples() {
        let r = overhead_report(128, 32, 640);
        assert_eq!(r.conventional_pilots, 4096);
        assert!((r.reduction - 0.84375).abs() < 1e-15);
        assert_eq!(overhead_report(8, 4, 32).reduction, 0.0);
        assert_eq!(overhead_report(8, 4, 0).reduction, 1.0);
        assert!(r.to_string().contains("84.375%"));
    }
}
