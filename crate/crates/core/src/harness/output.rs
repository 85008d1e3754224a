//! CSV tables for per-trial records and per-SNR summaries.

use std::fs;
use std::path::Path;

use super::{NmseRecord, SummaryRow, SweepResults};
use crate::error::{Error, Result};

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Columns `snr_db,algorithm,trial,nmse,iterations,termination_reason`.
pub fn write_trials_csv(path: &Path, records: &[NmseRecord]) -> Result<()> {
    write_rows(
        path,
        records,
        &["snr_db", "algorithm", "trial", "nmse", "iterations", "termination_reason"],
    )
}

/// Columns `snr_db,algorithm,mean_nmse,mean_nmse_db,n_trials`.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_rows(
        path,
        rows,
        &["snr_db", "algorithm", "mean_nmse", "mean_nmse_db", "n_trials"],
    )
}

pub fn write_results(trials_path: &Path, summary_path: &Path, results: &SweepResults) -> Result<()> {
    write_trials_csv(trials_path, &results.records)?;
    write_summary_csv(summary_path, &results.summary)
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<NmseRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_err(path, e))
}
