use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel_model::ChannelProfile;
use crate::error::{Error, Result};
use crate::isd_core::IsdParams;
use crate::l1_solver::SolverParams;

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bp,
    Isd,
    BlockIsd,
    OracleLs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Bp, Self::Isd, Self::BlockIsd, Self::OracleLs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bp => "bp",
            Self::Isd => "isd",
            Self::BlockIsd => "block_isd",
            Self::OracleLs => "oracle_ls",
        }
    }

    /// Parses a comma-separated list such as `bp,block_isd`.
    pub fn parse_list(list: &str) -> Result<Vec<Algorithm>> {
        let mut out: Vec<Algorithm> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("algorithm list is empty".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// ISD settings as they appear in a config file; solver settings live in
/// their own table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsdSettings {
    pub iteration_cap: usize,
    pub delta_scale: f64,
    pub warm_start: bool,
}

impl Default for IsdSettings {
    fn default() -> Self {
        let d = IsdParams::default();
        Self {
            iteration_cap: d.iteration_cap,
            delta_scale: d.delta_scale,
            warm_start: d.warm_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub out_dir: PathBuf,
    pub trials_file: String,
    pub summary_file: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("results"),
            trials_file: "trials.csv".into(),
            summary_file: "summary.csv".into(),
        }
    }
}

impl OutputPaths {
    pub fn trials_path(&self) -> PathBuf {
        self.out_dir.join(&self.trials_file)
    }

    pub fn summary_path(&self) -> PathBuf {
        self.out_dir.join(&self.summary_file)
    }
}

/// Everything that determines a sweep. Loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// OFDM symbol length.
    #[serde(rename = "N")]
    pub n_subcarriers: usize,
    #[serde(rename = "N_T")]
    pub n_antennas: usize,
    /// Maximum channel length in samples.
    #[serde(rename = "L")]
    pub channel_length: usize,
    /// Number of pilot subcarriers.
    pub p: usize,
    pub snr_grid_db: Vec<f64>,
    pub n_trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub channel_profile: ChannelProfile,
    /// Reuse one pilot plan for every trial.
    #[serde(default)]
    pub fix_pilot_plan: bool,
    /// Reuse one channel realization for every trial.
    #[serde(default)]
    pub fix_channel: bool,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub isd: IsdSettings,
    pub master_seed: u64,
    /// Worker threads; 0 lets the pool pick.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

impl Default for RunConfig {
    /// Desk-scale setup: 8 antennas, 32 taps, 96 of 512 subcarriers as pilots.
    fn default() -> Self {
        Self {
            n_subcarriers: 512,
            n_antennas: 8,
            channel_length: 32,
            p: 96,
            snr_grid_db: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            n_trials: 200,
            algorithms: Algorithm::ALL.to_vec(),
            channel_profile: ChannelProfile::vehicular_a(12.5e6, 32),
            fix_pilot_plan: false,
            fix_channel: false,
            solver: SolverParams::default(),
            isd: IsdSettings::default(),
            master_seed: 2015,
            workers: 0,
            output: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    /// Full-size system: 32 antennas, 4096 subcarriers, L = 128, 640 pilots.
    pub fn full_scale() -> Self {
        Self {
            n_subcarriers: 4096,
            n_antennas: 32,
            channel_length: 128,
            p: 640,
            snr_grid_db: vec![10.0, 20.0],
            n_trials: 50,
            channel_profile: ChannelProfile::vehicular_a(50e6, 128),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|source| Error::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.normalize()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("RunConfig always serializes")
    }

    pub fn isd_params(&self) -> IsdParams {
        IsdParams {
            iteration_cap: self.isd.iteration_cap,
            delta_scale: self.isd.delta_scale,
            warm_start: self.isd.warm_start,
            solver: self.solver.clone(),
        }
    }

    /// Fills inherited fields and validates.
    pub fn normalize(&mut self) -> Result<()> {
        if self.channel_profile.max_length == 0 {
            self.channel_profile.max_length = self.channel_length;
        }
        self.algorithms.sort();
        self.algorithms.dedup();
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 || self.channel_length == 0 {
            return Err(Error::Config("N_T and L must be positive".into()));
        }
        if self.p == 0 || self.p > self.n_subcarriers {
            return Err(Error::Config(format!(
                "need 1 <= p <= N, got p = {}, N = {}",
                self.p, self.n_subcarriers
            )));
        }
        if self.channel_length > self.n_subcarriers {
            return Err(Error::Config("L cannot exceed N".into()));
        }
        if self.channel_profile.max_length != self.channel_length {
            return Err(Error::Config(format!(
                "channel profile length {} differs from L = {}",
                self.channel_profile.max_length, self.channel_length
            )));
        }
        self.channel_profile.validate()?;
        self.channel_profile.tap_indices()?;
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr_grid_db is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::Config("SNR values must be numbers (inf allowed)".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        self.isd_params().validate()?;
        if self.p > self.n_antennas * self.channel_length {
            log::warn!(
                "p = {} exceeds N_T·L = {}: the problem is overdetermined",
                self.p,
                self.n_antennas * self.channel_length
            );
        }
        Ok(())
    }
}
