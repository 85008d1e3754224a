use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blockisd::harness::{
    overhead_report, run_sweep, run_trial_detailed, to_db, write_results, Algorithm, RunConfig,
};
use blockisd::Result;

/// Block-ISD channel estimation experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full NMSE-versus-SNR sweep and write the CSV tables.
    Run(RunArgs),
    /// Run a single trial and print per-algorithm details.
    Trial {
        #[command(flatten)]
        common: CommonArgs,
        /// Position in the SNR grid.
        #[arg(long, default_value_t = 0)]
        snr_index: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Print the pilot-overhead reduction for the configured dimensions.
    Overhead {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the effective configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; defaults to the built-in desk-scale setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the full-size built-in setup instead of the desk-scale one.
    #[arg(long, conflicts_with = "config")]
    full_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of bp,isd,block_isd,oracle_ls.
    #[arg(long)]
    algorithms: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for trials.csv and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.full_scale) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, true) => RunConfig::full_scale(),
            (None, false) => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(list) = &self.algorithms {
            cfg.algorithms = Algorithm::parse_list(list)?;
        }
        cfg.normalize()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = args.common.load()?;
            if let Some(out) = args.out {
                cfg.output.out_dir = out;
            }
            if let Some(w) = args.workers {
                cfg.workers = w;
            }
            if let Some(t) = args.trials {
                cfg.n_trials = t;
            }
            let results = run_sweep(&cfg)?;
            let (trials_path, summary_path) = (cfg.output.trials_path(), cfg.output.summary_path());
            write_results(&trials_path, &summary_path, &results)?;
            println!("{:>8}  {:<10} {:>12} {:>10} {:>7}", "snr_db", "algorithm", "mean_nmse", "dB", "trials");
            for row in &results.summary {
                println!(
                    "{:>8}  {:<10} {:>12.4e} {:>10.2} {:>7}",
                    row.snr_db, row.algorithm, row.mean_nmse, row.mean_nmse_db, row.n_trials
                );
            }
            println!("wrote {} and {}", trials_path.display(), summary_path.display());
        }
        Command::Trial { common, snr_index, trial } => {
            let cfg = common.load()?;
            let t = run_trial_detailed(&cfg, snr_index, trial)?;
            println!("snr {} dB, trial {}, seed {:#018x}", t.snr_db, t.trial, t.seed);
            println!("true blocks: {:?}", t.g_true.block_support());
            println!("noise variance {:.4e}, delta {:.4e}", t.noise_variance, t.delta);
            for ((algorithm, out), rec) in t.outputs.iter().zip(&t.records) {
                let blocks: Vec<usize> = {
                    let mut b: Vec<usize> = out.final_support.iter().map(|k| k / cfg.n_antennas).collect();
                    b.dedup();
                    b
                };
                println!(
                    "{algorithm:<10} nmse {:.4e} ({:.2} dB), {} solves, {}, support blocks {:?}",
                    rec.nmse,
                    to_db(rec.nmse),
                    out.iterations_used,
                    out.termination_reason,
                    blocks
                );
            }
            for (algorithm, reason) in &t.skipped {
                println!("{algorithm:<10} skipped: {reason}");
            }
        }
        Command::Overhead { common } => {
            let cfg = common.load()?;
            println!("{}", overhead_report(cfg.channel_length, cfg.n_antennas, cfg.p));
        }
        Command::ShowConfig { common } => {
            print!("{}", common.load()?.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
