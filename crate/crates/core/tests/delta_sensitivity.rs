//! The fidelity tolerance δ has no value to copy; results should not hinge
//! on the exact multiple of the noise norm used.

use blockisd::harness::{run_sweep, to_db, Algorithm, IsdSettings, RunConfig};

#[test]
fn block_isd_is_insensitive_to_moderate_delta_changes() {
    let scales = [0.75, 1.0, 1.25];
    let snrs = [10.0, 20.0];
    let mut table = Vec::new();
    for &scale in &scales {
        let mut cfg = RunConfig {
            snr_grid_db: snrs.to_vec(),
            n_trials: 30,
            algorithms: vec![Algorithm::Bp, Algorithm::BlockIsd],
            isd: IsdSettings {
                delta_scale: scale,
                ..IsdSettings::default()
            },
            master_seed: 77,
            ..RunConfig::default()
        };
        cfg.normalize().unwrap();
        let res = run_sweep(&cfg).unwrap();
        for &snr in &snrs {
            let block = to_db(res.mean_nmse(Algorithm::BlockIsd, snr).unwrap());
            let bp = to_db(res.mean_nmse(Algorithm::Bp, snr).unwrap());
            println!("delta x{scale:<5} {snr:>4} dB  block-ISD {block:7.2} dB  BP {bp:7.2} dB");
            assert!(block < bp, "block-ISD loses to BP at delta x{scale}, {snr} dB");
            table.push((snr, block));
        }
    }
    for &snr in &snrs {
        let at: Vec<f64> = table.iter().filter(|(s, _)| *s == snr).map(|(_, v)| *v).collect();
        let spread = at.iter().cloned().fold(f64::MIN, f64::max) - at.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 3.0, "{snr} dB: block-ISD NMSE spread {spread:.2} dB across delta scales");
    }
}
