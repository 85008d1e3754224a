//! Tapped-delay-line MIMO channels with a support shared by every antenna.
//!
//! All per-antenna impulse responses produced here have their nonzero taps at
//! the same delay indexes; only the complex gains differ between antennas.
//! Indexes are 0-based throughout: tap `l` of antenna `i` lives at position
//! `i * L + l` of the aggregate (antenna-major) vector.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-delay profile of a tapped-delay-line channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub tap_delays_ns: Vec<f64>,
    pub tap_powers_db: Vec<f64>,
    pub bandwidth_hz: f64,
    /// Channel length `L` in samples. A value of 0 in a config file means
    /// "inherit from the run's `L`".
    #[serde(rename = "max_length_L", default)]
    pub max_length: usize,
}

/// ITU-R M.1225 Vehicular-A delays (ns) and average powers (dB).
pub const VEHICULAR_A_DELAYS_NS: [f64; 6] = [0.0, 310.0, 710.0, 1090.0, 1730.0, 2510.0];
pub const VEHICULAR_A_POWERS_DB: [f64; 6] = [0.0, -1.0, -9.0, -10.0, -15.0, -20.0];

impl ChannelProfile {
    pub fn vehicular_a(bandwidth_hz: f64, max_length: usize) -> Self {
        Self {
            tap_delays_ns: VEHICULAR_A_DELAYS_NS.to_vec(),
            tap_powers_db: VEHICULAR_A_POWERS_DB.to_vec(),
            bandwidth_hz,
            max_length,
        }
    }

    /// A single zero-delay tap.
    pub fn flat(max_length: usize) -> Self {
        Self {
            tap_delays_ns: vec![0.0],
            tap_powers_db: vec![0.0],
            bandwidth_hz: 1.0,
            max_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tap_delays_ns.is_empty() {
            return Err(Error::Config("channel profile has no taps".into()));
        }
        if self.tap_delays_ns.len() != self.tap_powers_db.len() {
            return Err(Error::Config(format!(
                "channel profile has {} delays but {} powers",
                self.tap_delays_ns.len(),
                self.tap_powers_db.len()
            )));
        }
        if self.tap_delays_ns[0] != 0.0 {
            return Err(Error::Config("first tap delay must be 0 ns".into()));
        }
        if self.tap_delays_ns.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("tap delays must be strictly increasing".into()));
        }
        if self.tap_powers_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("tap powers must be finite".into()));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if self.max_length == 0 {
            return Err(Error::Config("channel length L must be at least 1".into()));
        }
        Ok(())
    }

    /// Sample index (0-based) of a delay: `round_half_even(delay · B)`.
    fn delay_to_index(&self, delay_ns: f64) -> f64 {
        (delay_ns * self.bandwidth_hz / 1e9).round_ties_even()
    }

    /// Maps the profile onto sample-spaced tap positions.
    ///
    /// Returns the sorted, deduplicated 0-based tap indexes. Errors if any tap
    /// lands at or beyond `L`.
    pub fn tap_indices(&self) -> Result<Vec<usize>> {
        Ok(self.merged_taps()?.into_iter().map(|(idx, _)| idx).collect())
    }

    /// Tap indexes paired with their linear power, collisions summed, normalized
    /// to unit total.
    pub fn merged_taps(&self) -> Result<Vec<(usize, f64)>> {
        self.validate()?;
        let mut taps: Vec<(usize, f64)> = Vec::with_capacity(self.tap_delays_ns.len());
        for (&delay, &power_db) in self.tap_delays_ns.iter().zip(&self.tap_powers_db) {
            let idx = self.delay_to_index(delay);
            if idx >= self.max_length as f64 {
                return Err(Error::Config(format!(
                    "tap at {delay} ns maps to sample {} which exceeds L = {}",
                    idx as usize + 1,
                    self.max_length
                )));
            }
            let idx = idx as usize;
            let power = 10f64.powf(power_db / 10.0);
            match taps.iter_mut().find(|(i, _)| *i == idx) {
                Some(tap) => tap.1 += power,
                None => taps.push((idx, power)),
            }
        }
        taps.sort_by_key(|&(i, _)| i);
        let total: f64 = taps.iter().map(|&(_, p)| p).sum();
        for tap in &mut taps {
            tap.1 /= total;
        }
        Ok(taps)
    }
}

/// Aggregate channel impulse response `h = [h_1; …; h_NT]` in antenna-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    pub coeffs: DVector<Complex64>,
    pub n_antennas: usize,
    pub len_per_antenna: usize,
    /// Sorted 0-based positions of the nonzero entries of `coeffs`.
    pub support: Vec<usize>,
}

impl Cir {
    /// Tap indexes (within one antenna) carrying energy for antenna `antenna`.
    pub fn antenna_support(&self, antenna: usize) -> Vec<usize> {
        let l = self.len_per_antenna;
        self.support
            .iter()
            .filter(|&&k| k / l == antenna)
            .map(|&k| k % l)
            .collect()
    }

    pub fn antenna(&self, antenna: usize) -> &[Complex64] {
        let l = self.len_per_antenna;
        &self.coeffs.as_slice()[antenna * l..(antenna + 1) * l]
    }
}

/// Circularly-symmetric complex Gaussian sample with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Draws one Rayleigh-faded realization with the profile's support on every antenna.
pub fn generate_cir<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    n_antennas: usize,
    rng: &mut R,
) -> Result<Cir> {
    if n_antennas == 0 {
        return Err(Error::Config("at least one transmit antenna is required".into()));
    }
    let taps = profile.merged_taps()?;
    if taps.is_empty() {
        return Err(Error::Config("channel profile yields an empty support".into()));
    }
    let l = profile.max_length;
    let mut coeffs = DVector::from_element(n_antennas * l, Complex64::new(0.0, 0.0));
    let mut support = Vec::with_capacity(n_antennas * taps.len());
    for antenna in 0..n_antennas {
        for &(tap, power) in &taps {
            let mut gain = complex_gaussian(rng, power);
            // An exact zero draw would break the support bookkeeping.
            while gain.norm_sqr() == 0.0 {
                gain = complex_gaussian(rng, power);
            }
            coeffs[antenna * l + tap] = gain;
            support.push(antenna * l + tap);
        }
    }
    Ok(Cir {
        coeffs,
        n_antennas,
        len_per_antenna: l,
        support,
    })
}
