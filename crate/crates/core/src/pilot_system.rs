//! Pilot plans, the frequency-domain measurement model and the block rearrangement.
//!
//! The aggregate channel `h` is stored antenna-major (all `L` taps of antenna 0,
//! then antenna 1, …). Its block-sparse equivalent `g` groups the same tap of
//! every antenna together: `g[l * NT + a] = h[a * L + l]`. Columns of the
//! sensing matrix are reordered the same way, so `P h = Θ g`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;

use crate::channel_model::{complex_gaussian, Cir};
use crate::error::{Error, Result};

/// Pilot subcarriers and per-antenna pilot symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    /// Sorted, distinct 0-based subcarrier indexes.
    pub omega: Vec<usize>,
    /// One length-`p` vector of unit-modulus symbols per transmit antenna.
    pub pilot_symbols: Vec<DVector<Complex64>>,
    pub n_subcarriers: usize,
}

impl PilotPlan {
    pub fn n_pilots(&self) -> usize {
        self.omega.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.pilot_symbols.len()
    }
}

const QPSK: [Complex64; 4] = [
    Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Random pilot positions (uniform without replacement) and random QPSK symbols.
pub fn make_pilot_plan<R: Rng + ?Sized>(
    n_subcarriers: usize,
    n_pilots: usize,
    n_antennas: usize,
    rng: &mut R,
) -> Result<PilotPlan> {
    if n_pilots == 0 || n_pilots > n_subcarriers {
        return Err(Error::Config(format!(
            "need 1 <= p <= N, got p = {n_pilots}, N = {n_subcarriers}"
        )));
    }
    if n_antennas == 0 {
        return Err(Error::Config("at least one transmit antenna is required".into()));
    }
    let mut omega = index::sample(rng, n_subcarriers, n_pilots).into_vec();
    omega.sort_unstable();
    let pilot_symbols = (0..n_antennas)
        .map(|_| DVector::from_fn(n_pilots, |_, _| QPSK[rng.random_range(0..4)]))
        .collect();
    Ok(PilotPlan {
        omega,
        pilot_symbols,
        n_subcarriers,
    })
}

/// Column order of a sensing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnOrder {
    /// `P`: column `a * L + l` is tap `l` of antenna `a`.
    AntennaMajor,
    /// `Θ`: column `l * NT + a` is tap `l` of antenna `a`.
    Block,
}

/// Complex `p × (NT·L)` map from channel taps to received pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub entries: DMatrix<Complex64>,
    pub order: ColumnOrder,
    pub n_antennas: usize,
    pub len_per_antenna: usize,
}

impl SensingMatrix {
    pub fn n_rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Reorders columns from `P` to `Θ`.
    pub fn to_block_order(&self) -> Result<SensingMatrix> {
        if self.order != ColumnOrder::AntennaMajor {
            return Err(Error::Dimension("matrix is already in block order".into()));
        }
        Ok(SensingMatrix {
            entries: antenna_major_to_block_columns(
                &self.entries,
                self.n_antennas,
                self.len_per_antenna,
            )?,
            order: ColumnOrder::Block,
            n_antennas: self.n_antennas,
            len_per_antenna: self.len_per_antenna,
        })
    }

    /// Reorders columns from `Θ` back to `P`.
    pub fn to_antenna_major(&self) -> Result<SensingMatrix> {
        if self.order != ColumnOrder::Block {
            return Err(Error::Dimension("matrix is already antenna-major".into()));
        }
        // The inverse permutation is the forward one with the roles of NT and L swapped.
        Ok(SensingMatrix {
            entries: antenna_major_to_block_columns(
                &self.entries,
                self.len_per_antenna,
                self.n_antennas,
            )?,
            order: ColumnOrder::AntennaMajor,
            n_antennas: self.n_antennas,
            len_per_antenna: self.len_per_antenna,
        })
    }
}

/// Unnormalized DFT entry `exp(-j 2π m k / N)` for 0-based `m`, `k`.
fn dft_entry(m: usize, k: usize, n: usize) -> Complex64 {
    // Reduce the exponent modulo N before converting to keep the phase exact.
    let e = ((m as u128 * k as u128) % n as u128) as f64;
    Complex64::from_polar(1.0, -2.0 * PI * e / n as f64)
}

/// Builds `P = [C_1 (F_L)_Ω, …, C_NT (F_L)_Ω]`.
pub fn build_sensing_matrix(plan: &PilotPlan, len_per_antenna: usize) -> Result<SensingMatrix> {
    if len_per_antenna == 0 {
        return Err(Error::Config("channel length L must be at least 1".into()));
    }
    let p = plan.n_pilots();
    let n_antennas = plan.n_antennas();
    for symbols in &plan.pilot_symbols {
        if symbols.len() != p {
            return Err(Error::Dimension(format!(
                "pilot vector has {} symbols, expected {p}",
                symbols.len()
            )));
        }
    }
    let n = plan.n_subcarriers;
    let l = len_per_antenna;
    let entries = DMatrix::from_fn(p, n_antennas * l, |row, col| {
        let (antenna, tap) = (col / l, col % l);
        plan.pilot_symbols[antenna][row] * dft_entry(plan.omega[row], tap, n)
    });
    Ok(SensingMatrix {
        entries,
        order: ColumnOrder::AntennaMajor,
        n_antennas,
        len_per_antenna: l,
    })
}

fn check_split(len: usize, n_antennas: usize, len_per_antenna: usize) -> Result<()> {
    if n_antennas == 0 || len_per_antenna == 0 || len != n_antennas * len_per_antenna {
        return Err(Error::Dimension(format!(
            "length {len} does not split into {n_antennas} blocks of {len_per_antenna}"
        )));
    }
    Ok(())
}

/// `Θ[:, l·NT + a] = P[:, a·L + l]`.
///
/// Calling this again on the result with `n_antennas` and `len_per_antenna`
/// swapped restores the original column order.
pub fn antenna_major_to_block_columns(
    matrix: &DMatrix<Complex64>,
    n_antennas: usize,
    len_per_antenna: usize,
) -> Result<DMatrix<Complex64>> {
    check_split(matrix.ncols(), n_antennas, len_per_antenna)?;
    let mut out = DMatrix::zeros(matrix.nrows(), matrix.ncols());
    for a in 0..n_antennas {
        for l in 0..len_per_antenna {
            out.set_column(l * n_antennas + a, &matrix.column(a * len_per_antenna + l));
        }
    }
    Ok(out)
}

/// `g[l·NT + a] = h[a·L + l]`.
pub fn h_to_g(
    h: &DVector<Complex64>,
    n_antennas: usize,
    len_per_antenna: usize,
) -> Result<DVector<Complex64>> {
    check_split(h.len(), n_antennas, len_per_antenna)?;
    Ok(DVector::from_fn(h.len(), |k, _| {
        let (l, a) = (k / n_antennas, k % n_antennas);
        h[a * len_per_antenna + l]
    }))
}

/// Inverse of [`h_to_g`].
pub fn g_to_h(
    g: &DVector<Complex64>,
    n_antennas: usize,
    len_per_antenna: usize,
) -> Result<DVector<Complex64>> {
    check_split(g.len(), n_antennas, len_per_antenna)?;
    Ok(DVector::from_fn(g.len(), |k, _| {
        let (a, l) = (k / len_per_antenna, k % len_per_antenna);
        g[l * n_antennas + a]
    }))
}

/// Channel vector in block order: `L` consecutive blocks of `NT` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCir {
    pub coeffs: DVector<Complex64>,
    pub n_antennas: usize,
    pub len_per_antenna: usize,
}

impl BlockCir {
    pub fn from_cir(cir: &Cir) -> Result<Self> {
        Ok(Self {
            coeffs: h_to_g(&cir.coeffs, cir.n_antennas, cir.len_per_antenna)?,
            n_antennas: cir.n_antennas,
            len_per_antenna: cir.len_per_antenna,
        })
    }

    pub fn block(&self, l: usize) -> &[Complex64] {
        let nt = self.n_antennas;
        &self.coeffs.as_slice()[l * nt..(l + 1) * nt]
    }

    /// Block indexes `l` with at least one nonzero entry.
    pub fn block_support(&self) -> Vec<usize> {
        (0..self.len_per_antenna)
            .filter(|&l| self.block(l).iter().any(|c| c.norm_sqr() > 0.0))
            .collect()
    }
}

/// Received pilots and the noise variance used to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: DVector<Complex64>,
    /// Per-entry complex noise variance `σ²`; 0 for noiseless data.
    pub noise_variance: f64,
}

/// `y = Θ g + n` with `σ² = ‖Θg‖² / (p · 10^(snr/10))`.
///
/// `snr_db = +∞` or an all-zero signal gives a noiseless measurement.
pub fn measure<R: Rng + ?Sized>(
    theta: &SensingMatrix,
    g: &DVector<Complex64>,
    snr_db: f64,
    rng: &mut R,
) -> Result<Measurement> {
    if theta.n_cols() != g.len() {
        return Err(Error::Dimension(format!(
            "sensing matrix has {} columns, channel has {} entries",
            theta.n_cols(),
            g.len()
        )));
    }
    let clean = &theta.entries * g;
    let p = clean.len();
    let signal = clean.norm_squared();
    if snr_db == f64::INFINITY || signal == 0.0 {
        return Ok(Measurement {
            y: clean,
            noise_variance: 0.0,
        });
    }
    let noise_variance = signal / (p as f64 * 10f64.powf(snr_db / 10.0));
    let y = clean.map(|c| c + complex_gaussian(rng, noise_variance));
    Ok(Measurement { y, noise_variance })
}
