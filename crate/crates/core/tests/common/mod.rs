//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use blockisd::channel_model::complex_gaussian;

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

fn indices(mask: &[bool], value: bool) -> Vec<usize> {
    (0..mask.len()).filter(|&k| mask[k] == value).collect()
}

/// Orthonormal basis (as rows) of the orthogonal complement of the range of
/// the unpenalized columns, which are assumed linearly independent.
fn complement_basis<T>(a: &DMatrix<T>, penalized: &[bool]) -> DMatrix<T>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let p = a.nrows();
    let free = indices(penalized, false);
    if free.is_empty() {
        return DMatrix::identity(p, p);
    }
    if free.len() >= p {
        return DMatrix::zeros(0, p);
    }
    let ac = a.select_columns(&free);
    let gram = Cholesky::new(ac.adjoint() * &ac).expect("free columns are independent");
    let proj = DMatrix::<T>::identity(p, p) - &ac * gram.solve(&ac.adjoint());
    let eig = proj.symmetric_eigen();
    let keep: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    eig.eigenvectors.select_columns(&keep).adjoint()
}

/// Solves `b x = y` for full-column-rank `b`, or `None` when `b` is
/// numerically singular or the system is inconsistent.
fn exact_solve<T>(b: &DMatrix<T>, y: &DVector<T>, tol: f64) -> Option<DVector<T>>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let gram = b.adjoint() * b;
    let diag_max = (0..gram.nrows()).map(|i| gram[(i, i)].clone().modulus()).fold(0.0, f64::max);
    let chol = Cholesky::new(gram)?;
    let l = chol.l();
    let l_min = (0..l.nrows()).map(|i| l[(i, i)].clone().modulus()).fold(f64::INFINITY, f64::min);
    if l_min * l_min < 1e-12 * diag_max {
        return None;
    }
    let x = chol.solve(&b.ad_mul(y));
    ((b * &x - y).norm() <= tol).then_some(x)
}

/// Brute-force LP oracle for `min Σ_{k∈W} |x_k|` s.t. `A x = y` over the reals.
///
/// The unpenalized variables are eliminated by projecting onto the
/// orthogonal complement of their span, which leaves a pure ℓ1 program in
/// the penalized variables. Its optimum sits at a basic solution, so every
/// linearly independent column subset is solved exactly and the smallest
/// ℓ1 norm among the consistent ones is returned.
pub fn lp_oracle(a: &DMatrix<f64>, y: &DVector<f64>, penalized: &[bool]) -> f64 {
    let q = complement_basis(a, penalized);
    let pen = indices(penalized, true);
    let yq = &q * y;
    let scale = y.norm().max(1.0);
    if yq.norm() <= 1e-12 * scale {
        return 0.0;
    }
    let b = &q * a.select_columns(&pen);
    let rank = q.nrows();
    let m = pen.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << m) {
        if mask.count_ones() as usize > rank {
            continue;
        }
        let cols: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        if let Some(x) = exact_solve(&b.select_columns(&cols), &yq, 1e-9 * scale) {
            best = best.min(x.iter().map(|v| v.abs()).sum());
        }
    }
    best
}

/// Reweighted least-squares reference for the complex program
/// `min Σ_{k∈W} |x_k|` s.t. `A x = y`, with the same elimination of
/// unpenalized variables as [`lp_oracle`].
pub fn irls_oracle(a: &DMatrix<Complex64>, y: &DVector<Complex64>, penalized: &[bool]) -> f64 {
    let q = complement_basis(a, penalized);
    let pen = indices(penalized, true);
    let yq = &q * y;
    if yq.norm() <= 1e-12 * y.norm().max(1.0) {
        return 0.0;
    }
    let b = &q * a.select_columns(&pen);
    let mut x = b.adjoint() * Cholesky::new(&b * b.adjoint()).unwrap().solve(&yq);
    let mut eps = 1.0;
    let mut best = f64::INFINITY;
    while eps > 1e-13 {
        for _ in 0..500 {
            let d = DVector::from_fn(x.len(), |k, _| (x[k].norm_sqr() + eps * eps).sqrt());
            let bd = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * d[j]);
            let gram = &bd * b.adjoint();
            let chol = Cholesky::new(gram).expect("weighted gram is positive definite");
            let next = bd.adjoint() * chol.solve(&yq);
            let change = (&next - &x).norm();
            x = next;
            if change <= 1e-14 * x.norm() {
                break;
            }
        }
        best = best.min(x.iter().map(|v| v.norm()).sum());
        eps /= 10.0;
    }
    best
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
    })
}

pub fn complex_gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize, p_free: f64) -> Vec<bool> {
    (0..n).map(|_| !rng.random_bool(p_free)).collect()
}

/// A real equality-constrained instance with `p ≤ 8` rows and at most 12
/// columns; even seeds use a random right-hand side, odd seeds a sparse one.
pub struct LpInstance {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub penalized: Vec<bool>,
}

pub fn lp_instance(seed: u64) -> LpInstance {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(2..=8);
    let n = rng.random_range(p + 1..=12);
    let a = gaussian_matrix(&mut rng, p, n);
    let penalized = random_mask(&mut rng, n, 0.25);
    let y = if seed.is_multiple_of(2) {
        gaussian_matrix(&mut rng, p, 1).column(0).into_owned()
    } else {
        let mut x = DVector::zeros(n);
        for _ in 0..(p / 2).max(1) {
            x[rng.random_range(0..n)] = rng.random_range(-2.0..2.0);
        }
        &a * x
    };
    LpInstance { a, y, penalized }
}
