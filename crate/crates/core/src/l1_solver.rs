//! Truncated basis pursuit denoising over the complex field.
//!
//! Solves
//!
//! ```text
//! minimize   Σ_{k ∈ W} |g_k|
//! subject to ‖Θ g − y‖₂ ≤ δ
//! ```
//!
//! where `|·|` is the complex modulus and `W` is the set of penalized indexes.
//! Entries outside `W` are unpenalized.
//!
//! The solver is ADMM on the splitting `g = z`, `Θ g − y = r` with `‖r‖ ≤ δ`.
//! The `g`-update is a ridge solve whose system matrix `I + ΘΘ*` does not depend
//! on the penalty, so it is factored once per sensing matrix and shared by all
//! subsequent solves (the ISD loop reuses one [`BpdnSolver`] across iterations).
//! Columns of `Θ` and the data `y` are normalized internally.
//!
//! For `δ = 0` the iterate is polished: a least-squares solve restricted to the
//! detected support replaces the ADMM point when it is exactly feasible and no
//! worse in objective.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Iterations between convergence checks.
const CHECK_EVERY: usize = 5;
/// Iterations between optimality-certificate attempts in the equality case.
const CERTIFY_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub max_iterations: usize,
    /// ADMM penalty in normalized units; the internal `ρ` is `penalty · √n`.
    pub penalty: f64,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    /// Relative primal and dual residual tolerance.
    pub tolerance: f64,
    pub polish: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            penalty: 2.0,
            relaxation: 1.6,
            tolerance: 1e-8,
            polish: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("solver max_iterations must be positive".into()));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::Config("solver penalty must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::Config("solver relaxation must lie in (0, 2)".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Self-contained description of one truncated BP instance.
#[derive(Debug, Clone)]
pub struct TruncatedBpProblem<'a> {
    pub theta: &'a DMatrix<Complex64>,
    pub y: &'a DVector<Complex64>,
    /// `penalized[k]` is true when `k ∈ W`.
    pub penalized: &'a [bool],
    pub delta: f64,
    pub params: SolverParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub g_hat: DVector<Complex64>,
    /// `Σ_{k∈W} |g_hat_k|`.
    pub objective: f64,
    /// `‖Θ g_hat − y‖₂`.
    pub fidelity_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub polished: bool,
}

/// ADMM iterate in normalized coordinates, reusable as a warm start for a
/// later solve on the same matrix and data.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    rho: f64,
    z: DVector<Complex64>,
    u: DVector<Complex64>,
    r: DVector<Complex64>,
    w: DVector<Complex64>,
}

/// One-shot convenience wrapper around [`BpdnSolver`].
pub fn solve_truncated_bp(problem: &TruncatedBpProblem<'_>) -> Result<SolverResult> {
    let solver = BpdnSolver::new(problem.theta, problem.params.clone())?;
    solver.solve(problem.y, problem.penalized, problem.delta)
}

/// `Θ*(ΘΘ*)⁻¹ y`, shrunk toward zero so that `‖Θg − y‖ = δ` when `0 < δ < ‖y‖`.
///
/// Returns zero when `δ ≥ ‖y‖`.
pub fn min_norm_feasible(
    theta: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    delta: f64,
) -> Result<DVector<Complex64>> {
    if theta.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "sensing matrix has {} rows, measurement has {}",
            theta.nrows(),
            y.len()
        )));
    }
    let y_norm = y.norm();
    if y_norm == 0.0 || delta >= y_norm {
        return Ok(DVector::zeros(theta.ncols()));
    }
    let gram = theta * theta.adjoint();
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::LinAlg("ΘΘ* is not positive definite (rank-deficient rows)".into()))?;
    let coef = chol.solve(y);
    let pinv_y = theta.ad_mul(&coef);
    let shrink = 1.0 - delta / y_norm;
    Ok(pinv_y * Complex64::new(shrink, 0.0))
}

/// Factored ADMM solver bound to one sensing matrix.
pub struct BpdnSolver {
    theta: DMatrix<Complex64>,
    /// `Θ D⁻¹` with unit-norm columns.
    scaled: DMatrix<Complex64>,
    scaled_adj: DMatrix<Complex64>,
    col_norms: Vec<f64>,
    mean_col_norm: f64,
    ridge: Cholesky<Complex64, Dyn>,
    /// Factor of `ΘΘ*` (normalized), absent when the rows are dependent.
    projector: Option<Cholesky<Complex64, Dyn>>,
    params: SolverParams,
}

impl BpdnSolver {
    pub fn new(theta: &DMatrix<Complex64>, params: SolverParams) -> Result<Self> {
        params.validate()?;
        let (p, n) = theta.shape();
        if p == 0 || n == 0 {
            return Err(Error::Dimension("sensing matrix is empty".into()));
        }
        let col_norms: Vec<f64> = theta
            .column_iter()
            .map(|c| {
                let norm = c.norm();
                if norm > 0.0 {
                    norm
                } else {
                    1.0
                }
            })
            .collect();
        let mean_col_norm = col_norms.iter().sum::<f64>() / n as f64;
        let mut scaled = theta.clone();
        for (mut col, &norm) in scaled.column_iter_mut().zip(&col_norms) {
            col.unscale_mut(norm);
        }
        let scaled_adj = scaled.adjoint();
        let gram = &scaled * &scaled_adj;
        let projector = Cholesky::new(gram.clone());
        let mut gram = gram;
        for i in 0..p {
            gram[(i, i)] += ONE;
        }
        let ridge = Cholesky::new(gram)
            .ok_or_else(|| Error::LinAlg("I + ΘΘ* failed to factor".into()))?;
        Ok(Self {
            theta: theta.clone(),
            scaled,
            scaled_adj,
            col_norms,
            mean_col_norm,
            ridge,
            projector,
            params,
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn theta(&self) -> &DMatrix<Complex64> {
        &self.theta
    }

    pub fn solve(
        &self,
        y: &DVector<Complex64>,
        penalized: &[bool],
        delta: f64,
    ) -> Result<SolverResult> {
        self.solve_from(y, penalized, delta, None).map(|(res, _)| res)
    }

    /// Solves, optionally warm-started from a previous state on the same `y`.
    pub fn solve_from(
        &self,
        y: &DVector<Complex64>,
        penalized: &[bool],
        delta: f64,
        warm: Option<&AdmmState>,
    ) -> Result<(SolverResult, AdmmState)> {
        let (p, n) = self.theta.shape();
        if y.len() != p {
            return Err(Error::Dimension(format!(
                "sensing matrix has {p} rows, measurement has {}",
                y.len()
            )));
        }
        if penalized.len() != n {
            return Err(Error::Dimension(format!(
                "penalty mask has {} entries, expected {n}",
                penalized.len()
            )));
        }
        if !(delta >= 0.0) {
            return Err(Error::Config(format!("fidelity tolerance must be >= 0, got {delta}")));
        }

        let y_norm = y.norm();
        let cold = AdmmState {
            rho: self.params.penalty * (n as f64).sqrt(),
            z: DVector::zeros(n),
            u: DVector::zeros(n),
            r: DVector::zeros(p),
            w: DVector::zeros(p),
        };

        if !penalized.iter().any(|&b| b) {
            let g = min_norm_feasible(&self.theta, y, delta)?;
            return Ok((self.finish(g, y, penalized, 0, true, false), cold));
        }
        if y_norm == 0.0 || delta >= y_norm {
            let g = DVector::zeros(n);
            return Ok((self.finish(g, y, penalized, 0, true, false), cold));
        }

        let y_s = y.unscale(y_norm);
        let weights: Vec<f64> = penalized
            .iter()
            .zip(&self.col_norms)
            .map(|(&pen, &c)| if pen { self.mean_col_norm / c } else { 0.0 })
            .collect();

        let mut state = match warm {
            Some(s) if s.z.len() == n && s.r.len() == p => s.clone(),
            _ => cold,
        };
        let (iterations, converged, certified) = match &self.projector {
            Some(projector) if delta == 0.0 => {
                self.run_affine(projector, &y_s, &weights, &mut state)
            }
            _ => {
                let (it, conv) = self.run_ball(&y_s, delta / y_norm, &weights, &mut state);
                (it, conv, None)
            }
        };

        let unscale = |x: &DVector<Complex64>| {
            DVector::from_fn(n, |k, _| x[k] * (y_norm / self.col_norms[k]))
        };
        if let Some(x) = certified {
            return Ok((self.finish(unscale(&x), y, penalized, iterations, true, true), state));
        }
        let mut g = unscale(&state.z);
        let mut polished = false;
        if self.params.polish && delta == 0.0 {
            if let Some(candidate) = self.polish(&g, y, penalized) {
                g = candidate;
                polished = true;
            }
        }
        Ok((self.finish(g, y, penalized, iterations, converged || polished, polished), state))
    }

    /// ADMM for `‖Θg − y‖ ≤ δ` with `δ > 0`, in normalized coordinates.
    fn run_ball(
        &self,
        y: &DVector<Complex64>,
        delta: f64,
        weights: &[f64],
        state: &mut AdmmState,
    ) -> (usize, bool) {
        let (p, n) = self.scaled.shape();
        let a = Complex64::new(self.params.relaxation, 0.0);
        let b = Complex64::new(1.0 - self.params.relaxation, 0.0);
        let tol = self.params.tolerance;
        let AdmmState { rho, z, u, r, w } = state;
        let rho = *rho;

        let mut q = DVector::zeros(n);
        let mut x = DVector::zeros(n);
        let mut s = DVector::zeros(p);
        let mut tmp = DVector::zeros(p);
        let mut z_prev = DVector::zeros(n);
        let mut r_prev = DVector::zeros(p);
        let mut buf = DVector::zeros(n);

        for it in 1..=self.params.max_iterations {
            let check = it % CHECK_EVERY == 0;
            if check {
                z_prev.copy_from(z);
            }
            r_prev.copy_from(r);

            // x = (I + Θ*Θ)⁻¹ (z − u + Θ*(y + r − w)) via Woodbury.
            tmp.copy_from(y);
            tmp += &*r;
            tmp -= &*w;
            q.gemv(ONE, &self.scaled_adj, &tmp, ZERO);
            q += &*z;
            q -= &*u;
            s.gemv(ONE, &self.scaled, &q, ZERO);
            self.ridge.solve_mut(&mut s);
            // Θx = s, since ΘΘ*s = Θq − s.
            x.copy_from(&q);
            x.gemv(-ONE, &self.scaled_adj, &s, ONE);

            // Relaxed Θx, then r = Proj_{‖·‖≤δ}(Θx − y + w).
            for i in 0..p {
                tmp[i] = a * s[i] + b * (r_prev[i] + y[i]);
                r[i] = tmp[i] - y[i] + w[i];
            }
            let r_norm = r.norm();
            if r_norm > delta {
                r.scale_mut(delta / r_norm);
            }
            for i in 0..p {
                w[i] += tmp[i] - r[i] - y[i];
            }

            for k in 0..n {
                let v = a * x[k] + b * z[k] + u[k];
                let zk = soft_threshold(v, weights[k] / rho);
                u[k] = v - zk;
                z[k] = zk;
            }

            if check {
                let mut primal = (&x - &*z).norm_squared();
                for i in 0..p {
                    primal += (s[i] - r[i] - y[i]).norm_sqr();
                }
                let primal = primal.sqrt();
                // Dual residual ρ‖Δz + Θ*Δr‖ against the dual scale ρ‖u + Θ*w‖.
                r_prev -= &*r;
                buf.copy_from(&z_prev);
                buf -= &*z;
                buf.gemv(ONE, &self.scaled_adj, &r_prev, ONE);
                let dual = rho * buf.norm();
                buf.copy_from(u);
                buf.gemv(ONE, &self.scaled_adj, &*w, ONE);
                let eps_pri = tol * x.norm().max(z.norm()).max(1.0);
                let eps_dual = tol * (rho * buf.norm()).max(1.0);
                if primal <= eps_pri && dual <= eps_dual {
                    return (it, true);
                }
            }
        }
        (self.params.max_iterations, false)
    }

    /// ADMM for the equality-constrained case, with an exact projection onto
    /// `{g : Θg = y}`.
    fn run_affine(
        &self,
        projector: &Cholesky<Complex64, Dyn>,
        y: &DVector<Complex64>,
        weights: &[f64],
        state: &mut AdmmState,
    ) -> (usize, bool, Option<DVector<Complex64>>) {
        let (p, n) = self.scaled.shape();
        let a = Complex64::new(self.params.relaxation, 0.0);
        let b = Complex64::new(1.0 - self.params.relaxation, 0.0);
        let tol = self.params.tolerance;
        let free: Vec<usize> = (0..n).filter(|&k| weights[k] == 0.0).collect();
        let free_gram = if free.is_empty() || free.len() >= p {
            None
        } else {
            let cols = self.scaled.select_columns(&free);
            Cholesky::new(cols.ad_mul(&cols)).map(|chol| (cols, chol))
        };
        let AdmmState { rho, z, u, .. } = state;
        let rho = *rho;

        let mut x = DVector::zeros(n);
        let mut s = DVector::zeros(p);
        let mut z_prev = DVector::zeros(n);

        for it in 1..=self.params.max_iterations {
            let check = it % CHECK_EVERY == 0;
            if check {
                z_prev.copy_from(z);
            }
            // x = v − Θ*(ΘΘ*)⁻¹(Θv − y) with v = z − u.
            x.copy_from(z);
            x -= &*u;
            s.copy_from(y);
            s.gemv(ONE, &self.scaled, &x, -ONE);
            projector.solve_mut(&mut s);
            x.gemv(-ONE, &self.scaled_adj, &s, ONE);

            for k in 0..n {
                let v = a * x[k] + b * z[k] + u[k];
                let zk = soft_threshold(v, weights[k] / rho);
                u[k] = v - zk;
                z[k] = zk;
            }

            if check {
                let primal = (&x - &*z).norm();
                let dual = rho * (&z_prev - &*z).norm();
                let eps_pri = tol * x.norm().max(z.norm()).max(1.0);
                let eps_dual = tol * (rho * u.norm()).max(1.0);
                if primal <= eps_pri && dual <= eps_dual {
                    return (it, true, None);
                }
            }
            if self.params.polish && (it % CERTIFY_EVERY == 0 || it == self.params.max_iterations) {
                let multiplier = &*u * Complex64::new(rho, 0.0);
                if let Some(cand) =
                    self.certify(projector, free_gram.as_ref(), y, weights, z, &multiplier)
                {
                    return (it, true, Some(cand));
                }
            }
        }
        (self.params.max_iterations, false, None)
    }

    /// A feasible point for `min Σ w_k|x_k|` s.t. `Θx = y` (normalized
    /// coordinates), returned only with a duality-gap certificate of
    /// optimality.
    ///
    /// The dual point is built from `multiplier ≈ Θ*λ`: project onto the range
    /// of `Θ*`, remove the component seen by the free columns, then shrink
    /// until `|Θ_k* λ| ≤ w_k` holds on the penalized columns. Two primal
    /// candidates are tried: least squares on the largest entries of `z`, and
    /// a phase-aligned nonnegative fit on the columns where the dual bound is
    /// nearly tight, which handles optimal faces that are not a single vertex.
    fn certify(
        &self,
        projector: &Cholesky<Complex64, Dyn>,
        free_gram: Option<&(DMatrix<Complex64>, Cholesky<Complex64, Dyn>)>,
        y: &DVector<Complex64>,
        weights: &[f64],
        z: &DVector<Complex64>,
        multiplier: &DVector<Complex64>,
    ) -> Option<DVector<Complex64>> {
        let (p, n) = self.scaled.shape();
        let free: Vec<usize> = (0..n).filter(|&k| weights[k] == 0.0).collect();
        if !free.is_empty() && free_gram.is_none() {
            // Free columns alone may reach y, at zero cost.
            let cols = self.scaled.select_columns(&free);
            let x_f = min_norm_feasible(&cols, y, 0.0).ok()?;
            let x = scatter(n, &free, x_f.iter().copied());
            return ((&self.scaled * &x - y).norm() <= 1e-10 * y.norm()).then_some(x);
        }
        let remove_free = |v: &mut DVector<Complex64>| {
            if let Some((cols, chol)) = free_gram {
                let coef = chol.solve(&cols.ad_mul(v));
                v.gemv(-ONE, cols, &coef, ONE);
            }
        };

        let mut lambda = projector.solve(&(&self.scaled * multiplier));
        remove_free(&mut lambda);
        let mut c = &self.scaled_adj * &lambda;
        let t = (0..n)
            .filter(|&k| weights[k] > 0.0)
            .map(|k| c[k].norm() / weights[k])
            .fold(0.0, f64::max);
        if t > 1.0 {
            lambda.unscale_mut(t);
            c.unscale_mut(t);
        }
        let dual = y.dotc(&lambda).re;
        let gap_ok = |x: &DVector<Complex64>| {
            let primal = weighted_l1_w(x, weights);
            let best = self
                .refined_dual(y, &lambda, x, weights)
                .map_or(dual, |d| d.max(dual));
            primal - best <= self.params.tolerance * primal.max(1.0)
        };
        let feasible = |x: &DVector<Complex64>| (&self.scaled * x - y).norm() <= 1e-10 * y.norm();

        // Candidate 1: least squares on the free columns and the largest
        // penalized entries of the iterate.
        let mut active: Vec<usize> = (0..n)
            .filter(|&k| weights[k] > 0.0 && z[k].norm_sqr() > 0.0)
            .collect();
        active.sort_by(|&i, &j| (weights[j] * z[j].norm()).total_cmp(&(weights[i] * z[i].norm())));
        if free.len() + active.len() > p {
            active.truncate(p - free.len());
        }
        let mut support = free.clone();
        support.extend(active);
        support.sort_unstable();
        if !support.is_empty() {
            if let Ok(x_s) = least_squares(&self.scaled.select_columns(&support), y) {
                let x = scatter(n, &support, x_s.iter().copied());
                if feasible(&x) && gap_ok(&x) {
                    return Some(x);
                }
            }
        }

        // Candidate 2: x_k = r_k·phase(c_k), r ≥ 0, on the dual-tight columns.
        let tight: Vec<usize> = (0..n)
            .filter(|&k| weights[k] > 0.0 && c[k].norm() >= weights[k] * (1.0 - 1e-3))
            .collect();
        if tight.is_empty() {
            return None;
        }
        let mut aligned = DMatrix::from_fn(p, tight.len(), |i, j| {
            let k = tight[j];
            self.scaled[(i, k)] * (c[k] / c[k].norm())
        });
        for mut col in aligned.column_iter_mut() {
            let mut v = col.clone_owned();
            remove_free(&mut v);
            col.copy_from(&v);
        }
        let mut y_rest = y.clone();
        remove_free(&mut y_rest);
        let r = nonnegative_fit(&aligned, &y_rest)?;
        let mut x = scatter(
            n,
            &tight,
            tight.iter().zip(r.iter()).map(|(&k, &rk)| (c[k] / c[k].norm()) * rk),
        );
        if let Some((cols, chol)) = free_gram {
            let rest = y - &self.scaled * &x;
            let coef = chol.solve(&cols.ad_mul(&rest));
            for (&k, &v) in free.iter().zip(coef.iter()) {
                x[k] = v;
            }
        }
        (feasible(&x) && gap_ok(&x)).then_some(x)
    }

    /// Dual value after moving `lambda` to satisfy the optimality equations
    /// `Θ_k*λ = w_k·phase(x_k)` on the support of `x` and `Θ_k*λ = 0` on the
    /// free columns exactly, then shrinking it back into the dual feasible set.
    fn refined_dual(
        &self,
        y: &DVector<Complex64>,
        lambda: &DVector<Complex64>,
        x: &DVector<Complex64>,
        weights: &[f64],
    ) -> Option<f64> {
        let n = x.len();
        let equal: Vec<usize> = (0..n)
            .filter(|&k| weights[k] == 0.0 || x[k].norm_sqr() > 0.0)
            .collect();
        if equal.is_empty() || equal.len() > self.scaled.nrows() {
            return None;
        }
        let cols = self.scaled.select_columns(&equal);
        let target = DVector::from_fn(equal.len(), |i, _| {
            let k = equal[i];
            if weights[k] == 0.0 {
                ZERO
            } else {
                x[k] * (weights[k] / x[k].norm())
            }
        });
        let chol = Cholesky::new(cols.ad_mul(&cols))?;
        let coef = chol.solve(&(cols.ad_mul(lambda) - target));
        let mut refined = lambda.clone();
        refined.gemv(-ONE, &cols, &coef, ONE);
        let c = &self.scaled_adj * &refined;
        let free_leak = (0..n)
            .filter(|&k| weights[k] == 0.0)
            .map(|k| c[k].norm())
            .fold(0.0, f64::max);
        if free_leak > 1e-10 * refined.norm().max(1.0) {
            return None;
        }
        let t = (0..n)
            .filter(|&k| weights[k] > 0.0)
            .map(|k| c[k].norm() / weights[k])
            .fold(0.0, f64::max);
        if t > 1.0 {
            refined.unscale_mut(t);
        }
        Some(y.dotc(&refined).re)
    }

    /// Least squares on the detected support; `None` if that support is too
    /// large, rank deficient, inconsistent with `y`, or worse in objective.
    fn polish(
        &self,
        g: &DVector<Complex64>,
        y: &DVector<Complex64>,
        penalized: &[bool],
    ) -> Option<DVector<Complex64>> {
        let (p, n) = self.theta.shape();
        let support: Vec<usize> = (0..n)
            .filter(|&k| !penalized[k] || g[k].norm_sqr() > 0.0)
            .collect();
        if support.is_empty() || support.len() > p {
            return None;
        }
        let sub = self.theta.select_columns(&support);
        let x_s = least_squares(&sub, y).ok()?;
        let mut cand = DVector::zeros(n);
        for (&k, &v) in support.iter().zip(x_s.iter()) {
            cand[k] = v;
        }
        let y_norm = y.norm();
        if (&self.theta * &cand - y).norm() > 1e-10 * y_norm {
            return None;
        }
        let current = weighted_l1(g, penalized);
        let polished = weighted_l1(&cand, penalized);
        if polished <= current * (1.0 + 1e-4) + 1e-12 * y_norm {
            Some(cand)
        } else {
            None
        }
    }

    fn finish(
        &self,
        g: DVector<Complex64>,
        y: &DVector<Complex64>,
        penalized: &[bool],
        iterations: usize,
        converged: bool,
        polished: bool,
    ) -> SolverResult {
        let fidelity_residual = (&self.theta * &g - y).norm();
        SolverResult {
            objective: weighted_l1(&g, penalized),
            g_hat: g,
            fidelity_residual,
            iterations,
            converged,
            polished,
        }
    }
}

/// `Σ_{k penalized} |g_k|`.
pub fn weighted_l1(g: &DVector<Complex64>, penalized: &[bool]) -> f64 {
    g.iter()
        .zip(penalized)
        .filter(|(_, &pen)| pen)
        .map(|(v, _)| v.norm())
        .sum()
}

fn weighted_l1_w(x: &DVector<Complex64>, weights: &[f64]) -> f64 {
    x.iter().zip(weights).map(|(v, &w)| w * v.norm()).sum()
}

fn scatter(
    n: usize,
    index: &[usize],
    values: impl Iterator<Item = Complex64>,
) -> DVector<Complex64> {
    let mut x = DVector::zeros(n);
    for (&k, v) in index.iter().zip(values) {
        x[k] = v;
    }
    x
}

/// Lawson–Hanson active-set solution of `min ‖A r − b‖` over real `r ≥ 0`.
fn nonnegative_fit(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Option<DVector<f64>> {
    let m = a.ncols();
    let gram = DMatrix::from_fn(m, m, |i, j| a.column(i).dotc(&a.column(j)).re);
    let atb = DVector::from_fn(m, |i, _| a.column(i).dotc(b).re);
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * b.norm().max(1.0);
    let mut r = DVector::<f64>::zeros(m);
    let mut passive = vec![false; m];
    let solve_passive = |passive: &[bool]| -> Option<DVector<f64>> {
        let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
        let g = DMatrix::from_fn(idx.len(), idx.len(), |i, j| gram[(idx[i], idx[j])]);
        let rhs = DVector::from_fn(idx.len(), |i, _| atb[idx[i]]);
        let sol = Cholesky::new(g)?.solve(&rhs);
        let mut full = DVector::zeros(m);
        for (&k, &v) in idx.iter().zip(sol.iter()) {
            full[k] = v;
        }
        Some(full)
    };
    for _ in 0..3 * m + 3 {
        let grad = &atb - &gram * &r;
        let next = (0..m)
            .filter(|&i| !passive[i] && grad[i] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = next else {
            return Some(r);
        };
        passive[j] = true;
        loop {
            let s = solve_passive(&passive)?;
            if (0..m).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                r = s;
                break;
            }
            let alpha = (0..m)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| r[i] / (r[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            r += (&s - &r) * alpha;
            for i in 0..m {
                if passive[i] && r[i] <= 1e-15 * scale {
                    passive[i] = false;
                    r[i] = 0.0;
                }
            }
        }
    }
    Some(r)
}

/// Complex soft threshold: shrinks the modulus by `t`, keeps the phase.
fn soft_threshold(v: Complex64, t: f64) -> Complex64 {
    if t == 0.0 {
        return v;
    }
    let mag = v.norm();
    if mag <= t {
        ZERO
    } else {
        v * ((mag - t) / mag)
    }
}

/// Full-column-rank least squares via column-pivoted QR. Fails with
/// [`Error::RankDeficient`] when the numerical rank is below the column count.
pub fn least_squares(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let cols = a.ncols();
    if a.nrows() < cols {
        return Err(Error::RankDeficient { rank: a.nrows(), cols });
    }
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} rows, right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    if cols == 0 {
        return Ok(DVector::zeros(0));
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let r_max = r[(0, 0)].norm();
    let eps = r_max * 1e-10 * (a.nrows() as f64);
    let rank = (0..cols).take_while(|&i| r[(i, i)].norm() > eps).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let mut x = r
        .solve_upper_triangular(&qr.q().ad_mul(b))
        .ok_or_else(|| Error::LinAlg("triangular solve failed".into()))?;
    qr.p().inv_permute_rows(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::complex_gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, p: usize, n: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(p, n, |_, _| complex_gaussian(rng, 1.0))
    }

    #[test]
    fn soft_threshold_keeps_phase() {
        let v = Complex64::new(3.0, 4.0);
        let s = soft_threshold(v, 1.0);
        assert!((s.norm() - 4.0).abs() < 1e-15);
        assert!((s.arg() - v.arg()).abs() < 1e-15);
        assert_eq!(soft_threshold(v, 5.0), ZERO);
        assert_eq!(soft_threshold(v, 0.0), v);
    }

    #[test]
    fn empty_free_set_returns_min_norm_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = random_matrix(&mut rng, 4, 9);
        let y = DVector::from_fn(4, |_, _| complex_gaussian(&mut rng, 1.0));
        let penalized = vec![false; 9];
        let res = solve_truncated_bp(&TruncatedBpProblem {
            theta: &theta,
            y: &y,
            penalized: &penalized,
            delta: 0.0,
            params: SolverParams::default(),
        })
        .unwrap();
        assert_eq!(res.objective, 0.0);
        assert!(res.fidelity_residual <= 1e-10 * y.norm());
        assert_eq!(res.g_hat, min_norm_feasible(&theta, &y, 0.0).unwrap());

        let delta = 0.3 * y.norm();
        let solver = BpdnSolver::new(&theta, SolverParams::default()).unwrap();
        let res = solver.solve(&y, &penalized, delta).unwrap();
        assert!((res.fidelity_residual - delta).abs() < 1e-10);
    }

    #[test]
    fn min_norm_identity_and_zero() {
        let theta = DMatrix::<Complex64>::identity(5, 5);
        let y = DVector::from_fn(5, |k, _| Complex64::new(k as f64, 1.0));
        let g = min_norm_feasible(&theta, &y, 0.0).unwrap();
        assert!((g - &y).norm() < 1e-14);
        let zero = DVector::zeros(5);
        assert_eq!(min_norm_feasible(&theta, &zero, 0.0).unwrap(), zero);
    }

    #[test]
    fn min_norm_residual_is_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = random_matrix(&mut rng, 6, 20);
        let y = DVector::from_fn(6, |_, _| complex_gaussian(&mut rng, 1.0));
        let g = min_norm_feasible(&theta, &y, 0.0).unwrap();
        assert!((&theta * &g - &y).norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn rank_deficient_rows_are_reported() {
        let mut theta = DMatrix::from_element(3, 5, Complex64::new(1.0, 0.0));
        theta[(0, 0)] = Complex64::new(2.0, 0.0);
        let y = DVector::from_element(3, ONE);
        assert!(matches!(min_norm_feasible(&theta, &y, 0.0), Err(Error::LinAlg(_))));
    }

    #[test]
    fn single_spike_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..10 {
            let theta = random_matrix(&mut rng, 4, 8);
            let mut truth = DVector::zeros(8);
            let k = rng.random_range(0..8);
            truth[k] = complex_gaussian(&mut rng, 1.0);
            let y = &theta * &truth;

            // Exhaustive search over 1-sparse least-squares fits.
            let best = (0..8)
                .map(|j| {
                    let col = theta.column(j);
                    let coef = col.dotc(&y) / Complex64::new(col.norm_squared(), 0.0);
                    let resid = (&y - col * coef).norm();
                    (resid, j, coef)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            assert_eq!(best.1, k);

            let penalized = vec![true; 8];
            let res = solve_truncated_bp(&TruncatedBpProblem {
                theta: &theta,
                y: &y,
                penalized: &penalized,
                delta: 0.0,
                params: SolverParams::default(),
            })
            .unwrap();
            let mut oracle = DVector::zeros(8);
            oracle[best.1] = best.2;
            assert!((&res.g_hat - &oracle).norm() < 1e-6, "trial {trial}: {}", res.g_hat);
        }
    }

    #[test]
    fn zero_is_optimal_when_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = random_matrix(&mut rng, 5, 10);
        let y = DVector::from_fn(5, |_, _| complex_gaussian(&mut rng, 1.0));
        let penalized = vec![true; 10];
        let solver = BpdnSolver::new(&theta, SolverParams::default()).unwrap();
        let res = solver.solve(&y, &penalized, y.norm() * 1.01).unwrap();
        assert_eq!(res.g_hat, DVector::zeros(10));
    }

    #[test]
    fn noisy_solutions_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta = random_matrix(&mut rng, 16, 40);
        let mut truth = DVector::zeros(40);
        for k in [3, 17, 29] {
            truth[k] = complex_gaussian(&mut rng, 1.0);
        }
        let noise = DVector::from_fn(16, |_, _| complex_gaussian(&mut rng, 0.01));
        let y = &theta * &truth + noise;
        let delta = 0.1 * 4.0;
        let solver = BpdnSolver::new(&theta, SolverParams::default()).unwrap();
        let res = solver.solve(&y, &[true; 40], delta).unwrap();
        assert!(res.converged);
        assert!(res.fidelity_residual <= delta + 1e-6 * y.norm());
    }

    #[test]
    fn dimension_errors() {
        let theta = DMatrix::<Complex64>::identity(3, 4);
        let solver = BpdnSolver::new(&theta, SolverParams::default()).unwrap();
        let y = DVector::from_element(2, ONE);
        assert!(matches!(solver.solve(&y, &[true; 4], 0.0), Err(Error::Dimension(_))));
        let y = DVector::from_element(3, ONE);
        assert!(matches!(solver.solve(&y, &[true; 3], 0.0), Err(Error::Dimension(_))));
        assert!(solver.solve(&y, &[true; 4], -1.0).is_err());
    }

    #[test]
    fn bad_params_rejected() {
        let theta = DMatrix::<Complex64>::identity(3, 4);
        let params = SolverParams {
            relaxation: 2.5,
            ..SolverParams::default()
        };
        assert!(BpdnSolver::new(&theta, params).is_err());
    }

    #[test]
    fn least_squares_flags_rank_deficiency() {
        let a = DMatrix::from_element(4, 2, ONE);
        let b = DVector::from_element(4, ONE);
        assert!(matches!(least_squares(&a, &b), Err(Error::RankDeficient { rank: 1, cols: 2 })));
    }

    #[test]
    fn nonnegative_fit_satisfies_its_optimality_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 6, 5);
            let b = DVector::from_fn(6, |_, _| complex_gaussian(&mut rng, 1.0));
            let r = nonnegative_fit(&a, &b).unwrap();
            let a_r = &a * r.map(|v| Complex64::new(v, 0.0));
            let grad = DVector::from_fn(5, |i, _| a.column(i).dotc(&(&b - &a_r)).re);
            for i in 0..5 {
                assert!(r[i] >= 0.0);
                if r[i] > 0.0 {
                    assert!(grad[i].abs() < 1e-9, "{}", grad[i]);
                } else {
                    assert!(grad[i] < 1e-9, "{}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn degenerate_optimal_face_is_certified() {
        // Columns 0 and 1 coincide, so every split of the first coordinate
        // between them is optimal.
        let theta = DMatrix::from_row_slice(2, 3, &[ONE, ONE, ZERO, ZERO, ZERO, ONE]);
        let y = DVector::from_vec(vec![ONE, Complex64::new(0.0, 2.0)]);
        let res = BpdnSolver::new(&theta, SolverParams::default())
            .unwrap()
            .solve(&y, &[true; 3], 0.0)
            .unwrap();
        assert!(res.converged, "{res:?}");
        assert!((res.objective - 3.0).abs() < 1e-7, "{}", res.objective);
        assert!(res.fidelity_residual < 1e-7);
        assert!(res.g_hat[0].re >= -1e-9 && res.g_hat[1].re >= -1e-9);
    }

    #[test]
    fn spanning_free_columns_give_zero_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let theta = random_matrix(&mut rng, 4, 9);
        let y = DVector::from_fn(4, |_, _| complex_gaussian(&mut rng, 1.0));
        let mask = [false, true, false, true, false, true, true, false, true];
        let res = BpdnSolver::new(&theta, SolverParams::default())
            .unwrap()
            .solve(&y, &mask, 0.0)
            .unwrap();
        assert!(res.converged);
        assert!(res.objective < 1e-12, "{}", res.objective);
        assert!(res.fidelity_residual < 1e-10 * y.norm());
    }

    #[test]
    fn least_squares_residual_is_orthogonal_to_the_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut a = DMatrix::from_fn(9, 5, |_, _| complex_gaussian(&mut rng, 1.0));
        // Uneven column scales force a non-trivial pivot order.
        for (j, s) in [0.1, 5.0, 1.0, 30.0, 0.01].into_iter().enumerate() {
            a.column_mut(j).scale_mut(s);
        }
        let b = DVector::from_fn(9, |_, _| complex_gaussian(&mut rng, 1.0));
        let x = least_squares(&a, &b).unwrap();
        let normal = a.ad_mul(&(&a * &x - &b));
        assert!(normal.norm() < 1e-10 * a.norm() * b.norm(), "{}", normal.norm());
    }
}
