//! Lanczos approximation of `exp(-i H t) v` for sparse Hermitian `H`.
//!
//! Each step builds an `m`-dimensional Krylov basis with the three-term
//! recurrence, exponentiates the small tridiagonal projection exactly and
//! picks the largest step for which the a-posteriori error estimate
//! `beta_m * |[exp(-i T tau) e_1]_m|` stays under the local tolerance. The
//! same basis is reused while shrinking the step, so rejected steps cost no
//! extra matrix-vector products.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const BREAKDOWN_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PropagationStats {
    pub steps: usize,
    pub matvecs: usize,
    pub max_local_error: f64,
}

impl PropagationStats {
    fn merge(&mut self, other: PropagationStats) {
        self.steps += other.steps;
        self.matvecs += other.matvecs;
        self.max_local_error = self.max_local_error.max(other.max_local_error);
    }
}

#[derive(Clone, Debug)]
pub struct Lanczos<'a> {
    h: &'a CsrMatrix,
    tolerance: f64,
    krylov_dim: usize,
}

struct Projection {
    basis: Vec<Vec<Complex64>>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    // beta_m; zero after an invariant subspace was found
    residual_norm: f64,
    norm: f64,
}

impl Projection {
    /// Coefficients of `exp(-i T tau) e_1` in the Krylov basis.
    fn coefficients(&self, tau: f64) -> Vec<Complex64> {
        let m = self.eigenvalues.len();
        let phases: Vec<Complex64> = (0..m)
            .map(|j| {
                Complex64::from_polar(self.eigenvectors[(0, j)], -self.eigenvalues[j] * tau)
            })
            .collect();
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| phases[j] * self.eigenvectors[(i, j)])
                    .sum::<Complex64>()
            })
            .collect()
    }

    fn error(&self, coeffs: &[Complex64]) -> f64 {
        self.residual_norm * self.norm * coeffs[coeffs.len() - 1].norm()
    }

    /// Rounding level of [`Projection::error`]; the last coefficient is a
    /// cancelling sum and cannot be resolved below this.
    fn error_floor(&self) -> f64 {
        let m = self.eigenvalues.len() as f64;
        16.0 * m * f64::EPSILON * self.residual_norm * self.norm
    }
}

impl<'a> Lanczos<'a> {
    pub fn new(h: &'a CsrMatrix, tolerance: f64) -> Self {
        Self {
            h,
            tolerance,
            krylov_dim: 30,
        }
    }

    pub fn with_krylov_dim(mut self, m: usize) -> Self {
        self.krylov_dim = m.max(2);
        self
    }

    /// Replaces `psi` with `exp(-i H t) psi`. Negative `t` runs backwards.
    pub fn propagate(&self, psi: &mut [Complex64], t: f64) -> Result<PropagationStats> {
        let mut stats = PropagationStats::default();
        if t == 0.0 {
            return Ok(stats);
        }
        let direction = t.signum();
        let total = t.abs();
        let mut done = 0.0;
        let mut tau_guess = total;
        let min_step = total * 1e-13;

        while done < total {
            let proj = self.project(psi, &mut stats);
            let remaining = total - done;
            let mut tau = tau_guess.min(remaining);
            let target = self.tolerance.max(proj.error_floor());
            let (coeffs, err) = loop {
                let coeffs = proj.coefficients(direction * tau);
                let err = proj.error(&coeffs);
                if err <= target {
                    break (coeffs, err);
                }
                let shrink = 0.9 * (target / err).powf(1.0 / self.krylov_dim as f64);
                tau *= shrink.clamp(0.1, 0.9);
                if tau < min_step {
                    return Err(Error::IntegratorFailure {
                        tolerance: self.tolerance,
                        achieved: err,
                        time: direction * done,
                    });
                }
            };
            psi.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            for (q, c) in proj.basis.iter().zip(&coeffs) {
                let c = c * proj.norm;
                for (x, qi) in psi.iter_mut().zip(q) {
                    *x += c * qi;
                }
            }
            stats.steps += 1;
            stats.max_local_error = stats.max_local_error.max(err);
            if tau >= remaining {
                done = total;
            } else {
                done += tau;
            }
            tau_guess = if proj.residual_norm == 0.0 {
                remaining
            } else {
                tau * 1.5
            };
        }
        Ok(stats)
    }

    /// Propagates through consecutive absolute times, calling `visit` at
    /// each one (including a leading `times[0]`, which must be the start).
    pub fn propagate_through(
        &self,
        psi: &mut [Complex64],
        start: f64,
        times: &[f64],
        mut visit: impl FnMut(usize, &[Complex64]) -> Result<()>,
    ) -> Result<PropagationStats> {
        let mut stats = PropagationStats::default();
        let mut now = start;
        for (i, &t) in times.iter().enumerate() {
            stats.merge(self.propagate(psi, t - now)?);
            now = t;
            visit(i, psi)?;
        }
        Ok(stats)
    }

    fn project(&self, psi: &[Complex64], stats: &mut PropagationStats) -> Projection {
        let n = psi.len();
        let norm = norm(psi);
        let m_max = self.krylov_dim.min(n);
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m_max);
        let mut alphas = Vec::with_capacity(m_max);
        let mut betas: Vec<f64> = Vec::with_capacity(m_max);
        basis.push(psi.iter().map(|x| x / norm).collect());

        let mut w = vec![Complex64::new(0.0, 0.0); n];
        let mut residual_norm = 0.0;
        for j in 0..m_max {
            self.h.mul_vec_into(&basis[j], &mut w);
            stats.matvecs += 1;
            if j > 0 {
                let b = betas[j - 1];
                for (wi, qi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= qi * b;
                }
            }
            let alpha: f64 = basis[j]
                .iter()
                .zip(&w)
                .map(|(q, wi)| (q.conj() * wi).re)
                .sum();
            for (wi, qi) in w.iter_mut().zip(&basis[j]) {
                *wi -= qi * alpha;
            }
            alphas.push(alpha);
            let beta = norm_of(&w);
            if beta < BREAKDOWN_TOL * (alpha.abs() + 1.0) {
                residual_norm = 0.0;
                break;
            }
            residual_norm = beta;
            if j + 1 == m_max {
                break;
            }
            betas.push(beta);
            basis.push(w.iter().map(|x| x / beta).collect());
        }

        let m = alphas.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        basis.truncate(m);
        let eig = t.symmetric_eigen();
        Projection {
            basis,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            residual_norm,
            norm,
        }
    }
}

fn norm_of(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn norm(v: &[Complex64]) -> f64 {
    let n = norm_of(v);
    if n == 0.0 {
        1.0
    } else {
        n
    }
}
