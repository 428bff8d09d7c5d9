//! Interaction Hamiltonian `H = i kappa (a^dag^k b^dag^l p - a^k b^l p^dag)`
//! and closed-system evolution in the dimensionless interaction strength
//! `xi = kappa * t * alpha_p`.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Mode, ModeLayout, QuantumState, StateRepr, TruncatedOperator};
use crate::krylov::{Lanczos, PropagationStats};
use crate::sparse::CsrMatrix;

/// Top-two-level population above which a mode counts as truncation-limited.
pub const TRUNCATION_GUARD: f64 = 1e-6;

const WEIGHT_CUTOFF: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSpec {
    pub k: usize,
    pub l: usize,
    pub kappa: f64,
    pub layout: ModeLayout,
}

impl InteractionSpec {
    pub fn new(k: usize, l: usize, layout: ModeLayout) -> Self {
        Self {
            k,
            l,
            kappa: 1.0,
            layout,
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    fn validate_powers(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 {
            return Err(Error::InvalidParameter(format!(
                "mode powers must be >= 1, got k={}, l={}",
                self.k, self.l
            )));
        }
        if !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite coupling {}", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub xi_grid: Vec<f64>,
    pub alpha_p: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_kappa() -> f64 {
    1.0
}

impl EvolutionConfig {
    pub fn new(xi_grid: Vec<f64>, alpha_p: f64) -> Self {
        Self {
            xi_grid,
            alpha_p,
            tolerance: default_tolerance(),
            kappa: default_kappa(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi_grid.first() != Some(&0.0) {
            return Err(Error::InvalidParameter("xi grid must start at 0".into()));
        }
        if self.xi_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("xi grid must be strictly increasing".into()));
        }
        if !(self.alpha_p > 0.0) || !self.alpha_p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pump amplitude must be positive, got {}",
                self.alpha_p
            )));
        }
        if !(self.kappa > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("kappa and tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Interaction time `t = xi / (kappa * alpha_p)`.
    pub fn time_of(&self, xi: f64) -> f64 {
        xi / (self.kappa * self.alpha_p)
    }
}

/// Evolved states on the requested grid plus truncation diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub xi: Vec<f64>,
    pub states: Vec<QuantumState>,
    /// Top-two-level population of every mode, per grid point.
    pub top_populations: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub stats: PropagationStats,
}

impl Trajectory {
    pub fn truncation_flagged(&self, index: usize) -> bool {
        self.top_populations[index]
            .iter()
            .any(|&p| p >= TRUNCATION_GUARD)
    }

    pub fn any_flagged(&self) -> bool {
        (0..self.states.len()).any(|i| self.truncation_flagged(i))
    }
}

/// `sqrt((n + m)! / n!)`, the matrix element of `(c^dag)^m` from `|n>`.
pub(crate) fn raising_factor(n: usize, m: usize) -> f64 {
    (1..=m).map(|j| ((n + j) as f64).sqrt()).product()
}

/// Three-mode Hamiltonian on a `(pump, A, B)` layout.
pub fn build_hamiltonian(spec: &InteractionSpec) -> Result<TruncatedOperator> {
    spec.validate_powers()?;
    if spec.k + spec.l < 3 {
        return Err(Error::UnsupportedInteraction(
            "k = l = 1 is only available through the classical-pump oracle".into(),
        ));
    }
    let layout = &spec.layout;
    if layout.num_modes() != 3 {
        return Err(Error::LayoutMismatch(format!(
            "interaction Hamiltonian needs a (pump, A, B) layout, got {layout}"
        )));
    }
    let (dp, da, db) = (layout.dim(0), layout.dim(1), layout.dim(2));
    for (power, dim) in [(spec.k, da), (spec.l, db)] {
        if power >= dim {
            return Err(Error::PowerExceedsDimension { power, dim });
        }
    }
    let mut triplets = Vec::new();
    for p in 1..dp {
        for a in 0..da - spec.k {
            let ga = raising_factor(a, spec.k);
            for b in 0..db - spec.l {
                let g = spec.kappa * (p as f64).sqrt() * ga * raising_factor(b, spec.l);
                let from = layout.index(&[p, a, b]);
                let to = layout.index(&[p - 1, a + spec.k, b + spec.l]);
                triplets.push((to, from, Complex64::new(0.0, g)));
                triplets.push((from, to, Complex64::new(0.0, -g)));
            }
        }
    }
    let n = layout.total_dim();
    TruncatedOperator::new(layout.clone(), CsrMatrix::from_triplets(n, n, triplets))?.into_hermitian()
}

/// Bilinear `i kappa alpha_p (a^dag b^dag - a b)` on a two-mode `(A, B)`
/// layout. Generates the two-mode squeezed vacuum with `r = kappa alpha_p t`.
pub fn build_classical_pump_hamiltonian(
    spec: &InteractionSpec,
    alpha_p: f64,
) -> Result<TruncatedOperator> {
    spec.validate_powers()?;
    if spec.k != 1 || spec.l != 1 {
        return Err(Error::UnsupportedInteraction(format!(
            "classical-pump oracle supports k = l = 1 only, got k={}, l={}",
            spec.k, spec.l
        )));
    }
    let layout = &spec.layout;
    if layout.num_modes() != 2 {
        return Err(Error::LayoutMismatch(format!(
            "classical-pump oracle needs an (A, B) layout, got {layout}"
        )));
    }
    let (da, db) = (layout.dim(0), layout.dim(1));
    let mut triplets = Vec::new();
    for a in 0..da - 1 {
        for b in 0..db - 1 {
            let g = spec.kappa * alpha_p * (((a + 1) * (b + 1)) as f64).sqrt();
            let from = layout.index(&[a, b]);
            let to = layout.index(&[a + 1, b + 1]);
            triplets.push((to, from, Complex64::new(0.0, g)));
            triplets.push((from, to, Complex64::new(0.0, -g)));
        }
    }
    let n = layout.total_dim();
    TruncatedOperator::new(layout.clone(), CsrMatrix::from_triplets(n, n, triplets))?.into_hermitian()
}

/// Applies `exp(-i H t)` to a state. Mixed states evolve component-wise.
pub fn propagate(
    state: &QuantumState,
    h: &TruncatedOperator,
    t: f64,
    tolerance: f64,
) -> Result<QuantumState> {
    let out = evolve_times(state, h, &[state.time(), state.time() + t], tolerance)?;
    Ok(out.0.into_iter().nth(1).expect("two time points"))
}

/// Evolves `state` to every grid point of `config`.
///
/// Returned states carry their `xi` as time stamp. Modes whose top two
/// Fock levels hold more than [`TRUNCATION_GUARD`] population produce a
/// warning rather than an error.
pub fn evolve(
    state: &QuantumState,
    h: &TruncatedOperator,
    config: &EvolutionConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if !h.is_hermitian() {
        return Err(Error::NotHermitian(h.matrix().hermiticity_residual()));
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NumericalConsistency {
            what: "initial state is not normalised",
            residue: (norm - 1.0).abs(),
        });
    }
    let times: Vec<f64> = config.xi_grid.iter().map(|&xi| config.time_of(xi)).collect();
    let (states, stats) = evolve_times(&state.clone().with_time(0.0), h, &times, config.tolerance)?;
    let states: Vec<QuantumState> = states
        .into_iter()
        .zip(&config.xi_grid)
        .map(|(s, &xi)| s.with_time(xi))
        .collect();

    let mut warnings = Vec::new();
    let top_populations: Vec<Vec<f64>> = states.iter().map(|s| s.top_level_populations()).collect();
    for (xi, tops) in config.xi_grid.iter().zip(&top_populations) {
        for (mode, &p) in tops.iter().enumerate() {
            if p >= TRUNCATION_GUARD {
                let msg = format!(
                    "xi={xi}: mode {mode} holds {p:.3e} in its top two Fock levels (guard {TRUNCATION_GUARD:e})"
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    debug!(
        "evolution: {} steps, {} matvecs, max local error {:.2e}",
        stats.steps, stats.matvecs, stats.max_local_error
    );
    Ok(Trajectory {
        xi: config.xi_grid.clone(),
        states,
        top_populations,
        warnings,
        stats,
    })
}

/// Evolves through absolute times; the first entry is the starting time.
fn evolve_times(
    state: &QuantumState,
    h: &TruncatedOperator,
    times: &[f64],
    tolerance: f64,
) -> Result<(Vec<QuantumState>, PropagationStats)> {
    if state.layout() != h.layout() {
        return Err(Error::LayoutMismatch(format!(
            "state on {} but Hamiltonian on {}",
            state.layout(),
            h.layout()
        )));
    }
    let lanczos = Lanczos::new(h.matrix(), tolerance);
    let layout = state.layout().clone();
    match state.repr() {
        StateRepr::Pure(psi) => {
            let mut work: Vec<Complex64> = psi.iter().copied().collect();
            let mut out = Vec::with_capacity(times.len());
            let stats = lanczos.propagate_through(&mut work, times[0], times, |i, v| {
                out.push(QuantumState::from_parts_unchecked(
                    layout.clone(),
                    StateRepr::Pure(DVector::from_column_slice(v)),
                    times[i],
                ));
                Ok(())
            })?;
            Ok((out, stats))
        }
        StateRepr::Mixed(rho) => {
            let n = layout.total_dim();
            let mut accum: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(n, n); times.len()];
            let mut stats = PropagationStats::default();
            for (weight, component) in ensemble(rho) {
                let mut work = component;
                let s = lanczos.propagate_through(&mut work, times[0], times, |i, v| {
                    let v = DVector::from_column_slice(v);
                    accum[i] += (&v * v.adjoint()) * Complex64::new(weight, 0.0);
                    Ok(())
                })?;
                stats.steps += s.steps;
                stats.matvecs += s.matvecs;
                stats.max_local_error = stats.max_local_error.max(s.max_local_error);
            }
            let out = accum
                .into_iter()
                .zip(times)
                .map(|(m, &t)| {
                    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
                    QuantumState::from_parts_unchecked(layout.clone(), StateRepr::Mixed(m), t)
                })
                .collect();
            Ok((out, stats))
        }
    }
}

/// Weighted pure-state decomposition of a density matrix.
fn ensemble(rho: &DMatrix<Complex64>) -> Vec<(f64, Vec<Complex64>)> {
    let n = rho.nrows();
    let diagonal = (0..n).all(|c| (0..n).all(|r| r == c || rho[(r, c)].norm() == 0.0));
    if diagonal {
        return (0..n)
            .filter(|&i| rho[(i, i)].re > WEIGHT_CUTOFF)
            .map(|i| {
                let mut v = vec![Complex64::new(0.0, 0.0); n];
                v[i] = Complex64::new(1.0, 0.0);
                (rho[(i, i)].re, v)
            })
            .collect();
    }
    let eig = rho.clone().symmetric_eigen();
    (0..n)
        .filter(|&j| eig.eigenvalues[j] > WEIGHT_CUTOFF)
        .map(|j| {
            (
                eig.eigenvalues[j],
                eig.eigenvectors.column(j).iter().copied().collect(),
            )
        })
        .collect()
}

/// `N_A / k - N_B / l` on a `(pump, A, B)` layout; commutes with the
/// Hamiltonian away from the cutoff.
pub fn selection_rule_operator(spec: &InteractionSpec) -> Result<TruncatedOperator> {
    let layout = &spec.layout;
    let ia = layout.require(Mode::A)?;
    let ib = layout.require(Mode::B)?;
    let diag: Vec<Complex64> = (0..layout.total_dim())
        .map(|idx| {
            let occ = layout.occupations(idx);
            Complex64::new(occ[ia] as f64 / spec.k as f64 - occ[ib] as f64 / spec.l as f64, 0.0)
        })
        .collect();
    TruncatedOperator::new(layout.clone(), CsrMatrix::from_diagonal(&diag))?.into_hermitian()
}
