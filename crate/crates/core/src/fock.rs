//! Truncated multimode Fock space: ladder operators, tensor embedding and
//! initial states.
//!
//! Basis ordering is row-major over the layout's modes. For the three-mode
//! layout `(pump, A, B)` the basis index of `|p, a, b>` is
//! `(p * dim_a + a) * dim_b + b`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-8;
const MIN_EIGEN_TOL: f64 = 1e-10;

/// Named role of a mode inside a layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Pump,
    A,
    B,
}

/// Per-mode truncation dimensions (cutoff + 1).
///
/// Three-mode layouts are ordered `(pump, A, B)`; two-mode layouts `(A, B)`
/// are used by the classical-pump oracle and by pump-free initial states.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ModeLayout {
    dims: Vec<usize>,
}

impl TryFrom<Vec<usize>> for ModeLayout {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<ModeLayout> for Vec<usize> {
    fn from(layout: ModeLayout) -> Self {
        layout.dims
    }
}

impl ModeLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one mode".into()));
        }
        if let Some(&dim) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension { dim, min: 2 });
        }
        Ok(Self { dims })
    }

    pub fn three_mode(pump: usize, a: usize, b: usize) -> Result<Self> {
        Self::new(vec![pump, a, b])
    }

    pub fn two_mode(a: usize, b: usize) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn dim(&self, mode: usize) -> usize {
        self.dims[mode]
    }

    /// Position of a named mode, if the layout carries it.
    pub fn index_of(&self, mode: Mode) -> Option<usize> {
        match (self.dims.len(), mode) {
            (3, Mode::Pump) => Some(0),
            (3, Mode::A) => Some(1),
            (3, Mode::B) => Some(2),
            (2, Mode::A) => Some(0),
            (2, Mode::B) => Some(1),
            _ => None,
        }
    }

    pub fn require(&self, mode: Mode) -> Result<usize> {
        self.index_of(mode).ok_or_else(|| {
            Error::LayoutMismatch(format!("{}-mode layout has no {mode:?} mode", self.num_modes()))
        })
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.dims[i + 1];
        }
        strides
    }

    pub fn index(&self, occupations: &[usize]) -> usize {
        debug_assert_eq!(occupations.len(), self.dims.len());
        occupations
            .iter()
            .zip(self.strides())
            .map(|(&n, s)| n * s)
            .sum()
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (i, &d) in self.dims.iter().enumerate().rev() {
            out[i] = index % d;
            index /= d;
        }
        out
    }

    /// A layout with `extra[i]` additional levels on mode `i`.
    pub fn padded(&self, extra: &[usize]) -> Result<Self> {
        if extra.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                found: extra.len(),
            });
        }
        Self::new(self.dims.iter().zip(extra).map(|(d, e)| d + e).collect())
    }
}

impl fmt::Display for ModeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Single-mode annihilation operator with `sqrt(n)` at `(n - 1, n)`.
pub fn annihilation(dim: usize) -> Result<CsrMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    let triplets = (1..dim)
        .map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0)))
        .collect();
    Ok(CsrMatrix::from_triplets(dim, dim, triplets))
}

pub fn creation(dim: usize) -> Result<CsrMatrix> {
    Ok(annihilation(dim)?.adjoint())
}

pub fn number(dim: usize) -> Result<CsrMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    let diag: Vec<Complex64> = (0..dim).map(|n| Complex64::new(n as f64, 0.0)).collect();
    Ok(CsrMatrix::from_diagonal(&diag))
}

/// Complex operator on a truncated multimode Fock space.
///
/// Storage is always sparse; states are dense.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    layout: ModeLayout,
    matrix: CsrMatrix,
    hermitian: bool,
}

impl TruncatedOperator {
    pub fn new(layout: ModeLayout, matrix: CsrMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self {
            layout,
            matrix,
            hermitian: false,
        })
    }

    pub fn identity(layout: &ModeLayout) -> Self {
        Self {
            matrix: CsrMatrix::identity(layout.total_dim()),
            layout: layout.clone(),
            hermitian: true,
        }
    }

    /// Sets the Hermitian flag after checking `max|M - M^dagger| < 1e-12`.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let residual = self.matrix.hermiticity_residual();
        if residual >= HERMITIAN_TOL {
            return Err(Error::NotHermitian(residual));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{} vs {}",
                self.layout, other.layout
            )));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.matmul(&other.matrix),
            hermitian: false,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.add(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.sub(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.scale(s),
            hermitian: self.hermitian && s.im == 0.0,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn apply(&self, psi: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.len(),
            });
        }
        Ok(self.matrix.mul_vec(psi))
    }
}

/// Embeds a single-mode operator on `mode`, identity elsewhere.
pub fn embed(op: &CsrMatrix, mode: usize, layout: &ModeLayout) -> Result<TruncatedOperator> {
    if mode >= layout.num_modes() {
        return Err(Error::ModeOutOfRange {
            index: mode,
            modes: layout.num_modes(),
        });
    }
    let dim = layout.dim(mode);
    if op.nrows() != dim || op.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: op.nrows(),
        });
    }
    let before: usize = layout.dims()[..mode].iter().product();
    let after: usize = layout.dims()[mode + 1..].iter().product();
    let matrix = CsrMatrix::identity(before)
        .kron(op)
        .kron(&CsrMatrix::identity(after));
    let hermitian = op.hermiticity_residual() < HERMITIAN_TOL;
    Ok(TruncatedOperator {
        layout: layout.clone(),
        matrix,
        hermitian,
    })
}

/// Single-mode coherent state, renormalised after truncation.
///
/// Unless `allow_tight_truncation` is set, requires `|alpha|^2 <= dim / 4`.
pub fn coherent_state(
    alpha: Complex64,
    dim: usize,
    allow_tight_truncation: bool,
) -> Result<DVector<Complex64>> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite amplitude {alpha}")));
    }
    let mean = alpha.norm_sqr();
    let limit = dim as f64 / 4.0;
    if mean > limit && !allow_tight_truncation {
        return Err(Error::TruncationInsufficient {
            mean_photons: mean,
            limit,
        });
    }
    // alpha^n / sqrt(n!) by recurrence; the e^{-|alpha|^2/2} prefactor is
    // absorbed by the final renormalisation.
    let mut v = DVector::zeros(dim);
    v[0] = Complex64::new(1.0, 0.0);
    for n in 1..dim {
        v[n] = v[n - 1] * alpha / (n as f64).sqrt();
    }
    let norm = v.norm();
    Ok(v / Complex64::new(norm, 0.0))
}

/// Thermal density matrix with geometric weights `(n_th / (1 + n_th))^n`.
pub fn thermal_state(n_th: f64, dim: usize) -> Result<DMatrix<Complex64>> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "thermal occupation must be finite and >= 0, got {n_th}"
        )));
    }
    let ratio = n_th / (1.0 + n_th);
    let weights: Vec<f64> = (0..dim).map(|n| ratio.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut rho = DMatrix::zeros(dim, dim);
    for (n, w) in weights.iter().enumerate() {
        rho[(n, n)] = Complex64::new(w / total, 0.0);
    }
    Ok(rho)
}

pub fn fock_vector(n: usize, dim: usize) -> Result<DVector<Complex64>> {
    if n >= dim {
        return Err(Error::PowerExceedsDimension { power: n, dim });
    }
    let mut v = DVector::zeros(dim);
    v[n] = Complex64::new(1.0, 0.0);
    Ok(v)
}

#[derive(Clone, Debug)]
pub enum StateRepr {
    Pure(DVector<Complex64>),
    Mixed(DMatrix<Complex64>),
}

/// Pure state or density matrix on a [`ModeLayout`], stamped with the
/// dimensionless interaction time at which it was produced.
#[derive(Clone, Debug)]
pub struct QuantumState {
    layout: ModeLayout,
    repr: StateRepr,
    time: f64,
}

impl QuantumState {
    /// Wraps a state vector, checking its norm is within 1e-8 of one.
    pub fn pure(layout: ModeLayout, psi: DVector<Complex64>) -> Result<Self> {
        if psi.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                found: psi.len(),
            });
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NumericalConsistency {
                what: "state vector is not normalised",
                residue: (norm - 1.0).abs(),
            });
        }
        Ok(Self {
            layout,
            repr: StateRepr::Pure(psi),
            time: 0.0,
        })
    }

    /// Wraps a density matrix, checking unit trace, Hermiticity and
    /// `min eigenvalue >= -1e-10`.
    pub fn mixed(layout: ModeLayout, rho: DMatrix<Complex64>) -> Result<Self> {
        let n = layout.total_dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho.nrows(),
            });
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > NORM_TOL || trace.im.abs() > NORM_TOL {
            return Err(Error::NumericalConsistency {
                what: "density matrix trace differs from one",
                residue: (trace - Complex64::new(1.0, 0.0)).norm(),
            });
        }
        let herm = (&rho - rho.adjoint()).camax();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let min_eig = if is_diagonal(&rho) {
            (0..n).map(|i| rho[(i, i)].re).fold(f64::INFINITY, f64::min)
        } else {
            rho.clone()
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        };
        if min_eig < -MIN_EIGEN_TOL {
            return Err(Error::NumericalConsistency {
                what: "density matrix has a negative eigenvalue",
                residue: -min_eig,
            });
        }
        Ok(Self {
            layout,
            repr: StateRepr::Mixed(rho),
            time: 0.0,
        })
    }

    /// Tensor product of single-mode vectors, in layout order.
    pub fn product_pure(layout: ModeLayout, factors: &[DVector<Complex64>]) -> Result<Self> {
        check_factor_dims(&layout, factors.iter().map(|f| f.len()))?;
        let mut psi = DVector::from_element(1, Complex64::new(1.0, 0.0));
        for f in factors {
            psi = psi.kronecker(f);
        }
        Self::pure(layout, psi)
    }

    /// Tensor product of single-mode density matrices, in layout order.
    pub fn product_mixed(layout: ModeLayout, factors: &[DMatrix<Complex64>]) -> Result<Self> {
        check_factor_dims(&layout, factors.iter().map(|f| f.nrows()))?;
        let mut rho = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for f in factors {
            rho = rho.kronecker(f);
        }
        Self::mixed(layout, rho)
    }

    pub fn vacuum(layout: ModeLayout) -> Self {
        let mut psi = DVector::zeros(layout.total_dim());
        psi[0] = Complex64::new(1.0, 0.0);
        Self {
            layout,
            repr: StateRepr::Pure(psi),
            time: 0.0,
        }
    }

    /// Fock basis state `|n_0, n_1, ...>`.
    pub fn fock(layout: ModeLayout, occupations: &[usize]) -> Result<Self> {
        if occupations.len() != layout.num_modes() {
            return Err(Error::DimensionMismatch {
                expected: layout.num_modes(),
                found: occupations.len(),
            });
        }
        for (&n, &d) in occupations.iter().zip(layout.dims()) {
            if n >= d {
                return Err(Error::PowerExceedsDimension { power: n, dim: d });
            }
        }
        let mut psi = DVector::zeros(layout.total_dim());
        psi[layout.index(occupations)] = Complex64::new(1.0, 0.0);
        Ok(Self {
            layout,
            repr: StateRepr::Pure(psi),
            time: 0.0,
        })
    }

    pub(crate) fn from_parts_unchecked(layout: ModeLayout, repr: StateRepr, time: f64) -> Self {
        Self { layout, repr, time }
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn repr(&self) -> &StateRepr {
        &self.repr
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.repr, StateRepr::Pure(_))
    }

    pub fn as_vector(&self) -> Option<&DVector<Complex64>> {
        match &self.repr {
            StateRepr::Pure(v) => Some(v),
            StateRepr::Mixed(_) => None,
        }
    }

    /// Norm of the vector or trace of the density matrix.
    pub fn norm(&self) -> f64 {
        match &self.repr {
            StateRepr::Pure(v) => v.norm(),
            StateRepr::Mixed(m) => m.trace().re,
        }
    }

    pub fn density_matrix(&self) -> DMatrix<Complex64> {
        match &self.repr {
            StateRepr::Pure(v) => v * v.adjoint(),
            StateRepr::Mixed(m) => m.clone(),
        }
    }

    /// Probability of each basis state.
    pub fn basis_populations(&self) -> Vec<f64> {
        match &self.repr {
            StateRepr::Pure(v) => v.iter().map(|c| c.norm_sqr()).collect(),
            StateRepr::Mixed(m) => (0..m.nrows()).map(|i| m[(i, i)].re).collect(),
        }
    }

    /// Photon-number distribution of one mode.
    pub fn mode_distribution(&self, mode: usize) -> Vec<f64> {
        let dim = self.layout.dim(mode);
        let mut out = vec![0.0; dim];
        let strides = self.layout.strides();
        for (idx, p) in self.basis_populations().into_iter().enumerate() {
            out[(idx / strides[mode]) % dim] += p;
        }
        out
    }

    /// Total population in the top two Fock levels of every mode.
    pub fn top_level_populations(&self) -> Vec<f64> {
        (0..self.layout.num_modes())
            .map(|m| {
                let dist = self.mode_distribution(m);
                dist[dist.len() - 2..].iter().sum()
            })
            .collect()
    }

    /// Embeds the state into a layout with `extra[i]` more levels on mode `i`.
    /// Amplitudes on the added levels are zero.
    pub fn padded(&self, extra: &[usize]) -> Result<Self> {
        let target = self.layout.padded(extra)?;
        if extra.iter().all(|&e| e == 0) {
            return Ok(self.clone());
        }
        let map: Vec<usize> = (0..self.layout.total_dim())
            .map(|i| target.index(&self.layout.occupations(i)))
            .collect();
        let repr = match &self.repr {
            StateRepr::Pure(v) => {
                let mut out = DVector::zeros(target.total_dim());
                for (i, &j) in map.iter().enumerate() {
                    out[j] = v[i];
                }
                StateRepr::Pure(out)
            }
            StateRepr::Mixed(m) => {
                let mut out = DMatrix::zeros(target.total_dim(), target.total_dim());
                for (i, &ji) in map.iter().enumerate() {
                    for (k, &jk) in map.iter().enumerate() {
                        out[(ji, jk)] = m[(i, k)];
                    }
                }
                StateRepr::Mixed(out)
            }
        };
        Ok(Self {
            layout: target,
            repr,
            time: self.time,
        })
    }
}

fn check_factor_dims(layout: &ModeLayout, dims: impl Iterator<Item = usize>) -> Result<()> {
    let dims: Vec<usize> = dims.collect();
    if dims.len() != layout.num_modes() {
        return Err(Error::DimensionMismatch {
            expected: layout.num_modes(),
            found: dims.len(),
        });
    }
    for (&d, &expected) in dims.iter().zip(layout.dims()) {
        if d != expected {
            return Err(Error::DimensionMismatch { expected, found: d });
        }
    }
    Ok(())
}

fn is_diagonal(m: &DMatrix<Complex64>) -> bool {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if r != c && m[(r, c)] != Complex64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}
