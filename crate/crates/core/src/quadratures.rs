//! Nonlinear quadratures `Q^m = (a^m + a^dag^m)/2`, `P^m = i(a^dag^m - a^m)/2`,
//! their commutator polynomials `f_m(N)` and moment evaluation.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{embed, Mode, ModeLayout, QuantumState, StateRepr, TruncatedOperator};
use crate::sparse::CsrMatrix;

/// Highest order with a tabulated commutator polynomial.
pub const MAX_ORDER: usize = 9;

const IMAG_TOL: f64 = 1e-10;

/// Numerators (over 2) of `f_m(N)`, ascending powers of `N`.
const F_TABLE: [&[i64]; MAX_ORDER] = [
    &[1],
    &[2, 4],
    &[6, 9, 9],
    &[24, 56, 24, 16],
    &[120, 250, 275, 50, 25],
    &[720, 1884, 1350, 960, 90, 36],
    &[5040, 12348, 14896, 5145, 2695, 147, 49],
    &[40320, 114624, 105056, 80416, 15680, 6496, 224, 64],
    &[362880, 986256, 1282284, 605556, 336609, 40824, 13986, 324, 81],
];

/// Polynomial `f_m(N)` with `[Q^m, P^m] = i f_m(N)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FPolynomial {
    order: usize,
    numerators: Vec<i64>,
}

impl FPolynomial {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficients of `N^0, N^1, ...`, all with denominator 2.
    pub fn numerators(&self) -> &[i64] {
        &self.numerators
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.numerators.iter().map(|&c| c as f64 / 2.0).collect()
    }

    /// Twice the polynomial at an integer photon number, exactly.
    pub fn twice_at(&self, n: u64) -> i128 {
        self.numerators
            .iter()
            .rev()
            .fold(0i128, |acc, &c| acc * n as i128 + c as i128)
    }

    pub fn eval(&self, n: f64) -> f64 {
        self.numerators.iter().rev().fold(0.0, |acc, &c| acc * n + c as f64) / 2.0
    }
}

pub fn f_polynomial(m: usize) -> Result<FPolynomial> {
    if !(1..=MAX_ORDER).contains(&m) {
        return Err(Error::UnsupportedOrder(m));
    }
    Ok(FPolynomial {
        order: m,
        numerators: F_TABLE[m - 1].to_vec(),
    })
}

/// Exact `max |[Q^m, P^m] - i f_m(N)|` over the truncation-safe block
/// (Fock indices `<= dim - m - 1`) of a single mode.
///
/// Ladder matrix elements are square roots of integers, so the check runs in
/// exact surd arithmetic; floating point would lose ~1e-3 absolute accuracy
/// at `m = 9` where `f_9` reaches 1e13.
pub fn commutator_residual(m: usize, dim: usize) -> Result<f64> {
    let poly = f_polynomial(m)?;
    if m >= dim {
        return Err(Error::PowerExceedsDimension { power: m, dim });
    }
    let lower = surd::SurdMatrix::lowering_power(dim, m);
    let raise = lower.transpose();
    // X = 2Q = a^m + a^dag^m, Y = -2iP = a^dag^m - a^m, so [Q, P] = (i/4)[X, Y].
    let x = lower.add(&raise, 1);
    let y = raise.add(&lower, -1);
    let comm = x.mul(&y).add(&y.mul(&x), -1);
    let safe = dim - m;
    let mut worst = 0.0f64;
    for r in 0..safe {
        for c in 0..safe {
            let entry = comm.get(r, c);
            // (1/4)[X, Y] should equal f_m(N): compare 4 f_m = 2 * twice_at.
            let target = if r == c { 2 * poly.twice_at(r as u64) } else { 0 };
            let dev = entry.deviation_from(target) / 4.0;
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

/// Cross-checks the stored table against exact commutators, once per process.
pub fn verify_f_table() -> Result<()> {
    static CHECK: OnceLock<std::result::Result<(), (usize, f64)>> = OnceLock::new();
    let outcome = CHECK.get_or_init(|| {
        for m in 1..=MAX_ORDER {
            let dev = commutator_residual(m, 3 * m + 8).map_err(|_| (m, f64::NAN))?;
            if dev != 0.0 {
                return Err((m, dev));
            }
        }
        Ok(())
    });
    outcome.map_err(|(order, deviation)| Error::FTableMismatch { order, deviation })
}

/// Single-mode `a^m` with elements `sqrt(n! / (n - m)!)` at `(n - m, n)`.
pub fn lowering_power(dim: usize, m: usize) -> Result<CsrMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    if m >= dim {
        return Err(Error::PowerExceedsDimension { power: m, dim });
    }
    let triplets = (m..dim)
        .map(|n| {
            let v: f64 = (n - m + 1..=n).map(|j| (j as f64).sqrt()).product();
            (n - m, n, Complex64::new(v, 0.0))
        })
        .collect();
    Ok(CsrMatrix::from_triplets(dim, dim, triplets))
}

/// Single-mode `(Q^m, P^m)`.
pub fn single_mode_quadratures(dim: usize, m: usize) -> Result<(CsrMatrix, CsrMatrix)> {
    if m == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    let lower = lowering_power(dim, m)?;
    let raise = lower.adjoint();
    let half = Complex64::new(0.5, 0.0);
    let q = lower.axpby(half, &raise, half);
    let p = raise.axpby(Complex64::new(0.0, 0.5), &lower, Complex64::new(0.0, -0.5));
    Ok((q, p))
}

/// `(Q^m, P^m)` acting on `mode` of `layout`.
pub fn nonlinear_quadratures(
    mode: usize,
    m: usize,
    layout: &ModeLayout,
) -> Result<(TruncatedOperator, TruncatedOperator)> {
    if mode >= layout.num_modes() {
        return Err(Error::ModeOutOfRange {
            index: mode,
            modes: layout.num_modes(),
        });
    }
    let (q, p) = single_mode_quadratures(layout.dim(mode), m)?;
    Ok((
        embed(&q, mode, layout)?.into_hermitian()?,
        embed(&p, mode, layout)?.into_hermitian()?,
    ))
}

/// Diagonal `f_m(N)` acting on `mode` of `layout`.
pub fn f_operator(m: usize, mode: usize, layout: &ModeLayout) -> Result<TruncatedOperator> {
    let poly = f_polynomial(m)?;
    verify_f_table()?;
    if mode >= layout.num_modes() {
        return Err(Error::ModeOutOfRange {
            index: mode,
            modes: layout.num_modes(),
        });
    }
    let diag: Vec<Complex64> = (0..layout.dim(mode))
        .map(|n| Complex64::new(poly.eval(n as f64), 0.0))
        .collect();
    embed(&CsrMatrix::from_diagonal(&diag), mode, layout)?.into_hermitian()
}

/// The four quadratures `(Q^{nk}_A, P^{nk}_A, Q^{nl}_B, P^{nl}_B)` and the
/// commutator operators `f_{nk}(N_A)`, `f_{nl}(N_B)`.
///
/// Operators live on the input layout padded by `n k` levels on A and `n l`
/// levels on B, so that applying any quadrature to a state supported on the
/// unpadded layout is exact.
#[derive(Clone, Debug)]
pub struct QuadratureSet {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    base: ModeLayout,
    padding: Vec<usize>,
    ops: [TruncatedOperator; 4],
    f_a: TruncatedOperator,
    f_b: TruncatedOperator,
}

impl QuadratureSet {
    pub fn new(n: usize, k: usize, l: usize, base: &ModeLayout) -> Result<Self> {
        if n == 0 || k == 0 || l == 0 {
            return Err(Error::InvalidParameter(format!(
                "hierarchy index and powers must be >= 1, got n={n}, k={k}, l={l}"
            )));
        }
        let (mk, ml) = (n * k, n * l);
        for m in [mk, ml] {
            if m > MAX_ORDER {
                return Err(Error::UnsupportedOrder(m));
            }
        }
        let ia = base.require(Mode::A)?;
        let ib = base.require(Mode::B)?;
        let mut padding = vec![0; base.num_modes()];
        padding[ia] = mk;
        padding[ib] = ml;
        let layout = base.padded(&padding)?;
        let (qa, pa) = nonlinear_quadratures(ia, mk, &layout)?;
        let (qb, pb) = nonlinear_quadratures(ib, ml, &layout)?;
        Ok(Self {
            n,
            k,
            l,
            base: base.clone(),
            padding,
            ops: [qa, pa, qb, pb],
            f_a: f_operator(mk, ia, &layout)?,
            f_b: f_operator(ml, ib, &layout)?,
        })
    }

    /// Layout the operators act on.
    pub fn layout(&self) -> &ModeLayout {
        self.ops[0].layout()
    }

    pub fn base_layout(&self) -> &ModeLayout {
        &self.base
    }

    pub fn operators(&self) -> &[TruncatedOperator; 4] {
        &self.ops
    }

    pub fn f_a(&self) -> &TruncatedOperator {
        &self.f_a
    }

    pub fn f_b(&self) -> &TruncatedOperator {
        &self.f_b
    }

    /// Pads a state on the base layout onto [`Self::layout`].
    pub fn prepare(&self, state: &QuantumState) -> Result<QuantumState> {
        if state.layout() == self.layout() {
            return Ok(state.clone());
        }
        if state.layout() != &self.base {
            return Err(Error::LayoutMismatch(format!(
                "quadrature set built for {}, state on {}",
                self.base,
                state.layout()
            )));
        }
        state.padded(&self.padding)
    }

    /// `<R_i R_j>` for all pairs, the means `<R_i>` and `<f_A>`, `<f_B>`.
    pub fn moments(&self, state: &QuantumState) -> Result<RawMoments> {
        let state = self.prepare(state)?;
        let mut gram = [[Complex64::new(0.0, 0.0); 4]; 4];
        let mut means = [0.0; 4];
        match state.repr() {
            StateRepr::Pure(psi) => {
                let images: Vec<DVector<Complex64>> =
                    self.ops.iter().map(|op| op.matrix().mul_vec(psi)).collect();
                for i in 0..4 {
                    means[i] = real_checked(psi.dotc(&images[i]), "quadrature mean is complex")?;
                    for j in 0..4 {
                        gram[i][j] = images[i].dotc(&images[j]);
                    }
                }
            }
            StateRepr::Mixed(rho) => {
                let images: Vec<_> = self.ops.iter().map(|op| op.matrix().mul_dense(rho)).collect();
                for i in 0..4 {
                    means[i] = real_checked(images[i].trace(), "quadrature mean is complex")?;
                    for j in 0..4 {
                        gram[i][j] = self.ops[i].matrix().trace_product(&images[j]);
                    }
                }
            }
        }
        let f_a = real_checked(expectation(&self.f_a, &state)?, "<f_A> is complex")?;
        let f_b = real_checked(expectation(&self.f_b, &state)?, "<f_B> is complex")?;
        Ok(RawMoments {
            gram,
            means,
            f_a,
            f_b,
        })
    }
}

/// Uncentred second moments of a [`QuadratureSet`] on one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawMoments {
    /// `gram[i][j] = <R_i R_j>`.
    pub gram: [[Complex64; 4]; 4],
    pub means: [f64; 4],
    pub f_a: f64,
    pub f_b: f64,
}

fn real_checked(z: Complex64, what: &'static str) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * (1.0 + z.re.abs()) {
        return Err(Error::NumericalConsistency { what, residue: z.im.abs() });
    }
    Ok(z.re)
}

/// `tr(op rho)` or `<psi|op|psi>`.
pub fn expectation(op: &TruncatedOperator, state: &QuantumState) -> Result<Complex64> {
    if op.layout() != state.layout() {
        return Err(Error::LayoutMismatch(format!(
            "operator on {}, state on {}",
            op.layout(),
            state.layout()
        )));
    }
    let value = match state.repr() {
        StateRepr::Pure(psi) => psi.dotc(&op.matrix().mul_vec(psi)),
        StateRepr::Mixed(rho) => op.matrix().trace_product(rho),
    };
    if op.is_hermitian() && value.im.abs() > IMAG_TOL * (1.0 + value.re.abs()) {
        return Err(Error::NumericalConsistency {
            what: "Hermitian expectation has an imaginary part",
            residue: value.im.abs(),
        });
    }
    Ok(value)
}

/// `<op_i op_j>`.
pub fn second_moment(
    op_i: &TruncatedOperator,
    op_j: &TruncatedOperator,
    state: &QuantumState,
) -> Result<Complex64> {
    for op in [op_i, op_j] {
        if op.layout() != state.layout() {
            return Err(Error::LayoutMismatch(format!(
                "operator on {}, state on {}",
                op.layout(),
                state.layout()
            )));
        }
    }
    Ok(match state.repr() {
        StateRepr::Pure(psi) => {
            let right = op_j.matrix().mul_vec(psi);
            if op_i.is_hermitian() {
                op_i.matrix().mul_vec(psi).dotc(&right)
            } else {
                psi.dotc(&op_i.matrix().mul_vec(&right))
            }
        }
        StateRepr::Mixed(rho) => op_i.matrix().trace_product(&op_j.matrix().mul_dense(rho)),
    })
}

/// `<{dR_i, dR_j}>/2` for Hermitian operators.
pub fn symmetrized_covariance(
    op_i: &TruncatedOperator,
    op_j: &TruncatedOperator,
    state: &QuantumState,
) -> Result<f64> {
    if !op_i.is_hermitian() || !op_j.is_hermitian() {
        return Err(Error::InvalidParameter(
            "symmetrized covariance needs Hermitian operators".into(),
        ));
    }
    let mi = real_checked(expectation(op_i, state)?, "mean is complex")?;
    let mj = real_checked(expectation(op_j, state)?, "mean is complex")?;
    let sym = (second_moment(op_i, op_j, state)? + second_moment(op_j, op_i, state)?) * 0.5;
    let value = real_checked(sym, "symmetrized second moment is complex")?;
    Ok(value - mi * mj)
}

/// Exact arithmetic on sparse matrices whose entries are integer
/// combinations of square roots of integers.
mod surd {
    use super::*;

    const PRIMES: [u64; 25] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83,
        89, 97,
    ];

    /// `coef * sqrt(product of primes selected by mask)`.
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    struct Term {
        coef: i128,
        mask: u32,
    }

    impl Term {
        fn sqrt_of_product(factors: impl Iterator<Item = u64>) -> Self {
            let mut exps = [0u32; PRIMES.len()];
            for mut f in factors {
                for (i, &p) in PRIMES.iter().enumerate() {
                    while f % p == 0 {
                        exps[i] += 1;
                        f /= p;
                    }
                }
                assert_eq!(f, 1, "factor outside the prime table");
            }
            let mut coef = 1i128;
            let mut mask = 0u32;
            for (i, &e) in exps.iter().enumerate() {
                coef *= (PRIMES[i] as i128).pow(e / 2);
                if e % 2 == 1 {
                    mask |= 1 << i;
                }
            }
            Self { coef, mask }
        }

        fn mul(self, other: Self) -> Self {
            let shared = self.mask & other.mask;
            let mut coef = self.coef * other.coef;
            for (i, &p) in PRIMES.iter().enumerate() {
                if shared & (1 << i) != 0 {
                    coef *= p as i128;
                }
            }
            Self {
                coef,
                mask: self.mask ^ other.mask,
            }
        }

        fn value(self) -> f64 {
            let radicand: f64 = PRIMES
                .iter()
                .enumerate()
                .filter(|(i, _)| self.mask & (1 << i) != 0)
                .map(|(_, &p)| p as f64)
                .product();
            self.coef as f64 * radicand.sqrt()
        }
    }

    /// Sum of terms keyed by square-free part.
    #[derive(Clone, Debug, Default)]
    pub(super) struct Entry(BTreeMap<u32, i128>);

    impl Entry {
        fn push(&mut self, t: Term, sign: i128) {
            let slot = self.0.entry(t.mask).or_insert(0);
            *slot += sign * t.coef;
            if *slot == 0 {
                self.0.remove(&t.mask);
            }
        }

        /// `|entry - target|`; zero exactly when they agree.
        pub(super) fn deviation_from(&self, target: i128) -> f64 {
            let mut e = self.clone();
            e.push(Term { coef: target, mask: 0 }, -1);
            e.0.iter()
                .map(|(&mask, &coef)| Term { coef, mask }.value().abs())
                .sum()
        }
    }

    #[derive(Clone, Debug, Default)]
    pub(super) struct SurdMatrix {
        entries: BTreeMap<(usize, usize), Entry>,
    }

    impl SurdMatrix {
        pub(super) fn lowering_power(dim: usize, m: usize) -> Self {
            assert!(dim <= PRIMES[PRIMES.len() - 1] as usize, "dimension beyond prime table");
            let mut out = Self::default();
            for n in m..dim {
                let t = Term::sqrt_of_product((n - m + 1..=n).map(|j| j as u64));
                out.entries.entry((n - m, n)).or_default().push(t, 1);
            }
            out
        }

        pub(super) fn transpose(&self) -> Self {
            Self {
                entries: self
                    .entries
                    .iter()
                    .map(|(&(r, c), e)| ((c, r), e.clone()))
                    .collect(),
            }
        }

        /// `self + sign * other`.
        pub(super) fn add(&self, other: &Self, sign: i128) -> Self {
            let mut out = self.clone();
            for (&key, e) in &other.entries {
                let slot = out.entries.entry(key).or_default();
                for (&mask, &coef) in &e.0 {
                    slot.push(Term { coef, mask }, sign);
                }
            }
            out
        }

        pub(super) fn mul(&self, other: &Self) -> Self {
            let mut out = Self::default();
            for (&(r, k), left) in &self.entries {
                for (&(k2, c), right) in other.entries.range((k, 0)..(k + 1, 0)) {
                    debug_assert_eq!(k, k2);
                    let slot = out.entries.entry((r, c)).or_default();
                    for (&ml, &cl) in &left.0 {
                        for (&mr, &cr) in &right.0 {
                            let t = Term { coef: cl, mask: ml }.mul(Term { coef: cr, mask: mr });
                            slot.push(t, 1);
                        }
                    }
                }
            }
            out
        }

        pub(super) fn get(&self, r: usize, c: usize) -> Entry {
            self.entries.get(&(r, c)).cloned().unwrap_or_default()
        }
    }
}
