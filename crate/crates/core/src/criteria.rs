//! Separability conditions on higher-order covariance matrices.
//!
//! All matrix conditions use the state expectations `<f>` in place of the
//! operator-valued commutators, so `S = V + (i/2) Omega` is an ordinary 4x4
//! Hermitian matrix.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covariance::{mirror_reflect, omega, HigherOrderCovariance, StandardForm};
use crate::error::{Error, Result};
use crate::fock::{Mode, QuantumState};
use crate::quadratures::QuadratureSet;

/// Band around zero inside which witness values count as undecided.
pub const VERDICT_TOLERANCE: f64 = 1e-9;

const LEMMA2_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Entangled,
    Separable,
    Boundary,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Entangled => "entangled",
            Verdict::Separable => "separable",
            Verdict::Boundary => "boundary",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Entangled when both the eigenvalue witness and the inequality-(8)
/// margin are below `-VERDICT_TOLERANCE`, separable when neither is, and
/// boundary when the two routes disagree.
pub fn verdict(nu_minus: f64, ineq8_margin: f64) -> Verdict {
    let nu_neg = nu_minus < -VERDICT_TOLERANCE;
    let det_neg = ineq8_margin < -VERDICT_TOLERANCE;
    match (nu_neg, det_neg) {
        (true, true) => Verdict::Entangled,
        (false, false) => Verdict::Separable,
        _ => Verdict::Boundary,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub uncertainty_margin: f64,
    pub nu_minus: f64,
    pub ineq7_margin: f64,
    pub ineq8_margin: f64,
    pub lemma1_value: f64,
    pub det_c: f64,
    pub nz_value: Option<f64>,
    pub verdict: Verdict,
}

fn uncertainty_matrix(v: &Matrix4<f64>, f_a: f64, f_b: f64) -> Matrix4<Complex64> {
    let om = omega(f_a, f_b);
    Matrix4::from_fn(|r, c| Complex64::new(v[(r, c)], 0.5 * om[(r, c)]))
}

// heavy block must exceed the light one by this factor before refining
const GRADING: f64 = 1e4;

fn min_eigenvalue(m: Matrix4<Complex64>) -> f64 {
    let coarse = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    refine_graded(&m, coarse).unwrap_or(coarse)
}

fn hermitian2_min(m: &Matrix2<Complex64>) -> f64 {
    let (p, r) = (m[(0, 0)].re, m[(1, 1)].re);
    0.5 * (p + r) - (0.5 * (p - r)).hypot(m[(0, 1)].norm())
}

/// Higher orders make one party's block many orders of magnitude larger
/// than the other's, and a dense solver then only resolves the small
/// eigenvalues to `eps * |heavy block|`. Those eigenvalues solve
/// `lambda = min eig(P - Q (R - lambda)^-1 Q^H)` on the light block `P`,
/// which iterates to the light block's own precision.
fn refine_graded(m: &Matrix4<Complex64>, coarse: f64) -> Option<f64> {
    let block_norm = |o: usize| m.fixed_view::<2, 2>(o, o).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (light, heavy) = if block_norm(0) <= block_norm(2) { (0, 2) } else { (2, 0) };
    let p = m.fixed_view::<2, 2>(light, light).into_owned();
    let q = m.fixed_view::<2, 2>(light, heavy).into_owned();
    let r = m.fixed_view::<2, 2>(heavy, heavy).into_owned();
    let light_scale = block_norm(light).max(coarse.abs()).max(f64::MIN_POSITIVE);
    let mut lambda = coarse;
    for _ in 0..50 {
        let shifted = r - Matrix2::identity() * Complex64::new(lambda, 0.0);
        if hermitian2_min(&shifted) < GRADING * light_scale {
            return None;
        }
        let det = shifted[(0, 0)].re * shifted[(1, 1)].re - shifted[(0, 1)].norm_sqr();
        let inv = Matrix2::new(shifted[(1, 1)], -shifted[(0, 1)], -shifted[(1, 0)], shifted[(0, 0)])
            / Complex64::new(det, 0.0);
        let next = hermitian2_min(&(p - q * inv * q.adjoint()));
        let settled = (next - lambda).abs() <= 4.0 * f64::EPSILON * light_scale;
        lambda = next;
        if settled {
            break;
        }
    }
    let heavy_scale = block_norm(heavy);
    ((lambda - coarse).abs() <= 1e3 * f64::EPSILON * heavy_scale + 1e-12).then_some(lambda)
}

/// Smallest eigenvalue of `V + (i/2) <Omega>`; negative for unphysical input.
pub fn uncertainty_margin(cov: &HigherOrderCovariance) -> f64 {
    min_eigenvalue(uncertainty_matrix(&cov.v, cov.f_ka, cov.f_lb))
}

/// Smallest eigenvalue of the mirror-reflected `Lambda V Lambda + (i/2) <Omega>`.
pub fn witness_nu_minus(cov: &HigherOrderCovariance) -> f64 {
    uncertainty_margin(&mirror_reflect(cov))
}

fn j2() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

/// Margin of the invariant inequality built from `det A`, `det B`,
/// `det C` and the mixed trace, with a caller-chosen `det C` term.
fn invariant_margin(cov: &HigherOrderCovariance, det_c_term: f64) -> f64 {
    let (a, b, c) = (cov.block_a(), cov.block_b(), cov.block_c());
    let j = j2();
    let hk = cov.f_ka / 2.0;
    let hl = cov.f_lb / 2.0;
    let mixed = (j * a * j * c * j * b * j * c.transpose()).trace();
    a.determinant() * b.determinant() + (hk * hl - det_c_term).powi(2)
        - mixed
        - hl * hl * a.determinant()
        - hk * hk * b.determinant()
}

/// LHS - RHS of the signed-`det C` inequality; equals `det(V + (i/2) <Omega>)`
/// and is nonnegative for every physical state.
pub fn inequality7_margin(cov: &HigherOrderCovariance) -> f64 {
    invariant_margin(cov, cov.block_c().determinant())
}

/// LHS - RHS with `|det C|`; negative exactly for non-PPT states.
pub fn inequality8_margin(cov: &HigherOrderCovariance) -> f64 {
    invariant_margin(cov, cov.block_c().determinant().abs())
}

/// `det(V - F/2)`; nonnegative values certify separability.
pub fn lemma1_check(cov: &HigherOrderCovariance) -> f64 {
    (cov.v - cov.f_matrix() * 0.5).determinant()
}

pub fn evaluate(cov: &HigherOrderCovariance, nz_value: Option<f64>) -> WitnessReport {
    let nu_minus = witness_nu_minus(cov);
    let ineq8_margin = inequality8_margin(cov);
    WitnessReport {
        uncertainty_margin: uncertainty_margin(cov),
        nu_minus,
        ineq7_margin: inequality7_margin(cov),
        ineq8_margin,
        lemma1_value: lemma1_check(cov),
        det_c: cov.block_c().determinant(),
        nz_value,
        verdict: verdict(nu_minus, ineq8_margin),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lemma2Path {
    /// Closed-form scalings met the target eigenvalues.
    ClosedForm,
    /// Closed form failed; scalings found by a one-dimensional root search.
    NumericalFallback,
    /// `c2 = 0`: direct local rescaling.
    ZeroDetC,
    /// `C = 0`: already diagonal.
    Uncorrelated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Outcome {
    /// `(lambda_+, lambda_-, lambda'_+, lambda'_-)`.
    pub lambdas: [f64; 4],
    pub x: f64,
    pub y1: f64,
    pub y2: f64,
    pub path: Lemma2Path,
    /// Transformed covariance, ready for [`lemma1_check`].
    pub transformed: HigherOrderCovariance,
}

fn sym_eigs(d1: f64, d2: f64, off: f64) -> (f64, f64) {
    let mean = 0.5 * (d1 + d2);
    let rad = (0.25 * (d1 - d2).powi(2) + off * off).sqrt();
    (mean + rad, mean - rad)
}

/// Eigenvalue pairs of the two 2x2 blocks left after the local scaling
/// `diag(x th_k, 1/(x th_k), th_l / x, x / th_l)`.
fn scaled_eigs(a: f64, b: f64, c1: f64, c2: f64, x: f64, th_k: f64, th_l: f64) -> [f64; 4] {
    let (lp, lm) = sym_eigs(a * x * x * th_k * th_k, b * th_l * th_l / (x * x), c1 * th_k * th_l);
    let (mp, mm) = sym_eigs(
        b * x * x / (th_l * th_l),
        a / (x * x * th_k * th_k),
        c2 / (th_k * th_l),
    );
    [lp, lm, mp, mm]
}

/// Coefficients `M1..M6` of the closed-form scalings at a given `x`.
fn closed_form_coefficients(a: f64, b: f64, c1: f64, c2: f64, fk: f64, fl: f64, x: f64) -> [f64; 6] {
    let x2 = x * x;
    let x4 = x2 * x2;
    let m1 = 2.0 * (8.0 * a * b * b * fl * x4 - 8.0 * b * c1 * c1 * fl * x4 - 2.0 * a * fk * fl * fl * x4);
    let m2 = -16.0 * a * a * b * b * fk * fk * x2
        + 16.0 * a * b * c1 * c1 * fk * fk * x2
        + 16.0 * a * b * c2 * c2 * fk * fk * x2
        - 16.0 * c1 * c1 * c2 * c2 * fk * fk * x2
        + 4.0 * a * a * fk.powi(3) * fl * x2
        - 4.0 * b * b * fk.powi(3) * fl * x2
        + fk.powi(4) * fl * fl * x2;
    let m3 = m2 * m2
        - 2.0
            * (8.0 * a * b * b * fk.powi(5) - 8.0 * b * c2 * c2 * fk.powi(5) - 2.0 * a * fk.powi(6) * fl)
            * m1;
    let m4 = 2.0 * (8.0 * a * a * b - 8.0 * a * c1 * c1 - 2.0 * b * fk * fl);
    let m5 = (-16.0 * a * a * b * b * fl * x2
        + 16.0 * a * b * c1 * c1 * fl * x2
        + 16.0 * a * b * c2 * c2 * fl * x2
        - 16.0 * c1 * c1 * c2 * c2 * fl * x2
        - 4.0 * a * a * fk * fl * fl * x2
        + 4.0 * b * b * fk * fl * fl * x2
        + fk * fk * fl.powi(3) * x2)
        .powi(2);
    let m6 = m5 * m5
        - 2.0
            * (8.0 * a * a * b * fk * fl.powi(3) * x4
                - 8.0 * a * c2 * c2 * fk * fl.powi(3) * x4
                - 2.0 * b * fk * fk * fl.powi(4) * x4)
            * m4;
    [m1, m2, m3, m4, m5, m6]
}

/// Closed-form `(x, y1, y2)`; `x` enters `M1..M6` and is itself fixed by
/// the scalings, so the pair is solved by fixed-point iteration.
fn closed_form(a: f64, b: f64, c1: f64, c2: f64, fk: f64, fl: f64) -> Option<(f64, f64, f64)> {
    let ratio = ((a * c1 + b * c2) / (b * c1 + a * c2)).powf(0.25);
    let mut x = 1.0;
    for _ in 0..200 {
        let [m1, m2, m3, m4, m5, m6] = closed_form_coefficients(a, b, c1, c2, fk, fl, x);
        if m1 == 0.0 || m4 == 0.0 || m3 < 0.0 || m6 < 0.0 {
            return None;
        }
        let y1_sq = m2 / m1 + m3.sqrt() / m1;
        let y2_sq = m5 / m4 + m6.sqrt() / m4;
        if !(y1_sq > 0.0) || !(y2_sq > 0.0) {
            return None;
        }
        let (y1, y2) = (y1_sq.sqrt(), y2_sq.sqrt());
        let next = ratio * ((y2 / fl) / (y1 / fk)).sqrt();
        if !next.is_finite() {
            return None;
        }
        if (next - x).abs() <= 1e-14 * x {
            return Some((next, y1, y2));
        }
        x = next;
    }
    None
}

/// Rescales a `det C >= 0` standard form until the smaller eigenvalue of
/// each block equals half the corresponding commutator expectation.
pub fn lemma2_transform(sf: &StandardForm, f_ka: f64, f_lb: f64) -> Result<Lemma2Outcome> {
    let (fk, fl) = if sf.parties_swapped { (f_lb, f_ka) } else { (f_ka, f_lb) };
    let (a, b, c1, c2) = (sf.a, sf.b, sf.c1, sf.c2);
    if !(fk > 0.0 && fl > 0.0) {
        return Err(Error::InvalidParameter("commutator expectations must be positive".into()));
    }
    if c2 < 0.0 && c1 * c2 < -f64::EPSILON * (a * b) {
        return Err(Error::InvalidParameter(format!(
            "Lemma 2 transform needs det C >= 0, got c1 = {c1}, c2 = {c2}"
        )));
    }
    let wrap = |v: Matrix4<f64>| HigherOrderCovariance {
        v,
        f_ka: fk,
        f_lb: fl,
        first_moments: Vector4::zeros(),
        n: 1,
        k: 1,
        l: 1,
    };

    if c1 == 0.0 {
        return Ok(Lemma2Outcome {
            lambdas: [a, a, b, b],
            x: 1.0,
            y1: fk,
            y2: fl,
            path: Lemma2Path::Uncorrelated,
            transformed: wrap(sf.matrix()),
        });
    }

    if c2.abs() <= 1e-14 * c1 {
        let s1 = (2.0 * a / fk).sqrt();
        let s2 = (2.0 * b / fl).sqrt();
        let s = Matrix4::from_diagonal(&Vector4::new(s1, 1.0 / s1, s2, 1.0 / s2));
        let v = s * sf.matrix() * s;
        return Ok(Lemma2Outcome {
            lambdas: [v[(0, 0)], v[(1, 1)], v[(2, 2)], v[(3, 3)]],
            x: 1.0,
            y1: s1 * fk,
            y2: s2 * fl,
            path: Lemma2Path::ZeroDetC,
            transformed: wrap(v),
        });
    }

    let meets = |l: &[f64; 4]| {
        (l[1] - fk / 2.0).abs() <= LEMMA2_TOL && (l[3] - fl / 2.0).abs() <= LEMMA2_TOL
    };
    let (lambdas, x, y1, y2, path) = match closed_form(a, b, c1, c2, fk, fl) {
        Some((x, y1, y2)) if meets(&scaled_eigs(a, b, c1, c2, x, y1 / fk, y2 / fl)) => {
            let l = scaled_eigs(a, b, c1, c2, x, y1 / fk, y2 / fl);
            (l, x, y1, y2, Lemma2Path::ClosedForm)
        }
        _ => {
            let (l, x, y1, y2) = fallback_scalings(a, b, c1, c2, fk, fl)?;
            (l, x, y1, y2, Lemma2Path::NumericalFallback)
        }
    };
    if !meets(&lambdas) {
        return Err(Error::NumericalConsistency {
            what: "Lemma 2 scalings miss the target eigenvalues",
            residue: (lambdas[1] - fk / 2.0).abs().max((lambdas[3] - fl / 2.0).abs()),
        });
    }
    let v = Matrix4::from_diagonal(&Vector4::from(lambdas));
    Ok(Lemma2Outcome {
        lambdas,
        x,
        y1,
        y2,
        path,
        transformed: wrap(v),
    })
}

/// Searches the scaling ratio `r = x^2 th_k / th_l` for which the product of
/// the two block minima reaches `fk fl / 4`, then fixes the overall scale
/// `th_k th_l` so that each minimum hits its own target.
fn fallback_scalings(
    a: f64,
    b: f64,
    c1: f64,
    c2: f64,
    fk: f64,
    fl: f64,
) -> Result<([f64; 4], f64, f64, f64)> {
    let mu1 = |r: f64| sym_eigs(a * r, b / r, c1).1;
    let mu2 = |r: f64| sym_eigs(a / r, b * r, c2).1;
    let target = fk * fl / 4.0;
    let g = |u: f64| {
        let r = u.exp();
        mu1(r) * mu2(r)
    };

    let (lo, hi, steps) = (-20.0f64, 20.0f64, 4000);
    let du = (hi - lo) / steps as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..=steps {
        let u = lo + i as f64 * du;
        let val = g(u);
        if val > best.1 {
            best = (u, val);
        }
    }
    // Golden-section refinement of the maximum.
    let (mut left, mut right) = (best.0 - du, best.0 + du);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = right - phi * (right - left);
        let m2 = left + phi * (right - left);
        if g(m1) < g(m2) {
            left = m1;
        } else {
            right = m2;
        }
    }
    let u_max = 0.5 * (left + right);
    if g(u_max) < target {
        return Err(Error::NumericalConsistency {
            what: "no local scaling reaches the Lemma 2 targets",
            residue: target - g(u_max),
        });
    }
    // Bisect on the left flank, where g rises through the target.
    let mut u_low = u_max;
    while g(u_low) >= target {
        u_low -= 1.0;
        if u_low < 3.0 * lo {
            return Err(Error::NumericalConsistency {
                what: "Lemma 2 search failed to bracket the target",
                residue: g(u_low) - target,
            });
        }
    }
    let (mut below, mut above) = (u_low, u_max);
    for _ in 0..200 {
        let mid = 0.5 * (below + above);
        if g(mid) < target {
            below = mid;
        } else {
            above = mid;
        }
    }
    let r = above.exp();
    let p = (fk / 2.0) / mu1(r);
    let (th_k, th_l) = ((p * r).sqrt(), (p / r).sqrt());
    let lambdas = scaled_eigs(a, b, c1, c2, 1.0, th_k, th_l);
    Ok((lambdas, 1.0, th_k * fk, th_l * fl))
}

/// Nha-Zubairy quantity for `L1 = Q^1_A - Q^2_B`, `L2 = P^1_A + P^2_B`:
/// `Var(L1) Var(L2) - (<N_B> + 3/4)^2 - Cov(L1, L2)^2`, negative values
/// witnessing entanglement.
pub fn nha_zubairy(state: &QuantumState) -> Result<f64> {
    if state.layout().num_modes() != 3 {
        return Err(Error::LayoutMismatch(format!(
            "Nha-Zubairy criterion needs a (pump, A, B) layout, got {}",
            state.layout()
        )));
    }
    let qs = QuadratureSet::new(1, 1, 2, state.layout())?;
    nha_zubairy_with(state, &qs)
}

/// As [`nha_zubairy`], reusing the `(n, k, l) = (1, 1, 2)` quadrature set.
pub fn nha_zubairy_with(state: &QuantumState, qs: &QuadratureSet) -> Result<f64> {
    if (qs.n * qs.k, qs.n * qs.l) != (1, 2) {
        return Err(Error::InvalidParameter(format!(
            "Nha-Zubairy needs first- and second-order quadratures, got orders ({}, {})",
            qs.n * qs.k,
            qs.n * qs.l
        )));
    }
    let raw = qs.moments(state)?;
    let g = |i: usize, j: usize| raw.gram[i][j].re;
    let m = raw.means;
    let mean1 = m[0] - m[2];
    let mean2 = m[1] + m[3];
    let var1 = g(0, 0) + g(2, 2) - g(0, 2) - g(2, 0) - mean1 * mean1;
    let var2 = g(1, 1) + g(3, 3) + g(1, 3) + g(3, 1) - mean2 * mean2;
    let cross = g(0, 1) + g(0, 3) - g(2, 1) - g(2, 3) - mean1 * mean2;
    let ib = state.layout().require(Mode::B)?;
    let n_b: f64 = state
        .mode_distribution(ib)
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum();
    Ok(var1 * var2 - (n_b + 0.75).powi(2) - cross * cross)
}
