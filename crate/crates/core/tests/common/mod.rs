#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::Rng;

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Determinant-one map `R(theta) diag(s, 1/s) R(phi)`.
pub fn local_symplectic(theta: f64, log_s: f64, phi: f64) -> Matrix2<f64> {
    let s = log_s.exp();
    rotation(theta) * Matrix2::new(s, 0.0, 0.0, 1.0 / s) * rotation(phi)
}

pub fn block_diag(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(b);
    m
}

/// Two-mode squeezer in `(q_A, p_A, q_B, p_B)` ordering; symplectic for `J + J`.
pub fn two_mode_squeezer(r: f64) -> Matrix4<f64> {
    let (c, s) = (r.cosh(), r.sinh());
    Matrix4::new(
        c, 0.0, s, 0.0, //
        0.0, c, 0.0, -s, //
        s, 0.0, c, 0.0, //
        0.0, -s, 0.0, c,
    )
}

/// Beam splitter mixing the two parties with angle `theta`.
pub fn beam_splitter(theta: f64) -> Matrix4<f64> {
    let (s, c) = theta.sin_cos();
    Matrix4::new(
        c, 0.0, s, 0.0, //
        0.0, c, 0.0, s, //
        -s, 0.0, c, 0.0, //
        0.0, -s, 0.0, c,
    )
}

/// Rescales a covariance for `J + J` (minimum eigenvalue 1/2 per mode) to
/// commutator expectations `(f_a, f_b)`.
pub fn with_commutators(v0: &Matrix4<f64>, f_a: f64, f_b: f64) -> Matrix4<f64> {
    let d = Matrix4::from_diagonal(&Vector4::new(f_a.sqrt(), f_a.sqrt(), f_b.sqrt(), f_b.sqrt()));
    d * v0 * d
}

/// Parameters of a random physical two-party covariance.
#[derive(Clone, Copy, Debug)]
pub struct CovarianceParams {
    /// Thermal excess of the two symplectic eigenvalues (each `>= 1/2`).
    pub excess: [f64; 2],
    pub squeeze: f64,
    pub mix: f64,
    pub local_a: [f64; 3],
    pub local_b: [f64; 3],
    pub f_a: f64,
    pub f_b: f64,
}

impl CovarianceParams {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut angle = || rng.gen_range(0.0..std::f64::consts::TAU);
        let local_a = [angle(), 0.0, angle()];
        let local_b = [angle(), 0.0, angle()];
        let mix = angle();
        Self {
            excess: [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)],
            squeeze: rng.gen_range(-1.0..1.0),
            mix,
            local_a: [local_a[0], rng.gen_range(-1.0..1.0), local_a[2]],
            local_b: [local_b[0], rng.gen_range(-1.0..1.0), local_b[2]],
            f_a: rng.gen_range(0.3..5.0),
            f_b: rng.gen_range(0.3..5.0),
        }
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let nu = Matrix4::from_diagonal(&Vector4::new(
            0.5 + self.excess[0],
            0.5 + self.excess[0],
            0.5 + self.excess[1],
            0.5 + self.excess[1],
        ));
        let s = block_diag(
            &local_symplectic(self.local_a[0], self.local_a[1], self.local_a[2]),
            &local_symplectic(self.local_b[0], self.local_b[1], self.local_b[2]),
        ) * two_mode_squeezer(self.squeeze)
            * beam_splitter(self.mix);
        with_commutators(&(s * nu * s.transpose()), self.f_a, self.f_b)
    }
}

/// Covariance of a random mixture of product states with displaced means,
/// for commutators `(f_a, f_b)`.
pub fn separable_mixture(rng: &mut impl Rng, f_a: f64, f_b: f64) -> Matrix4<f64> {
    let terms = rng.gen_range(3..7);
    let mut weights: Vec<f64> = (0..terms).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut second = Matrix4::zeros();
    let mut mean = Vector4::zeros();
    for &w in &weights {
        let local = |rng: &mut dyn rand::RngCore, f: f64| {
            let s = local_symplectic(
                rng.gen_range(0.0..6.3),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(0.0..6.3),
            );
            s * Matrix2::identity() * (f / 2.0 + rng.gen_range(0.0..1.0)) * s.transpose()
        };
        let v = block_diag(&local(rng, f_a), &local(rng, f_b));
        let d = Vector4::from_fn(|_, _| rng.gen_range(-1.5..1.5));
        second += (v + d * d.transpose()) * w;
        mean += d * w;
    }
    second - mean * mean.transpose()
}
