mod common;

use common::{block_diag, local_symplectic, rotation, CovarianceParams};
use hocov::covariance::{invariants, mirror_reflect, standard_form, HigherOrderCovariance};
use hocov::criteria::{
    evaluate, inequality7_margin, inequality8_margin, lemma1_check, lemma2_transform, uncertainty_margin,
    witness_nu_minus, VERDICT_TOLERANCE,
};
use hocov::fock::{coherent_state, embed, thermal_state, ModeLayout, QuantumState};
use hocov::quadratures::{expectation, f_operator, f_polynomial, nonlinear_quadratures};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = CovarianceParams> {
    let angle = 0.0..std::f64::consts::TAU;
    (
        (0.0..2.0f64, 0.0..2.0f64, -1.2..1.2f64, angle.clone()),
        (angle.clone(), -1.0..1.0f64, angle.clone()),
        (angle.clone(), -1.0..1.0f64, angle),
        (0.3..5.0f64, 0.3..5.0f64),
    )
        .prop_map(|((e0, e1, squeeze, mix), la, lb, (f_a, f_b))| CovarianceParams {
            excess: [e0, e1],
            squeeze,
            mix,
            local_a: [la.0, la.1, la.2],
            local_b: [lb.0, lb.1, lb.2],
            f_a,
            f_b,
        })
}

fn cov_of(p: &CovarianceParams) -> HigherOrderCovariance {
    HigherOrderCovariance::from_matrix(p.matrix(), p.f_a, p.f_b).unwrap()
}

fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn physical_states_satisfy_uncertainty(p in params()) {
        let cov = cov_of(&p);
        prop_assert!(uncertainty_margin(&cov) >= -1e-8);
        prop_assert!(inequality7_margin(&cov) >= -1e-8);
    }

    #[test]
    fn witness_and_invariant_inequality_agree(p in params()) {
        let cov = cov_of(&p);
        let nu = witness_nu_minus(&cov);
        let m8 = inequality8_margin(&cov);
        if nu.abs() > VERDICT_TOLERANCE && m8.abs() > VERDICT_TOLERANCE {
            prop_assert_eq!(nu < 0.0, m8 < 0.0, "nu={} ineq8={}", nu, m8);
        }
    }

    #[test]
    fn double_reflection_is_identity(p in params()) {
        let cov = cov_of(&p);
        let once = mirror_reflect(&cov);
        let twice = mirror_reflect(&once);
        prop_assert_eq!(twice.v, cov.v);
        prop_assert_eq!(once.block_c().determinant(), -cov.block_c().determinant());
        let (a, b) = (evaluate(&cov, None), evaluate(&twice, None));
        prop_assert!((a.nu_minus - b.nu_minus).abs() <= 1e-12);
        prop_assert!((a.ineq8_margin - b.ineq8_margin).abs() <= 1e-12);
        prop_assert!((a.lemma1_value - b.lemma1_value).abs() <= 1e-12);
    }

    #[test]
    fn invariants_survive_local_symplectic_maps(
        p in params(),
        la in (0.0..6.3f64, -1.0..1.0f64, 0.0..6.3f64),
        lb in (0.0..6.3f64, -1.0..1.0f64, 0.0..6.3f64),
    ) {
        let cov = cov_of(&p);
        let s = block_diag(&local_symplectic(la.0, la.1, la.2), &local_symplectic(lb.0, lb.1, lb.2));
        let moved = cov.with_matrix(s * cov.v * s.transpose());
        let (i, j) = (invariants(&cov), invariants(&moved));
        prop_assert!(rel_close(i.i1, j.i1, 1e-8));
        prop_assert!(rel_close(i.i2, j.i2, 1e-8));
        prop_assert!(rel_close(i.i3, j.i3, 1e-8));
        prop_assert!(rel_close(i.i4, j.i4, 1e-8));
        let (nu, nu_moved) = (witness_nu_minus(&cov), witness_nu_minus(&moved));
        if nu.abs() > 1e-6 && nu_moved.abs() > 1e-6 {
            prop_assert_eq!(nu < 0.0, nu_moved < 0.0);
        }
        prop_assert!(rel_close(inequality8_margin(&cov), inequality8_margin(&moved), 1e-8));
    }

    #[test]
    fn standard_form_keeps_invariants_and_ignores_local_rotations(
        p in params(),
        ta in 0.0..6.3f64,
        tb in 0.0..6.3f64,
    ) {
        let cov = cov_of(&p);
        let sf = standard_form(&cov).unwrap();
        let (i, mut j) = (invariants(&cov), invariants(&sf.covariance()));
        if sf.parties_swapped {
            std::mem::swap(&mut j.i1, &mut j.i2);
        }
        prop_assert!(rel_close(i.i1, j.i1, 1e-8) && rel_close(i.i2, j.i2, 1e-8));
        prop_assert!(rel_close(i.i3, j.i3, 1e-8) && rel_close(i.i4, j.i4, 1e-8));
        prop_assert!(sf.b >= sf.a && sf.c1 >= sf.c2.abs());

        let r = block_diag(&rotation(ta), &rotation(tb));
        let rotated = standard_form(&cov.with_matrix(r * cov.v * r.transpose())).unwrap();
        for (x, y) in [(sf.a, rotated.a), (sf.b, rotated.b), (sf.c1, rotated.c1), (sf.c2.abs(), rotated.c2.abs())] {
            prop_assert!(rel_close(x, y, 1e-8), "{} vs {}", x, y);
        }
    }

    #[test]
    fn positive_det_c_reaches_lemma1_after_transform(p in params()) {
        let p = CovarianceParams { f_b: p.f_a, ..p };
        let mut cov = cov_of(&p);
        if cov.block_c().determinant() < 0.0 {
            // reflecting an entangled state leaves the physical set
            prop_assume!(witness_nu_minus(&cov) >= 0.0);
            cov = mirror_reflect(&cov);
        }
        let sf = standard_form(&cov).unwrap();
        let out = lemma2_transform(&sf, cov.f_ka, cov.f_lb).unwrap();
        let t = &out.transformed;
        prop_assert!((out.lambdas[1] - t.f_ka / 2.0).abs() <= 1e-6);
        prop_assert!((out.lambdas[3] - t.f_lb / 2.0).abs() <= 1e-6);
        prop_assert!(lemma1_check(t) >= -1e-8);
    }

    #[test]
    fn successful_transform_always_passes_lemma1(p in params()) {
        let mut cov = cov_of(&p);
        if cov.block_c().determinant() < 0.0 {
            prop_assume!(witness_nu_minus(&cov) >= 0.0);
            cov = mirror_reflect(&cov);
        }
        let sf = standard_form(&cov).unwrap();
        if let Ok(out) = lemma2_transform(&sf, cov.f_ka, cov.f_lb) {
            prop_assert!(lemma1_check(&out.transformed) >= -1e-8);
        }
    }
}

#[test]
fn unequal_commutators_can_leave_lemma2_targets_unreachable() {
    // nearly product state; each block minimum is capped by the smaller party
    let v = nalgebra::Matrix4::new(
        0.6, 0.0, 0.01, 0.0, //
        0.0, 0.6, 0.0, 0.01, //
        0.01, 0.0, 2.5, 0.0, //
        0.0, 0.01, 0.0, 2.5,
    );
    let cov = HigherOrderCovariance::from_matrix(v, 1.0, 4.0).unwrap();
    assert!(witness_nu_minus(&cov) > 0.0);
    let sf = standard_form(&cov).unwrap();
    assert!(sf.a * sf.a < 1.0 * 4.0 / 4.0);
    assert!(lemma2_transform(&sf, cov.f_ka, cov.f_lb).is_err());
}

fn random_state(layout: &ModeLayout, re: &[f64], im: &[f64]) -> QuantumState {
    let psi = DVector::from_fn(layout.total_dim(), |i, _| Complex64::new(re[i], im[i]));
    let norm = psi.norm();
    QuantumState::pure(layout.clone(), psi / Complex64::new(norm, 0.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrature_parity(
        re in prop::collection::vec(-1.0..1.0f64, 36),
        im in prop::collection::vec(-1.0..1.0f64, 36),
        m in 1usize..=3,
    ) {
        // dims 12 x 3 leave room for m = 3 on the populated levels
        let layout = ModeLayout::two_mode(12, 3).unwrap();
        let mut re = re;
        let mut im = im;
        for i in 0..36 {
            if layout.occupations(i)[0] >= 6 {
                re[i] = 0.0;
                im[i] = 0.0;
            }
        }
        prop_assume!(re.iter().chain(&im).any(|x| x.abs() > 1e-3));
        let state = random_state(&layout, &re, &im);
        let flipped = {
            let psi = state.as_vector().unwrap().map_with_location(|i, _, z| {
                if layout.occupations(i)[0] % 2 == 1 { -z } else { z }
            });
            QuantumState::pure(layout.clone(), psi).unwrap()
        };
        let (q, p) = nonlinear_quadratures(0, m, &layout).unwrap();
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for op in [&q, &p] {
            let (a, b) = (expectation(op, &state).unwrap().re, expectation(op, &flipped).unwrap().re);
            prop_assert!((b - sign * a).abs() < 1e-12);
            let sq = op.matmul(op).unwrap();
            let (va, vb) = (
                expectation(&sq, &state).unwrap().re - a * a,
                expectation(&sq, &flipped).unwrap().re - b * b,
            );
            prop_assert!((va - vb).abs() < 1e-10);
        }
    }

    #[test]
    fn commutator_expectation_bounded_below(
        re in prop::collection::vec(-1.0..1.0f64, 30),
        im in prop::collection::vec(-1.0..1.0f64, 30),
        m in 1usize..=9,
    ) {
        prop_assume!(re.iter().chain(&im).any(|x| x.abs() > 1e-3));
        let layout = ModeLayout::two_mode(10, 3).unwrap();
        let state = random_state(&layout, &re, &im);
        let f = f_operator(m, 0, &layout).unwrap();
        let value = expectation(&f, &state).unwrap().re;
        let f0 = f_polynomial(m).unwrap().eval(0.0);
        prop_assert!(f0 > 0.0);
        prop_assert!(value >= f0 * (1.0 - 1e-12));
    }

    #[test]
    fn embedding_keeps_hermiticity_and_norm(entries in prop::collection::vec(-1.0..1.0f64, 18), mode in 0usize..3) {
        let h = DMatrix::from_fn(3, 3, |i, j| Complex64::new(entries[3 * i + j], entries[9 + 3 * i + j]));
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let layout = ModeLayout::three_mode(3, 3, 3).unwrap();
        let sparse = hocov::sparse::CsrMatrix::from_dense(&h);
        let op = embed(&sparse, mode, &layout).unwrap().into_hermitian().unwrap();
        let spectral = |m: &DMatrix<Complex64>| m.clone().symmetric_eigenvalues().amax();
        prop_assert!((spectral(&h) - spectral(&op.matrix().to_dense())).abs() < 1e-12);
    }

    #[test]
    fn initial_states_are_normalised(re in -2.0..2.0f64, im in -2.0..2.0f64, n_th in 0.0..3.0f64) {
        let psi = coherent_state(Complex64::new(re, im), 40, false).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        let rho = thermal_state(n_th, 60).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }
}
