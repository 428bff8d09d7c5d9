use hocov::covariance::build_covariance;
use hocov::criteria::{
    evaluate, inequality8_margin, nha_zubairy, witness_nu_minus, Verdict, VERDICT_TOLERANCE,
};
use hocov::dynamics::{build_classical_pump_hamiltonian, evolve, EvolutionConfig, InteractionSpec};
use hocov::fock::{ModeLayout, QuantumState};
use hocov::sweep::{run_sweep, SweepConfig};

#[test]
fn classical_pump_oracle_matches_simon_verdict() {
    let layout = ModeLayout::two_mode(120, 120).unwrap();
    let alpha = 1.0;
    let h = build_classical_pump_hamiltonian(&InteractionSpec::new(1, 1, layout.clone()), alpha).unwrap();
    let grid: Vec<f64> = (0..=15).map(|i| i as f64 * 0.1).collect();
    let traj = evolve(&QuantumState::vacuum(layout), &h, &EvolutionConfig::new(grid.clone(), alpha)).unwrap();
    for (state, &r) in traj.states.iter().zip(&grid) {
        let cov = build_covariance(state, 1, 1, 1).unwrap();
        let (a, c) = ((2.0 * r).cosh() / 4.0, (2.0 * r).sinh() / 4.0);
        assert!((cov.v[(0, 0)] - a).abs() < 1e-5, "r={r}");
        assert!((cov.block_c().determinant().abs().sqrt() - c).abs() < 1e-5, "r={r}");
        let expected = if r == 0.0 { Verdict::Separable } else { Verdict::Entangled };
        let report = evaluate(&cov, None);
        assert_eq!(report.verdict, expected, "r={r}");
        assert_eq!(inequality8_margin(&cov) < -VERDICT_TOLERANCE, r > 0.0);
        if r > 0.0 {
            let analytic = ((-2.0 * r).exp() - 1.0) / 4.0;
            assert!((witness_nu_minus(&cov) - analytic).abs() < 1e-5, "r={r}");
        }
    }
}

#[test]
fn nz_detects_less_than_the_witness() {
    let mut cfg = SweepConfig::three_mode_default();
    cfg.hierarchy = vec![1];
    cfg.xi_grid = Some(vec![0.2, 0.5]);
    let out = run_sweep(&cfg).unwrap();
    assert!(!out.flagged());
    let (early, late) = (&out.rows[0], &out.rows[1]);
    assert_eq!(early.xi, 0.2);
    assert!(early.report.nz_value.unwrap() < 0.0);
    assert!(late.report.nz_value.unwrap() >= 0.0);
    assert!(late.report.nu_minus < 0.0);
    assert_eq!(late.report.verdict, Verdict::Entangled);
}

#[test]
fn nz_is_silent_on_product_states() {
    let layout = ModeLayout::three_mode(4, 8, 12).unwrap();
    let vac = QuantumState::vacuum(layout.clone());
    assert!(nha_zubairy(&vac).unwrap() >= -1e-12);
    let fock = QuantumState::fock(layout, &[1, 2, 3]).unwrap();
    assert!(nha_zubairy(&fock).unwrap() >= -1e-12);
}
