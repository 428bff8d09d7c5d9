mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{separable_mixture, CovarianceParams};
use hocov::covariance::{build_covariance, invariants, mirror_reflect, standard_form, HigherOrderCovariance};
use hocov::criteria::{evaluate, lemma1_check, lemma2_transform, Lemma2Path, VERDICT_TOLERANCE};
use hocov::dynamics::{build_classical_pump_hamiltonian, evolve, EvolutionConfig, InteractionSpec};
use hocov::fock::{ModeLayout, QuantumState};
use hocov::quadratures::{commutator_residual, verify_f_table, MAX_ORDER};
use hocov::sweep::{run_sweep, SweepConfig, SweepOutcome, SweepRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PHYSICAL_TOLERANCE: f64 = 1e-8;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

struct Sweeps {
    three_mode: SweepOutcome,
    four_mode: SweepOutcome,
    extra: Vec<SweepOutcome>,
}

impl Sweeps {
    fn all_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.three_mode
            .rows
            .iter()
            .chain(&self.four_mode.rows)
            .chain(self.extra.iter().flat_map(|o| &o.rows))
    }
}

fn commutator_table() -> hocov::Result<Outcome> {
    verify_f_table()?;
    let mut worst = 0.0f64;
    for m in 1..=MAX_ORDER {
        worst = worst.max(commutator_residual(m, 3 * m + 8)?.abs());
    }
    Ok(Outcome::new(worst < 1e-10, format!("max deviation {worst:e} over m = 1..{MAX_ORDER}")))
}

fn first_moments(s: &Sweeps) -> Outcome {
    let worst = s.three_mode.rows.iter().map(|r| r.max_first_moment).fold(0.0, f64::max);
    Outcome::new(
        worst < 1e-8,
        format!("max |<R>| = {worst:e} over {} rows", s.three_mode.rows.len()),
    )
}

fn gaussian_oracle() -> hocov::Result<Outcome> {
    let layout = ModeLayout::two_mode(80, 80)?;
    let alpha = 1.0;
    let h = build_classical_pump_hamiltonian(&InteractionSpec::new(1, 1, layout.clone()), alpha)?;
    let grid = vec![0.0, 0.25, 0.5, 1.0];
    let traj = evolve(&QuantumState::vacuum(layout), &h, &EvolutionConfig::new(grid.clone(), alpha))?;
    let mut worst = 0.0f64;
    let mut verdicts_ok = true;
    for (state, &r) in traj.states.iter().zip(&grid) {
        let cov = build_covariance(state, 1, 1, 1)?;
        let (a, c) = ((2.0 * r).cosh() / 4.0, (2.0 * r).sinh() / 4.0);
        worst = worst
            .max((cov.v[(0, 0)] - a).abs())
            .max((cov.v[(2, 2)] - a).abs())
            .max((cov.block_c().determinant().abs().sqrt() - c).abs());
        let entangled = cov_report(&cov).ineq8_margin < -VERDICT_TOLERANCE;
        verdicts_ok &= entangled == (r > 0.0);
    }
    Ok(Outcome::new(
        worst < 1e-5 && verdicts_ok,
        format!("max entry error {worst:e}, inequality verdicts {}", if verdicts_ok { "correct" } else { "wrong" }),
    ))
}

fn cov_report(cov: &HigherOrderCovariance) -> hocov::criteria::WitnessReport {
    evaluate(cov, None)
}

fn physicality(s: &Sweeps) -> Outcome {
    let mut count = 0;
    let mut worst = f64::INFINITY;
    for r in s.all_rows() {
        count += 1;
        worst = worst.min(r.report.uncertainty_margin).min(r.report.ineq7_margin);
    }
    Outcome::new(
        worst >= -PHYSICAL_TOLERANCE,
        format!("min margin {worst:e} over {count} states"),
    )
}

fn theorem_equivalence(s: &Sweeps) -> Outcome {
    let (mut total, mut compared, mut disagree) = (0, 0, 0);
    for r in s.all_rows() {
        total += 1;
        let (nu, m8) = (r.report.nu_minus, r.report.ineq8_margin);
        if nu.abs() > VERDICT_TOLERANCE && m8.abs() > VERDICT_TOLERANCE {
            compared += 1;
            if (nu < 0.0) != (m8 < 0.0) {
                disagree += 1;
            }
        }
    }
    Outcome::new(
        total >= 1000 && disagree == 0,
        format!("{total} states, {compared} outside the band, {disagree} disagreements"),
    )
}

/// Linear interpolation of the first sign change from negative to non-negative.
fn first_crossing(points: &[(f64, f64)]) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        (y0 < 0.0 && y1 >= 0.0).then(|| x0 + (x1 - x0) * (-y0) / (y1 - y0))
    })
}

fn nz_points(rows: impl Iterator<Item = impl std::ops::Deref<Target = SweepRow>>) -> Vec<(f64, f64)> {
    rows.filter_map(|r| r.report.nz_value.map(|v| (r.xi, v))).collect()
}

fn fig1_reproduction(s: &Sweeps) -> hocov::Result<Outcome> {
    let series: Vec<&SweepRow> = s.three_mode.series(1).collect();
    let nz = nz_points(series.iter().copied());
    let crossing = first_crossing(&nz);

    let mut refined_cfg = SweepConfig::three_mode_default();
    refined_cfg.dims = refined_cfg.dims.padded(&[4, 4, 4])?;
    refined_cfg.hierarchy = vec![1];
    let probe: Vec<f64> = nz
        .iter()
        .map(|&(x, _)| x)
        .filter(|&x| (0.2..=0.36).contains(&x) || (0.98..=1.04).contains(&x))
        .collect();
    refined_cfg.xi_grid = Some(probe);
    let refined = run_sweep(&refined_cfg)?;
    let refined_crossing = first_crossing(&nz_points(refined.rows.iter()));
    let shift = match (crossing, refined_crossing) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    let crossing_ok = crossing.is_some_and(|x| (0.225..=0.375).contains(&x)) && shift < 0.01;

    let nz_negative: Vec<f64> = nz.iter().filter(|p| p.1 < -VERDICT_TOLERANCE).map(|p| p.0).collect();
    let nu_negative: Vec<f64> = series
        .iter()
        .filter(|r| r.report.nu_minus < -VERDICT_TOLERANCE)
        .map(|r| r.xi)
        .collect();
    let superset = nz_negative.iter().all(|x| nu_negative.contains(x)) && nu_negative.len() > nz_negative.len();

    let late: Vec<&&SweepRow> = series.iter().filter(|r| r.xi >= 1.0 - 1e-9).collect();
    let worst_late = late.iter().map(|r| r.report.nu_minus).fold(f64::INFINITY, f64::min);
    let refined_late = refined
        .rows
        .iter()
        .filter(|r| r.xi >= 1.0 - 1e-9)
        .map(|r| r.report.nu_minus)
        .fold(f64::INFINITY, f64::min);
    let vanish_ok = worst_late >= -VERDICT_TOLERANCE;
    let last_negative = nu_negative.last().copied().unwrap_or(f64::NAN);

    Ok(Outcome::new(
        crossing_ok && superset && vanish_ok,
        format!(
            "NZ crossing {} (refined dims {}, shift {shift:.2e}) {}; witness negative on {} points vs NZ {} {}; \
             min witness for xi >= 1 is {worst_late:.6e} (refined {refined_late:.6e}), last negative xi {last_negative} {}",
            crossing.map_or("none".into(), |x| format!("{x:.4}")),
            refined_cfg.dims,
            ok_word(crossing_ok),
            nu_negative.len(),
            nz_negative.len(),
            ok_word(superset),
            ok_word(vanish_ok),
        ),
    ))
}

fn ok_word(ok: bool) -> &'static str {
    if ok {
        "[ok]"
    } else {
        "[violated]"
    }
}

fn hierarchy_ordering(s: &Sweeps) -> Outcome {
    let onset = |n: usize| {
        s.three_mode
            .series(n)
            .find(|r| r.report.nu_minus < -VERDICT_TOLERANCE)
            .map(|r| r.xi)
    };
    let onsets: Vec<Option<f64>> = (1..=3).map(onset).collect();
    let ordered = onsets.iter().all(Option::is_some)
        && onsets.windows(2).all(|w| w[0].unwrap() <= w[1].unwrap() + 1e-12);
    let coexist: Vec<f64> = s
        .three_mode
        .series(1)
        .map(|r| r.xi)
        .filter(|&xi| {
            (1..=3).all(|n| {
                s.three_mode
                    .series(n)
                    .any(|r| r.xi == xi && r.report.nu_minus < -VERDICT_TOLERANCE)
            })
        })
        .collect();
    Outcome::new(
        ordered && !coexist.is_empty(),
        format!(
            "onsets {:?}, all three negative on {} grid points{}",
            onsets,
            coexist.len(),
            match (coexist.first(), coexist.last()) {
                (Some(a), Some(b)) => format!(" ({a} to {b})"),
                _ => String::new(),
            }
        ),
    )
}

fn fig2_competition(s: &Sweeps) -> Outcome {
    let low: Vec<&SweepRow> = s.four_mode.series(1).collect();
    let hits: Vec<f64> = low
        .iter()
        .filter(|r| r.report.nu_minus >= -VERDICT_TOLERANCE)
        .filter(|r| {
            s.four_mode
                .series(2)
                .any(|h| h.xi == r.xi && h.report.nu_minus < -VERDICT_TOLERANCE)
        })
        .map(|r| r.xi)
        .collect();
    Outcome::new(
        !hits.is_empty(),
        format!(
            "{} grid points where the n = 1 witness vanishes and n = 2 is negative{}",
            hits.len(),
            hits.first().map_or(String::new(), |x| format!(", first at xi = {x}"))
        ),
    )
}

fn lemma2_constructive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut tested, mut passed) = (0, 0);
    let (mut closed, mut fallback, mut other) = (0, 0, 0);
    let mut failures = Vec::new();
    while tested < 100 {
        let (f_a, f_b) = (rng.gen_range(0.3..5.0), rng.gen_range(0.3..5.0));
        let Ok(mut cov) = HigherOrderCovariance::from_matrix(separable_mixture(&mut rng, f_a, f_b), f_a, f_b) else {
            continue;
        };
        if cov.block_c().determinant() < 0.0 {
            cov = mirror_reflect(&cov);
        }
        let c = cov.block_c();
        if c.determinant() <= 1e-10 * c.norm_squared() {
            continue;
        }
        tested += 1;
        let outcome = standard_form(&cov).and_then(|sf| lemma2_transform(&sf, cov.f_ka, cov.f_lb));
        match outcome {
            Ok(out) => {
                let t = &out.transformed;
                let hit = (out.lambdas[1] - t.f_ka / 2.0).abs() <= 1e-6 && (out.lambdas[3] - t.f_lb / 2.0).abs() <= 1e-6;
                if hit && lemma1_check(t) >= -PHYSICAL_TOLERANCE {
                    passed += 1;
                } else {
                    failures.push(format!("sample {tested}: targets or Lemma 1 missed"));
                }
                match out.path {
                    Lemma2Path::ClosedForm => closed += 1,
                    Lemma2Path::NumericalFallback => fallback += 1,
                    _ => other += 1,
                }
            }
            Err(e) => failures.push(format!("sample {tested} (f_A = {f_a:.3}, f_B = {f_b:.3}): {e}")),
        }
    }
    let mut detail = format!(
        "{passed}/{tested} reached the targets (closed form {closed}, numerical fallback {fallback}, degenerate {other})"
    );
    for f in &failures {
        detail.push_str("; ");
        detail.push_str(f);
    }
    Outcome::new(passed == tested, detail)
}

fn mirror_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut flips, mut worst) = (0, 0.0f64);
    for _ in 0..1000 {
        let p = CovarianceParams::random(&mut rng);
        let cov = HigherOrderCovariance::from_matrix(p.matrix(), p.f_a, p.f_b).expect("symmetric input");
        let reflected = mirror_reflect(&cov);
        if reflected.block_c().determinant() == -cov.block_c().determinant() {
            flips += 1;
        }
        let (i, j) = (invariants(&cov), invariants(&reflected));
        worst = worst.max((i.i1 - j.i1).abs()).max((i.i2 - j.i2).abs()).max((i.i4 - j.i4).abs());
    }
    Outcome::new(
        flips == 1000 && worst <= 1e-12,
        format!("exact det C flips {flips}/1000, max invariant change {worst:e}"),
    )
}

fn extra_configs() -> Vec<SweepConfig> {
    let mut small12 = SweepConfig::new(1, 2, 2.0, ModeLayout::three_mode(24, 20, 39).expect("valid dims"));
    small12.xi_step = 0.01;
    let mut small13 = SweepConfig::new(1, 3, 1.5, ModeLayout::three_mode(20, 24, 70).expect("valid dims"));
    small13.xi_step = 0.01;
    vec![small12, small13]
}

fn run_sweeps() -> hocov::Result<Sweeps> {
    let three_mode = run_sweep(&SweepConfig::three_mode_default())?;
    let four_mode = run_sweep(&SweepConfig::four_mode_default())?;
    let extra = extra_configs().iter().map(run_sweep).collect::<hocov::Result<_>>()?;
    Ok(Sweeps { three_mode, four_mode, extra })
}

fn report(id: usize, name: &str, outcome: hocov::Result<Outcome>, started: Instant) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(o) => {
            println!("criterion {id:>2} {}: {name}: {} ({secs:.1}s)", if o.passed { "PASS" } else { "FAIL" }, o.detail);
            o.passed
        }
        Err(e) => {
            println!("criterion {id:>2} FAIL: {name}: error {e} ({secs:.1}s)");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut all = true;
    let t = Instant::now();
    all &= report(1, "commutator table", commutator_table(), t);

    let t = Instant::now();
    let sweeps = run_sweeps();
    let sweep_secs = t.elapsed().as_secs_f64();
    match &sweeps {
        Ok(s) => {
            println!(
                "sweeps: {} states in {sweep_secs:.1}s, truncation flagged: {}",
                s.all_rows().count(),
                s.three_mode.flagged() || s.four_mode.flagged() || s.extra.iter().any(SweepOutcome::flagged)
            );
            for w in s.three_mode.warnings.iter().chain(&s.four_mode.warnings) {
                println!("warning: {w}");
            }
        }
        Err(e) => println!("sweeps failed: {e}"),
    }
    let with = |f: &dyn Fn(&Sweeps) -> hocov::Result<Outcome>| match &sweeps {
        Ok(s) => f(s),
        Err(e) => Err(hocov::Error::InvalidParameter(format!("sweep unavailable: {e}"))),
    };

    let t = Instant::now();
    all &= report(2, "first moments vanish", with(&|s| Ok(first_moments(s))), t);
    let t = Instant::now();
    all &= report(3, "Gaussian oracle", gaussian_oracle(), t);
    let t = Instant::now();
    all &= report(4, "physicality", with(&|s| Ok(physicality(s))), t);
    let t = Instant::now();
    all &= report(5, "witness and invariant inequality agree", with(&|s| Ok(theorem_equivalence(s))), t);
    let t = Instant::now();
    all &= report(6, "three-mode reproduction", with(&fig1_reproduction), t);
    let t = Instant::now();
    all &= report(7, "hierarchy ordering", with(&|s| Ok(hierarchy_ordering(s))), t);
    let t = Instant::now();
    all &= report(8, "four-mode competition", with(&|s| Ok(fig2_competition(s))), t);
    let t = Instant::now();
    all &= report(9, "Lemma 2 construction", Ok(lemma2_constructive()), t);
    let t = Instant::now();
    all &= report(10, "mirror reflection algebra", Ok(mirror_algebra()), t);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
