//! Parameter sweeps: evolve one initial state along a xi grid, evaluate the
//! witness hierarchy at every point and write reproducible CSV output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{build_covariance_with, HigherOrderCovariance};
use crate::criteria::{evaluate, nha_zubairy_with, Verdict, WitnessReport};
use crate::dynamics::{build_hamiltonian, evolve, EvolutionConfig, InteractionSpec, Trajectory};
use crate::error::{Error, Result};
use crate::fock::{coherent_state, fock_vector, thermal_state, ModeLayout, QuantumState};
use crate::quadratures::{QuadratureSet, MAX_ORDER};

/// Pass threshold of [`convergence_check`].
pub const CONVERGENCE_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub k: usize,
    pub l: usize,
    #[serde(default = "default_hierarchy")]
    pub hierarchy: Vec<usize>,
    pub alpha_p: f64,
    /// `(pump, A, B)` dimensions.
    pub dims: ModeLayout,
    #[serde(default)]
    pub xi_min: f64,
    #[serde(default = "default_xi_max")]
    pub xi_max: f64,
    #[serde(default = "default_xi_step")]
    pub xi_step: f64,
    /// Explicit grid; overrides `xi_min`, `xi_max` and `xi_step`.
    #[serde(default)]
    pub xi_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub with_nz: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub n_th_a: f64,
    #[serde(default)]
    pub n_th_b: f64,
    /// Skip the `|alpha_p|^2 <= dim/4` pump guard and rely on the
    /// post-evolution top-level population check instead.
    #[serde(default = "default_true")]
    pub allow_tight_truncation: bool,
    #[serde(default = "default_convergence_step")]
    pub convergence_step: usize,
    /// Every `convergence_stride`-th grid point is rerun by the check.
    #[serde(default = "default_convergence_stride")]
    pub convergence_stride: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_hierarchy() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_xi_max() -> f64 {
    1.5
}

fn default_xi_step() -> f64 {
    0.02
}

fn default_tolerance() -> f64 {
    1e-11
}

fn default_true() -> bool {
    true
}

fn default_convergence_step() -> usize {
    4
}

fn default_convergence_stride() -> usize {
    10
}

impl SweepConfig {
    pub fn new(k: usize, l: usize, alpha_p: f64, dims: ModeLayout) -> Self {
        Self {
            k,
            l,
            hierarchy: default_hierarchy(),
            alpha_p,
            dims,
            xi_min: 0.0,
            xi_max: default_xi_max(),
            xi_step: default_xi_step(),
            xi_grid: None,
            with_nz: false,
            tolerance: default_tolerance(),
            n_th_a: 0.0,
            n_th_b: 0.0,
            allow_tight_truncation: true,
            convergence_step: default_convergence_step(),
            convergence_stride: default_convergence_stride(),
            output: None,
        }
    }

    /// Three-mode down-conversion `(k, l) = (1, 2)` at `alpha_p = 5`.
    pub fn three_mode_default() -> Self {
        let mut cfg = Self::new(1, 2, 5.0, ModeLayout::three_mode(64, 68, 131).expect("valid dims"));
        cfg.with_nz = true;
        cfg
    }

    /// Four-mode down-conversion `(k, l) = (1, 3)` at `alpha_p = sqrt(10)`.
    pub fn four_mode_default() -> Self {
        Self::new(1, 3, 10f64.sqrt(), ModeLayout::three_mode(38, 36, 106).expect("valid dims"))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 || self.k + self.l < 3 {
            return Err(Error::InvalidConfig(format!(
                "need k, l >= 1 with k + l >= 3, got k={}, l={}",
                self.k, self.l
            )));
        }
        if self.hierarchy.is_empty() || self.hierarchy.contains(&0) {
            return Err(Error::InvalidConfig("hierarchy must list indices >= 1".into()));
        }
        let top = self.hierarchy.iter().max().copied().unwrap_or(1);
        if top * self.k.max(self.l) > MAX_ORDER {
            return Err(Error::InvalidConfig(format!(
                "hierarchy index {top} needs quadrature order {} > {MAX_ORDER}",
                top * self.k.max(self.l)
            )));
        }
        if self.dims.num_modes() != 3 {
            return Err(Error::InvalidConfig(format!(
                "dims must list (pump, A, B), got {}",
                self.dims
            )));
        }
        if !(self.alpha_p > 0.0) || !self.alpha_p.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha_p must be positive, got {}", self.alpha_p)));
        }
        if self.n_th_a < 0.0 || self.n_th_b < 0.0 {
            return Err(Error::InvalidConfig("thermal occupations must be >= 0".into()));
        }
        if self.xi_grid.is_none() && !(self.xi_step > 0.0 && self.xi_max >= self.xi_min) {
            return Err(Error::InvalidConfig("xi_step must be positive and xi_max >= xi_min".into()));
        }
        if self.convergence_stride == 0 {
            return Err(Error::InvalidConfig("convergence_stride must be >= 1".into()));
        }
        self.evolution_config().validate().map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reported grid points; the evolution itself always starts at 0.
    pub fn xi_values(&self) -> Vec<f64> {
        if let Some(grid) = &self.xi_grid {
            return grid.clone();
        }
        let count = ((self.xi_max - self.xi_min) / self.xi_step + 1e-9).floor() as usize;
        (0..=count)
            .map(|i| round_grid(self.xi_min + i as f64 * self.xi_step))
            .collect()
    }

    fn evolution_grid(&self) -> Vec<f64> {
        let mut grid = self.xi_values();
        if grid.first() != Some(&0.0) {
            grid.insert(0, 0.0);
        }
        grid
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        let mut cfg = EvolutionConfig::new(self.evolution_grid(), self.alpha_p);
        cfg.tolerance = self.tolerance;
        cfg
    }

    pub fn initial_state(&self) -> Result<QuantumState> {
        let (dp, da, db) = (self.dims.dim(0), self.dims.dim(1), self.dims.dim(2));
        let pump = coherent_state(Complex64::new(self.alpha_p, 0.0), dp, self.allow_tight_truncation)?;
        if self.n_th_a == 0.0 && self.n_th_b == 0.0 {
            return QuantumState::product_pure(
                self.dims.clone(),
                &[pump, fock_vector(0, da)?, fock_vector(0, db)?],
            );
        }
        let pump = &pump * pump.adjoint();
        QuantumState::product_mixed(
            self.dims.clone(),
            &[pump, thermal_state(self.n_th_a, da)?, thermal_state(self.n_th_b, db)?],
        )
    }

    /// `key=value` pairs recorded at the top of every CSV.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let grid = self.xi_values();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("generator".into(), format!("hocov {}", env!("CARGO_PKG_VERSION"))),
            ("k".into(), self.k.to_string()),
            ("l".into(), self.l.to_string()),
            ("hierarchy".into(), join(&self.hierarchy)),
            ("alpha_p".into(), fmt_num(self.alpha_p)),
            ("kappa".into(), fmt_num(1.0)),
            ("dims".into(), join(self.dims.dims())),
            ("xi_points".into(), grid.len().to_string()),
            ("xi_first".into(), grid.first().map_or(String::new(), |&x| fmt_num(x))),
            ("xi_last".into(), grid.last().map_or(String::new(), |&x| fmt_num(x))),
            ("tolerance".into(), fmt_num(self.tolerance)),
            ("n_th_a".into(), fmt_num(self.n_th_a)),
            ("n_th_b".into(), fmt_num(self.n_th_b)),
            ("with_nz".into(), self.with_nz.to_string()),
        ]
    }
}

fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// One `(xi, n)` evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub xi: f64,
    pub report: WitnessReport,
    pub truncation_flag: bool,
    /// Top-two-level population of pump, A and B.
    pub top_populations: Vec<f64>,
    pub max_first_moment: f64,
    pub covariance: HigherOrderCovariance,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl SweepOutcome {
    pub fn flagged(&self) -> bool {
        self.rows.iter().any(|r| r.truncation_flag)
    }

    /// Rows of one hierarchy level, in xi order.
    pub fn series(&self, n: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.n == n)
    }
}

/// Evolves the configured initial state and evaluates every requested
/// hierarchy level at every grid point. Rows are ordered by xi, then n.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let spec = InteractionSpec::new(config.k, config.l, config.dims.clone());
    let h = build_hamiltonian(&spec)?;
    let initial = config.initial_state()?;
    info!(
        "sweep k={} l={} alpha_p={} dims={} ({} basis states)",
        config.k,
        config.l,
        config.alpha_p,
        config.dims,
        config.dims.total_dim()
    );
    let trajectory = evolve(&initial, &h, &config.evolution_config())?;
    evaluate_trajectory(config, &trajectory)
}

/// Witness rows for an already evolved trajectory.
pub fn evaluate_trajectory(config: &SweepConfig, trajectory: &Trajectory) -> Result<SweepOutcome> {
    let sets: Vec<QuadratureSet> = config
        .hierarchy
        .iter()
        .map(|&n| QuadratureSet::new(n, config.k, config.l, &config.dims))
        .collect::<Result<_>>()?;
    let nz_set = if config.with_nz && (config.k, config.l) == (1, 2) {
        match sets.iter().position(|s| s.n == 1) {
            Some(i) => Some(sets[i].clone()),
            None => Some(QuadratureSet::new(1, 1, 2, &config.dims)?),
        }
    } else {
        None
    };
    let wanted = config.xi_values();
    let points: Vec<usize> = trajectory
        .xi
        .iter()
        .enumerate()
        .filter(|(_, xi)| wanted.contains(xi))
        .map(|(i, _)| i)
        .collect();

    let per_point: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|&i| {
            let state = &trajectory.states[i];
            let xi = trajectory.xi[i];
            let nz = match &nz_set {
                Some(qs) => Some(nha_zubairy_with(state, qs)?),
                None => None,
            };
            sets.iter()
                .map(|qs| {
                    let cov = build_covariance_with(state, qs)?;
                    let max_first_moment = cov.first_moments.amax();
                    Ok(SweepRow {
                        n: qs.n,
                        k: config.k,
                        l: config.l,
                        xi,
                        report: evaluate(&cov, nz),
                        truncation_flag: trajectory.truncation_flagged(i),
                        top_populations: trajectory.top_populations[i].clone(),
                        max_first_moment,
                        covariance: cov,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = per_point.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.xi.total_cmp(&b.xi).then(a.n.cmp(&b.n)));
    Ok(SweepOutcome {
        rows,
        warnings: trajectory.warnings.clone(),
    })
}

/// Fixed 12-significant-digit scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0"
        return format!("{:.11e}", 0.0);
    }
    format!("{x:.11e}")
}

pub const CSV_COLUMNS: [&str; 17] = [
    "n",
    "k",
    "l",
    "xi",
    "nu_minus",
    "ineq7",
    "ineq8",
    "lemma1",
    "detC",
    "nz",
    "verdict",
    "truncation_flag",
    "top_pop_p",
    "top_pop_a",
    "top_pop_b",
    "uncertainty",
    "max_first_moment",
];

pub fn csv_header() -> String {
    let mut cols: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    for r in 0..4 {
        for c in 0..4 {
            cols.push(format!("v{r}{c}"));
        }
    }
    cols.push("f_ka".into());
    cols.push("f_lb".into());
    cols.join(",")
}

pub fn render_csv(config: &SweepConfig, rows: &[SweepRow]) -> Result<String> {
    let mut out = String::new();
    for (key, value) in config.provenance() {
        let _ = writeln!(out, "# {key}={value}");
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(csv_header().split(','))?;
    for row in rows {
        let r = &row.report;
        let mut fields = vec![
            row.n.to_string(),
            row.k.to_string(),
            row.l.to_string(),
            fmt_num(row.xi),
            fmt_num(r.nu_minus),
            fmt_num(r.ineq7_margin),
            fmt_num(r.ineq8_margin),
            fmt_num(r.lemma1_value),
            fmt_num(r.det_c),
            r.nz_value.map(fmt_num).unwrap_or_default(),
            r.verdict.to_string(),
            u8::from(row.truncation_flag).to_string(),
        ];
        fields.extend(row.top_populations.iter().map(|&p| fmt_num(p)));
        fields.push(fmt_num(r.uncertainty_margin));
        fields.push(fmt_num(row.max_first_moment));
        fields.extend(row.covariance.entries().iter().map(|&v| fmt_num(v)));
        fields.push(fmt_num(row.covariance.f_ka));
        fields.push(fmt_num(row.covariance.f_lb));
        writer.write_record(&fields)?;
    }
    let body = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8_lossy(&body));
    Ok(out)
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_csv(path: &Path, config: &SweepConfig, rows: &[SweepRow]) -> Result<()> {
    write_atomic(path, &render_csv(config, rows)?)
}

/// Quantity extracted by [`emit_plot_data`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotSeries {
    NuMinus(usize),
    Ineq8(usize),
    Lemma1(usize),
    Nz,
}

impl FromStr for PlotSeries {
    type Err = Error;

    /// `nu:N`, `ineq8:N`, `lemma1:N` or `nz`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "nz" {
            return Ok(PlotSeries::Nz);
        }
        let (name, n) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("unknown series '{s}'")))?;
        let n: usize = n
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad hierarchy index in '{s}'")))?;
        match name {
            "nu" => Ok(PlotSeries::NuMinus(n)),
            "ineq8" => Ok(PlotSeries::Ineq8(n)),
            "lemma1" => Ok(PlotSeries::Lemma1(n)),
            _ => Err(Error::InvalidConfig(format!("unknown series '{s}'"))),
        }
    }
}

impl PlotSeries {
    fn label(self, k: usize, l: usize) -> String {
        match self {
            PlotSeries::NuMinus(n) => format!("nu_minus order ({},{})", n * k, n * l),
            PlotSeries::Ineq8(n) => format!("ineq8 order ({},{})", n * k, n * l),
            PlotSeries::Lemma1(n) => format!("lemma1 order ({},{})", n * k, n * l),
            PlotSeries::Nz => "nz".to_string(),
        }
    }

    fn pick(self, row: &SweepRow) -> Option<f64> {
        match self {
            PlotSeries::NuMinus(n) if row.n == n => Some(row.report.nu_minus),
            PlotSeries::Ineq8(n) if row.n == n => Some(row.report.ineq8_margin),
            PlotSeries::Lemma1(n) if row.n == n => Some(row.report.lemma1_value),
            PlotSeries::Nz => row.report.nz_value,
            _ => None,
        }
    }
}

/// Two-column `(xi, value)` blocks, one per series, separated by blank lines.
pub fn emit_plot_data(rows: &[SweepRow], selection: &[PlotSeries]) -> Result<String> {
    if selection.is_empty() {
        return Err(Error::EmptySelection("no series requested".into()));
    }
    if rows.is_empty() {
        return Err(Error::EmptySelection("no rows to plot".into()));
    }
    let (k, l) = (rows[0].k, rows[0].l);
    let mut out = String::new();
    for (i, series) in selection.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# {}", series.label(k, l));
        let mut last_xi = None;
        let mut count = 0;
        for row in rows {
            if let Some(v) = series.pick(row) {
                // NZ repeats on every hierarchy row of a grid point
                if *series == PlotSeries::Nz && last_xi == Some(row.xi) {
                    continue;
                }
                last_xi = Some(row.xi);
                let _ = writeln!(out, "{} {}", fmt_num(row.xi), fmt_num(v));
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptySelection(format!(
                "series '{}' has no data in these rows",
                series.label(k, l)
            )));
        }
    }
    Ok(out)
}

/// Reads rows back from a CSV written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let cols = reader.headers()?.clone();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidConfig(format!("CSV lacks column '{name}'")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |name: &str| -> Result<&str> { Ok(&record[idx(name)?]) };
        let num = |name: &str| -> Result<f64> {
            let s = field(name)?;
            s.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad number '{s}' in column '{name}'")))
        };
        let int = |name: &str| -> Result<usize> {
            let s = field(name)?;
            s.parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad integer '{s}' in column '{name}'")))
        };
        let mut v = nalgebra::Matrix4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                v[(r, c)] = num(&format!("v{r}{c}"))?;
            }
        }
        let verdict = match field("verdict")? {
            "entangled" => Verdict::Entangled,
            "separable" => Verdict::Separable,
            "boundary" => Verdict::Boundary,
            other => return Err(Error::InvalidConfig(format!("unknown verdict '{other}'"))),
        };
        let (n, k, l) = (int("n")?, int("k")?, int("l")?);
        rows.push(SweepRow {
            n,
            k,
            l,
            xi: num("xi")?,
            report: WitnessReport {
                uncertainty_margin: num("uncertainty")?,
                nu_minus: num("nu_minus")?,
                ineq7_margin: num("ineq7")?,
                ineq8_margin: num("ineq8")?,
                lemma1_value: num("lemma1")?,
                det_c: num("detC")?,
                nz_value: if field("nz")?.is_empty() { None } else { Some(num("nz")?) },
                verdict,
            },
            truncation_flag: field("truncation_flag")? == "1",
            top_populations: vec![num("top_pop_p")?, num("top_pop_a")?, num("top_pop_b")?],
            max_first_moment: num("max_first_moment")?,
            covariance: HigherOrderCovariance {
                v,
                f_ka: num("f_ka")?,
                f_lb: num("f_lb")?,
                first_moments: nalgebra::Vector4::zeros(),
                n,
                k,
                l,
            },
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub xi: f64,
    pub n: usize,
    pub base: f64,
    pub refined: f64,
}

impl ConvergencePoint {
    pub fn delta(&self) -> f64 {
        (self.refined - self.base).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub base_dims: ModeLayout,
    pub refined_dims: ModeLayout,
    pub points: Vec<ConvergencePoint>,
    pub max_delta: f64,
    pub passed: bool,
}

impl ConvergenceReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# base_dims={} refined_dims={}", self.base_dims, self.refined_dims);
        let _ = writeln!(out, "xi,n,nu_minus_base,nu_minus_refined,delta");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_num(p.xi),
                p.n,
                fmt_num(p.base),
                fmt_num(p.refined),
                fmt_num(p.delta())
            );
        }
        let _ = writeln!(
            out,
            "# max_delta={} threshold={} {}",
            fmt_num(self.max_delta),
            fmt_num(CONVERGENCE_THRESHOLD),
            if self.passed { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Reruns a subsample of the grid with every dimension increased by
/// `convergence_step` and compares the witness values.
pub fn convergence_check(config: &SweepConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let grid = config.xi_values();
    let mut sample: Vec<f64> = grid
        .iter()
        .copied()
        .step_by(config.convergence_stride)
        .collect();
    if let Some(&last) = grid.last() {
        if sample.last() != Some(&last) {
            sample.push(last);
        }
    }
    let mut base = config.clone();
    base.xi_grid = Some(sample);
    base.with_nz = false;
    let step = config.convergence_step;
    let mut refined = base.clone();
    refined.dims = config.dims.padded(&[step, step, step])?;

    let a = run_sweep(&base)?;
    let b = run_sweep(&refined)?;
    let points: Vec<ConvergencePoint> = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(ra, rb)| ConvergencePoint {
            xi: ra.xi,
            n: ra.n,
            base: ra.report.nu_minus,
            refined: rb.report.nu_minus,
        })
        .collect();
    let max_delta = points.iter().map(ConvergencePoint::delta).fold(0.0, f64::max);
    Ok(ConvergenceReport {
        base_dims: base.dims,
        refined_dims: refined.dims,
        points,
        max_delta,
        passed: max_delta < CONVERGENCE_THRESHOLD,
    })
}
