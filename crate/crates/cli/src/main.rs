use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hocov::fock::ModeLayout;
use hocov::quadratures::{f_polynomial, verify_f_table, MAX_ORDER};
use hocov::sweep::{
    convergence_check, emit_plot_data, read_csv, run_sweep, write_atomic, write_csv, PlotSeries,
    SweepConfig,
};

/// Higher-order covariance entanglement witnesses for multiphoton down-conversion.
#[derive(Parser)]
#[command(name = "hocov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve and evaluate the witness hierarchy along a xi grid, writing CSV.
    Sweep {
        #[command(flatten)]
        params: SweepArgs,
        /// Output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a subsample of the grid with enlarged truncations.
    Check {
        #[command(flatten)]
        params: SweepArgs,
        /// Write the convergence report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract two-column series from a sweep CSV.
    Plotdata {
        /// Sweep CSV to read.
        #[arg(long)]
        input: PathBuf,
        /// Series such as `nu:1`, `ineq8:2`, `lemma1:3` or `nz`.
        #[arg(long, value_delimiter = ',', required = true)]
        series: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the commutator polynomials after verifying them exactly.
    Ftable,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// k=1, l=2, alpha_p=5.
    ThreeMode,
    /// k=1, l=3, alpha_p=sqrt(10).
    FourMode,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    xi_max: Option<f64>,
    #[arg(long)]
    xi_step: Option<f64>,
    #[arg(long)]
    alpha_p: Option<f64>,
    /// Truncations as `P,A,B`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    hierarchy: Option<Vec<usize>>,
    #[arg(long)]
    with_nz: bool,
    #[arg(long)]
    tolerance: Option<f64>,
}

impl SweepArgs {
    fn resolve(&self) -> Result<SweepConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => SweepConfig::from_path(path)
                .with_context(|| format!("reading {}", path.display()))?,
            (None, Some(Preset::FourMode)) => SweepConfig::four_mode_default(),
            (None, _) => SweepConfig::three_mode_default(),
        };
        if let Some(x) = self.xi_max {
            cfg.xi_max = x;
            cfg.xi_grid = None;
        }
        if let Some(x) = self.xi_step {
            cfg.xi_step = x;
            cfg.xi_grid = None;
        }
        if let Some(a) = self.alpha_p {
            cfg.alpha_p = a;
        }
        if let Some(d) = &self.dims {
            if d.len() != 3 {
                bail!("--dims expects P,A,B");
            }
            cfg.dims = ModeLayout::new(d.clone())?;
        }
        if let Some(h) = &self.hierarchy {
            cfg.hierarchy = h.clone();
        }
        if self.with_nz {
            cfg.with_nz = true;
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep { params, out } => {
            let cfg = params.resolve()?;
            let out = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from(format!("sweep_k{}_l{}.csv", cfg.k, cfg.l)));
            let started = Instant::now();
            let outcome = run_sweep(&cfg)?;
            write_csv(&out, &cfg, &outcome.rows).with_context(|| format!("writing {}", out.display()))?;
            for w in &outcome.warnings {
                log::warn!("{w}");
            }
            eprintln!(
                "wrote {} rows to {} in {:.1}s",
                outcome.rows.len(),
                out.display(),
                started.elapsed().as_secs_f64()
            );
            if outcome.flagged() {
                eprintln!("truncation guard tripped; see truncation_flag column");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { params, out } => {
            let cfg = params.resolve()?;
            let report = convergence_check(&cfg)?;
            emit(out.as_deref(), &report.render())?;
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Plotdata { input, series, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let rows = read_csv(&text)?;
            let selection = series
                .iter()
                .map(|s| s.parse::<PlotSeries>())
                .collect::<hocov::Result<Vec<_>>>()?;
            emit(out.as_deref(), &emit_plot_data(&rows, &selection)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ftable => {
            verify_f_table()?;
            for m in 1..=MAX_ORDER {
                let coeffs = f_polynomial(m)?.coefficients();
                let terms: Vec<String> = coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(p, c)| match p {
                        0 => format!("{c}"),
                        1 => format!("{c}*N"),
                        _ => format!("{c}*N^{p}"),
                    })
                    .collect();
                println!("f_{m}(N) = {}", terms.join(" + "));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
