use clap::{Parser, Subcommand};
use epsense_cli::config::{self, ExperimentConfig, OracleCompareConfig};
use epsense_cli::{output, presets, runner, CliError, CliResult};
use epsense_core::model::ModelSpec;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "epsense",
    version,
    about = "Sweep experiments on quadratic bosonic sensors near spectral degeneracies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for grid evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output CSV path (sweeps) or output directory (reproduce).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fit window override, formatted lo:hi.
    #[arg(long, global = true, value_parser = config::parse_window)]
    window: Option<(f64, f64)>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file: structure, spectrum, and degeneracy orders.
    Validate { file: PathBuf },
    /// QFI and particle number over a log-spaced time grid.
    QfiSweep {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Maximum eigenvalue response over a perturbation-strength grid.
    SpectrumSweep {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Fixed-time QFI over a range of chain lengths.
    SizeSweep {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Analytic engine vs truncated number-basis oracle.
    OracleCompare {
        /// Points file; a built-in cross-check set runs when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Run a named built-in experiment (fig2a, fig2b, fig3b, fig3c, fig3d,
    /// fig4a, fig4b) and check its fitted slopes.
    Reproduce { preset: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    out: &Option<PathBuf>,
    window: &Option<(f64, f64)>,
) {
    if let Some(path) = out {
        cfg.out = Some(path.display().to_string());
    }
    if let Some((lo, hi)) = window {
        cfg.window = Some([*lo, *hi]);
    }
}

fn default_out(kind: &str, cfg: &ExperimentConfig) -> String {
    format!("{kind}_{}.csv", cfg.model.id())
}

fn emit_sweep(
    kind: &str,
    cfg: &ExperimentConfig,
    result: &runner::SweepResult,
) -> CliResult<ExitCode> {
    let out_path = PathBuf::from(
        cfg.out
            .clone()
            .unwrap_or_else(|| default_out(kind, cfg)),
    );
    let sidecar = output::write_csv_and_fit(
        &out_path,
        cfg,
        result.columns,
        &result.rows,
        result.fit.as_ref(),
    )?;
    println!("wrote {} ({} rows)", out_path.display(), result.rows.len());
    if let Some(fit) = &result.fit {
        println!(
            "fit: slope {:.6} intercept {:.6} r2 {:.6} window [{}, {}] over {} points",
            fit.slope, fit.intercept, fit.r_squared, fit.window.0, fit.window.1, fit.n_points
        );
    }
    if let Some(path) = sidecar {
        println!("wrote {}", path.display());
    }
    if let Some(ov) = &result.overflow {
        return Err(CliError::Overflow {
            last_good: ov.last_good,
            detail: ov.detail.clone(),
        });
    }
    Ok(ExitCode::SUCCESS)
}

fn load_model_file(path: &Path) -> CliResult<ModelSpec> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match &cli.command {
        Command::Validate { file } => {
            let spec = load_model_file(file)?;
            let report = runner::validate_model(&spec)?;
            println!("model: {} ({} modes)", report.model, report.n_modes);
            println!("symmetry violation: {:.3e}", report.symmetry_violation);
            println!(
                "stable: {} (max |Im eigenvalue| = {:.3e})",
                report.stable, report.max_imag
            );
            println!("spectrum closure defect: {:.3e}", report.closure_defect);
            for ep in &report.clusters {
                println!(
                    "eigenvalue cluster at {:.6}{:+.6}i: multiplicity {}, order {}",
                    ep.value[0], ep.value[1], ep.algebraic_multiplicity, ep.jordan_order
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::QfiSweep { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            apply_overrides(&mut cfg, &cli.out, &cli.window);
            let result = runner::qfi_sweep(&cfg, cli.jobs)?;
            emit_sweep("qfi_sweep", &cfg, &result)
        }
        Command::SpectrumSweep { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            apply_overrides(&mut cfg, &cli.out, &cli.window);
            let result = runner::spectrum_sweep(&cfg, cli.jobs)?;
            emit_sweep("spectrum_sweep", &cfg, &result)
        }
        Command::SizeSweep { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            apply_overrides(&mut cfg, &cli.out, &cli.window);
            let result = runner::size_sweep(&cfg, cli.jobs)?;
            emit_sweep("size_sweep", &cfg, &result)
        }
        Command::OracleCompare { config } => {
            let cfg = match config {
                Some(path) => OracleCompareConfig::load(path)?,
                None => presets::default_oracle_config(),
            };
            let report = runner::oracle_compare(&cfg)?;
            for p in &report.points {
                println!(
                    "{}: engine {:.8e} oracle {:.8e} rel {:.3e}",
                    p.label, p.f_engine, p.f_oracle, p.rel_dev
                );
            }
            println!(
                "max relative deviation {:.3e} (threshold {:.1e}): {}",
                report.max_rel_dev,
                report.threshold,
                if report.pass { "PASS" } else { "FAIL" }
            );
            if report.pass {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Reproduce { preset } => {
            let plans = presets::plan(preset).ok_or_else(|| {
                CliError::Parse(format!(
                    "unknown preset '{preset}'; known: {}",
                    presets::PRESET_NAMES.join(", ")
                ))
            })?;
            let out_dir = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("out"));
            let mut misses = Vec::new();
            for plan in &plans {
                let mut cfg = plan.cfg.clone();
                cfg.out = Some(
                    out_dir
                        .join(format!("{}.csv", plan.label))
                        .display()
                        .to_string(),
                );
                let result = match plan.kind {
                    presets::RunKind::Qfi => runner::qfi_sweep(&cfg, cli.jobs)?,
                    presets::RunKind::Spectrum => runner::spectrum_sweep(&cfg, cli.jobs)?,
                    presets::RunKind::Size => runner::size_sweep(&cfg, cli.jobs)?,
                };
                emit_sweep("reproduce", &cfg, &result)?;
                if let Some((lo, hi)) = plan.band {
                    let slope = result
                        .fit
                        .as_ref()
                        .map(|f| f.slope)
                        .ok_or_else(|| CliError::Parse("preset run produced no fit".into()))?;
                    let ok = slope >= lo && slope <= hi;
                    println!(
                        "{}: slope {slope:.4} expected [{lo}, {hi}] {}",
                        plan.label,
                        if ok { "PASS" } else { "MISS" }
                    );
                    if !ok {
                        misses.push(format!("{} slope {slope:.4} outside [{lo}, {hi}]", plan.label));
                    }
                }
                if plan.crossover {
                    match runner::crossover_check(&result) {
                        Ok(info) => println!("{}: {info} PASS", plan.label),
                        Err(msg) => {
                            println!("{}: {msg} MISS", plan.label);
                            misses.push(format!("{}: {msg}", plan.label));
                        }
                    }
                }
            }
            if misses.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for m in &misses {
                    eprintln!("miss: {m}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}
