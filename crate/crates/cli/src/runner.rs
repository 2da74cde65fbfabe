use crate::config::{sized_model, ExperimentConfig, OracleCompareConfig, OraclePoint, StateKind};
use crate::{CliError, CliResult};
use epsense_core::fock::{coherent_vector, fidelity_qfi_with_tail, FockBasis, EVOLVED_TAIL_TOL};
use epsense_core::model::{
    build_dynamical_matrix, partial_derivative, validate_symmetries, ModelSpec,
};
use epsense_core::propagator::propagator_series;
use epsense_core::qfi::{
    coefficient_matrices, coefficient_series, particle_number, qfi_coherent, qfi_superposition,
    CoherentState, SuperpositionState,
};
use epsense_core::spectral::{ep_order, fit_power_law, fit_semilog, spectrum, spectrum_closure_defect, FitResult};
use epsense_core::{C64, CoreError, CVec};
use rayon::prelude::*;
use serde::Serialize;

/// Eigenvalue clustering width used by `validate`; wide enough to absorb the
/// root-of-roundoff scatter that defective spectra put on eigensolvers.
pub const VALIDATE_CLUSTER_TOL: f64 = 1e-3;

pub struct SweepResult {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<f64>>,
    pub fit: Option<FitResult>,
    /// Set when the sweep stopped early on a numeric-range failure.
    pub overflow: Option<OverflowInfo>,
}

pub struct OverflowInfo {
    pub last_good: Option<f64>,
    pub detail: String,
}

fn pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Parse(format!("worker pool: {e}")))
}

fn required<T: Copy>(field: Option<T>, name: &str) -> CliResult<T> {
    field.ok_or_else(|| CliError::Parse(format!("config needs '{name}' for this command")))
}

/// Collects per-point results in grid order, truncating at the first
/// numeric-range failure or non-finite value.
fn collect_rows(
    grid: &[f64],
    results: Vec<Result<Vec<f64>, CoreError>>,
) -> CliResult<(Vec<Vec<f64>>, Option<OverflowInfo>)> {
    let mut rows = Vec::with_capacity(grid.len());
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(row) if row.iter().all(|v| v.is_finite()) => rows.push(row),
            Ok(_) => {
                return Ok((
                    rows,
                    Some(OverflowInfo {
                        last_good: last_x(i, grid),
                        detail: format!("non-finite result at grid point {}", grid[i]),
                    }),
                ))
            }
            Err(CoreError::Range(msg)) => {
                return Ok((
                    rows,
                    Some(OverflowInfo {
                        last_good: last_x(i, grid),
                        detail: msg,
                    }),
                ))
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((rows, None))
}

fn last_x(i: usize, grid: &[f64]) -> Option<f64> {
    if i == 0 {
        None
    } else {
        Some(grid[i - 1])
    }
}

/// Rows `t, F, Q` over the time grid; power-law fit of F(t) when a window
/// is configured.
pub fn qfi_sweep(cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<SweepResult> {
    let model = cfg.model.build()?;
    let st = cfg.initial_state(model.n_modes)?;
    let grid = required(cfg.t_grid, "t_grid")?.points()?;
    let hd = build_dynamical_matrix(&model)?;
    let dh = partial_derivative(&model, &cfg.param)?;

    // The coefficient integrals and propagators come from one sequential
    // pass each over the grid (the integrator reuses work between
    // neighboring times); only the per-point state evaluations go to the
    // worker pool.
    let sets = coefficient_series(&hd, &dh, &grid)?;
    let props = propagator_series(&hd, &grid[..sets.len()])?;
    let live = props.len();
    let results: Vec<Result<Vec<f64>, CoreError>> = pool(jobs)?.install(|| {
        sets[..live]
            .par_iter()
            .zip(&props)
            .map(|(cs, prop)| {
                let f = qfi_coherent(cs, &st)?;
                let q = particle_number(prop, &st)?;
                Ok(vec![cs.t, f, q])
            })
            .collect()
    });
    let (rows, mut overflow) = collect_rows(&grid[..live], results)?;
    if overflow.is_none() && live < grid.len() {
        overflow = Some(OverflowInfo {
            last_good: if live == 0 { None } else { Some(grid[live - 1]) },
            detail: format!(
                "results exceed the numeric range at grid point {}",
                grid[live]
            ),
        });
    }

    let fit = match (cfg.window_tuple(), overflow.is_none()) {
        (Some(window), true) => {
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            Some(fit_power_law(&pts, window)?)
        }
        _ => None,
    };
    Ok(SweepResult {
        columns: &["t", "F", "Q"],
        rows,
        fit,
        overflow,
    })
}

/// Rows `epsilon, max_abs_domega` over the perturbation grid; power-law fit
/// when a window is configured.
pub fn spectrum_sweep(cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<SweepResult> {
    let model = cfg.model.build()?;
    let grid = required(cfg.epsilon_grid, "epsilon_grid")?.points()?;
    let param = cfg.param.clone();

    let results: Vec<Result<Vec<f64>, CoreError>> = pool(jobs)?.install(|| {
        grid.par_iter()
            .map(|&eps| {
                let resp = epsense_core::spectral::spectrum_response(&model, &param, eps)?;
                Ok(vec![eps, resp.max_abs])
            })
            .collect()
    });
    let (rows, overflow) = collect_rows(&grid, results)?;

    let fit = match (cfg.window_tuple(), overflow.is_none()) {
        (Some(window), true) => {
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            Some(fit_power_law(&pts, window)?)
        }
        _ => None,
    };
    Ok(SweepResult {
        columns: &["epsilon", "max_abs_domega"],
        rows,
        fit,
        overflow,
    })
}

/// Rows `N, F` at fixed t0 over the size range; semilog fit of ln F vs N.
pub fn size_sweep(cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<SweepResult> {
    let [lo, hi] = required(cfg.n_range, "n_range")?;
    let t0 = required(cfg.t0, "t0")?;
    if lo < 2 || lo > hi {
        return Err(CliError::Parse(format!(
            "n_range needs 2 <= lo <= hi, got [{lo}, {hi}]"
        )));
    }
    let sizes: Vec<usize> = (lo..=hi).collect();
    let param = cfg.param.clone();
    let spec = cfg.model.clone();

    let results: Vec<Result<Vec<f64>, CoreError>> = pool(jobs)?.install(|| {
        sizes
            .par_iter()
            .map(|&n| {
                let model = sized_model(&spec, n).map_err(|e| match e {
                    CliError::Core(c) => c,
                    other => CoreError::InvalidModel(other.to_string()),
                })?;
                let hd = build_dynamical_matrix(&model)?;
                let dh = partial_derivative(&model, &param)?;
                let cs = coefficient_matrices(&hd, &dh, t0).map_err(|e| match e {
                    CoreError::Range(msg) => CoreError::Range(format!(
                        "{msg} (while evaluating N={n} at t0={t0}; try a smaller t0)"
                    )),
                    other => other,
                })?;
                let f = qfi_coherent(&cs, &CoherentState::vacuum(model.n_modes))?;
                Ok(vec![n as f64, f])
            })
            .collect()
    });
    let grid: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let (rows, overflow) = collect_rows(&grid, results)?;

    let fit = if overflow.is_none() {
        let window = cfg
            .window_tuple()
            .unwrap_or((lo as f64, hi as f64));
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
        Some(fit_semilog(&pts, window)?)
    } else {
        None
    };
    Ok(SweepResult {
        columns: &["N", "F"],
        rows,
        fit,
        overflow,
    })
}

/// Checks a QFI time series for the transient-then-power-law shape: the
/// running log-log slope must peak well above its late-time settling value.
pub fn crossover_check(result: &SweepResult) -> Result<String, String> {
    let pts: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter(|r| r[0] > 0.0 && r[1] > 0.0)
        .map(|r| (r[0].ln(), r[1].ln()))
        .collect();
    if pts.len() < 12 {
        return Err(format!("only {} usable points", pts.len()));
    }
    let slopes: Vec<f64> = pts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let tail = &slopes[slopes.len() - 5..];
    let late = tail.iter().sum::<f64>() / tail.len() as f64;
    let peak = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let peak_idx = slopes
        .iter()
        .position(|&s| s == peak)
        .unwrap_or(0);
    if late > 4.5 {
        return Err(format!("late-time log-log slope {late:.2} is not polynomial-like"));
    }
    if peak < 2.0 * late.max(1.0) + 5.0 {
        return Err(format!(
            "no transient: peak local slope {peak:.2} vs late slope {late:.2}"
        ));
    }
    if peak_idx >= slopes.len() - 5 {
        return Err("growth still accelerating at the end of the grid".into());
    }
    Ok(format!(
        "crossover: peak local slope {peak:.1} settles to {late:.2}"
    ))
}

#[derive(Debug, Serialize)]
pub struct EpSummary {
    pub value: [f64; 2],
    pub algebraic_multiplicity: usize,
    pub jordan_order: usize,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub n_modes: usize,
    pub symmetry_violation: f64,
    pub stable: bool,
    pub max_imag: f64,
    pub closure_defect: f64,
    pub clusters: Vec<EpSummary>,
}

pub fn validate_model(spec: &ModelSpec) -> CliResult<ValidationReport> {
    let model = spec.build()?;
    let hd = build_dynamical_matrix(&model)?;
    let sym = validate_symmetries(&hd);
    let rep = spectrum(&hd)?;
    let closure = spectrum_closure_defect(&rep);
    let clusters = ep_order(&hd, VALIDATE_CLUSTER_TOL)?
        .into_iter()
        .map(|ep| EpSummary {
            value: [ep.value.re, ep.value.im],
            algebraic_multiplicity: ep.algebraic_multiplicity,
            jordan_order: ep.jordan_order,
        })
        .collect();
    Ok(ValidationReport {
        model: spec.id(),
        n_modes: model.n_modes,
        symmetry_violation: sym.max_violation(),
        stable: rep.stable,
        max_imag: rep.max_imag,
        closure_defect: closure,
        clusters,
    })
}

#[derive(Debug, Serialize)]
pub struct PointReport {
    pub label: String,
    pub f_engine: f64,
    pub f_oracle: f64,
    pub rel_dev: f64,
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub points: Vec<PointReport>,
    pub max_rel_dev: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn point_alpha(point: &OraclePoint, n_modes: usize) -> CliResult<CVec> {
    match &point.alpha {
        None => Ok(CVec::zeros(n_modes)),
        Some(entries) => {
            if entries.len() != n_modes {
                return Err(CliError::Core(CoreError::InvalidModel(format!(
                    "point '{}': alpha has {} entries, model has {n_modes} modes",
                    point.label,
                    entries.len()
                ))));
            }
            Ok(CVec::from_vec(
                entries.iter().map(|&[re, im]| C64::new(re, im)).collect(),
            ))
        }
    }
}

fn compare_point(point: &OraclePoint) -> CliResult<PointReport> {
    let model = point.model.build()?;
    let alpha = point_alpha(point, model.n_modes)?;
    let hd = build_dynamical_matrix(&model)?;
    let dh = partial_derivative(&model, &point.param)?;
    let tail = point.tail_tol.unwrap_or(EVOLVED_TAIL_TOL);
    let step = point.delta_eta.unwrap_or(1e-4);
    let basis = FockBasis::new(model.n_modes, point.cutoff)?;

    let (f_engine, f_oracle) = match point.state {
        StateKind::Coherent => {
            let cs = coefficient_matrices(&hd, &dh, point.t)?;
            let st = CoherentState::new(alpha.clone())?;
            let engine = qfi_coherent(&cs, &st)?;
            let state0 = coherent_vector(&alpha, &basis)?;
            let oracle = fidelity_qfi_with_tail(
                &model,
                &point.param,
                0.0,
                step,
                point.t,
                &state0,
                tail,
            )?;
            (engine, oracle)
        }
        StateKind::CatPair => {
            let one = C64::new(1.0, 0.0);
            let st = SuperpositionState::normalized(vec![
                (one, alpha.clone()),
                (one, alpha.mapv(|z| -z)),
            ])?;
            let engine = qfi_superposition(&hd, &dh, point.t, &st)?;
            let plus = coherent_vector(&alpha, &basis)?;
            let minus = coherent_vector(&alpha.mapv(|z| -z), &basis)?;
            let overlap: f64 = (-2.0 * alpha.iter().map(|z| z.norm_sqr()).sum::<f64>()).exp();
            let w = C64::new(1.0 / (2.0 + 2.0 * overlap).sqrt(), 0.0);
            let mut cat = plus.clone();
            cat.amplitudes = (&plus.amplitudes + &minus.amplitudes).mapv(|z| z * w);
            let oracle = fidelity_qfi_with_tail(
                &model,
                &point.param,
                0.0,
                step,
                point.t,
                &cat,
                tail,
            )?;
            (engine, oracle)
        }
    };

    let denom = f_oracle.abs().max(f64::MIN_POSITIVE);
    Ok(PointReport {
        label: point.label.clone(),
        f_engine,
        f_oracle,
        rel_dev: (f_engine - f_oracle).abs() / denom,
    })
}

pub fn oracle_compare(cfg: &OracleCompareConfig) -> CliResult<OracleReport> {
    if cfg.points.is_empty() {
        return Err(CliError::Parse("oracle comparison needs at least one point".into()));
    }
    let mut points = Vec::with_capacity(cfg.points.len());
    for point in &cfg.points {
        points.push(compare_point(point)?);
    }
    let max_rel_dev = points.iter().map(|p| p.rel_dev).fold(0.0, f64::max);
    Ok(OracleReport {
        max_rel_dev,
        threshold: cfg.threshold,
        pass: max_rel_dev <= cfg.threshold,
        points,
    })
}
