//! Eigenvalue analysis: stability, degeneracy order, response to
//! perturbations, and the regression helpers that turn sweeps into exponents.

use ndarray_linalg::{EigVals, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{build_dynamical_matrix, DynamicalMatrix, QuadraticModel};
use crate::qfi::{coefficient_matrices, qfi_coherent, CoherentState};
use crate::{C64, CMat};

/// Eigenvalues are considered real (the dynamically stable case) when every
/// imaginary part is below this.
pub const STABILITY_TOL: f64 = 1e-9;

/// Singular values below 1e-8 times the expected scale of the matrix power
/// count as zero when ranking Jordan structure.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<C64>,
    pub max_imag: f64,
    pub stable: bool,
}

fn eigvals_of(m: &CMat) -> Result<Vec<C64>> {
    let vals = m
        .eigvals()
        .map_err(|e| CoreError::Linalg(format!("eigenvalue solver failed: {e}")))?;
    Ok(vals.to_vec())
}

fn sort_complex(vals: &mut [C64]) {
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

pub fn spectrum(hd: &DynamicalMatrix) -> Result<SpectrumReport> {
    let mut vals = eigvals_of(&hd.m)?;
    sort_complex(&mut vals);
    let max_imag = vals.iter().map(|w| w.im.abs()).fold(0.0, f64::max);
    Ok(SpectrumReport {
        eigenvalues: vals,
        max_imag,
        stable: max_imag <= STABILITY_TOL,
    })
}

/// Largest distance from each -conj(omega) to the spectrum itself; zero for
/// matrices with the particle-hole structure.
pub fn spectrum_closure_defect(report: &SpectrumReport) -> f64 {
    let vals = &report.eigenvalues;
    vals.iter()
        .map(|w| {
            let mirror = C64::new(-w.re, w.im);
            vals.iter()
                .map(|v| (v - mirror).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct EpReport {
    pub value: C64,
    pub algebraic_multiplicity: usize,
    pub jordan_order: usize,
}

fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    let (_, s, _) = m
        .svd(false, false)
        .map_err(|e| CoreError::Linalg(format!("SVD failed: {e}")))?;
    Ok(s.to_vec())
}

/// Clusters the spectrum with single-linkage at `cluster_tol`, then measures
/// the Jordan order of each cluster: the smallest k with
/// rank((H - lambda I)^k) = 2N - multiplicity.
pub fn ep_order(hd: &DynamicalMatrix, cluster_tol: f64) -> Result<Vec<EpReport>> {
    if !(cluster_tol > 0.0) {
        return Err(CoreError::InvalidModel(format!(
            "cluster tolerance must be positive, got {cluster_tol}"
        )));
    }
    let vals = eigvals_of(&hd.m)?;
    let dim = vals.len();

    // Single-linkage union-find.
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..dim {
        for j in 0..i {
            if (vals[i] - vals[j]).norm() <= cluster_tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..dim {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let clusters: Vec<Vec<usize>> = clusters.into_values().collect();

    // Ambiguity diagnostic: clusters must be separated much better than
    // they are internally spread.
    let mut within: f64 = 0.0;
    for cl in &clusters {
        for (a, &i) in cl.iter().enumerate() {
            for &j in cl.iter().take(a) {
                within = within.max((vals[i] - vals[j]).norm());
            }
        }
    }
    let mut between = f64::INFINITY;
    for (a, ca) in clusters.iter().enumerate() {
        for cb in clusters.iter().take(a) {
            for &i in ca {
                for &j in cb {
                    between = between.min((vals[i] - vals[j]).norm());
                }
            }
        }
    }
    if clusters.len() > 1 && within > 0.0 && between < 10.0 * within {
        return Err(CoreError::Unsupported(format!(
            "ambiguous eigenvalue clustering at tolerance {cluster_tol:.3e}: \
             within-cluster spread {within:.3e} vs between-cluster gap {between:.3e} \
             (ratio below 10)"
        )));
    }

    let mut reports = Vec::with_capacity(clusters.len());
    for cl in &clusters {
        let m = cl.len();
        let center = cl.iter().map(|&i| vals[i]).sum::<C64>() / m as f64;
        let shifted = &hd.m - &(CMat::eye(dim) * center);
        let sigma1 = singular_values(&shifted)?
            .first()
            .copied()
            .unwrap_or(0.0);
        let target = dim - m;
        let mut power = CMat::eye(dim);
        let mut jordan = None;
        for k in 1..=m {
            power = power.dot(&shifted);
            let sv = singular_values(&power)?;
            let scale = sv.first().copied().unwrap_or(0.0).max(sigma1.powi(k as i32));
            let rank = sv.iter().filter(|&&s| s > RANK_TOL * scale).count();
            if rank <= target {
                jordan = Some(k);
                break;
            }
        }
        let jordan = jordan.ok_or_else(|| {
            CoreError::Inconsistency(format!(
                "rank of (H - lambda)^k never reached {target} for the cluster at \
                 {center} (multiplicity {m}); eigenvalue clustering is unreliable here"
            ))
        })?;
        reports.push(EpReport {
            value: center,
            algebraic_multiplicity: m,
            jordan_order: jordan,
        });
    }
    Ok(reports)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResponse {
    pub domega: Vec<C64>,
    pub max_abs: f64,
}

/// Eigenvalue shifts under a parameter step of eps, measured against the
/// common (mean) base eigenvalue. Intended for models at or near a fully
/// degenerate EP, where individual base eigenvalues cannot be tracked
/// through the perturbation.
pub fn spectrum_response(
    model: &QuadraticModel,
    param: &str,
    eps: f64,
) -> Result<SpectrumResponse> {
    let base = build_dynamical_matrix(model)?;
    let pert = build_dynamical_matrix(&model.perturbed(param, eps)?)?;
    let base_vals = eigvals_of(&base.m)?;
    let mut pert_vals = eigvals_of(&pert.m)?;
    sort_complex(&mut pert_vals);
    let center = base_vals.iter().sum::<C64>() / base_vals.len() as f64;
    let domega: Vec<C64> = pert_vals.iter().map(|w| w - center).collect();
    let max_abs = domega.iter().map(|d| d.norm()).fold(0.0, f64::max);
    Ok(SpectrumResponse { domega, max_abs })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

fn linear_fit(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(CoreError::Unsupported(
            "degenerate abscissa: all x values coincide".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = if ss_tot <= f64::MIN_POSITIVE {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        window,
        n_points: xs.len(),
    })
}

/// Least squares on (ln x, ln y) over the points with x inside the window.
pub fn fit_power_law(points: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let (lo, hi) = window;
    if !(lo <= hi) {
        return Err(CoreError::InvalidModel(format!(
            "empty fit window ({lo}, {hi})"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(x, y) in points {
        if x < lo || x > hi {
            continue;
        }
        if !(x > 0.0 && y > 0.0) {
            return Err(CoreError::Unsupported(format!(
                "power-law fit needs positive data, found ({x}, {y}) in window"
            )));
        }
        xs.push(x.ln());
        ys.push(y.ln());
    }
    if xs.len() < 3 {
        return Err(CoreError::Unsupported(format!(
            "power-law window [{lo}, {hi}] holds {} points, need at least 3",
            xs.len()
        )));
    }
    linear_fit(&xs, &ys, window)
}

/// Least squares on (x, ln y): exponential growth diagnostics.
pub fn fit_semilog(points: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(x, y) in points {
        if x < lo || x > hi {
            continue;
        }
        if !(y > 0.0) {
            return Err(CoreError::Unsupported(format!(
                "semilog fit needs positive ordinates, found {y}"
            )));
        }
        xs.push(x);
        ys.push(y.ln());
    }
    if xs.len() < 3 {
        return Err(CoreError::Unsupported(format!(
            "semilog window [{lo}, {hi}] holds {} points, need at least 3",
            xs.len()
        )));
    }
    linear_fit(&xs, &ys, window)
}

/// QFI of a coherent state on a time grid (F only; no particle numbers).
pub fn qfi_time_series(
    model: &QuadraticModel,
    param: &str,
    st: &CoherentState,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let hd = build_dynamical_matrix(model)?;
    let dh = crate::model::partial_derivative(model, param)?;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let cs = coefficient_matrices(&hd, &dh, t)?;
        out.push((t, qfi_coherent(&cs, st)?));
    }
    Ok(out)
}

/// Measured d_F: slope of ln F versus ln t inside the window.
pub fn qfi_time_exponent(
    model: &QuadraticModel,
    param: &str,
    st: &CoherentState,
    t_grid: &[f64],
    window: (f64, f64),
) -> Result<FitResult> {
    let series = qfi_time_series(model, param, st, t_grid)?;
    fit_power_law(&series, window)
}

/// Vacuum QFI at fixed t0 for each N in the range.
pub fn size_scaling_series(
    family: impl Fn(usize) -> Result<QuadraticModel>,
    param: &str,
    t0: f64,
    n_range: (usize, usize),
) -> Result<Vec<(usize, f64)>> {
    let (lo, hi) = n_range;
    if lo > hi {
        return Err(CoreError::InvalidModel(format!(
            "empty size range ({lo}, {hi})"
        )));
    }
    let mut points = Vec::with_capacity(hi - lo + 1);
    for n in lo..=hi {
        let model = family(n)?;
        let hd = build_dynamical_matrix(&model)?;
        let dh = crate::model::partial_derivative(&model, param)?;
        let cs = coefficient_matrices(&hd, &dh, t0).map_err(|e| match e {
            CoreError::Range(msg) => CoreError::Range(format!(
                "{msg} (while evaluating N={n} at t0={t0}; try a smaller t0)"
            )),
            other => other,
        })?;
        let f = qfi_coherent(&cs, &CoherentState::vacuum(model.n_modes))?;
        points.push((n, f));
    }
    Ok(points)
}

/// Fits ln F(t0) against the mode number N (semilog) for a model family,
/// with the vacuum as the initial state.
pub fn size_scaling_fit(
    family: impl Fn(usize) -> Result<QuadraticModel>,
    param: &str,
    t0: f64,
    n_range: (usize, usize),
) -> Result<FitResult> {
    let series = size_scaling_series(family, param, t0, n_range)?;
    let points: Vec<(f64, f64)> = series.iter().map(|&(n, f)| (n as f64, f)).collect();
    fit_semilog(&points, (n_range.0 as f64, n_range.1 as f64))
}

/// Roots of (2 Omega)^2 z^N - eps^2 cos(2 theta) z^(N-2)
///             - 2 eps Omega (cos theta + sin theta) = 0,
/// the secular equation for the edge-coupling response of the chain at its
/// EP. Eigenvalue responses are E = 2 i Omega z.
pub fn bkc_edge_response_roots(
    n: usize,
    omega: f64,
    eps: f64,
    theta: f64,
) -> Result<Vec<C64>> {
    if n < 2 {
        return Err(CoreError::InvalidModel(format!(
            "polynomial needs N >= 2, got {n}"
        )));
    }
    if omega == 0.0 {
        return Err(CoreError::InvalidModel(
            "Omega must be nonzero for the edge response polynomial".into(),
        ));
    }
    if eps < 0.0 {
        return Err(CoreError::InvalidModel(format!(
            "perturbation must be nonnegative, got {eps}"
        )));
    }
    let lead = (2.0 * omega) * (2.0 * omega);
    // Monic coefficients c[k] of z^k for k = 0..N-1.
    let mut coeff = vec![0.0; n];
    coeff[n - 2] += -eps * eps * (2.0 * theta).cos() / lead;
    coeff[0] += -2.0 * eps * omega * (theta.cos() + theta.sin()) / lead;
    let mut companion = CMat::zeros((n, n));
    for i in 1..n {
        companion[[i, i - 1]] = C64::new(1.0, 0.0);
    }
    for (k, &ck) in coeff.iter().enumerate() {
        companion[[k, n - 1]] = C64::new(-ck, 0.0);
    }
    let mut roots = eigvals_of(&companion)?;
    sort_complex(&mut roots);
    Ok(roots)
}
