use crate::config::{ExperimentConfig, GridSpec, OracleCompareConfig, OraclePoint, StateKind};
use epsense_core::model::{CatalogModel, ModelSpec};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Qfi,
    Spectrum,
    Size,
}

pub struct RunPlan {
    pub label: &'static str,
    pub kind: RunKind,
    pub cfg: ExperimentConfig,
    /// Expected slope band (lo, hi); a run outside its band is a miss.
    pub band: Option<(f64, f64)>,
    /// When set, check for an exponential-then-polynomial crossover in
    /// ln F vs ln t instead of a slope band.
    pub crossover: bool,
}

fn catalog(name: &str) -> CatalogModel {
    CatalogModel {
        catalog: name.to_string(),
        delta: None,
        kappa: None,
        kappa1: None,
        kappa3: None,
        eta: None,
        n: None,
        j: None,
        omega: None,
        theta: None,
    }
}

fn three_mode_ep() -> ModelSpec {
    let mut cat = catalog("three_mode");
    cat.delta = Some(1.0);
    cat.kappa1 = Some(2.0_f64.sqrt());
    cat.kappa3 = Some(2.0_f64.sqrt());
    ModelSpec::Catalog(cat)
}

fn three_mode_constrained() -> ModelSpec {
    let mut cat = catalog("three_mode_constrained");
    cat.delta = Some(1.0);
    cat.eta = Some(0.0);
    ModelSpec::Catalog(cat)
}

fn chain_with_edge(n: usize, j: f64, omega: f64, theta: f64) -> ModelSpec {
    let mut cat = catalog("kitaev_with_edge");
    cat.n = Some(n);
    cat.j = Some(j);
    cat.omega = Some(omega);
    cat.eta = Some(0.0);
    cat.theta = Some(theta);
    ModelSpec::Catalog(cat)
}

fn base_cfg(model: ModelSpec, param: &str) -> ExperimentConfig {
    ExperimentConfig {
        model,
        param: param.to_string(),
        t_grid: None,
        epsilon_grid: None,
        n_range: None,
        t0: None,
        window: None,
        alpha: None,
        out: None,
        seed: None,
    }
}

fn spectrum_run(
    label: &'static str,
    model: ModelSpec,
    param: &str,
    band: (f64, f64),
) -> RunPlan {
    let mut cfg = base_cfg(model, param);
    cfg.epsilon_grid = Some(GridSpec {
        lo: 1e-6,
        hi: 1e-3,
        count: 25,
    });
    cfg.window = Some([1e-6, 1e-3]);
    RunPlan {
        label,
        kind: RunKind::Spectrum,
        cfg,
        band: Some(band),
        crossover: false,
    }
}

fn qfi_run(
    label: &'static str,
    model: ModelSpec,
    param: &str,
    grid: GridSpec,
    window: [f64; 2],
    band: (f64, f64),
) -> RunPlan {
    let mut cfg = base_cfg(model, param);
    cfg.t_grid = Some(grid);
    cfg.window = Some(window);
    RunPlan {
        label,
        kind: RunKind::Qfi,
        cfg,
        band: Some(band),
        crossover: false,
    }
}

/// Built-in experiment plans. Fit windows are baked in here: the response
/// fits use the full ε decade range, the QFI exponent fits use a large-t
/// decade chosen where the leading power law dominates, and the size fits
/// use N in [4, 19] at t0 = 1000.
pub fn plan(name: &str) -> Option<Vec<RunPlan>> {
    match name {
        "fig2a" => Some(vec![
            spectrum_run(
                "fig2a-unconstrained",
                three_mode_ep(),
                "kappa1",
                (0.31, 0.35),
            ),
            spectrum_run(
                "fig2a-constrained",
                three_mode_constrained(),
                "eta",
                (0.48, 0.52),
            ),
        ]),
        "fig2b" => Some(vec![
            qfi_run(
                "fig2b-unconstrained",
                three_mode_ep(),
                "kappa1",
                GridSpec { lo: 1.0, hi: 400.0, count: 60 },
                [40.0, 400.0],
                (9.85, 10.15),
            ),
            qfi_run(
                "fig2b-constrained",
                three_mode_constrained(),
                "eta",
                GridSpec { lo: 1.0, hi: 400.0, count: 60 },
                [40.0, 400.0],
                (5.85, 6.15),
            ),
        ]),
        "fig3b" => Some(vec![
            spectrum_run(
                "fig3b-N10",
                chain_with_edge(10, 1.0, 1.0, 0.0),
                "eta",
                (0.085, 0.115),
            ),
            spectrum_run(
                "fig3b-N20",
                chain_with_edge(20, 1.0, 1.0, 0.0),
                "eta",
                (0.0425, 0.0575),
            ),
        ]),
        "fig3c" => Some(vec![
            qfi_run(
                "fig3c-degenerate-angle",
                chain_with_edge(6, 1.0, 1.0, 3.0 * PI / 4.0),
                "eta",
                GridSpec { lo: 1.0, hi: 100.0, count: 50 },
                [5.0, 50.0],
                (1.8, 2.2),
            ),
            qfi_run(
                "fig3c-near-degenerate-angle",
                chain_with_edge(6, 1.0, 1.0, 2.99 * PI / 4.0),
                "eta",
                GridSpec { lo: 1.0, hi: 100.0, count: 50 },
                [8.0, 60.0],
                (21.5, 22.5),
            ),
        ]),
        "fig3d" => Some(vec![
            qfi_run(
                "fig3d-N10",
                chain_with_edge(10, 1.0, 1.0, 0.0),
                "eta",
                GridSpec { lo: 0.5, hi: 100.0, count: 50 },
                [30.0, 100.0],
                (37.5, 38.5),
            ),
            qfi_run(
                "fig3d-N20",
                chain_with_edge(20, 1.0, 1.0, 0.0),
                "eta",
                GridSpec { lo: 1.0, hi: 60.0, count: 50 },
                [25.0, 60.0],
                (77.0, 79.0),
            ),
        ]),
        "fig4a" => Some(
            [4usize, 9, 14, 19]
                .into_iter()
                .map(|n| {
                    let mut cfg = base_cfg(
                        chain_with_edge(n, 1.0, 0.9, PI / 4.0),
                        "eta",
                    );
                    cfg.t_grid = Some(GridSpec { lo: 1.0, hi: 3000.0, count: 60 });
                    let label: &'static str = match n {
                        4 => "fig4a-N4",
                        9 => "fig4a-N9",
                        14 => "fig4a-N14",
                        _ => "fig4a-N19",
                    };
                    RunPlan {
                        label,
                        kind: RunKind::Qfi,
                        cfg,
                        band: None,
                        crossover: true,
                    }
                })
                .collect(),
        ),
        "fig4b" => Some(vec![
            {
                let mut cfg = base_cfg(chain_with_edge(4, 1.0, 0.9, PI / 4.0), "eta");
                cfg.n_range = Some([4, 19]);
                cfg.t0 = Some(1000.0);
                RunPlan {
                    label: "fig4b-near-degenerate",
                    kind: RunKind::Size,
                    cfg,
                    band: Some((5.5, 5.9)),
                    crossover: false,
                }
            },
            {
                let mut cfg = base_cfg(chain_with_edge(4, 1.0, 0.0, PI / 4.0), "eta");
                cfg.n_range = Some([4, 19]);
                cfg.t0 = Some(1000.0);
                RunPlan {
                    label: "fig4b-no-pairing-control",
                    kind: RunKind::Size,
                    cfg,
                    band: Some((-0.3, 0.3)),
                    crossover: false,
                }
            },
        ]),
        _ => None,
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "fig2a", "fig2b", "fig3b", "fig3c", "fig3d", "fig4a", "fig4b",
];

/// Default cross-check set for `oracle-compare` when no config is given:
/// single-mode points at the degeneracy for vacuum and displaced inputs,
/// the three-mode degenerate point, and a two-component cat state.
pub fn default_oracle_config() -> OracleCompareConfig {
    let mut points = Vec::new();
    let single = |label: &str, alpha: Option<Vec<[f64; 2]>>, t: f64, cutoff: usize| OraclePoint {
        label: label.to_string(),
        model: ModelSpec::Catalog({
            let mut cat = catalog("single_mode");
            cat.delta = Some(1.0);
            cat.kappa = Some(1.0);
            cat
        }),
        param: "kappa".to_string(),
        t,
        cutoff,
        alpha,
        state: StateKind::Coherent,
        tail_tol: None,
        delta_eta: None,
    };
    for (t, cutoff) in [(0.25, 48), (0.5, 64), (1.0, 96)] {
        points.push(single(&format!("single-vacuum-t{t}"), None, t, cutoff));
        points.push(single(
            &format!("single-displaced-t{t}"),
            Some(vec![[1.0, 0.0]]),
            t,
            cutoff,
        ));
    }
    points.push(OraclePoint {
        label: "three-mode-degenerate-t0.5".to_string(),
        model: three_mode_ep(),
        param: "kappa1".to_string(),
        t: 0.5,
        cutoff: 10,
        alpha: None,
        state: StateKind::Coherent,
        tail_tol: Some(1e-2),
        delta_eta: None,
    });
    points.push(OraclePoint {
        label: "single-cat-t0.5".to_string(),
        model: ModelSpec::Catalog({
            let mut cat = catalog("single_mode");
            cat.delta = Some(1.0);
            cat.kappa = Some(1.0);
            cat
        }),
        param: "kappa".to_string(),
        t: 0.5,
        cutoff: 64,
        alpha: Some(vec![[0.9, 0.0]]),
        state: StateKind::CatPair,
        tail_tol: None,
        delta_eta: None,
    });
    OracleCompareConfig {
        points,
        threshold: 1e-2,
    }
}
