use crate::{CliError, CliResult};
use epsense_core::model::{CatalogModel, ModelSpec, QuadraticModel};
use epsense_core::qfi::CoherentState;
use epsense_core::{C64, CVec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Logarithmically spaced grid.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> CliResult<Vec<f64>> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0 && self.lo < self.hi) {
            return Err(CliError::Parse(format!(
                "grid needs 0 < lo < hi, got lo={} hi={}",
                self.lo, self.hi
            )));
        }
        if self.count < 3 {
            return Err(CliError::Parse(format!(
                "grid needs at least 3 points, got {}",
                self.count
            )));
        }
        let ratio = (self.hi / self.lo).ln();
        Ok((0..self.count)
            .map(|i| self.lo * (ratio * i as f64 / (self.count - 1) as f64).exp())
            .collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Initial coherent displacement per mode as [re, im]; vacuum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn window_tuple(&self) -> Option<(f64, f64)> {
        self.window.map(|[lo, hi]| (lo, hi))
    }

    pub fn initial_state(&self, n_modes: usize) -> CliResult<CoherentState> {
        match &self.alpha {
            None => Ok(CoherentState::vacuum(n_modes)),
            Some(entries) => {
                if entries.len() != n_modes {
                    return Err(CliError::Core(epsense_core::CoreError::InvalidModel(
                        format!(
                            "alpha has {} entries, model has {n_modes} modes",
                            entries.len()
                        ),
                    )));
                }
                let v: CVec = CVec::from_vec(
                    entries.iter().map(|&[re, im]| C64::new(re, im)).collect(),
                );
                Ok(CoherentState::new(v)?)
            }
        }
    }
}

/// Substitutes the mode count into a size-parameterized catalog model.
pub fn sized_model(spec: &ModelSpec, n: usize) -> CliResult<QuadraticModel> {
    match spec {
        ModelSpec::Catalog(cat)
            if cat.catalog == "kitaev_chain" || cat.catalog == "kitaev_with_edge" =>
        {
            let mut sized: CatalogModel = cat.clone();
            sized.n = Some(n);
            Ok(sized.build()?)
        }
        _ => Err(CliError::Parse(
            "size sweeps need a chain catalog model (kitaev_chain or kitaev_with_edge)".into(),
        )),
    }
}

/// Initial state for the many-body oracle comparison.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    #[default]
    Coherent,
    /// Equal-weight superposition of +alpha and -alpha displacements.
    CatPair,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OraclePoint {
    pub label: String,
    pub model: ModelSpec,
    pub param: String,
    pub t: f64,
    pub cutoff: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub state: StateKind,
    /// Allowed probability on the truncation boundary; strict default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_eta: Option<f64>,
}

fn default_threshold() -> f64 {
    1e-2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCompareConfig {
    pub points: Vec<OraclePoint>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl OracleCompareConfig {
    pub fn load(path: &Path) -> CliResult<OracleCompareConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }
}

pub fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got '{s}'"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lo: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad hi: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("window needs lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}
