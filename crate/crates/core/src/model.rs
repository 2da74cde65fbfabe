//! Quadratic bosonic models and their dynamical matrices.
//!
//! A model is an `N`-mode Hamiltonian
//!
//! ```text
//! H = sum_{jk} h_{jk} a_j^dag a_k
//!   + 1/2 sum_{jk} (Delta_{jk} a_j^dag a_k^dag + conj(Delta_{jk}) a_j a_k)
//! ```
//!
//! with `h` Hermitian and `Delta` symmetric. The equations of motion for the
//! operator vector `(a_1..a_N, a_1^dag..a_N^dag)` are generated by the
//! non-Hermitian dynamical matrix
//!
//! ```text
//! H_D = [[ h,        Delta   ],
//!        [-conj(Delta), -conj(h)]]
//! ```
//!
//! Sensing parameters are declared as sparse derivative stencils on the two
//! blocks, so every consumer (propagation, response, oracles) perturbs the
//! model the same way.

use std::collections::BTreeMap;

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::expm::max_abs;
use crate::{C64, CMat};

/// Relative tolerance for structural checks (Hermiticity, symmetry,
/// dynamical-matrix relations).
pub const STRUCTURE_TOL: f64 = 1e-12;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn fmt_c(z: C64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

/// Builds a 2n x 2n matrix from four n x n blocks.
pub(crate) fn assemble_blocks(tl: &CMat, tr: &CMat, bl: &CMat, br: &CMat) -> CMat {
    let n = tl.nrows();
    let mut out = CMat::zeros((2 * n, 2 * n));
    out.slice_mut(s![..n, ..n]).assign(tl);
    out.slice_mut(s![..n, n..]).assign(tr);
    out.slice_mut(s![n.., ..n]).assign(bl);
    out.slice_mut(s![n.., n..]).assign(br);
    out
}

/// Splits a 2n x 2n matrix into four n x n blocks (tl, tr, bl, br).
pub(crate) fn split_blocks(m: &CMat) -> (CMat, CMat, CMat, CMat) {
    let n = m.nrows() / 2;
    (
        m.slice(s![..n, ..n]).to_owned(),
        m.slice(s![..n, n..]).to_owned(),
        m.slice(s![n.., ..n]).to_owned(),
        m.slice(s![n.., n..]).to_owned(),
    )
}

/// tau_x (x) I_n : swaps the annihilation and creation sectors.
pub fn sigma_x(n: usize) -> CMat {
    let z = CMat::zeros((n, n));
    let id = CMat::eye(n);
    assemble_blocks(&z, &id, &id, &z)
}

/// tau_y (x) I_n.
pub fn sigma_y(n: usize) -> CMat {
    let z = CMat::zeros((n, n));
    let mi = CMat::eye(n) * c(0.0, -1.0);
    let pi = CMat::eye(n) * c(0.0, 1.0);
    assemble_blocks(&z, &mi, &pi, &z)
}

/// tau_z (x) I_n : the symplectic metric.
pub fn sigma_z(n: usize) -> CMat {
    let z = CMat::zeros((n, n));
    let id = CMat::eye(n);
    let mid = CMat::eye(n) * c(-1.0, 0.0);
    assemble_blocks(&id, &z, &z, &mid)
}

/// Which block of the model a derivative stencil addresses.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    H,
    Delta,
}

/// One sparse entry of a parameter derivative: d(block)[row][col] = coeff.
/// Indices are 0-based.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(from = "StencilRepr", into = "StencilRepr")]
pub struct Stencil {
    pub block: Block,
    pub row: usize,
    pub col: usize,
    pub coeff: C64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct StencilRepr {
    block: Block,
    row: usize,
    col: usize,
    coeff_re: f64,
    coeff_im: f64,
}

impl From<StencilRepr> for Stencil {
    fn from(r: StencilRepr) -> Self {
        Stencil {
            block: r.block,
            row: r.row,
            col: r.col,
            coeff: c(r.coeff_re, r.coeff_im),
        }
    }
}

impl From<Stencil> for StencilRepr {
    fn from(s: Stencil) -> Self {
        StencilRepr {
            block: s.block,
            row: s.row,
            col: s.col,
            coeff_re: s.coeff.re,
            coeff_im: s.coeff.im,
        }
    }
}

/// Sparse derivative of the model with respect to one named parameter.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamBinding {
    pub stencils: Vec<Stencil>,
}

impl ParamBinding {
    pub fn new(stencils: Vec<Stencil>) -> Self {
        ParamBinding { stencils }
    }

    /// Assembles d h / d eta as a dense n x n matrix.
    pub fn derivative_h(&self, n: usize) -> CMat {
        let mut out = CMat::zeros((n, n));
        for st in &self.stencils {
            if st.block == Block::H {
                out[[st.row, st.col]] += st.coeff;
            }
        }
        out
    }

    /// Assembles d Delta / d eta as a dense n x n matrix.
    pub fn derivative_delta(&self, n: usize) -> CMat {
        let mut out = CMat::zeros((n, n));
        for st in &self.stencils {
            if st.block == Block::Delta {
                out[[st.row, st.col]] += st.coeff;
            }
        }
        out
    }
}

/// Validated N-mode quadratic model.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    pub n_modes: usize,
    pub h: CMat,
    pub delta: CMat,
    pub params: BTreeMap<String, ParamBinding>,
}

fn check_hermitian(a: &CMat, name: &str) -> Result<()> {
    let scale = max_abs(a).max(1.0);
    for i in 0..a.nrows() {
        for j in 0..=i {
            let d = a[[i, j]] - a[[j, i]].conj();
            if d.norm() > STRUCTURE_TOL * scale {
                return Err(CoreError::InvalidModel(format!(
                    "{name}[{i}][{j}] = {} conflicts with conj({name}[{j}][{i}]) = {}; \
                     {name} must be Hermitian",
                    fmt_c(a[[i, j]]),
                    fmt_c(a[[j, i]].conj()),
                )));
            }
        }
    }
    Ok(())
}

fn check_symmetric(a: &CMat, name: &str) -> Result<()> {
    let scale = max_abs(a).max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            let d = a[[i, j]] - a[[j, i]];
            if d.norm() > STRUCTURE_TOL * scale {
                return Err(CoreError::InvalidModel(format!(
                    "{name}[{i}][{j}] = {} conflicts with {name}[{j}][{i}] = {}; \
                     {name} must be symmetric",
                    fmt_c(a[[i, j]]),
                    fmt_c(a[[j, i]]),
                )));
            }
        }
    }
    Ok(())
}

impl QuadraticModel {
    /// Validates block shapes, Hermiticity of `h`, symmetry of `delta`, and
    /// the structure of every parameter binding.
    pub fn new(
        h: CMat,
        delta: CMat,
        params: BTreeMap<String, ParamBinding>,
    ) -> Result<QuadraticModel> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(CoreError::InvalidModel(format!(
                "h has shape {}x{}, expected square",
                h.nrows(),
                h.ncols()
            )));
        }
        if delta.nrows() != n || delta.ncols() != n {
            return Err(CoreError::InvalidModel(format!(
                "delta has shape {}x{}, expected {n}x{n} to match h",
                delta.nrows(),
                delta.ncols()
            )));
        }
        if !h.iter().chain(delta.iter()).all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(CoreError::InvalidModel(
                "h and delta entries must be finite".into(),
            ));
        }
        check_hermitian(&h, "h")?;
        check_symmetric(&delta, "delta")?;
        for (name, binding) in &params {
            for st in &binding.stencils {
                if st.row >= n || st.col >= n {
                    return Err(CoreError::InvalidModel(format!(
                        "parameter '{name}' stencil ({}, {}) is out of range for {n} modes",
                        st.row, st.col
                    )));
                }
            }
            check_hermitian(&binding.derivative_h(n), &format!("d h/d {name}"))?;
            check_symmetric(&binding.derivative_delta(n), &format!("d delta/d {name}"))?;
        }
        Ok(QuadraticModel {
            n_modes: n,
            h,
            delta,
            params,
        })
    }

    /// Names of the declared sensing parameters, sorted.
    pub fn param_names(&self) -> Vec<&str> {
        self.params.keys().map(|s| s.as_str()).collect()
    }

    fn binding(&self, param: &str) -> Result<&ParamBinding> {
        self.params.get(param).ok_or_else(|| {
            CoreError::InvalidModel(format!(
                "unknown parameter '{param}'; declared parameters: {:?}",
                self.param_names()
            ))
        })
    }

    /// Dense derivative blocks (dh, ddelta) for a declared parameter.
    pub fn derivative_blocks(&self, param: &str) -> Result<(CMat, CMat)> {
        let b = self.binding(param)?;
        Ok((
            b.derivative_h(self.n_modes),
            b.derivative_delta(self.n_modes),
        ))
    }

    /// Model shifted along a declared parameter: h -> h + eps*dh,
    /// delta -> delta + eps*ddelta. Bindings are carried over unchanged.
    pub fn perturbed(&self, param: &str, eps: f64) -> Result<QuadraticModel> {
        let (dh, dd) = self.derivative_blocks(param)?;
        QuadraticModel::new(
            &self.h + &(dh * c(eps, 0.0)),
            &self.delta + &(dd * c(eps, 0.0)),
            self.params.clone(),
        )
    }

    /// Single squeezed mode: h = [[delta]], Delta = [[i kappa]].
    /// Sensing parameter `kappa`. Second-order EP at |kappa| = |delta|.
    pub fn single_mode(delta: f64, kappa: f64) -> Result<QuadraticModel> {
        let h = CMat::from_shape_vec((1, 1), vec![c(delta, 0.0)]).unwrap();
        let d = CMat::from_shape_vec((1, 1), vec![c(0.0, kappa)]).unwrap();
        let mut params = BTreeMap::new();
        params.insert(
            "kappa".to_string(),
            ParamBinding::new(vec![Stencil {
                block: Block::Delta,
                row: 0,
                col: 0,
                coeff: c(0.0, 1.0),
            }]),
        );
        QuadraticModel::new(h, d, params)
    }

    fn three_mode_h(delta: f64) -> CMat {
        let mut h = CMat::zeros((3, 3));
        h[[0, 1]] = c(0.0, delta);
        h[[1, 0]] = c(0.0, -delta);
        h[[1, 2]] = c(0.0, delta);
        h[[2, 1]] = c(0.0, -delta);
        h
    }

    /// Three hopping-coupled modes with counter-rotating squeezing on the end
    /// modes: Delta = diag(-i kappa1, 0, i kappa3). Sensing parameters
    /// `kappa1`, `kappa3`. Third-order EP at kappa1 = kappa3 = sqrt(2) delta.
    pub fn three_mode(delta: f64, kappa1: f64, kappa3: f64) -> Result<QuadraticModel> {
        let h = Self::three_mode_h(delta);
        let mut d = CMat::zeros((3, 3));
        d[[0, 0]] = c(0.0, -kappa1);
        d[[2, 2]] = c(0.0, kappa3);
        let mut params = BTreeMap::new();
        params.insert(
            "kappa1".to_string(),
            ParamBinding::new(vec![Stencil {
                block: Block::Delta,
                row: 0,
                col: 0,
                coeff: c(0.0, -1.0),
            }]),
        );
        params.insert(
            "kappa3".to_string(),
            ParamBinding::new(vec![Stencil {
                block: Block::Delta,
                row: 2,
                col: 2,
                coeff: c(0.0, 1.0),
            }]),
        );
        QuadraticModel::new(h, d, params)
    }

    /// Three-mode model with the two squeezing strengths locked to a single
    /// knob: kappa1 = kappa3 = sqrt(2) delta + eta. Sensing parameter `eta`,
    /// whose derivative moves both end squeezers together.
    pub fn three_mode_constrained(delta: f64, eta: f64) -> Result<QuadraticModel> {
        let kappa = 2.0_f64.sqrt() * delta + eta;
        let h = Self::three_mode_h(delta);
        let mut d = CMat::zeros((3, 3));
        d[[0, 0]] = c(0.0, -kappa);
        d[[2, 2]] = c(0.0, kappa);
        let mut params = BTreeMap::new();
        params.insert(
            "eta".to_string(),
            ParamBinding::new(vec![
                Stencil {
                    block: Block::Delta,
                    row: 0,
                    col: 0,
                    coeff: c(0.0, -1.0),
                },
                Stencil {
                    block: Block::Delta,
                    row: 2,
                    col: 2,
                    coeff: c(0.0, 1.0),
                },
            ]),
        );
        QuadraticModel::new(h, d, params)
    }

    fn chain_blocks(n: usize, j: f64, omega: f64) -> (CMat, CMat) {
        let mut h = CMat::zeros((n, n));
        let mut d = CMat::zeros((n, n));
        for k in 0..n - 1 {
            h[[k, k + 1]] = c(0.0, j);
            h[[k + 1, k]] = c(0.0, -j);
            d[[k, k + 1]] = c(0.0, omega);
            d[[k + 1, k]] = c(0.0, omega);
        }
        (h, d)
    }

    /// Open bosonic chain with nearest-neighbour hopping iJ and two-mode
    /// squeezing i Omega. Sensing parameter `Omega` (uniform squeezing
    /// strength). N-th order EP at J = Omega.
    pub fn kitaev_chain(n: usize, j: f64, omega: f64) -> Result<QuadraticModel> {
        if n < 2 {
            return Err(CoreError::InvalidModel(format!(
                "chain needs at least 2 modes, got {n}"
            )));
        }
        let (h, d) = Self::chain_blocks(n, j, omega);
        let mut stencils = Vec::with_capacity(2 * (n - 1));
        for k in 0..n - 1 {
            stencils.push(Stencil {
                block: Block::Delta,
                row: k,
                col: k + 1,
                coeff: c(0.0, 1.0),
            });
            stencils.push(Stencil {
                block: Block::Delta,
                row: k + 1,
                col: k,
                coeff: c(0.0, 1.0),
            });
        }
        let mut params = BTreeMap::new();
        params.insert("Omega".to_string(), ParamBinding::new(stencils));
        QuadraticModel::new(h, d, params)
    }

    /// Chain plus a single weak link between the end modes:
    /// h gains i eta sin(theta) (a_N^dag a_1 - h.c. direction) and Delta
    /// gains i eta cos(theta) on the (N,1)/(1,N) entries. Sensing parameter
    /// `eta` (the `Omega` binding is kept as well).
    pub fn kitaev_with_edge(
        n: usize,
        j: f64,
        omega: f64,
        eta: f64,
        theta: f64,
    ) -> Result<QuadraticModel> {
        if n < 2 {
            return Err(CoreError::InvalidModel(format!(
                "chain needs at least 2 modes, got {n}"
            )));
        }
        let (mut h, mut d) = Self::chain_blocks(n, j, omega);
        let (sin, cos) = theta.sin_cos();
        h[[n - 1, 0]] += c(0.0, eta * sin);
        h[[0, n - 1]] += c(0.0, -eta * sin);
        d[[n - 1, 0]] += c(0.0, eta * cos);
        d[[0, n - 1]] += c(0.0, eta * cos);
        let base = Self::kitaev_chain(n, j, omega)?;
        let mut params = base.params;
        params.insert(
            "eta".to_string(),
            ParamBinding::new(vec![
                Stencil {
                    block: Block::H,
                    row: n - 1,
                    col: 0,
                    coeff: c(0.0, sin),
                },
                Stencil {
                    block: Block::H,
                    row: 0,
                    col: n - 1,
                    coeff: c(0.0, -sin),
                },
                Stencil {
                    block: Block::Delta,
                    row: n - 1,
                    col: 0,
                    coeff: c(0.0, cos),
                },
                Stencil {
                    block: Block::Delta,
                    row: 0,
                    col: n - 1,
                    coeff: c(0.0, cos),
                },
            ]),
        );
        QuadraticModel::new(h, d, params)
    }
}

/// The 2N x 2N generator of the operator equations of motion.
#[derive(Clone, Debug)]
pub struct DynamicalMatrix {
    pub dim: usize,
    pub m: CMat,
}

/// Assembles H_D = [[h, Delta], [-conj(Delta), -conj(h)]].
pub fn build_dynamical_matrix(model: &QuadraticModel) -> Result<DynamicalMatrix> {
    let n = model.n_modes;
    let h = &model.h;
    let d = &model.delta;
    let m = assemble_blocks(
        h,
        d,
        &d.mapv(|z| -z.conj()),
        &h.mapv(|z| -z.conj()),
    );
    Ok(DynamicalMatrix { dim: 2 * n, m })
}

/// Residuals of the three structural relations every dynamical matrix of a
/// valid model satisfies, normalised by max(1, |H_D|_max):
///
/// * particle-hole:       sigma_x conj(H_D) sigma_x = -H_D
/// * pseudo-Hermiticity:  sigma_z H_D sigma_z = H_D^dag
/// * transposition:       sigma_y H_D sigma_y = -H_D^T
///
/// The first relation forces the spectrum to be closed under
/// omega -> -conj(omega).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymmetryReport {
    pub particle_hole: f64,
    pub pseudo_hermiticity: f64,
    pub transposition: f64,
    pub tol: f64,
}

impl SymmetryReport {
    pub fn max_violation(&self) -> f64 {
        self.particle_hole
            .max(self.pseudo_hermiticity)
            .max(self.transposition)
    }

    pub fn pass(&self) -> bool {
        self.max_violation() <= self.tol
    }
}

pub fn validate_symmetries(hd: &DynamicalMatrix) -> SymmetryReport {
    let n = hd.dim / 2;
    let sx = sigma_x(n);
    let sy = sigma_y(n);
    let sz = sigma_z(n);
    let m = &hd.m;
    let scale = max_abs(m).max(1.0);
    let ph = &sx.dot(&m.mapv(|z| z.conj())).dot(&sx) + m;
    let mdag = m.t().mapv(|z| z.conj());
    let pseudo = &sz.dot(m).dot(&sz) - &mdag;
    let tr = &sy.dot(m).dot(&sy) + &m.t();
    SymmetryReport {
        particle_hole: max_abs(&ph) / scale,
        pseudo_hermiticity: max_abs(&pseudo) / scale,
        transposition: max_abs(&tr) / scale,
        tol: STRUCTURE_TOL,
    }
}

/// For matrices commuting with sigma_x, rotates into the basis where H_D is
/// block diagonal and returns the two blocks (h + Delta, h - Delta).
///
/// Refuses when [H_D, sigma_x] is not negligible, reporting the commutator
/// norm.
pub fn block_diagonalize(hd: &DynamicalMatrix) -> Result<(CMat, CMat)> {
    let n = hd.dim / 2;
    let sx = sigma_x(n);
    let m = &hd.m;
    let comm = &sx.dot(m) - &m.dot(&sx);
    let scale = max_abs(m).max(1.0);
    let defect = max_abs(&comm) / scale;
    if defect > 100.0 * STRUCTURE_TOL {
        return Err(CoreError::Unsupported(format!(
            "dynamical matrix does not commute with sigma_x \
             (relative commutator norm {defect:.3e}); no common block structure"
        )));
    }
    // U = exp(-i pi tau_y / 4) (x) I maps tau_x to tau_z, so U^dag H_D U is
    // block diagonal with blocks h + Delta and h - Delta.
    let (tl, tr, _, _) = split_blocks(m);
    Ok((&tl + &tr, &tl - &tr))
}

/// Derivative of the dynamical matrix with respect to a declared parameter:
/// [[dh, dDelta], [-conj(dDelta), -conj(dh)]].
pub fn partial_derivative(model: &QuadraticModel, param: &str) -> Result<CMat> {
    let (dh, dd) = model.derivative_blocks(param)?;
    Ok(assemble_blocks(
        &dh,
        &dd,
        &dd.mapv(|z| -z.conj()),
        &dh.mapv(|z| -z.conj()),
    ))
}

/// Piecewise-constant drive: a list of (duration, model) segments applied in
/// order.
#[derive(Clone, Debug)]
pub struct CoefficientSchedule {
    segments: Vec<(f64, QuadraticModel)>,
}

impl CoefficientSchedule {
    pub fn new(segments: Vec<(f64, QuadraticModel)>) -> Result<CoefficientSchedule> {
        if segments.is_empty() {
            return Err(CoreError::InvalidModel(
                "schedule needs at least one segment".into(),
            ));
        }
        let n = segments[0].1.n_modes;
        for (i, (dur, model)) in segments.iter().enumerate() {
            if !(dur.is_finite() && *dur > 0.0) {
                return Err(CoreError::InvalidModel(format!(
                    "segment {i} has non-positive duration {dur}"
                )));
            }
            if model.n_modes != n {
                return Err(CoreError::InvalidModel(format!(
                    "segment {i} has {} modes, expected {n}",
                    model.n_modes
                )));
            }
        }
        Ok(CoefficientSchedule { segments })
    }

    pub fn segments(&self) -> &[(f64, QuadraticModel)] {
        &self.segments
    }

    pub fn n_modes(&self) -> usize {
        self.segments[0].1.n_modes
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|(d, _)| d).sum()
    }
}

/// On-disk model description: either a catalog entry with its numeric
/// arguments or fully inline matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Catalog(CatalogModel),
    Inline(InlineModel),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatalogModel {
    pub catalog: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, rename = "J", skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default, rename = "Omega", skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl CatalogModel {
    fn need(&self, field: Option<f64>, name: &str) -> Result<f64> {
        field.ok_or_else(|| {
            CoreError::InvalidModel(format!(
                "catalog '{}' needs field '{name}'",
                self.catalog
            ))
        })
    }

    fn need_n(&self) -> Result<usize> {
        self.n.ok_or_else(|| {
            CoreError::InvalidModel(format!("catalog '{}' needs field 'N'", self.catalog))
        })
    }

    pub fn build(&self) -> Result<QuadraticModel> {
        match self.catalog.as_str() {
            "single_mode" => QuadraticModel::single_mode(
                self.need(self.delta, "delta")?,
                self.need(self.kappa, "kappa")?,
            ),
            "three_mode" => QuadraticModel::three_mode(
                self.need(self.delta, "delta")?,
                self.need(self.kappa1, "kappa1")?,
                self.need(self.kappa3, "kappa3")?,
            ),
            "three_mode_constrained" => QuadraticModel::three_mode_constrained(
                self.need(self.delta, "delta")?,
                self.need(self.eta, "eta")?,
            ),
            "kitaev_chain" => QuadraticModel::kitaev_chain(
                self.need_n()?,
                self.need(self.j, "J")?,
                self.need(self.omega, "Omega")?,
            ),
            "kitaev_with_edge" => QuadraticModel::kitaev_with_edge(
                self.need_n()?,
                self.need(self.j, "J")?,
                self.need(self.omega, "Omega")?,
                self.need(self.eta, "eta")?,
                self.need(self.theta, "theta")?,
            ),
            other => Err(CoreError::InvalidModel(format!(
                "unknown catalog model '{other}'; known: single_mode, three_mode, \
                 three_mode_constrained, kitaev_chain, kitaev_with_edge"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InlineModel {
    pub n_modes: usize,
    pub h: Vec<Vec<[f64; 2]>>,
    pub delta: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamBinding>,
}

fn rows_to_matrix(rows: &[Vec<[f64; 2]>], n: usize, name: &str) -> Result<CMat> {
    if rows.len() != n {
        return Err(CoreError::InvalidModel(format!(
            "{name} has {} rows, expected {n}",
            rows.len()
        )));
    }
    let mut m = CMat::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(CoreError::InvalidModel(format!(
                "{name} row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for (j, &[re, im]) in row.iter().enumerate() {
            m[[i, j]] = c(re, im);
        }
    }
    Ok(m)
}

impl InlineModel {
    pub fn build(&self) -> Result<QuadraticModel> {
        let n = self.n_modes;
        let h = rows_to_matrix(&self.h, n, "h")?;
        let delta = rows_to_matrix(&self.delta, n, "delta")?;
        QuadraticModel::new(h, delta, self.params.clone())
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<QuadraticModel> {
        match self {
            ModelSpec::Catalog(cat) => cat.build(),
            ModelSpec::Inline(inl) => inl.build(),
        }
    }

    pub fn from_json(text: &str) -> Result<ModelSpec> {
        serde_json::from_str(text)
            .map_err(|e| CoreError::InvalidModel(format!("model JSON parse error: {e}")))
    }

    /// Short identifier used in batch output rows.
    pub fn id(&self) -> String {
        match self {
            ModelSpec::Catalog(cat) => {
                let mut id = cat.catalog.clone();
                if let Some(n) = cat.n {
                    id.push_str(&format!("_N{n}"));
                }
                id
            }
            ModelSpec::Inline(inl) => format!("inline_{}mode", inl.n_modes),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn catalog_matrices_match_definitions() {
        let m = QuadraticModel::three_mode(1.0, 0.5, 0.25).unwrap();
        assert_eq!(m.h[[0, 1]], c(0.0, 1.0));
        assert_eq!(m.h[[1, 0]], c(0.0, -1.0));
        assert_eq!(m.h[[0, 2]], c(0.0, 0.0));
        assert_eq!(m.delta[[0, 0]], c(0.0, -0.5));
        assert_eq!(m.delta[[2, 2]], c(0.0, 0.25));

        let k = QuadraticModel::kitaev_with_edge(4, 1.0, 0.5, 0.1, 0.3).unwrap();
        assert_eq!(k.h[[0, 1]], c(0.0, 1.0));
        assert_eq!(k.delta[[1, 2]], c(0.0, 0.5));
        assert_abs_diff_eq!(k.h[[3, 0]].im, 0.1 * 0.3_f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.delta[[0, 3]].im, 0.1 * 0.3_f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_hermitian_h() {
        let mut h = CMat::zeros((2, 2));
        h[[0, 1]] = c(1.0, 0.0);
        h[[1, 0]] = c(1.0, 0.5);
        let err = QuadraticModel::new(h, CMat::zeros((2, 2)), BTreeMap::new()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("h[1][0]"), "diagnostic was: {msg}");
    }

    #[test]
    fn rejects_asymmetric_delta() {
        let mut d = CMat::zeros((2, 2));
        d[[0, 1]] = c(0.0, 1.0);
        d[[1, 0]] = c(0.0, -1.0);
        let err = QuadraticModel::new(CMat::zeros((2, 2)), d, BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("delta[1][0]"));
    }

    #[test]
    fn rejects_bad_binding() {
        let mut params = BTreeMap::new();
        params.insert(
            "g".to_string(),
            ParamBinding::new(vec![Stencil {
                block: Block::H,
                row: 0,
                col: 1,
                coeff: c(1.0, 0.0),
            }]),
        );
        let err =
            QuadraticModel::new(CMat::zeros((2, 2)), CMat::zeros((2, 2)), params).unwrap_err();
        assert!(err.to_string().contains("d h/d g"));
    }

    #[test]
    fn symmetry_report_passes_for_catalog() {
        for model in [
            QuadraticModel::single_mode(0.7, 0.7).unwrap(),
            QuadraticModel::three_mode(1.0, 2f64.sqrt(), 2f64.sqrt()).unwrap(),
            QuadraticModel::kitaev_with_edge(5, 1.0, 0.9, 0.2, 1.1).unwrap(),
        ] {
            let hd = build_dynamical_matrix(&model).unwrap();
            let report = validate_symmetries(&hd);
            assert!(report.pass(), "violations: {report:?}");
        }
    }

    #[test]
    fn symmetry_report_flags_corrupted_matrix() {
        let model = QuadraticModel::kitaev_chain(3, 1.0, 0.5).unwrap();
        let mut hd = build_dynamical_matrix(&model).unwrap();
        hd.m[[0, 0]] = c(0.3, 0.1);
        let report = validate_symmetries(&hd);
        assert!(!report.pass());
        assert!(report.particle_hole > 1e-3);
    }

    #[test]
    fn block_diagonalize_splits_chain() {
        let model = QuadraticModel::kitaev_chain(4, 1.0, 1.0).unwrap();
        let hd = build_dynamical_matrix(&model).unwrap();
        let (hp, hm) = block_diagonalize(&hd).unwrap();
        // At J = Omega the plus block is strictly upper triangular with 2iJ
        // on the superdiagonal and the minus block is its mirror.
        for i in 0..4 {
            for j in 0..4 {
                let expect_p = if j == i + 1 { c(0.0, 2.0) } else { c(0.0, 0.0) };
                let expect_m = if i == j + 1 { c(0.0, -2.0) } else { c(0.0, 0.0) };
                assert_abs_diff_eq!(hp[[i, j]].re, expect_p.re, epsilon = 1e-14);
                assert_abs_diff_eq!(hp[[i, j]].im, expect_p.im, epsilon = 1e-14);
                assert_abs_diff_eq!(hm[[i, j]].re, expect_m.re, epsilon = 1e-14);
                assert_abs_diff_eq!(hm[[i, j]].im, expect_m.im, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn block_diagonalize_refuses_asymmetric_matrix() {
        let model = QuadraticModel::single_mode(1.0, 0.3).unwrap();
        let hd = build_dynamical_matrix(&model).unwrap();
        let err = block_diagonalize(&hd).unwrap_err();
        assert!(err.to_string().contains("commutator"));
    }

    #[test]
    fn partial_derivative_matches_finite_differences() {
        let model = QuadraticModel::kitaev_with_edge(4, 1.0, 1.0, 0.05, 0.7).unwrap();
        for param in ["Omega", "eta"] {
            let analytic = partial_derivative(&model, param).unwrap();
            let step = 1e-6;
            let plus = build_dynamical_matrix(&model.perturbed(param, step).unwrap()).unwrap();
            let minus = build_dynamical_matrix(&model.perturbed(param, -step).unwrap()).unwrap();
            let fd = (&plus.m - &minus.m) / c(2.0 * step, 0.0);
            assert!(max_abs(&(&fd - &analytic)) < 1e-8);
        }
    }

    #[test]
    fn schedule_validation() {
        let m = QuadraticModel::single_mode(1.0, 1.0).unwrap();
        assert!(CoefficientSchedule::new(vec![]).is_err());
        assert!(CoefficientSchedule::new(vec![(0.0, m.clone())]).is_err());
        let s = CoefficientSchedule::new(vec![(1.0, m.clone()), (0.5, m)]).unwrap();
        assert_abs_diff_eq!(s.total_duration(), 1.5);
    }

    #[test]
    fn model_spec_json_round_trip() {
        let text = r#"{
            "catalog": "kitaev_with_edge",
            "N": 6, "J": 1.0, "Omega": 1.0, "eta": 0.0, "theta": 2.356194490192345
        }"#;
        let spec = ModelSpec::from_json(text).unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model.n_modes, 6);
        let back = serde_json::to_string(&spec).unwrap();
        let again = ModelSpec::from_json(&back).unwrap().build().unwrap();
        assert_eq!(again.n_modes, 6);
        assert!(matches!(spec, ModelSpec::Catalog(_)));
    }

    #[test]
    fn inline_model_json() {
        let text = r#"{
            "n_modes": 1,
            "h": [[[0.5, 0.0]]],
            "delta": [[[0.0, 0.5]]],
            "params": {
                "kappa": [ {"block": "delta", "row": 0, "col": 0,
                            "coeff_re": 0.0, "coeff_im": 1.0} ]
            }
        }"#;
        let spec = ModelSpec::from_json(text).unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model.n_modes, 1);
        assert_eq!(model.delta[[0, 0]], c(0.0, 0.5));
        let (dh, dd) = model.derivative_blocks("kappa").unwrap();
        assert_eq!(dh[[0, 0]], c(0.0, 0.0));
        assert_eq!(dd[[0, 0]], c(0.0, 1.0));
        // An unknown parameter is a model error, not a panic.
        assert!(model.derivative_blocks("nope").is_err());
    }

    #[test]
    fn bad_json_is_rejected() {
        assert!(ModelSpec::from_json("{").is_err());
        assert!(ModelSpec::from_json(r#"{"catalog": "unknown_thing"}"#)
            .unwrap()
            .build()
            .is_err());
        // Catalog with a missing field fails with a readable message.
        let spec = ModelSpec::from_json(r#"{"catalog": "single_mode", "delta": 1.0}"#).unwrap();
        assert!(spec.build().unwrap_err().to_string().contains("kappa"));
    }
}
