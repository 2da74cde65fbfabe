//! Brute-force validation path: the quadratic Hamiltonian as a dense matrix
//! in a truncated number basis, exact evolution, and QFI from state fidelity.
//! Shares no propagator or coefficient code with the analytic engine.

use ndarray_linalg::{Eigh, Norm, UPLO};

use crate::error::{CoreError, Result};
use crate::expm::max_abs;
use crate::model::QuadraticModel;
use crate::{C64, CMat, CVec};

pub const DEFAULT_DIM_LIMIT: usize = 200_000;

/// Probability allowed on the truncation boundary of an evolved state.
pub const EVOLVED_TAIL_TOL: f64 = 1e-8;

/// Probability a coherent state may lose to truncation.
pub const COHERENT_TAIL_TOL: f64 = 1e-8;

/// Occupation-number basis, lexicographic with mode 1 slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    pub n_modes: usize,
    pub cutoff: usize,
    pub dim: usize,
}

impl FockBasis {
    pub fn new(n_modes: usize, cutoff: usize) -> Result<FockBasis> {
        Self::with_limit(n_modes, cutoff, DEFAULT_DIM_LIMIT)
    }

    pub fn with_limit(n_modes: usize, cutoff: usize, limit: usize) -> Result<FockBasis> {
        if n_modes == 0 {
            return Err(CoreError::InvalidModel("basis needs at least one mode".into()));
        }
        let base = cutoff + 1;
        let mut dim: usize = 1;
        for _ in 0..n_modes {
            dim = dim.checked_mul(base).filter(|&d| d <= limit).ok_or_else(|| {
                CoreError::Range(format!(
                    "basis dimension ({base})^{n_modes} exceeds the limit of {limit} states"
                ))
            })?;
        }
        Ok(FockBasis {
            n_modes,
            cutoff,
            dim,
        })
    }

    pub fn occupations(&self, index: usize) -> Vec<usize> {
        let base = self.cutoff + 1;
        let mut occ = vec![0; self.n_modes];
        let mut rem = index;
        for k in (0..self.n_modes).rev() {
            occ[k] = rem % base;
            rem /= base;
        }
        occ
    }

    pub fn index(&self, occ: &[usize]) -> usize {
        let base = self.cutoff + 1;
        occ.iter().fold(0, |acc, &n| acc * base + n)
    }
}

#[derive(Clone, Debug)]
pub struct DenseState {
    pub amplitudes: CVec,
    pub basis: FockBasis,
}

impl DenseState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.norm_l2()
    }

    /// Probability on states with some mode at the cutoff occupation.
    pub fn boundary_tail(&self) -> f64 {
        let mut tail = 0.0;
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            let occ = self.basis.occupations(idx);
            if occ.iter().any(|&n| n == self.basis.cutoff) {
                tail += amp.norm_sqr();
            }
        }
        tail
    }
}

/// Dense matrix of sum_ij h_ij a_i^dag a_j
///   + (1/2) sum_ij (Delta_ij a_i^dag a_j^dag + h.c.)
/// projected onto the truncated basis.
pub fn build_hamiltonian(model: &QuadraticModel, basis: &FockBasis) -> Result<CMat> {
    if model.n_modes != basis.n_modes {
        return Err(CoreError::InvalidModel(format!(
            "model has {} modes but the basis has {}",
            model.n_modes, basis.n_modes
        )));
    }
    let n = model.n_modes;
    let dim = basis.dim;
    let mut hop = CMat::zeros((dim, dim));
    let mut raise = CMat::zeros((dim, dim));
    for col in 0..dim {
        let occ = basis.occupations(col);
        for i in 0..n {
            for j in 0..n {
                // a_i^dag a_j
                let hij = model.h[[i, j]];
                if hij != C64::new(0.0, 0.0) && occ[j] > 0 {
                    let mut target = occ.clone();
                    target[j] -= 1;
                    let f = (occ[j] as f64).sqrt();
                    if target[i] < basis.cutoff {
                        target[i] += 1;
                        let f = f * (target[i] as f64).sqrt();
                        hop[[basis.index(&target), col]] += hij * f;
                    }
                }
                // (1/2) Delta_ij a_i^dag a_j^dag
                let dij = model.delta[[i, j]];
                if dij != C64::new(0.0, 0.0) {
                    let mut target = occ.clone();
                    if target[j] < basis.cutoff {
                        target[j] += 1;
                        let f = (target[j] as f64).sqrt();
                        if target[i] < basis.cutoff {
                            target[i] += 1;
                            let f = f * (target[i] as f64).sqrt();
                            raise[[basis.index(&target), col]] += dij * 0.5 * f;
                        }
                    }
                }
            }
        }
    }
    let full = hop + &raise + &raise.t().mapv(|z| z.conj());
    let defect = max_abs(&(&full - &full.t().mapv(|z| z.conj())));
    if defect > 1e-12 * max_abs(&full).max(1.0) {
        return Err(CoreError::Inconsistency(format!(
            "assembled number-basis Hamiltonian is not Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(full)
}

/// Product of truncated coherent expansions, renormalized. Refuses when the
/// truncated probability exceeds the tail tolerance.
pub fn coherent_vector(alpha: &CVec, basis: &FockBasis) -> Result<DenseState> {
    if alpha.len() != basis.n_modes {
        return Err(CoreError::InvalidModel(format!(
            "displacement has {} entries for a {}-mode basis",
            alpha.len(),
            basis.n_modes
        )));
    }
    let mut per_mode: Vec<Vec<C64>> = Vec::with_capacity(basis.n_modes);
    let mut kept = 1.0;
    for &a in alpha.iter() {
        let mut amps = Vec::with_capacity(basis.cutoff + 1);
        let mut c = C64::new((-a.norm_sqr() / 2.0).exp(), 0.0);
        let mut mass = 0.0;
        for k in 0..=basis.cutoff {
            amps.push(c);
            mass += c.norm_sqr();
            c *= a / ((k + 1) as f64).sqrt();
        }
        kept *= mass;
        per_mode.push(amps);
    }
    let tail = 1.0 - kept;
    if tail > COHERENT_TAIL_TOL {
        let worst = alpha.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let suggested = (worst * worst + 8.0 * worst + 10.0).ceil() as usize;
        return Err(CoreError::Range(format!(
            "coherent state loses probability {tail:.3e} to truncation at cutoff {}; \
             increase the cutoff (roughly {suggested} for |alpha| = {worst:.2})",
            basis.cutoff
        )));
    }
    let mut amplitudes = CVec::zeros(basis.dim);
    for idx in 0..basis.dim {
        let occ = basis.occupations(idx);
        let mut amp = C64::new(1.0, 0.0);
        for (mode, &nk) in occ.iter().enumerate() {
            amp *= per_mode[mode][nk];
        }
        amplitudes[idx] = amp;
    }
    let scale = C64::new(1.0 / kept.sqrt(), 0.0);
    Ok(DenseState {
        amplitudes: amplitudes * scale,
        basis: basis.clone(),
    })
}

/// exp(-i H t) applied through the eigendecomposition of the Hermitian H.
pub fn evolve(h: &CMat, state: &DenseState, t: f64) -> Result<DenseState> {
    if h.nrows() != state.basis.dim {
        return Err(CoreError::InvalidModel(format!(
            "Hamiltonian dimension {} does not match basis dimension {}",
            h.nrows(),
            state.basis.dim
        )));
    }
    // The solver reads row-major storage in LAPACK's column order, so the
    // returned columns are eigenvectors of conj(H); undo the conjugation.
    let h_std = h.as_standard_layout().to_owned();
    let (vals, raw) = h_std
        .eigh(UPLO::Lower)
        .map_err(|e| CoreError::Linalg(format!("dense eigensolve failed: {e}")))?;
    let vecs = raw.mapv(|z| z.conj());
    let mut coeff = vecs.t().mapv(|z| z.conj()).dot(&state.amplitudes);
    for (c, &w) in coeff.iter_mut().zip(vals.iter()) {
        *c *= C64::new(0.0, -w * t).exp();
    }
    let amplitudes = vecs.dot(&coeff);
    let drift = (amplitudes.norm_l2() - state.norm()).abs();
    if drift > 1e-8 {
        return Err(CoreError::Inconsistency(format!(
            "evolution drifted the norm by {drift:.3e}"
        )));
    }
    Ok(DenseState {
        amplitudes,
        basis: state.basis.clone(),
    })
}

pub fn particle_number_expectation(state: &DenseState) -> f64 {
    let mut total = 0.0;
    for (idx, amp) in state.amplitudes.iter().enumerate() {
        let occ = state.basis.occupations(idx);
        total += amp.norm_sqr() * occ.iter().sum::<usize>() as f64;
    }
    total / state.norm().powi(2)
}

pub fn default_delta_eta(eta0: f64) -> f64 {
    1e-4 * eta0.abs().max(1.0)
}

/// QFI from the fidelity between states evolved at parameter offsets
/// eta0 -/+ delta_eta/2 from the model's working point:
/// F ~= 8 (1 - |<psi_-|psi_+>|) / delta_eta^2.
/// Phase-free, so the arbitrary global phases of the eigensolver drop out.
/// Refuses when either evolved state puts more than the strict default
/// tail tolerance on the truncation boundary.
pub fn fidelity_qfi(
    model: &QuadraticModel,
    param: &str,
    eta0: f64,
    delta_eta: f64,
    t: f64,
    state0: &DenseState,
) -> Result<f64> {
    fidelity_qfi_with_tail(model, param, eta0, delta_eta, t, state0, EVOLVED_TAIL_TOL)
}

/// Same as `fidelity_qfi` but with an explicit truncation-tail budget, for
/// regimes where strong squeezing makes the strict default unreachable at a
/// workable basis size. The fidelity error scales with the admitted tail,
/// so callers should keep it well below their accuracy target.
pub fn fidelity_qfi_with_tail(
    model: &QuadraticModel,
    param: &str,
    eta0: f64,
    delta_eta: f64,
    t: f64,
    state0: &DenseState,
    tail_tol: f64,
) -> Result<f64> {
    if !(delta_eta != 0.0 && delta_eta.is_finite()) {
        return Err(CoreError::InvalidModel(format!(
            "parameter step must be nonzero and finite, got {delta_eta}"
        )));
    }
    let (dh, dd) = model.derivative_blocks(param)?;
    if max_abs(&dh) == 0.0 && max_abs(&dd) == 0.0 {
        return Ok(0.0);
    }
    let mut evolved = Vec::with_capacity(2);
    for sign in [-0.5, 0.5] {
        let shifted = model.perturbed(param, eta0 + sign * delta_eta)?;
        let h = build_hamiltonian(&shifted, &state0.basis)?;
        let st = evolve(&h, state0, t)?;
        let tail = st.boundary_tail();
        if tail > tail_tol {
            return Err(CoreError::Range(format!(
                "evolved state puts probability {tail:.3e} on the truncation boundary \
                 at cutoff {}; increase the cutoff or shorten t",
                state0.basis.cutoff
            )));
        }
        evolved.push(st);
    }
    let inner: C64 = evolved[0]
        .amplitudes
        .iter()
        .zip(evolved[1].amplitudes.iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    let overlap = inner.norm() / (evolved[0].norm() * evolved[1].norm());
    let deficit = 1.0 - overlap;
    if deficit < 1e-12 {
        return Err(CoreError::Unsupported(format!(
            "fidelity deficit {deficit:.3e} is below the precision floor; \
             increase the step (try delta_eta = {:.3e})",
            10.0 * delta_eta.abs()
        )));
    }
    Ok(8.0 * deficit / (delta_eta * delta_eta))
}
