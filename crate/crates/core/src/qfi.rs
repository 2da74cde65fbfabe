//! Quantum Fisher information for quadratic bosonic dynamics.
//!
//! Everything reduces to the Hermitian generator
//!
//! ```text
//! G = int_0^t S(y)^dag (sigma_z dH) S(y) dy = [[C1, C2], [conj(C2), conj(C1)]]
//! ```
//!
//! For a coherent initial state the QFI is
//! `F = 4 (C1 a + C2 conj(a))^dag (C1 a + C2 conj(a)) + 2 Tr(C2^dag C2)`;
//! for superpositions of coherent states F is the variance of the quadratic
//! operator built from the same blocks. The integral is evaluated in closed
//! form through a block-exponential identity: the exponential of
//! `[[-i H^dag, B], [0, -i H]] t` has `exp(-iHt)` in its lower-right block
//! and `int_0^t exp(-iH^dag (t-s)) B exp(-iHs) ds` in its upper-right block,
//! so `S(t)^dag R(t)` is exactly the integral above. No quadrature tolerance
//! enters; accuracy is that of the matrix exponential itself.
//!
//! Long evolutions of non-degenerate generators do not go through that
//! exponential in one shot: the squaring chain inside it amplifies the error
//! of the integral block geometrically when the dynamics is strongly
//! non-normal. Instead the integral is accumulated additively over short
//! segments via `W(t+tau) = W(t) + S(t)^dag W(tau) S(t)`, which keeps the
//! error at roundoff times the number of segments.

use ndarray::s;

use crate::error::{CoreError, Result};
use crate::expm::{expm, max_abs, nilpotent_taylor, opnorm_one, THETA_13};
use crate::model::{assemble_blocks, sigma_z, split_blocks};
use crate::propagator::{pq_split, Propagator};
use crate::{C64, CMat, CVec, OVERFLOW_GUARD};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Time-integrated coefficient blocks of the sensing generator.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    pub t: f64,
    pub c0: C64,
    pub c1: CMat,
    pub c2: CMat,
}

impl CoefficientSet {
    pub fn n_modes(&self) -> usize {
        self.c1.nrows()
    }

    /// The full Hermitian generator [[c1, c2], [conj(c2), conj(c1)]].
    pub fn assembled(&self) -> CMat {
        assemble_blocks(
            &self.c1,
            &self.c2,
            &self.c2.mapv(|z| z.conj()),
            &self.c1.mapv(|z| z.conj()),
        )
    }

    pub fn c2_frobenius(&self) -> f64 {
        self.c2.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct CoherentState {
    pub alpha: CVec,
}

impl CoherentState {
    pub fn new(alpha: CVec) -> Result<CoherentState> {
        if !alpha.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(CoreError::InvalidModel(
                "coherent amplitudes must be finite".into(),
            ));
        }
        Ok(CoherentState { alpha })
    }

    pub fn vacuum(n: usize) -> CoherentState {
        CoherentState {
            alpha: CVec::zeros(n),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.alpha.len()
    }
}

/// Superposition sum_j f_j |alpha^j> of coherent states.
#[derive(Clone, Debug)]
pub struct SuperpositionState {
    pub terms: Vec<(C64, CVec)>,
}

/// Overlap <alpha|beta> = exp(-(|a|^2 + |b|^2)/2 + a^dag b).
pub fn coherent_overlap(a: &CVec, b: &CVec) -> C64 {
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    let cross: C64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| x.conj() * y)
        .sum();
    (cross - 0.5 * (na + nb)).exp()
}

impl SuperpositionState {
    pub fn new(terms: Vec<(C64, CVec)>) -> Result<SuperpositionState> {
        if terms.is_empty() {
            return Err(CoreError::InvalidModel(
                "superposition needs at least one term".into(),
            ));
        }
        let n = terms[0].1.len();
        for (i, (f, alpha)) in terms.iter().enumerate() {
            if alpha.len() != n {
                return Err(CoreError::InvalidModel(format!(
                    "term {i} has {} modes, expected {n}",
                    alpha.len()
                )));
            }
            let finite = f.re.is_finite()
                && f.im.is_finite()
                && alpha.iter().all(|z| z.re.is_finite() && z.im.is_finite());
            if !finite {
                return Err(CoreError::InvalidModel(format!(
                    "term {i} has non-finite entries"
                )));
            }
        }
        for i in 0..terms.len() {
            for j in 0..i {
                let diff = terms[i]
                    .1
                    .iter()
                    .zip(terms[j].1.iter())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0_f64, f64::max);
                if diff <= 1e-12 {
                    return Err(CoreError::InvalidModel(format!(
                        "terms {j} and {i} have coinciding displacement vectors"
                    )));
                }
            }
        }
        Ok(SuperpositionState { terms })
    }

    /// Squared norm including the coherent cross terms.
    pub fn gram_norm_sqr(&self) -> f64 {
        let mut total = c(0.0, 0.0);
        for (fj, aj) in &self.terms {
            for (fk, ak) in &self.terms {
                total += fj.conj() * fk * coherent_overlap(aj, ak);
            }
        }
        total.re
    }

    /// Rescales the weights so the Gram-corrected norm is exactly 1.
    pub fn normalized(terms: Vec<(C64, CVec)>) -> Result<SuperpositionState> {
        let mut st = SuperpositionState::new(terms)?;
        let n2 = st.gram_norm_sqr();
        if !(n2.is_finite() && n2 > 0.0) {
            return Err(CoreError::InvalidModel(format!(
                "superposition has degenerate norm {n2}"
            )));
        }
        let scale = c(1.0 / n2.sqrt(), 0.0);
        for (f, _) in &mut st.terms {
            *f *= scale;
        }
        Ok(st)
    }

    pub fn n_modes(&self) -> usize {
        self.terms[0].1.len()
    }
}

/// Builds [[-iH^dag, B], [0, -iH]] t.
fn van_loan(hm: &CMat, b: &CMat, t: f64) -> CMat {
    let d = hm.nrows();
    let mi = c(0.0, -1.0);
    let mut big = CMat::zeros((2 * d, 2 * d));
    let hdag = hm.t().mapv(|z| z.conj());
    big.slice_mut(s![..d, ..d]).assign(&hdag.mapv(|z| z * mi * t));
    big.slice_mut(s![..d, d..]).assign(&b.mapv(|z| z * t));
    big.slice_mut(s![d.., d..]).assign(&hm.mapv(|z| z * mi * t));
    big
}

/// Upper-right and lower-right blocks of exp([[-iH^dag, B], [0, -iH]] t).
fn block_integral(hm: &CMat, b: &CMat, t: f64) -> Result<(CMat, CMat)> {
    let d = hm.nrows();
    let e = expm(&van_loan(hm, b, t))?;
    let r = e.slice(s![..d, d..]).to_owned();
    let st = e.slice(s![d.., d..]).to_owned();
    Ok((r, st))
}

fn one_shot_weighted(hm: &CMat, b: &CMat, t: f64) -> Result<CMat> {
    let (r, st) = block_integral(hm, b, t)?;
    Ok(st.t().mapv(|z| z.conj()).dot(&r))
}

/// Hard ceiling on stepped-integration work per series call.
const MAX_INTEGRATION_STEPS: usize = 200_000;

/// int_0^{t_i} S(y)^dag B S(y) dy for every time in the ascending grid `ts`.
///
/// Returns the longest prefix of the grid whose integrals stay inside the
/// overflow guard and the step budget; a result shorter than `ts` means the
/// next grid time was out of range.
pub fn weighted_integral_series(hm: &CMat, b: &CMat, ts: &[f64]) -> Result<Vec<CMat>> {
    let d = hm.nrows();
    if hm.ncols() != d || b.nrows() != d || b.ncols() != d {
        return Err(CoreError::InvalidModel(format!(
            "weight has shape {}x{}, generator is {d}x{d}",
            b.nrows(),
            b.ncols()
        )));
    }
    if ts.iter().any(|t| !t.is_finite() || *t < 0.0) || ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(CoreError::Range(
            "time grid must be finite, non-negative and ascending".to_string(),
        ));
    }
    let Some(&t_last) = ts.last() else {
        return Ok(Vec::new());
    };

    // One shot is accurate when no squaring chain is involved: small norm,
    // or a degenerate generator whose power series terminates.
    let m1 = van_loan(hm, b, 1.0);
    let d1 = opnorm_one(&m1);
    if d1 * t_last <= THETA_13 || nilpotent_taylor(&m1, d1).is_some() {
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            match one_shot_weighted(hm, b, t) {
                Ok(w) => out.push(w),
                Err(CoreError::Range(_)) => break,
                Err(e) => return Err(e),
            }
        }
        return Ok(out);
    }

    let mut out = Vec::with_capacity(ts.len());
    let mut s_t = CMat::eye(d);
    let mut w_t = CMat::zeros((d, d));
    let mut cur = 0.0;
    let mut budget = MAX_INTEGRATION_STEPS;
    'grid: for &t in ts {
        let delta = t - cur;
        if delta > 0.0 {
            let m = ((d1 * delta) / THETA_13).ceil().max(1.0) as usize;
            if m > budget {
                break 'grid;
            }
            budget -= m;
            let tau = delta / m as f64;
            let (r_tau, s_tau) = block_integral(hm, b, tau)?;
            let w_tau = s_tau.t().mapv(|z| z.conj()).dot(&r_tau);
            for _ in 0..m {
                let sh = s_t.t().mapv(|z| z.conj());
                w_t = w_t + sh.dot(&w_tau).dot(&s_t);
                s_t = s_tau.dot(&s_t);
                let scale = max_abs(&s_t).max(max_abs(&w_t));
                if !scale.is_finite() || scale > OVERFLOW_GUARD {
                    break 'grid;
                }
            }
        }
        cur = t;
        out.push(w_t.clone());
    }
    Ok(out)
}

/// int_0^t S(y)^dag B S(y) dy via the block-exponential identity.
pub fn weighted_integral(hm: &CMat, b: &CMat, t: f64) -> Result<CMat> {
    weighted_integral_series(hm, b, &[t])?
        .pop()
        .ok_or_else(|| {
            CoreError::Range(format!(
                "weighted integral exceeds the numeric range before t = {t}"
            ))
        })
}

/// Computes (c0, C1, C2) at every time in the ascending grid `ts`. Returns
/// the longest prefix of the grid that stays inside the numeric range, like
/// `weighted_integral_series`.
pub fn coefficient_series(
    hd: &crate::model::DynamicalMatrix,
    dh: &CMat,
    ts: &[f64],
) -> Result<Vec<CoefficientSet>> {
    let dim = hd.dim;
    if dh.nrows() != dim || dh.ncols() != dim {
        return Err(CoreError::InvalidModel(format!(
            "derivative has shape {}x{}, expected {dim}x{dim}",
            dh.nrows(),
            dh.ncols()
        )));
    }
    let n = dim / 2;
    let sz = sigma_z(n);
    let ws = weighted_integral_series(&hd.m, &sz.dot(dh), ts)?;

    // The scalar coefficient integrates the same propagators against the
    // half-weighted derivative blocks; its value is twice the trace of the
    // lower-right block of that integral.
    let (dhb, ddb, _, _) = split_blocks(dh);
    let half = c(0.5, 0.0);
    let g = assemble_blocks(
        &dhb,
        &ddb.mapv(|z| z * half),
        &ddb.mapv(|z| z.conj() * half),
        &CMat::zeros((n, n)),
    );
    let wgs = weighted_integral_series(&hd.m, &g, &ts[..ws.len()])?;

    Ok(ws
        .into_iter()
        .zip(wgs)
        .zip(ts)
        .map(|((w, wg), &t)| {
            let (c1, c2, _, _) = split_blocks(&w);
            let c0 = wg.slice(s![n.., n..]).diag().sum() * c(2.0, 0.0);
            CoefficientSet { t, c0, c1, c2 }
        })
        .collect())
}

/// Computes (c0, C1, C2) for generator H_D and parameter derivative dH at
/// time t. `dh` is the full 2N x 2N derivative [[dh, dD], [-conj(dD),
/// -conj(dh)]] as produced by `partial_derivative`.
pub fn coefficient_matrices(hd: &crate::model::DynamicalMatrix, dh: &CMat, t: f64) -> Result<CoefficientSet> {
    coefficient_series(hd, dh, &[t])?.pop().ok_or_else(|| {
        CoreError::Range(format!(
            "coefficient integrals exceed the numeric range before t = {t}"
        ))
    })
}

/// Clamp tiny negative round-off to zero; larger negatives are a bug.
fn clamp_qfi(f: f64) -> Result<f64> {
    if f >= 0.0 {
        Ok(f)
    } else if f >= -1e-8 {
        Ok(0.0)
    } else {
        Err(CoreError::Inconsistency(format!(
            "QFI evaluated to {f}, beyond the negative round-off allowance"
        )))
    }
}

/// F = 4 B^dag B + 2 Tr(C2^dag C2) with B = C1 alpha + C2 conj(alpha).
pub fn qfi_coherent(cs: &CoefficientSet, st: &CoherentState) -> Result<f64> {
    let n = cs.n_modes();
    if st.n_modes() != n {
        return Err(CoreError::InvalidModel(format!(
            "state has {} modes, coefficients have {n}",
            st.n_modes()
        )));
    }
    let ac = st.alpha.mapv(|z| z.conj());
    let b = cs.c1.dot(&st.alpha) + cs.c2.dot(&ac);
    let b2: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    let tr: f64 = cs.c2.iter().map(|z| z.norm_sqr()).sum();
    clamp_qfi(4.0 * b2 + 2.0 * tr)
}

fn vdot(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// QFI of a superposition of coherent states, evaluated as the variance of
/// the Hermitian sensing generator in that state. Requires the Gram-corrected
/// norm to be 1 within 1e-8.
pub fn qfi_superposition(
    hd: &crate::model::DynamicalMatrix,
    dh: &CMat,
    t: f64,
    st: &SuperpositionState,
) -> Result<f64> {
    if st.n_modes() * 2 != hd.dim {
        return Err(CoreError::InvalidModel(format!(
            "state has {} modes, dynamical matrix has {}",
            st.n_modes(),
            hd.dim / 2
        )));
    }
    let norm = st.gram_norm_sqr();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(CoreError::InvalidModel(format!(
            "superposition is not normalized: Gram-corrected squared norm is {norm}; \
             build it with SuperpositionState::normalized"
        )));
    }
    let cs = coefficient_matrices(hd, dh, t)?;
    let m = st.terms.len();
    let tr_c2: f64 = cs.c2.iter().map(|z| z.norm_sqr()).sum();
    let c2c = cs.c2.mapv(|z| z.conj());

    // Per-term vectors: x1 = C1 a, x2 = C2 conj(a), x3 = C2^dag a = conj(C2) a.
    let mut x1 = Vec::with_capacity(m);
    let mut x3 = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m); // a^dag C2 conj(a)
    let mut bq = Vec::with_capacity(m); // a^dag C1 C2 conj(a)
    for (_, a) in &st.terms {
        let ac = a.mapv(|z| z.conj());
        let x1_j = cs.c1.dot(a);
        let x2_j = cs.c2.dot(&ac);
        u.push(vdot(a, &x2_j));
        bq.push(vdot(&x1_j, &x2_j));
        x3.push(c2c.dot(a));
        x1.push(x1_j);
    }

    // Renormalize exactly; the residual is below the 1e-8 gate.
    let scale = 1.0 / norm.sqrt();
    let mut first = c(0.0, 0.0);
    let mut second = c(0.0, 0.0);
    for j in 0..m {
        for k in 0..m {
            let (fj, aj) = &st.terms[j];
            let (fk, ak) = &st.terms[k];
            let weight = fj.conj() * fk * scale * scale * coherent_overlap(aj, ak);
            let g = vdot(aj, &x1[k]) + 0.5 * u[j] + 0.5 * u[k].conj();
            let w = cs.c0 + 2.0 * g;
            let lam = 4.0 * (vdot(&x1[j], &x1[k]) + bq[j] + bq[k].conj() + vdot(&x3[j], &x3[k]))
                + 2.0 * tr_c2;
            first += weight * w;
            second += weight * (w * w + lam);
        }
    }
    let scale_f = second.norm().max(first.norm_sqr()).max(1.0);
    if first.im.abs() > 1e-8 * scale_f.sqrt() || second.im.abs() > 1e-8 * scale_f {
        return Err(CoreError::Inconsistency(format!(
            "generator moments acquired imaginary parts ({:.3e}, {:.3e})",
            first.im, second.im
        )));
    }
    clamp_qfi(second.re - first.re * first.re)
}

/// Total particle number <sum_j a_j^dag a_j> after evolving a coherent state:
/// |P a + Q conj(a)|^2 plus the vacuum amplification Frobenius term |Q|_F^2.
pub fn particle_number(prop: &Propagator, st: &CoherentState) -> Result<f64> {
    let (p, q) = pq_split(prop)?;
    if st.n_modes() != p.nrows() {
        return Err(CoreError::InvalidModel(format!(
            "state has {} modes, propagator has {}",
            st.n_modes(),
            p.nrows()
        )));
    }
    let ac = st.alpha.mapv(|z| z.conj());
    let v = p.dot(&st.alpha) + q.dot(&ac);
    let displaced: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let pairs: f64 = q.iter().map(|z| z.norm_sqr()).sum();
    Ok(displaced + pairs)
}

/// F / Q^2, the figure of merit against the Heisenberg limit.
pub fn heisenberg_ratio(f: f64, q: f64) -> Result<f64> {
    if q <= 0.0 {
        return Err(CoreError::Unsupported(format!(
            "particle number must be positive to form F/Q^2, got {q}"
        )));
    }
    Ok(f / (q * q))
}

/// One row of a parameter sweep, ready for CSV serialization.
#[derive(Clone, Debug)]
pub struct BatchPoint {
    pub model_id: String,
    pub param: String,
    pub t: f64,
    pub f: f64,
    pub q: f64,
    pub c2_frobenius: f64,
}

impl BatchPoint {
    pub fn csv_header() -> &'static str {
        "model_id,param,t,F,Q,c2_frobenius"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.model_id, self.param, self.t, self.f, self.q, self.c2_frobenius
        )
    }
}

/// Evaluates (F, Q, |C2|_F) for one model, parameter, initial coherent state
/// and time. Sweep drivers fan this out over their grids.
pub fn evaluate_point(
    model: &crate::model::QuadraticModel,
    param: &str,
    st: &CoherentState,
    t: f64,
) -> Result<(f64, f64, f64)> {
    let hd = crate::model::build_dynamical_matrix(model)?;
    let dh = crate::model::partial_derivative(model, param)?;
    let cs = coefficient_matrices(&hd, &dh, t)?;
    let f = qfi_coherent(&cs, st)?;
    let prop = crate::propagator::propagate(&hd, t)?;
    let q = particle_number(&prop, st)?;
    Ok((f, q, cs.c2_frobenius()))
}
