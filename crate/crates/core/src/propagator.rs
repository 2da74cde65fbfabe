//! Time evolution S(t) = exp(-i H_D t) of the mode-operator vector, plus the
//! closed-form propagators known for the catalog models.
//!
//! No eigendecomposition is involved anywhere; it would break down exactly at
//! the degeneracies this crate is built to study. Degenerate generators take
//! a terminating power series; everything else is built as a product of
//! equal small-norm exponential factors, with the iterate reprojected onto
//! the particle-hole block structure after every product.

use ndarray_linalg::Determinant;

use crate::error::{CoreError, Result};
use crate::expm::{expm, max_abs, nilpotent_taylor, opnorm_one, THETA_13};
use crate::model::{
    assemble_blocks, build_dynamical_matrix, sigma_z, split_blocks, CoefficientSchedule,
    DynamicalMatrix,
};
use crate::{C64, CMat};

/// Relative tolerance for the annihilation/creation block structure of S.
/// Loose enough for the roundoff that stepped evolution accumulates at
/// large ||H t||; structural bugs (wrong conjugation or sign conventions)
/// produce order-one defects.
pub const SPLIT_TOL: f64 = 1e-8;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Debug)]
pub struct Propagator {
    pub t: f64,
    pub s: CMat,
}

/// Guard for genuine particle-hole structure violations. The iterate is
/// reprojected onto the structure after every product, so the defect seen
/// here is single-step roundoff, which reaches ~1e-4 relative on strongly
/// non-normal stable chains; structural bugs (wrong conjugation or sign
/// conventions in the generator) give order-one defects.
const STRUCTURE_GUARD: f64 = 1e-3;

/// Averages the conjugate-related blocks, restoring the exact structure, and
/// rejects inputs that are not close to it in the first place.
fn onto_particle_hole(s: &CMat) -> Result<CMat> {
    let (p, q, ql, pl) = split_blocks(s);
    let plc = pl.mapv(|z| z.conj());
    let qlc = ql.mapv(|z| z.conj());
    let scale = max_abs(s).max(1.0);
    let defect = max_abs(&(&plc - &p)).max(max_abs(&(&qlc - &q))) / scale;
    if defect > STRUCTURE_GUARD {
        return Err(CoreError::Inconsistency(format!(
            "propagator lacks the [[P,Q],[Q*,P*]] block structure \
             (relative defect {defect:.3e}); the generator does not satisfy \
             the particle-hole relation"
        )));
    }
    let half = c(0.5, 0.0);
    let p = (&p + &plc).mapv(|z| z * half);
    let q = (&q + &qlc).mapv(|z| z * half);
    Ok(assemble_blocks(
        &p,
        &q,
        &q.mapv(|z| z.conj()),
        &p.mapv(|z| z.conj()),
    ))
}

/// Hard ceiling on stepped-evolution work per call.
const MAX_EVOLUTION_STEPS: usize = 200_000;

/// Multiplies `s` by exp(a_seg) as `m` equal small factors, reprojecting
/// every product onto the particle-hole blocks. Repeated multiplication by
/// one well-conditioned factor keeps the error growing only linearly in the
/// step count; a squaring chain would amplify it by the intermediate norm at
/// every doubling, which is fatal for strongly non-normal generators.
fn step_segment(mut s: CMat, a_seg: &CMat, m: usize) -> Result<CMat> {
    let f = expm(&a_seg.mapv(|z| z / C64::from(m as f64)))?;
    for _ in 0..m {
        s = f.dot(&s);
        if !max_abs(&s).is_finite() {
            return Err(CoreError::Range(
                "propagator exceeds the numeric range while stepping".to_string(),
            ));
        }
        s = onto_particle_hole(&s)?;
    }
    Ok(s)
}

fn segment_count(d: f64) -> Result<usize> {
    let m = (d / THETA_13).ceil().max(1.0);
    if m > MAX_EVOLUTION_STEPS as f64 {
        return Err(CoreError::Range(format!(
            "evolution needs {m:.0} steps, beyond the {MAX_EVOLUTION_STEPS}-step budget; \
             try a smaller time"
        )));
    }
    Ok(m as usize)
}

pub fn propagate(hd: &DynamicalMatrix, t: f64) -> Result<Propagator> {
    if !t.is_finite() {
        return Err(CoreError::Range(format!("non-finite evolution time {t}")));
    }
    let a = hd.m.mapv(|z| z * c(0.0, -t));
    let d = opnorm_one(&a);
    if d <= THETA_13 {
        // Small enough for a single Padé evaluation with no squaring chain.
        let s = onto_particle_hole(&expm(&a)?)?;
        return Ok(Propagator { t, s });
    }
    if let Some(sum) = nilpotent_taylor(&a, d) {
        // Degenerate generator: the power series terminates and is exact.
        let s = onto_particle_hole(&sum)?;
        return Ok(Propagator { t, s });
    }
    let m = segment_count(d)?;
    let s = step_segment(CMat::eye(a.nrows()), &a, m)?;
    Ok(Propagator { t, s })
}

/// Propagators at every time in the ascending grid, sharing the stepped
/// product between neighboring times. Returns the longest prefix of the grid
/// that stays inside the numeric range and the step budget.
pub fn propagator_series(hd: &DynamicalMatrix, ts: &[f64]) -> Result<Vec<Propagator>> {
    if ts.iter().any(|t| !t.is_finite() || *t < 0.0) || ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(CoreError::Range(
            "time grid must be finite, non-negative and ascending".to_string(),
        ));
    }
    let Some(&t_last) = ts.last() else {
        return Ok(Vec::new());
    };
    let a_last = hd.m.mapv(|z| z * c(0.0, -t_last));
    let d_last = opnorm_one(&a_last);
    if d_last <= THETA_13 || nilpotent_taylor(&a_last, d_last).is_some() {
        // No squaring chain is involved per point, so one-shot evaluations
        // are both cheap and accurate.
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            match propagate(hd, t) {
                Ok(p) => out.push(p),
                Err(CoreError::Range(_)) => break,
                Err(e) => return Err(e),
            }
        }
        return Ok(out);
    }
    let d1 = d_last / t_last;
    let mut out = Vec::with_capacity(ts.len());
    let mut s = CMat::eye(hd.dim);
    let mut cur = 0.0;
    let mut budget = MAX_EVOLUTION_STEPS;
    for &t in ts {
        let delta = t - cur;
        if delta > 0.0 {
            let m = ((d1 * delta) / THETA_13).ceil().max(1.0) as usize;
            if m > budget {
                break;
            }
            budget -= m;
            let a_seg = hd.m.mapv(|z| z * c(0.0, -delta));
            match step_segment(s.clone(), &a_seg, m) {
                Ok(next) => s = next,
                Err(CoreError::Range(_)) => break,
                Err(e) => return Err(e),
            }
        }
        cur = t;
        out.push(Propagator { t, s: s.clone() });
    }
    Ok(out)
}

/// Ordered product of per-segment exponentials; the segment containing the
/// later times multiplies from the left.
pub fn propagate_schedule(sched: &CoefficientSchedule, t: f64) -> Result<Propagator> {
    let total = sched.total_duration();
    if !t.is_finite() || t < 0.0 {
        return Err(CoreError::Range(format!("invalid evolution time {t}")));
    }
    if t > total * (1.0 + 1e-12) + 1e-12 {
        return Err(CoreError::Unsupported(format!(
            "time {t} is beyond the schedule total duration {total}"
        )));
    }
    let dim = 2 * sched.n_modes();
    let mut s = CMat::eye(dim);
    let mut remaining = t;
    for (dur, model) in sched.segments() {
        if remaining <= 0.0 {
            break;
        }
        let seg_t = dur.min(remaining);
        let hd = build_dynamical_matrix(model)?;
        let step = propagate(&hd, seg_t)?;
        s = step.s.dot(&s);
        remaining -= seg_t;
    }
    Ok(Propagator { t, s })
}

/// Splits S into its upper blocks (P, Q) after verifying the lower blocks are
/// their conjugates.
pub fn pq_split(prop: &Propagator) -> Result<(CMat, CMat)> {
    let (p, q, ql, pl) = split_blocks(&prop.s);
    let scale = max_abs(&prop.s).max(1.0);
    let dq = max_abs(&(&ql - &q.mapv(|z| z.conj())));
    let dp = max_abs(&(&pl - &p.mapv(|z| z.conj())));
    let defect = dq.max(dp) / scale;
    if defect > SPLIT_TOL {
        return Err(CoreError::Inconsistency(format!(
            "propagator lacks the [[P,Q],[Q*,P*]] block structure \
             (relative defect {defect:.3e}); the generator does not satisfy \
             the particle-hole relation"
        )));
    }
    Ok((p, q))
}

/// Max-norm residual of the Bogoliubov relation S^dag sigma_z S = sigma_z.
pub fn symplectic_defect(prop: &Propagator) -> f64 {
    let n = prop.s.nrows() / 2;
    let sz = sigma_z(n);
    let sdag = prop.s.t().mapv(|z| z.conj());
    let res = &sdag.dot(&sz).dot(&prop.s) - &sz;
    max_abs(&res)
}

/// |det S| (unit modulus whenever the spectrum is real).
pub fn det_modulus(prop: &Propagator) -> Result<f64> {
    let d = prop
        .s
        .det()
        .map_err(|e| CoreError::Linalg(format!("determinant failed: {e}")))?;
    Ok(d.norm())
}

/// sin(z)/z, stable near z = 0.
fn sinc(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        C64::new(1.0, 0.0) - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// General single-mode solution, valid on both sides of the EP and at it:
/// with lambda^2 = delta^2 - kappa^2 (continued to complex lambda),
/// P = cos(lambda t) - i delta t sinc(lambda t), Q = kappa t sinc(lambda t).
pub fn closed_form_single_mode(delta: f64, kappa: f64, t: f64) -> (CMat, CMat) {
    let lam = C64::new(delta * delta - kappa * kappa, 0.0).sqrt();
    let lt = lam * t;
    let p = lt.cos() - c(0.0, delta * t) * sinc(lt);
    let q = c(kappa * t, 0.0) * sinc(lt);
    (
        CMat::from_shape_vec((1, 1), vec![p]).unwrap(),
        CMat::from_shape_vec((1, 1), vec![q]).unwrap(),
    )
}

/// Polynomial propagator of the three-mode model at its third-order EP
/// (kappa1 = kappa3 = sqrt(2) delta).
pub fn closed_form_three_mode_ep(delta: f64, t: f64) -> (CMat, CMat) {
    let dt = delta * t;
    let dt2 = dt * dt;
    let r2 = 2.0_f64.sqrt();
    let p = [
        [dt2 / 2.0 + 1.0, dt, dt2 / 2.0],
        [-dt, 1.0 - dt2, dt],
        [dt2 / 2.0, -dt, dt2 / 2.0 + 1.0],
    ];
    let q = [
        [-r2 * dt, -dt2 / r2, 0.0],
        [dt2 / r2, 0.0, dt2 / r2],
        [0.0, -dt2 / r2, r2 * dt],
    ];
    let to_mat = |a: [[f64; 3]; 3]| {
        CMat::from_shape_fn((3, 3), |(i, j)| c(a[i][j], 0.0))
    };
    (to_mat(p), to_mat(q))
}

/// Truncated-series propagator of the open chain at its N-th order EP
/// (J = Omega, no edge link). All entries are polynomials in t because the
/// blocks are nilpotent there.
pub fn closed_form_bkc_ep(n: usize, omega: f64, t: f64) -> (CMat, CMat) {
    let x = 2.0 * omega * t;
    // term(p) = x^p / (2 p!)
    let mut term = vec![0.0; n];
    if n > 0 {
        term[0] = 0.5;
        for p in 1..n {
            term[p] = term[p - 1] * x / p as f64;
        }
    }
    let mut pm = CMat::zeros((n, n));
    let mut qm = CMat::zeros((n, n));
    for j1 in 0..n {
        for j2 in 0..n {
            if j1 == j2 {
                pm[[j1, j1]] = c(1.0, 0.0);
                continue;
            }
            let d = j1 as isize - j2 as isize;
            let mag = term[d.unsigned_abs()];
            let sign = if d > 0 && d % 2 != 0 { -1.0 } else { 1.0 };
            let sgn_q = if j2 > j1 { 1.0 } else { -1.0 };
            pm[[j1, j2]] = c(sign * mag, 0.0);
            qm[[j1, j2]] = c(sign * sgn_q * mag, 0.0);
        }
    }
    (pm, qm)
}

/// Hermitian N x N hopping generator with +i on the superdiagonal.
fn chain_sigma_y(n: usize) -> CMat {
    let mut m = CMat::zeros((n, n));
    for j in 0..n - 1 {
        m[[j, j + 1]] = c(0.0, 1.0);
        m[[j + 1, j]] = c(0.0, -1.0);
    }
    m
}

/// Chain propagator away from the EP (J > |Omega|), computed through the
/// similarity scaling that turns both blocks into the same Hermitian hopping
/// problem: with Jt = sqrt(J^2 - Omega^2), beta = sqrt((J+Omega)/(J-Omega)),
/// St = exp(-i Jt t Sigma_y),
///
/// P_{m,n} = St_{m,n} (beta^{n-m} + beta^{m-n})/2,
/// Q_{m,n} = St_{m,n} (beta^{n-m} - beta^{m-n})/2.
///
/// Entries grow like beta^{N-1}, so this stays meaningful only while that
/// power is representable; expect ~1e-9 agreement with the generic
/// exponential while beta^N stays below ~1e12.
pub fn scaled_closed_form_bkc(n: usize, j: f64, omega: f64, t: f64) -> Result<(CMat, CMat)> {
    if n < 2 {
        return Err(CoreError::InvalidModel(format!(
            "chain needs at least 2 modes, got {n}"
        )));
    }
    if !(j > omega.abs()) {
        return Err(CoreError::Unsupported(format!(
            "scaled closed form needs J > |Omega| (got J={j}, Omega={omega}); \
             at J <= |Omega| beta is undefined or infinite"
        )));
    }
    let jt = (j * j - omega * omega).sqrt();
    let log_beta = 0.5 * ((j + omega) / (j - omega)).ln();
    if (n as f64 - 1.0) * log_beta.abs() > 650.0 {
        return Err(CoreError::Range(format!(
            "beta^(N-1) overflows a double (N={n}, ln beta={log_beta:.3})"
        )));
    }
    let st = expm(&(chain_sigma_y(n) * c(0.0, -jt * t)))?;
    let mut pm = CMat::zeros((n, n));
    let mut qm = CMat::zeros((n, n));
    for m in 0..n {
        for k in 0..n {
            let a = (k as f64 - m as f64) * log_beta;
            pm[[m, k]] = st[[m, k]] * a.cosh();
            qm[[m, k]] = st[[m, k]] * a.sinh();
        }
    }
    Ok((pm, qm))
}

/// Rebuilds a full propagator from its upper blocks.
pub fn from_pq(p: &CMat, q: &CMat, t: f64) -> Propagator {
    let s = assemble_blocks(
        p,
        q,
        &q.mapv(|z| z.conj()),
        &p.mapv(|z| z.conj()),
    );
    Propagator { t, s }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuadraticModel;
    use approx::assert_abs_diff_eq;

    fn prop(model: &QuadraticModel, t: f64) -> Propagator {
        propagate(&build_dynamical_matrix(model).unwrap(), t).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let model = QuadraticModel::kitaev_chain(3, 1.0, 0.4).unwrap();
        let s = prop(&model, 0.0);
        assert!(max_abs(&(&s.s - &CMat::eye(6))) < 1e-14);
    }

    #[test]
    fn single_mode_ep_matrix() {
        let d = 1.3;
        let model = QuadraticModel::single_mode(d, d).unwrap();
        let t = 0.7;
        let s = prop(&model, t);
        let expect = [
            [c(1.0, -t * d), c(t * d, 0.0)],
            [c(t * d, 0.0), c(1.0, t * d)],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(s.s[[i, j]].re, expect[i][j].re, epsilon = 1e-12);
                assert_abs_diff_eq!(s.s[[i, j]].im, expect[i][j].im, epsilon = 1e-12);
            }
        }
        let (p, q) = pq_split(&s).unwrap();
        assert_abs_diff_eq!(p[[0, 0]].im, -t * d, epsilon = 1e-12);
        assert_abs_diff_eq!(q[[0, 0]].re, t * d, epsilon = 1e-12);
    }

    #[test]
    fn pq_split_specific_point() {
        let model = QuadraticModel::single_mode(1.0, 1.0).unwrap();
        let (p, q) = pq_split(&prop(&model, 1.0)).unwrap();
        assert_abs_diff_eq!(p[[0, 0]].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[[0, 0]].im, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[[0, 0]].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[[0, 0]].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pq_split_rejects_broken_structure() {
        let mut s = CMat::eye(4);
        s[[2, 0]] = c(0.5, 0.0);
        let err = pq_split(&Propagator { t: 0.0, s }).unwrap_err();
        assert!(err.to_string().contains("block structure"));
    }

    #[test]
    fn closed_form_single_mode_cases() {
        // Pure rotation when kappa = 0.
        let (p, q) = closed_form_single_mode(0.9, 0.0, 2.0);
        let expect = c(0.0, -0.9 * 2.0).exp();
        assert!((p[[0, 0]] - expect).norm() < 1e-14);
        assert_eq!(q[[0, 0]], c(0.0, 0.0));
        // Oscillating (|kappa| < |delta|) and amplifying (|kappa| > |delta|)
        // sides both match the generic exponential.
        for (d, k) in [(1.0, 0.4), (0.4, 1.0), (0.8, 0.8)] {
            let model = QuadraticModel::single_mode(d, k).unwrap();
            for t in [0.3, 1.7, 6.0] {
                let s = prop(&model, t);
                let (pp, qq) = closed_form_single_mode(d, k, t);
                let rebuilt = from_pq(&pp, &qq, t);
                assert!(
                    max_abs(&(&rebuilt.s - &s.s)) < 1e-10 * max_abs(&s.s).max(1.0),
                    "mismatch at d={d} k={k} t={t}"
                );
            }
        }
    }

    #[test]
    fn three_mode_ep_form_matches_exponential() {
        let delta = 1.0;
        let model = QuadraticModel::three_mode(delta, 2f64.sqrt(), 2f64.sqrt()).unwrap();
        for t in [0.25, 1.0, 4.0, 10.0] {
            let s = prop(&model, t);
            let (p, q) = closed_form_three_mode_ep(delta, t);
            let rebuilt = from_pq(&p, &q, t);
            assert!(max_abs(&(&rebuilt.s - &s.s)) < 1e-10 * max_abs(&s.s).max(1.0));
        }
        let (p, q) = closed_form_three_mode_ep(0.7, 1.3);
        let dt2 = (0.7f64 * 1.3).powi(2);
        assert_abs_diff_eq!(p[[1, 1]].re, 1.0 - dt2, epsilon = 1e-14);
        assert_eq!(q[[1, 1]], c(0.0, 0.0));
        assert_abs_diff_eq!(p[[0, 0]].re, dt2 / 2.0 + 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q[[0, 0]].re, -2f64.sqrt() * 0.7 * 1.3, epsilon = 1e-14);
    }

    #[test]
    fn bkc_ep_form_matches_exponential() {
        let omega = 0.8;
        for n in [2, 3, 5] {
            let model = QuadraticModel::kitaev_chain(n, omega, omega).unwrap();
            for t in [0.5, 2.0] {
                let s = prop(&model, t);
                let (p, q) = closed_form_bkc_ep(n, omega, t);
                let rebuilt = from_pq(&p, &q, t);
                assert!(max_abs(&(&rebuilt.s - &s.s)) < 1e-10 * max_abs(&s.s).max(1.0));
            }
        }
        let (p, q) = closed_form_bkc_ep(3, 0.6, 1.1);
        let expect = (0.6f64 * 1.1).powi(2);
        assert_abs_diff_eq!(p[[0, 2]].re, expect, epsilon = 1e-14);
        assert_abs_diff_eq!(q[[0, 2]].re, expect, epsilon = 1e-14);
        assert_abs_diff_eq!(q[[2, 0]].re, -expect, epsilon = 1e-14);
    }

    #[test]
    fn scaled_bkc_matches_exponential() {
        let (n, j, omega, t) = (4, 1.0, 0.9, 1.0);
        let model = QuadraticModel::kitaev_chain(n, j, omega).unwrap();
        let s = prop(&model, t);
        let (p, q) = scaled_closed_form_bkc(n, j, omega, t).unwrap();
        let rebuilt = from_pq(&p, &q, t);
        assert!(max_abs(&(&rebuilt.s - &s.s)) < 1e-9 * max_abs(&s.s).max(1.0));
        // No pairing: pure hopping rotation.
        let (p0, q0) = scaled_closed_form_bkc(3, 1.0, 0.0, 0.8).unwrap();
        assert!(max_abs(&q0) < 1e-15);
        let model0 = QuadraticModel::kitaev_chain(3, 1.0, 0.0).unwrap();
        let s0 = prop(&model0, 0.8);
        let rebuilt0 = from_pq(&p0, &q0, 0.8);
        assert!(max_abs(&(&rebuilt0.s - &s0.s)) < 1e-10);
        // Asymmetry ratio approaches 1 for large beta.
        let (pb, qb) = scaled_closed_form_bkc(4, 1.0, 0.999, 0.5).unwrap();
        let ratio = qb[[0, 3]].norm() / pb[[0, 3]].norm();
        assert!((ratio - 1.0).abs() < 1e-2, "ratio {ratio}");
        assert!(scaled_closed_form_bkc(4, 0.5, 0.9, 1.0).is_err());
    }

    #[test]
    fn schedule_products() {
        let a = QuadraticModel::single_mode(1.0, 0.3).unwrap();
        let b = QuadraticModel::single_mode(0.2, 0.9).unwrap();
        let one = CoefficientSchedule::new(vec![(2.0, a.clone())]).unwrap();
        let sp = propagate_schedule(&one, 1.3).unwrap();
        let direct = prop(&a, 1.3);
        assert!(max_abs(&(&sp.s - &direct.s)) < 1e-12);

        let halves = CoefficientSchedule::new(vec![(1.0, a.clone()), (1.0, a.clone())]).unwrap();
        let sh = propagate_schedule(&halves, 2.0).unwrap();
        let full = prop(&a, 2.0);
        assert!(max_abs(&(&sh.s - &full.s)) < 1e-10 * max_abs(&full.s).max(1.0));

        // Later segment acts on the left.
        let two = CoefficientSchedule::new(vec![(1.0, a.clone()), (1.0, b.clone())]).unwrap();
        let st = propagate_schedule(&two, 2.0).unwrap();
        let expect = prop(&b, 1.0).s.dot(&prop(&a, 1.0).s);
        assert!(max_abs(&(&st.s - &expect)) < 1e-12);

        assert!(propagate_schedule(&two, 2.5).is_err());
        assert!(propagate_schedule(&two, -0.1).is_err());
    }

    #[test]
    fn stability_invariants() {
        let model = QuadraticModel::three_mode(1.0, 0.0, 0.0).unwrap();
        let s = prop(&model, 3.0);
        assert!(symplectic_defect(&s) < 1e-10 * max_abs(&s.s).powi(2).max(1.0));
        assert_abs_diff_eq!(det_modulus(&s).unwrap(), 1.0, epsilon = 1e-8);
    }
}
