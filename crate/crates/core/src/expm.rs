//! Matrix exponential for dense complex matrices by scaling and squaring
//! with diagonal Padé approximants (Higham 2005, SIAM J. Matrix Anal.
//! Appl. 26(4)). Works on defective matrices — no eigendecomposition is
//! involved anywhere, which matters because the interesting inputs here are
//! exactly the non-diagonalizable ones.

use crate::error::{CoreError, Result};
use crate::{C64, CMat, OVERFLOW_GUARD};
use ndarray::Array2;
use ndarray_linalg::solve::Factorize;
use ndarray_linalg::Solve;

// θ_m bounds from Higham 2005, Table 2.3 (backward error ≤ u for ‖A‖₁ ≤ θ_m).
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
pub(crate) const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120., 60., 12., 1.];
const B5: [f64; 6] = [30240., 15120., 3360., 420., 30., 1.];
const B7: [f64; 8] = [17_297_280., 8_648_640., 1_995_840., 277_200., 25_200., 1512., 56., 1.];
const B9: [f64; 10] = [
    17_643_225_600.,
    8_821_612_800.,
    2_075_673_600.,
    302_702_400.,
    30_270_240.,
    2_162_160.,
    110_880.,
    3960.,
    90.,
    1.,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.,
    32_382_376_266_240_000.,
    7_771_770_303_897_600.,
    1_187_353_796_428_800.,
    129_060_195_264_000.,
    10_559_470_521_600.,
    670_442_572_800.,
    33_522_128_640.,
    1_323_241_920.,
    40_840_800.,
    960_960.,
    16_380.,
    182.,
    1.,
];

/// Max-column-sum (induced 1-) norm.
pub fn opnorm_one(a: &CMat) -> f64 {
    let mut best = 0.0f64;
    for col in a.columns() {
        let s: f64 = col.iter().map(|z| z.norm()).sum();
        if s > best {
            best = s;
        }
    }
    best
}

/// Largest entry magnitude.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn eye(n: usize) -> CMat {
    Array2::eye(n)
}

/// Solve AX = B for a square complex A with one LU factorization.
pub fn solve_matrix(a: &CMat, b: &CMat) -> Result<CMat> {
    let lu = a
        .factorize()
        .map_err(|e| CoreError::Linalg(format!("LU factorization failed: {e}")))?;
    let n = b.nrows();
    let mut x = Array2::zeros((n, b.ncols()));
    for (j, col) in b.columns().into_iter().enumerate() {
        let xo = lu
            .solve(&col.to_owned())
            .map_err(|e| CoreError::Linalg(format!("LU solve failed: {e}")))?;
        x.column_mut(j).assign(&xo);
    }
    Ok(x)
}

fn pade_small(a: &CMat, b: &[f64]) -> Result<CMat> {
    // U = A Σ b_{2k+1} A^{2k},  V = Σ b_{2k} A^{2k}
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut u_poly: CMat = &eye(n) * C64::from(b[1]);
    let mut v: CMat = &eye(n) * C64::from(b[0]);
    let mut pow = eye(n);
    for k in 1..=(b.len() / 2 - 1) {
        pow = pow.dot(&a2);
        u_poly = u_poly + &pow * C64::from(b[2 * k + 1]);
        v = v + &pow * C64::from(b[2 * k]);
    }
    let u = a.dot(&u_poly);
    solve_matrix(&(&v - &u), &(&v + &u))
}

fn pade13(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let b = &B13;
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let w1 = &a6 * C64::from(b[13]) + &a4 * C64::from(b[11]) + &a2 * C64::from(b[9]);
    let w2 = &a6 * C64::from(b[7])
        + &a4 * C64::from(b[5])
        + &a2 * C64::from(b[3])
        + &eye(n) * C64::from(b[1]);
    let u = a.dot(&(a6.dot(&w1) + w2));
    let z1 = &a6 * C64::from(b[12]) + &a4 * C64::from(b[10]) + &a2 * C64::from(b[8]);
    let v = a6.dot(&z1)
        + &a6 * C64::from(b[6])
        + &a4 * C64::from(b[4])
        + &a2 * C64::from(b[2])
        + &eye(n) * C64::from(b[0]);
    solve_matrix(&(&v - &u), &(&v + &u))
}

/// Single-step collapse threshold marking the numerical nilpotency index.
const NILPOTENT_CLIFF: f64 = 1e-12;

/// Terminating Taylor sum for numerically nilpotent inputs.
///
/// Dynamical matrices sitting exactly on an exceptional point are nilpotent
/// up to roundoff, and for them scaling-and-squaring loses relative accuracy
/// geometrically along the squaring chain (the intermediate-norm hump). The
/// Taylor series terminates at the nilpotency index with monotonically
/// growing terms, so it is exact there and stable at any ||A||. Detection:
/// A^k falls 12 orders below its expected one-step growth. A genuine cliff
/// needs a rank collapse; smoothly converging series shrink by ||A||/k per
/// step and never trigger.
pub(crate) fn nilpotent_taylor(a: &CMat, d: f64) -> Option<CMat> {
    let n = a.nrows();
    let mut sum = eye(n);
    let mut term = eye(n);
    let mut prev = 1.0f64;
    for k in 1..=n {
        term = term.dot(a).mapv(|z| z / C64::from(k as f64));
        let mag = max_abs(&term);
        if !mag.is_finite() {
            return None;
        }
        if mag <= NILPOTENT_CLIFF * prev * (d / k as f64).max(1.0) {
            return Some(sum);
        }
        sum = sum + &term;
        prev = mag;
    }
    None
}

fn check_range(a: &CMat, what: &str) -> Result<()> {
    let m = max_abs(a);
    if !m.is_finite() {
        return Err(CoreError::Range(format!("non-finite entries in {what}")));
    }
    if m > OVERFLOW_GUARD {
        return Err(CoreError::Range(format!(
            "entry magnitude {m:.3e} in {what} exceeds the {OVERFLOW_GUARD:.0e} guard"
        )));
    }
    Ok(())
}

/// e^A for a square complex matrix.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(CoreError::InvalidModel(format!(
            "expm needs a square matrix, got {}×{}",
            n,
            a.ncols()
        )));
    }
    check_range(a, "expm input")?;
    let d = opnorm_one(a);
    if d <= THETA_3 {
        return pade_small(a, &B3);
    }
    if d <= THETA_5 {
        return pade_small(a, &B5);
    }
    if d <= THETA_7 {
        return pade_small(a, &B7);
    }
    if d <= THETA_9 {
        return pade_small(a, &B9);
    }
    let s = if d <= THETA_13 {
        0
    } else {
        if let Some(f) = nilpotent_taylor(a, d) {
            return Ok(f);
        }
        (d / THETA_13).log2().ceil() as u32
    };
    let scaled = a.mapv(|z| z / C64::from(2f64.powi(s as i32)));
    let mut f = pade13(&scaled)?;
    for _ in 0..s {
        f = f.dot(&f);
        check_range(&f, "expm squaring")?;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let a = Array2::<C64>::zeros((4, 4));
        let e = expm(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e[[i, j]] - c(want, 0.)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn exp_of_diagonal() {
        let a = array![[c(1.0, 0.5), c(0., 0.)], [c(0., 0.), c(-2.0, 3.0)]];
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]] - c(1.0, 0.5).exp()).norm() < 1e-14);
        assert!((e[[1, 1]] - c(-2.0, 3.0).exp()).norm() < 1e-13);
        assert!(e[[0, 1]].norm() < 1e-15);
    }

    #[test]
    fn exp_of_nilpotent_jordan_block() {
        // Defective on purpose: e^J is the truncated exponential series.
        let n = 6;
        let mut a = Array2::<C64>::zeros((n, n));
        for i in 0..n - 1 {
            a[[i, i + 1]] = c(1., 0.);
        }
        let e = expm(&a).unwrap();
        let mut fact = 1.0;
        for k in 0..n {
            if k > 0 {
                fact *= k as f64;
            }
            for i in 0..n - k {
                assert!((e[[i, i + k]] - c(1.0 / fact, 0.)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn agrees_with_series_for_random_like_matrix() {
        // Fixed pseudo-random entries; compare against a long Taylor sum of
        // the scaled matrix (valid since we take the norm small).
        let n = 5;
        let mut a = Array2::<C64>::zeros((n, n));
        let mut x = 0.123_f64;
        for i in 0..n {
            for j in 0..n {
                x = (x * 997.0 + 0.13).fract();
                let re = x - 0.5;
                x = (x * 997.0 + 0.13).fract();
                let im = x - 0.5;
                a[[i, j]] = c(re, im) * c(0.4, 0.);
            }
        }
        let e = expm(&a).unwrap();
        let mut series = Array2::<C64>::eye(n);
        let mut term = Array2::<C64>::eye(n);
        for k in 1..40 {
            term = term.dot(&a) / c(k as f64, 0.);
            series = series + &term;
        }
        let diff = (&e - &series).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-13, "diff {diff}");
    }

    #[test]
    fn semigroup_with_scaling_branch() {
        // Norm pushed past θ13 to exercise the squaring phase.
        let mut a = Array2::<C64>::zeros((3, 3));
        a[[0, 1]] = c(4.0, 0.);
        a[[1, 0]] = c(-4.0, 0.);
        a[[1, 2]] = c(3.0, 1.);
        a[[2, 1]] = c(-3.0, 1.);
        a[[0, 0]] = c(0., 2.0);
        let e1 = expm(&a).unwrap();
        let half = a.mapv(|z| z * c(0.5, 0.));
        let eh = expm(&half).unwrap();
        let e2 = eh.dot(&eh);
        let diff = (&e1 - &e2).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn large_norm_nilpotent_jordan_block_stays_exact() {
        // Norm far past θ13. Scaling and squaring would lose most digits
        // here; the terminating series keeps full relative accuracy.
        let n = 6;
        let tau = 300.0;
        let mut a = Array2::<C64>::zeros((n, n));
        for i in 0..n - 1 {
            a[[i, i + 1]] = c(tau, 0.);
        }
        let e = expm(&a).unwrap();
        let mut fact = 1.0;
        for k in 0..n {
            if k > 0 {
                fact *= k as f64;
            }
            let want = tau.powi(k as i32) / fact;
            for i in 0..n - k {
                let rel = (e[[i, i + k]] - c(want, 0.)).norm() / want;
                assert!(rel < 1e-13, "entry ({i},{}) rel {rel}", i + k);
            }
        }
    }

    #[test]
    fn large_norm_full_nilpotent_matrix_stays_exact() {
        // A = τ·[[1,1],[-1,-1]] squares to zero, so e^A = I + A at any τ.
        let tau = 500.0;
        let mut a = Array2::<C64>::zeros((2, 2));
        a[[0, 0]] = c(tau, 0.);
        a[[0, 1]] = c(tau, 0.);
        a[[1, 0]] = c(-tau, 0.);
        a[[1, 1]] = c(-tau, 0.);
        let e = expm(&a).unwrap();
        let want = &Array2::<C64>::eye(2) + &a;
        let diff = (&e - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12 * tau, "diff {diff}");
    }

    #[test]
    fn overflow_guard_trips() {
        let mut a = Array2::<C64>::zeros((2, 2));
        a[[0, 0]] = c(400.0, 0.);
        a[[1, 1]] = c(400.0, 0.);
        match expm(&a) {
            Err(CoreError::Range(_)) => {}
            other => panic!("expected range error, got {other:?}"),
        }
    }
}
