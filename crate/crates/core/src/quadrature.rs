//! Composite-Simpson evaluation of the coefficient integrals.
//!
//! This is the slow, independent route to the same quantities
//! `qfi::coefficient_matrices` produces through the block-exponential
//! identity. It exists so the two paths can referee each other: they share
//! only the matrix exponential of the generator itself, not the integration
//! scheme. Panels are doubled until two successive refinements agree.

use crate::error::{CoreError, Result};
use crate::expm::max_abs;
use crate::model::{assemble_blocks, sigma_z, split_blocks, DynamicalMatrix};
use crate::propagator::propagate;
use crate::qfi::CoefficientSet;
use crate::{C64, CMat};

/// Stop refining once successive halvings agree to this relative tolerance.
pub const QUADRATURE_TOL: f64 = 1e-10;

const MAX_PANELS: usize = 4096;

fn simpson(vals: &[(CMat, CMat)], h: f64) -> (CMat, CMat) {
    let n = vals.len() - 1;
    let dim = vals[0].0.nrows();
    let mut s1 = CMat::zeros((dim, dim));
    let mut s2 = CMat::zeros((dim, dim));
    for (i, (a, b)) in vals.iter().enumerate() {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let wc = C64::new(w, 0.0);
        s1 = s1 + a.mapv(|z| z * wc);
        s2 = s2 + b.mapv(|z| z * wc);
    }
    let f = C64::new(h / 3.0, 0.0);
    (s1.mapv(|z| z * f), s2.mapv(|z| z * f))
}

/// Same contract as `qfi::coefficient_matrices`, evaluated by quadrature of
/// S(y)^dag B S(y) with panel doubling until the integrals settle.
pub fn coefficient_matrices_quadrature(
    hd: &DynamicalMatrix,
    dh: &CMat,
    t: f64,
    tol: f64,
) -> Result<CoefficientSet> {
    let dim = hd.dim;
    if dh.nrows() != dim || dh.ncols() != dim {
        return Err(CoreError::InvalidModel(format!(
            "derivative has shape {}x{}, expected {dim}x{dim}",
            dh.nrows(),
            dh.ncols()
        )));
    }
    let n = dim / 2;
    if t == 0.0 {
        return Ok(CoefficientSet {
            t,
            c0: C64::new(0.0, 0.0),
            c1: CMat::zeros((n, n)),
            c2: CMat::zeros((n, n)),
        });
    }
    let sz = sigma_z(n);
    let b1 = sz.dot(dh);
    let (dhb, ddb, _, _) = split_blocks(dh);
    let half = C64::new(0.5, 0.0);
    let g = assemble_blocks(
        &dhb,
        &ddb.mapv(|z| z * half),
        &ddb.mapv(|z| z.conj() * half),
        &CMat::zeros((n, n)),
    );
    let eval = |y: f64| -> Result<(CMat, CMat)> {
        let s = propagate(hd, y)?.s;
        let sd = s.t().mapv(|z| z.conj());
        Ok((sd.dot(&b1).dot(&s), sd.dot(&g).dot(&s)))
    };

    let mut panels = 16usize;
    let mut vals: Vec<(CMat, CMat)> = (0..=panels)
        .map(|i| eval(t * i as f64 / panels as f64))
        .collect::<Result<_>>()?;
    let (mut i1, mut i2) = simpson(&vals, t / panels as f64);
    loop {
        if panels >= MAX_PANELS {
            return Err(CoreError::Unsupported(format!(
                "quadrature did not stabilise to {tol:.1e} within {MAX_PANELS} panels"
            )));
        }
        let doubled = panels * 2;
        let mut next = Vec::with_capacity(doubled + 1);
        for (i, v) in vals.iter().enumerate() {
            next.push(v.clone());
            if i < panels {
                next.push(eval(t * (2 * i + 1) as f64 / doubled as f64)?);
            }
        }
        let (j1, j2) = simpson(&next, t / doubled as f64);
        let diff = max_abs(&(&j1 - &i1)).max(max_abs(&(&j2 - &i2)));
        let scale = max_abs(&j1).max(max_abs(&j2)).max(1.0);
        vals = next;
        panels = doubled;
        i1 = j1;
        i2 = j2;
        if diff <= tol * scale {
            break;
        }
    }
    let (c1, c2, _, _) = split_blocks(&i1);
    let lr = i2.slice(ndarray::s![n.., n..]);
    let c0 = lr.diag().sum() * C64::new(2.0, 0.0);
    Ok(CoefficientSet { t, c0, c1, c2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_dynamical_matrix, partial_derivative, QuadraticModel};
    use crate::qfi::coefficient_matrices;

    fn compare(model: &QuadraticModel, param: &str, t: f64) {
        let hd = build_dynamical_matrix(model).unwrap();
        let dh = partial_derivative(model, param).unwrap();
        let exact = coefficient_matrices(&hd, &dh, t).unwrap();
        let quad = coefficient_matrices_quadrature(&hd, &dh, t, QUADRATURE_TOL).unwrap();
        let scale = max_abs(&exact.c1)
            .max(max_abs(&exact.c2))
            .max(exact.c0.norm())
            .max(1.0);
        assert!(
            max_abs(&(&exact.c1 - &quad.c1)) < 1e-8 * scale,
            "c1 disagreement for {param} at t={t}"
        );
        assert!(
            max_abs(&(&exact.c2 - &quad.c2)) < 1e-8 * scale,
            "c2 disagreement for {param} at t={t}"
        );
        assert!(
            (exact.c0 - quad.c0).norm() < 1e-8 * scale,
            "c0 disagreement for {param} at t={t}: {} vs {}",
            exact.c0,
            quad.c0
        );
    }

    #[test]
    fn agrees_with_block_identity() {
        compare(&QuadraticModel::single_mode(1.0, 1.0).unwrap(), "kappa", 1.5);
        compare(&QuadraticModel::single_mode(1.0, 0.3).unwrap(), "kappa", 2.0);
        compare(
            &QuadraticModel::three_mode(1.0, 2f64.sqrt(), 2f64.sqrt()).unwrap(),
            "kappa1",
            1.0,
        );
        compare(
            &QuadraticModel::three_mode_constrained(1.0, 0.0).unwrap(),
            "eta",
            1.0,
        );
        compare(
            &QuadraticModel::kitaev_with_edge(3, 1.0, 1.0, 0.0, 0.9).unwrap(),
            "eta",
            1.2,
        );
    }
}
