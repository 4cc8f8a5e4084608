//! Dense eigen-decomposition of real monodromy matrices.
//!
//! The matrix is reduced to complex Schur form `A = Q T Q^H` and the
//! eigenvectors of the triangular factor are recovered by back
//! substitution. Conjugate pairs are made exactly conjugate afterwards so
//! downstream sums over modes stay real.

use nalgebra::{DMatrix, DVector};
use nalgebra::linalg::Schur;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// One eigenvalue with a unit-norm right eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: DVector<Complex64>,
}

const SCHUR_MAX_ITER: usize = 10_000;

fn triangular_eigenvectors(t: &DMatrix<Complex64>) -> Vec<DVector<Complex64>> {
    let n = t.nrows();
    let norm = t.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    let small = norm * f64::EPSILON;
    (0..n)
        .map(|k| {
            let lam = t[(k, k)];
            let mut y = DVector::zeros(n);
            y[k] = Complex64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in i + 1..=k {
                    acc += t[(i, j)] * y[j];
                }
                let mut d = t[(i, i)] - lam;
                if d.norm() < small {
                    d = Complex64::new(small, 0.0);
                }
                y[i] = -acc / d;
            }
            y
        })
        .collect()
}

/// Rotate `v` so its largest component is real and positive, then scale
/// to unit norm.
fn canonical_phase(v: &mut DVector<Complex64>) {
    let (_, big) = v
        .iter()
        .enumerate()
        .fold((0, Complex64::new(0.0, 0.0)), |best, (i, z)| {
            if z.norm() > best.1.norm() { (i, *z) } else { best }
        });
    if big.norm() > 0.0 {
        let rot = big.conj() / big.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
    let nrm = v.norm();
    if nrm > 0.0 {
        v.iter_mut().for_each(|z| *z /= nrm);
    }
}

/// All eigenpairs of a real square matrix, sorted by `|lambda|` descending
/// (ties: larger imaginary part first).
pub fn eigen_decompose(a: &DMatrix<f64>) -> Result<Vec<EigenPair>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Contract(format!("eigen_decompose needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("monodromy matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let schur = Schur::try_new(ac, f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::EigenNoConvergence)?;
    let (q, t) = schur.unpack();
    let ys = triangular_eigenvectors(&t);
    let mut pairs: Vec<EigenPair> = ys
        .into_iter()
        .enumerate()
        .map(|(k, y)| {
            let mut v = &q * y;
            canonical_phase(&mut v);
            EigenPair { value: t[(k, k)], vector: v }
        })
        .collect();
    enforce_conjugacy(&mut pairs);
    pairs.sort_by(|x, y| {
        y.value
            .norm()
            .total_cmp(&x.value.norm())
            .then(y.value.im.total_cmp(&x.value.im))
    });
    Ok(pairs)
}

fn enforce_conjugacy(pairs: &mut [EigenPair]) {
    let scale = pairs.iter().fold(0.0f64, |m, p| m.max(p.value.norm())).max(f64::MIN_POSITIVE);
    let real_tol = 1e-10 * scale;
    let mut done = vec![false; pairs.len()];
    for i in 0..pairs.len() {
        if done[i] {
            continue;
        }
        done[i] = true;
        let lam = pairs[i].value;
        if lam.im.abs() <= real_tol {
            pairs[i].value = Complex64::new(lam.re, 0.0);
            // a real eigenvalue of a real matrix has a real eigenvector
            let v = &mut pairs[i].vector;
            v.iter_mut().for_each(|z| *z = Complex64::new(z.re, 0.0));
            let nrm = v.norm();
            if nrm > 0.0 {
                v.iter_mut().for_each(|z| *z /= nrm);
            }
            continue;
        }
        let partner = (0..pairs.len())
            .filter(|&j| !done[j])
            .min_by(|&a, &b| {
                (pairs[a].value - lam.conj())
                    .norm()
                    .total_cmp(&(pairs[b].value - lam.conj()).norm())
            });
        if let Some(j) = partner {
            done[j] = true;
            let (upper, lower) = if lam.im > 0.0 { (i, j) } else { (j, i) };
            let value = pairs[upper].value;
            let vector = pairs[upper].vector.clone();
            pairs[lower].value = value.conj();
            pairs[lower].vector = vector.map(|z| z.conj());
        }
    }
}

/// Principal-branch Floquet exponent `log(lambda) / T0`; a vanishing
/// multiplier maps to a real part of `-inf`.
pub fn floquet_exponent(lambda: Complex64, period: f64) -> Complex64 {
    if lambda.norm() == 0.0 {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    lambda.ln() / period
}
