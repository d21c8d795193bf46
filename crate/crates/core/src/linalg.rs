//! Perron–Frobenius data of small nonnegative matrices.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PFData {
    pub eigval: f64,
    /// Left eigenvector.
    pub zeta: Vec<f64>,
    /// Right eigenvector, unit Euclidean norm; `zeta . xi = 1`.
    pub xi: Vec<f64>,
}

impl PFData {
    /// Largest of the left and right relative residuals.
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        let xi = DVector::from_column_slice(&self.xi);
        let zeta = DVector::from_column_slice(&self.zeta);
        let r = (a * &xi - &xi * self.eigval).amax() / (self.eigval.abs() * xi.amax());
        let l = (a.transpose() * &zeta - &zeta * self.eigval).amax() / (self.eigval.abs() * zeta.amax());
        r.max(l)
    }
}

fn reaches_all(a: &DMatrix<f64>, transpose: bool) -> bool {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            let w = if transpose { a[(j, i)] } else { a[(i, j)] };
            if w > 0.0 && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

pub fn is_irreducible(a: &DMatrix<f64>) -> bool {
    a.nrows() > 0 && reaches_all(a, false) && reaches_all(a, true)
}

/// Collatz–Wielandt bounds `min_i (Av)_i / v_i <= rho <= max_i (Av)_i / v_i`.
fn cw_bounds(a: &DMatrix<f64>, v: &DVector<f64>) -> (f64, f64) {
    let av = a * v;
    av.iter().zip(v.iter()).fold((f64::INFINITY, 0.0f64), |(lo, hi), (x, y)| (lo.min(x / y), hi.max(x / y)))
}

/// Positive eigenvector of `a` for its spectral radius.
///
/// Shifted inverse iteration with the shift at the Collatz–Wielandt upper
/// bound: every other eigenvalue is strictly farther from a shift above the
/// spectral radius, and `(sigma - A)^{-1}` keeps vectors positive.
fn perron_vector(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mut v = DVector::from_element(n, 1.0);
    for _ in 0..200 {
        let (lo, hi) = cw_bounds(a, &v);
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let sigma = hi * (1.0 + 8.0 * f64::EPSILON) + f64::MIN_POSITIVE;
        let shifted = DMatrix::identity(n, n) * sigma - a;
        let Some(w) = shifted.lu().solve(&v) else { break };
        let m = w.amax();
        if !m.is_finite() || m == 0.0 || w.iter().any(|x| !(*x > 0.0)) {
            break;
        }
        let next = w / m;
        if (&next - &v).amax() == 0.0 {
            break;
        }
        v = next;
    }
    Ok(v)
}

/// Perron–Frobenius eigenvalue and eigenvectors of a nonnegative irreducible matrix.
pub fn pf(a: &DMatrix<f64>) -> Result<PFData> {
    let n = a.nrows();
    if n == 0 || n != a.ncols() {
        return invalid("need a nonempty square matrix");
    }
    if n > MAX_DIM {
        return Err(Error::TooLarge(format!("dimension {n} exceeds {MAX_DIM}")));
    }
    if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return invalid("matrix must be finite and nonnegative");
    }
    if !is_irreducible(a) {
        return Err(Error::Reducible);
    }
    let xi = perron_vector(a)?;
    let zeta = perron_vector(&a.transpose())?;
    if xi.iter().chain(zeta.iter()).any(|x| !(*x > 0.0)) {
        return Err(Error::Internal("Perron vector lost positivity".into()));
    }
    let xi = &xi / xi.norm();
    let zeta = &zeta / zeta.dot(&xi);
    let eigval = zeta.dot(&(a * &xi)) / zeta.dot(&xi);
    Ok(PFData { eigval, zeta: zeta.as_slice().to_vec(), xi: xi.as_slice().to_vec() })
}

/// Independent check of a Perron root through the characteristic
/// polynomial: bisection of `det(x I - A)` on a bracket around `guess`.
/// Returns the located root.
pub fn char_poly_root(a: &DMatrix<f64>, guess: f64) -> Option<f64> {
    let n = a.nrows();
    let p = |x: f64| (DMatrix::identity(n, n) * x - a).determinant();
    let (mut lo, mut hi) = (guess * (1.0 - 1e-6), guess * (1.0 + 1e-6));
    let (plo, phi) = (p(lo), p(hi));
    if plo.signum() == phi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p(mid).signum() == plo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone().try_inverse().ok_or_else(|| Error::Domain("singular matrix".into()))
}
