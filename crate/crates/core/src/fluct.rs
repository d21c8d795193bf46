//! Local limit theorem for the simple walk conditioned to stay positive,
//! checked against exact dynamic programming.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::walk::{endpoint_law, stay_positive_law, WalkSpec};

/// Meander endpoint density `x e^{-x^2/2}` on `x >= 0`.
pub fn meander_density(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x * (-0.5 * x * x).exp()
    }
}

/// `(x, |sqrt(n)/2 P(S_n = x | C_n) - phi+(x / sqrt(n))|)` over positive `x` of the parity of `n`.
fn llt_errors(n: usize) -> Result<Vec<(i64, f64)>> {
    if n < 2 {
        return invalid("the local limit check needs n >= 2");
    }
    let (p, law) = stay_positive_law(WalkSpec::simple(), n)?;
    let sn = (n as f64).sqrt();
    Ok((1..=n as i64)
        .filter(|x| (x - n as i64) % 2 == 0)
        .map(|x| (x, (0.5 * sn * law.get(x) / p - meander_density(x as f64 / sn)).abs()))
        .collect())
}

/// Uniform error of the conditioned local limit theorem at time `n`.
pub fn conditioned_llt_error(n: usize) -> Result<f64> {
    Ok(llt_errors(n)?.into_iter().fold(0.0, |m, (_, e)| m.max(e)))
}

/// Largest `|P(C_n, S_n = x) - (x/n) P(S_n = x)|` over `n <= n_max` and all `x`.
pub fn ballot_check(n_max: usize) -> Result<f64> {
    let spec = WalkSpec::simple();
    let mut worst = 0.0f64;
    for n in 1..=n_max {
        let (_, pos) = stay_positive_law(spec, n)?;
        let free = endpoint_law(spec, n)?;
        for x in -(n as i64)..=n as i64 {
            let ballot = if x > 0 { x as f64 / n as f64 * free.get(x) } else { 0.0 };
            worst = worst.max((pos.get(x) - ballot).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityBin {
    /// Bin center in units of `sqrt(n)`.
    pub center: f64,
    pub max_error: f64,
    /// Conditioned probability of the bin.
    pub mass: f64,
}

/// LLT error binned by `x / sqrt(n)` around centers `0.1, 0.2, ..., 3.0`; the
/// first bin starts at 0 and the last is open-ended, so the bins cover all `x`.
pub fn uniformity_report(n: usize) -> Result<Vec<UniformityBin>> {
    let errs = llt_errors(n)?;
    let (p, law) = stay_positive_law(WalkSpec::simple(), n)?;
    let sn = (n as f64).sqrt();
    let mut bins: Vec<UniformityBin> = (1..=30).map(|i| UniformityBin { center: 0.1 * i as f64, max_error: 0.0, mass: 0.0 }).collect();
    for (x, e) in errs {
        let u = x as f64 / sn;
        let i = ((u - 0.15) / 0.1).ceil().clamp(0.0, 29.0) as usize;
        bins[i].max_error = bins[i].max_error.max(e);
        bins[i].mass += law.get(x) / p;
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ballot_small_cases() {
        let (_, l1) = stay_positive_law(WalkSpec::simple(), 1).unwrap();
        assert_eq!(l1.get(1), 0.5);
        let (_, l3) = stay_positive_law(WalkSpec::simple(), 3).unwrap();
        assert_eq!(l3.get(1), 0.125);
        assert!(ballot_check(60).unwrap() <= 1e-15);
    }

    #[test]
    fn conditioned_law_normalized_and_parity() {
        for n in [7, 50, 301] {
            let (p, law) = stay_positive_law(WalkSpec::simple(), n).unwrap();
            assert!((law.total() / p - 1.0).abs() < 1e-13);
            for (x, m) in law.iter() {
                if m > 0.0 {
                    assert!(x > 0 && (x - n as i64) % 2 == 0);
                }
            }
        }
    }

    #[test]
    fn error_shrinks() {
        let e256 = conditioned_llt_error(256).unwrap();
        let e1024 = conditioned_llt_error(1024).unwrap();
        assert!(e1024 < e256);
        assert!(conditioned_llt_error(1).is_err());
    }

    #[test]
    fn bins_cover_the_sup() {
        let n = 400;
        let bins = uniformity_report(n).unwrap();
        let m = bins.iter().fold(0.0f64, |m, b| m.max(b.max_error));
        assert_eq!(m, conditioned_llt_error(n).unwrap());
        assert!(bins[29].mass > 0.0);
        let total: f64 = bins.iter().map(|b| b.mass).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
