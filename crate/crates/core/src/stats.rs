//! Concentration-inequality tests for localization, median confidence
//! intervals and the two-monomer criterion.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::env::{ChargeLaw, Environment};
use crate::error::{invalid, Result};
use crate::mc::mc_collect;
use crate::transfer::{log_phi, pinned_log_z, Params, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectH0Localized,
    RejectH0Delocalized,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Null hypothesis `E log Z <= 0`.
    Localization,
    /// Null hypothesis `E log Z >= 0`.
    Delocalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub lam: f64,
    pub h: f64,
    /// Number of charges in each sampled polymer.
    pub s: usize,
    pub n: usize,
    pub u_hat: f64,
    pub p_value: f64,
    pub decision: Decision,
    pub side: Side,
    pub master_seed: u64,
    /// Denominator constant: 16 for symmetric binary charges, 64 otherwise.
    pub constant: f64,
}

/// `exp(-u^2 n / (constant lam^2 s))`, the error level of rejecting the null.
pub fn p_value(u_hat: f64, n: usize, s: usize, lam: f64, constant: f64) -> f64 {
    (-u_hat * u_hat * n as f64 / (constant * lam * lam * s as f64)).exp()
}

pub fn law_constant(law: &ChargeLaw) -> Result<f64> {
    match law {
        ChargeLaw::BinarySymmetric => Ok(16.0),
        ChargeLaw::FiniteSupport { .. } => {
            let (lo, hi) = law.support_hull();
            if lo < -1.0 || hi > 1.0 {
                return invalid("the concentration bound needs charges in [-1, 1]");
            }
            Ok(64.0)
        }
        ChargeLaw::StandardGaussian => invalid("the concentration bound needs bounded charges"),
    }
}

/// Report for a given sample mean; `u_hat` on the wrong side is inconclusive.
#[allow(clippy::too_many_arguments)] // one argument per report field
pub fn report(lam: f64, h: f64, s: usize, n: usize, u_hat: f64, side: Side, master_seed: u64, constant: f64) -> TestReport {
    let reject = match side {
        Side::Localization => u_hat > 0.0,
        Side::Delocalization => u_hat < 0.0,
    };
    let (p, decision) = if reject {
        let d = match side {
            Side::Localization => Decision::RejectH0Localized,
            Side::Delocalization => Decision::RejectH0Delocalized,
        };
        (p_value(u_hat, n, s, lam, constant), d)
    } else {
        (1.0, Decision::Inconclusive)
    };
    TestReport { lam, h, s, n, u_hat, p_value: p, decision, side, master_seed, constant }
}

/// `log Z_{s}(0)` for samples `0..n`, sample `i` reading charge stream `i`.
pub fn sample_log_z0(law: &ChargeLaw, params: Params, s: usize, n: usize, master_seed: u64, window: Window) -> Result<Vec<f64>> {
    if !s.is_multiple_of(2) || s == 0 {
        return invalid(format!("polymer size must be positive and even, got {s}"));
    }
    mc_collect(n as u64, |i| {
        let ch = Environment::random(law.clone(), master_seed, i).generate(1, s)?;
        pinned_log_z(&ch, params, s, window)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_test(
    law: &ChargeLaw,
    lam: f64,
    h: f64,
    s: usize,
    n: usize,
    master_seed: u64,
    window: Window,
    side: Side,
) -> Result<(TestReport, Vec<f64>)> {
    let constant = law_constant(law)?;
    if n == 0 {
        return invalid("need at least one sample");
    }
    if !(lam > 0.0) {
        return invalid("the test needs lam > 0");
    }
    let samples = sample_log_z0(law, Params::new(lam, h), s, n, master_seed, window)?;
    let u_hat = samples.iter().sum::<f64>() / n as f64;
    Ok((report(lam, h, s, n, u_hat, side, master_seed, constant), samples))
}

/// Test of `E log Z_s(0) <= 0` (delocalization) against localization.
pub fn localization_test(
    law: &ChargeLaw,
    lam: f64,
    h: f64,
    s: usize,
    n: usize,
    master_seed: u64,
    window: Window,
) -> Result<(TestReport, Vec<f64>)> {
    run_test(law, lam, h, s, n, master_seed, window, Side::Localization)
}

/// Mirror test of `E log Z_s(0) >= 0`.
pub fn delocalization_side_test(
    law: &ChargeLaw,
    lam: f64,
    h: f64,
    s: usize,
    n: usize,
    master_seed: u64,
    window: Window,
) -> Result<(TestReport, Vec<f64>)> {
    run_test(law, lam, h, s, n, master_seed, window, Side::Delocalization)
}

/// Distribution-free confidence interval for the median from order statistics.
pub fn median_ci(sample: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = sample.len();
    if n < 30 {
        return invalid(format!("median interval needs at least 30 values, got {n}"));
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid("level must lie in (0, 1)");
    }
    let a = Normal::standard().inverse_cdf((1.0 - level) / 2.0).abs();
    let offset = (a * (n as f64).sqrt() / 2.0).floor() as usize;
    let center = n / 2;
    let (lo, hi) = (center.saturating_sub(offset).max(1), (center + offset).min(n));
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok((v[lo - 1], v[hi - 1]))
}

pub fn median(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `E log(1/2 + 1/2 exp(-2 lam (omega_1 + omega_2 + 2h)))`; a positive value
/// certifies localization through the polymer of size 2.
pub fn small_n_criterion(law: &ChargeLaw, lam: f64, h: f64) -> f64 {
    let f = |w: f64| log_phi(lam * (w + 2.0 * h));
    if let Some(v) = law.pair_expectation(f) {
        return v;
    }
    // omega_1 + omega_2 ~ N(0, 2): Simpson's rule on [-12, 12] standard deviations
    let steps = 24_000;
    let (a, b) = (-12.0f64, 12.0f64);
    let dz = (b - a) / steps as f64;
    let dens = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for i in 0..=steps {
        let z = a + i as f64 * dz;
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * dens(z) * f(std::f64::consts::SQRT_2 * z);
    }
    acc * dz / 3.0
}
