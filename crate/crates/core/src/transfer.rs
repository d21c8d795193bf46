//! Transfer recursion for the copolymer at a selective interface.
//!
//! The profile `Z_{2M}(2y)` is advanced two monomers at a time. A bond
//! `(S_{n-1}, S_n)` counts as below the interface when `S_{n-1} + S_n < 0`,
//! and the two charges of a pair share the sign of their middle point.

use serde::{Deserialize, Serialize};

use crate::env::ChargeLaw;
use crate::error::{invalid, Error, Result};
use crate::walk::{self, WalkSpec};

/// Entries below this (relative to the profile maximum) are set to zero.
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lam: f64,
    pub h: f64,
}

impl Params {
    pub fn new(lam: f64, h: f64) -> Self {
        Params { lam, h }
    }

    /// Log of the weight of a pair spent below the interface.
    pub fn log_alpha(&self, w1: f64, w2: f64) -> f64 {
        -2.0 * self.lam * (w1 + w2 + 2.0 * self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Window {
    #[default]
    Full,
    /// Keep `-a sqrt(M) <= y <= b sqrt(M)` once the size `2M` reaches `n0`.
    Restricted { a: f64, b: f64, n0: usize },
}

impl Window {
    pub fn standard() -> Self {
        Window::Restricted { a: 3.0, b: 8.0, n0: 1000 }
    }
}

/// Endpoint-resolved partition function of a polymer of size `2m`.
///
/// `z[i]` stores `exp(logz)` for `y = y_lo + i`, normalized so that the
/// largest entry is 1; the true value is `z[i] * exp(log_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub m: usize,
    pub y_lo: i64,
    pub z: Vec<f64>,
    pub log_scale: f64,
    #[serde(skip)]
    scratch: Vec<f64>,
}

impl Default for Profile {
    fn default() -> Self {
        Profile::new()
    }
}

impl Profile {
    /// The empty polymer: `Z_0(0) = 1`.
    pub fn new() -> Self {
        Profile { m: 0, y_lo: 0, z: vec![1.0], log_scale: 0.0, scratch: Vec::new() }
    }

    pub fn y_hi(&self) -> i64 {
        self.y_lo + self.z.len() as i64 - 1
    }

    /// `log Z_{2m}(2y)`, `-inf` outside the support.
    pub fn log_value(&self, y: i64) -> f64 {
        let i = y - self.y_lo;
        if i < 0 || i as usize >= self.z.len() {
            return f64::NEG_INFINITY;
        }
        self.z[i as usize].ln() + self.log_scale
    }

    pub fn logz(&self) -> Vec<f64> {
        self.z.iter().map(|v| v.ln()).collect()
    }

    pub fn log_z0(&self) -> f64 {
        self.log_value(0)
    }

    pub fn log_z_free(&self) -> f64 {
        self.z.iter().sum::<f64>().ln() + self.log_scale
    }

    /// Advance by one pair with charges `(w1, w2)`.
    pub fn step(&mut self, w1: f64, w2: f64, params: Params, window: Window) {
        self.step_log_alpha(params.log_alpha(w1, w2), window)
    }

    /// Advance by one pair whose below-interface weight is `exp(la)`.
    pub fn step_log_alpha(&mut self, la: f64, window: Window) {
        // split the weight so that no factor exceeds 1
        let (wp, wn, shift) = if la > 0.0 { ((-la).exp(), 1.0, la) } else { (1.0, la.exp(), 0.0) };
        let old_lo = self.y_lo;
        let len = self.z.len();
        let new_len = len + 2;
        let new_lo = old_lo - 1;
        self.scratch.clear();
        self.scratch.resize(new_len, 0.0);
        let z = &self.z;
        let get = |i: i64| -> f64 {
            if i < 0 || i as usize >= len {
                0.0
            } else {
                z[i as usize]
            }
        };
        // scratch[j] is y = new_lo + j; old index of y is y - old_lo = j - 1
        for j in 0..new_len {
            let y = new_lo + j as i64;
            let oi = j as i64 - 1;
            let (up, mid, down) = (get(oi + 1), get(oi), get(oi - 1));
            self.scratch[j] = if y > 0 {
                wp * (0.25 * up + 0.5 * mid + 0.25 * down)
            } else if y < 0 {
                wn * (0.25 * up + 0.5 * mid + 0.25 * down)
            } else {
                0.25 * wp * (up + mid) + 0.25 * wn * (mid + down)
            };
        }
        self.m += 1;
        let mut lo = new_lo;
        let mut hi = new_lo + new_len as i64 - 1;
        if let Window::Restricted { a, b, n0 } = window {
            if 2 * self.m >= n0 {
                let r = (self.m as f64).sqrt();
                lo = lo.max((-a * r).ceil() as i64);
                hi = hi.min((b * r).floor() as i64);
            }
        }
        let mut max = 0.0f64;
        for y in lo..=hi {
            max = max.max(self.scratch[(y - new_lo) as usize]);
        }
        if max == 0.0 || !max.is_finite() {
            // all mass removed by the window, or an overflow that cannot happen with the split weights
            self.y_lo = 0;
            self.z = vec![0.0];
            self.log_scale = f64::NEG_INFINITY;
            return;
        }
        let inv = 1.0 / max;
        let cut = TINY;
        // trim entries that vanish relative to the maximum
        while lo < hi && self.scratch[(lo - new_lo) as usize] * inv < cut {
            lo += 1;
        }
        while hi > lo && self.scratch[(hi - new_lo) as usize] * inv < cut {
            hi -= 1;
        }
        self.z.clear();
        for y in lo..=hi {
            let v = self.scratch[(y - new_lo) as usize] * inv;
            self.z.push(if v < cut { 0.0 } else { v });
        }
        self.y_lo = lo;
        self.log_scale += max.ln() + shift;
    }

    /// Functional form of [`Profile::step`].
    pub fn evolve(&self, w1: f64, w2: f64, params: Params, window: Window) -> Profile {
        let mut p = self.clone();
        p.step(w1, w2, params, window);
        p
    }
}

fn check_even(n: usize, charges: &[f64]) -> Result<()> {
    if !n.is_multiple_of(2) {
        return invalid(format!("polymer size must be even, got {n}"));
    }
    if charges.len() < n {
        return invalid(format!("need {n} charges, got {}", charges.len()));
    }
    Ok(())
}

/// Profile of the polymer of size `n` built on `charges[..n]`.
pub fn run(charges: &[f64], params: Params, n: usize, window: Window) -> Result<Profile> {
    check_even(n, charges)?;
    let mut p = Profile::new();
    for pair in charges[..n].chunks_exact(2) {
        p.step(pair[0], pair[1], params, window);
    }
    Ok(p)
}

/// `log Z_{n}(0)`; exact for the full window, a lower bound otherwise.
pub fn pinned_log_z(charges: &[f64], params: Params, n: usize, window: Window) -> Result<f64> {
    Ok(run(charges, params, n, window)?.log_z0())
}

/// `log Z_n` without endpoint constraint.
pub fn free_log_z(charges: &[f64], params: Params, n: usize, window: Window) -> Result<f64> {
    Ok(run(charges, params, n, window)?.log_z_free())
}

/// `log E Z_n`: the recursion with every pair weighted by `M(-2 lam)^2 e^{-4 lam h}`.
pub fn annealed_log_z(law: &ChargeLaw, params: Params, n: usize) -> Result<f64> {
    if !n.is_multiple_of(2) {
        return invalid(format!("polymer size must be even, got {n}"));
    }
    let la = 2.0 * law.log_mgf(-2.0 * params.lam) - 4.0 * params.lam * params.h;
    let mut p = Profile::new();
    for _ in 0..n / 2 {
        p.step_log_alpha(la, Window::Full);
    }
    Ok(p.log_z_free())
}

/// Law of the endpoint under the polymer measure: `mass[i] = P(S_n = x_min + 2i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointLaw {
    pub x_min: i64,
    pub mass: Vec<f64>,
}

impl EndpointLaw {
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.mass.iter().enumerate().map(move |(i, &m)| (self.x_min + 2 * i as i64, m))
    }
}

pub fn endpoint_distribution(charges: &[f64], params: Params, n: usize, window: Window) -> Result<EndpointLaw> {
    endpoint_of(&run(charges, params, n, window)?)
}

pub fn endpoint_of(p: &Profile) -> Result<EndpointLaw> {
    let total: f64 = p.z.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Internal("profile carries no mass".into()));
    }
    Ok(EndpointLaw { x_min: 2 * p.y_lo, mass: p.z.iter().map(|v| v / total).collect() })
}

/// `log((1 + e^{-2t}) / 2)`.
pub fn log_phi(t: f64) -> f64 {
    if t >= 0.0 {
        (-2.0 * t).exp().ln_1p() - std::f64::consts::LN_2
    } else {
        -2.0 * t + (2.0 * t).exp().ln_1p() - std::f64::consts::LN_2
    }
}

/// Default size limit of [`excursion_oracle_log_z0`].
pub const ORACLE_CAP: usize = 5000;

/// `log Z_n(0)` from the last-return decomposition
/// `Z(n) = sum_x Z(n - x) K(x) phi(lam sum omega + lam h x)`, an `O(n^2)`
/// computation independent of the transfer recursion.
pub fn excursion_oracle_log_z0(charges: &[f64], params: Params, n: usize, cap: usize) -> Result<f64> {
    check_even(n, charges)?;
    if n > cap {
        return invalid(format!("oracle size {n} exceeds the cap {cap}"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let law = walk::return_law(WalkSpec::simple(), n.max(2))?;
    let log_k: Vec<f64> = (0..=n).map(|x| law.at(x).ln()).collect();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + charges[i];
    }
    let half = n / 2;
    let mut lz = vec![0.0; half + 1];
    let mut terms = Vec::with_capacity(half);
    for m in 1..=half {
        terms.clear();
        let end = 2 * m;
        for j in 1..=m {
            let x = 2 * j;
            let start = end - x;
            let t = params.lam * (prefix[end] - prefix[start]) + params.lam * params.h * x as f64;
            terms.push(lz[m - j] + log_k[x] + log_phi(t));
        }
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        lz[m] = max + s.ln();
    }
    Ok(lz[half])
}
