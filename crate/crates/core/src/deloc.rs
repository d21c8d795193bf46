//! Delocalization diagnostics: the endpoint distance to the meander law, the
//! finite-size critical point, atypical stretches and the stopping-time
//! certificates built on them.

use serde::{Deserialize, Serialize};

use crate::env::{binary_words, cramer, h_m, h_sat, ChargeLaw, Direction, Environment, Source};
use crate::error::{invalid, Error, Result};
use crate::fluct::meander_density;
use crate::transfer::{endpoint_distribution, log_phi, pinned_log_z, Params, Profile, Window};

/// Charges fetched per chunk by the sequential scanners.
const CHUNK: usize = 1 << 16;

/// `l1` distance between the endpoint law of the polymer of size `two_n`
/// and the meander target on the positive even lattice.
///
/// The target is `phi+(x / sqrt(n)) (2 / sqrt(n))` at even `x > 0`, rescaled
/// to total mass 1, so the distance lies in `[0, 2]`. The environment is used
/// as given; pass a backward environment to put `omega_1` at the endpoint.
pub fn meander_distance(env: &Environment, params: Params, two_n: usize, window: Window) -> Result<f64> {
    if two_n == 0 || !two_n.is_multiple_of(2) {
        return invalid(format!("polymer size must be positive and even, got {two_n}"));
    }
    let charges = env.generate(1, two_n)?;
    let law = endpoint_distribution(&charges, params, two_n, window)?;
    let sn = (two_n as f64).sqrt();
    let x_top = (40.0 * sn).ceil() as i64;
    let target = |x: i64| if x > 0 { meander_density(x as f64 / sn) } else { 0.0 };
    let norm: f64 = (1..=x_top / 2).map(|i| target(2 * i)).sum();
    let mut dist = 0.0;
    let mut covered = 0.0;
    for (x, p) in law.iter() {
        let t = target(x) / norm;
        covered += t;
        dist += (p - t).abs();
    }
    // target mass on sites outside the support of the endpoint law
    dist += (1.0 - covered).max(0.0);
    Ok(dist.clamp(0.0, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HatHOptions {
    /// Target accuracy in `log Z`.
    pub tol: f64,
    /// `Z(0)` value that defines the estimate.
    pub threshold: f64,
    pub max_iter: usize,
    pub window: Window,
}

impl Default for HatHOptions {
    fn default() -> Self {
        HatHOptions { tol: 1e-8, threshold: 1.0, max_iter: 200, window: Window::standard() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// `Z(0)` does not exceed the threshold even at `h = 0`.
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatH {
    pub h: f64,
    /// `log Z(0) - log threshold` at `h`.
    pub residual: f64,
    pub iterations: usize,
    pub h_sat: f64,
    pub saturated: Option<Saturation>,
}

/// Bracket width below which the estimate switches from bisection to regula falsi.
const BISECT_WIDTH: f64 = 1e-2;

/// The `h` at which the pinned partition function of size `two_n` equals the
/// threshold, found by the Illinois variant of regula falsi on the
/// decreasing map `h -> log Z(0)`.
pub fn critical_h_estimate(env: &Environment, lam: f64, two_n: usize, opts: HatHOptions) -> Result<HatH> {
    if !(lam > 0.0) {
        return invalid(format!("lam must be positive, got {lam}"));
    }
    if !(opts.threshold > 0.0) || !(opts.tol > 0.0) {
        return invalid("threshold and tol must be positive");
    }
    let charges = env.generate(1, two_n)?;
    let sat = h_sat(&charges, two_n)?;
    let log_t = opts.threshold.ln();
    let f = |h: f64| -> Result<f64> { Ok(pinned_log_z(&charges, Params::new(lam, h), two_n, opts.window)? - log_t) };
    let (mut a, mut fa) = (0.0, f(0.0)?);
    if fa <= 0.0 {
        return Ok(HatH { h: 0.0, residual: fa, iterations: 0, h_sat: sat, saturated: Some(Saturation::Low) });
    }
    let (mut b, mut fb) = (sat.max(0.0) + 1.0, f(sat.max(0.0) + 1.0)?);
    if fb >= 0.0 {
        return Err(Error::Bracket(format!("log Z(0) - log threshold = {fb} at h = h_sat + 1 = {b}; the estimate saturates above h_sat")));
    }
    let mut side = 0i8;
    for it in 1..=opts.max_iter {
        // bisect while the bracket is wide: far from the root log Z is strongly curved in h
        let c = if b - a > BISECT_WIDTH { 0.5 * (a + b) } else { (a * fb - b * fa) / (fb - fa) };
        let c = if c > a && c < b { c } else { 0.5 * (a + b) };
        let fc = f(c)?;
        if fc.abs() <= opts.tol || b - a <= f64::EPSILON * b.abs().max(1.0) {
            return Ok(HatH { h: c, residual: fc, iterations: it, h_sat: sat, saturated: None });
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::Bracket(format!("no convergence in {} iterations on [{a}, {b}]", opts.max_iter)))
}

/// Solve `h^{(m)}(lam_star) = h_hat` for `m` by bisection.
pub fn fit_m(law: &ChargeLaw, lam_star: f64, h_hat: f64) -> Result<f64> {
    if !(lam_star > 0.0) {
        return invalid(format!("lam_star must be positive, got {lam_star}"));
    }
    let (lo_support, _) = law.support_hull();
    if !(h_hat > 0.0) || h_hat >= -lo_support {
        return Err(Error::Domain(format!("h_hat = {h_hat} is outside (0, {})", -lo_support)));
    }
    let g = |m: f64| h_m(law, m, lam_star);
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi)? < h_hat {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Domain(format!("h_hat = {h_hat} is not reached by the bound curves")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? < h_hat {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First time `tau` at which the charges `(tau - R, tau]` average at most `q`
/// over a stretch of even length `R >= M`; `R` is the shortest such length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchTime {
    pub q: f64,
    #[serde(rename = "M")]
    pub m: u64,
    pub tau: u64,
    #[serde(rename = "R")]
    pub r: u64,
}

/// Outcome of a stretch scan.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Hit {
    /// Stretch length bound in force when the hit occurred.
    k: u64,
    tau: u64,
    r: u64,
    /// Charge sums `P_{tau - r}` and `P_tau`.
    p_start: f64,
    p_end: f64,
}

/// `P_n - q n`.
#[inline(always)]
fn drift(p: f64, n: u64, q: f64) -> f64 {
    p - q * n as f64
}

/// Stretch bounds that may grow with time: `k` moves to `k + 2` as soon as the
/// scan passes `exp(rate k)` without a hit. A plain search has `rate = inf`.
#[derive(Debug, Clone, Copy)]
struct Schedule {
    k: u64,
    rate: f64,
    /// `exp(rate k)`.
    threshold: f64,
}

impl Schedule {
    fn new(k: u64, rate: f64) -> Self {
        Schedule { k, rate, threshold: (rate * k as f64).exp() }
    }

    /// Advance `k` until position `n` is within the threshold.
    fn settle(&mut self, n: u64) {
        while n as f64 > self.threshold {
            self.k += 2;
            self.threshold = (self.rate * self.k as f64).exp();
        }
    }
}

/// Ring length of the generic scanner, in even positions.
const RING: usize = 1 << 13;

/// Per-position scan over any charge source. Keeps `D_j = P_j - q j` and its
/// running maximum at the last `RING` even positions.
fn scan_generic(env: &Environment, q: f64, mut sched: Schedule, cap: u64) -> Result<Option<Hit>> {
    let mut d = vec![0.0f64; RING];
    let mut pm = vec![0.0f64; RING];
    let mut p = vec![0.0f64; RING];
    let mask = RING - 1;
    let mut sum = 0.0f64;
    let mut n: u64 = 0;
    let explicit_len = match &env.source {
        Source::Explicit(v) => Some(v.len() as u64),
        Source::Random { .. } => None,
    };
    let limit = explicit_len.map_or(cap, |l| l.min(cap));
    let mut buf: Vec<f64> = Vec::new();
    let mut pos = 0usize;
    while n + 2 <= limit {
        if pos + 2 > buf.len() {
            let a = n + 1;
            let b = (n + CHUNK as u64).min(limit);
            buf = env.generate(a as usize, b as usize)?;
            pos = 0;
            if buf.len() < 2 {
                break;
            }
        }
        sum += buf[pos] + buf[pos + 1];
        pos += 2;
        n += 2;
        let i = (n / 2) as usize & mask;
        let dn = drift(sum, n, q);
        d[i] = dn;
        p[i] = sum;
        pm[i] = pm[(n / 2 - 1) as usize & mask].max(dn);
        sched.settle(n);
        let k = sched.k;
        if 2 * k as usize + 2 >= 2 * RING {
            return Err(Error::TooLarge(format!("stretch length {k} exceeds the scan history")));
        }
        if n < k {
            continue;
        }
        if dn <= pm[((n - k) / 2) as usize & mask] {
            let mut r = k;
            while d[((n - r) / 2) as usize & mask] < dn {
                r += 2;
                if r > 2 * k || r > n {
                    return Err(Error::Internal(format!("no stretch of length <= 2k at n = {n}")));
                }
            }
            let p_start = p[((n - r) / 2) as usize & mask];
            return Ok(Some(Hit { k, tau: n, r, p_start, p_end: sum }));
        }
    }
    Ok(None)
}

/// Ring length of the binary scanner, in bytes of charges.
const BYTE_RING: usize = 1 << 10;

/// Prefix sums of a byte of binary charges at offsets 0, 2, 4, 6, 8.
fn byte_table() -> Vec<[i64; 5]> {
    (0..256u32)
        .map(|b| {
            let mut row = [0i64; 5];
            let mut s = 0i64;
            for t in 0..8usize {
                s += if (b >> t) & 1 == 1 { 1 } else { -1 };
                if t % 2 == 1 {
                    row[t.div_ceil(2)] = s;
                }
            }
            row
        })
        .collect()
}

struct ByteHistory {
    bytes: Vec<u8>,
    /// `P` at the byte start.
    p: Vec<i64>,
    /// `max_{j <= start} D_j` at the byte start.
    pm: Vec<f64>,
}

/// Binary charges processed a byte (four even positions) at a time. A byte is
/// inspected position by position only when its smallest `D` is not above the
/// largest value the lagged maximum can take inside the byte.
fn scan_binary(seed: u64, stream: u64, q: f64, mut sched: Schedule, cap: u64) -> Result<Option<Hit>> {
    let table = byte_table();
    let mask = BYTE_RING - 1;
    let mut hist = ByteHistory { bytes: vec![0; BYTE_RING], p: vec![0; BYTE_RING], pm: vec![0.0; BYTE_RING] };
    let p_at = |hist: &ByteHistory, j: u64| -> i64 {
        let i = (j / 8) as usize & mask;
        hist.p[i] + table[hist.bytes[i] as usize][((j % 8) / 2) as usize]
    };
    let pm_at = |hist: &ByteHistory, j: u64| -> f64 {
        let i = (j / 8) as usize & mask;
        let start = j - j % 8;
        let mut m = hist.pm[i];
        let row = &table[hist.bytes[i] as usize];
        for t in 1..=((j % 8) / 2) as usize {
            m = m.max(drift((hist.p[i] + row[t]) as f64, start + 2 * t as u64, q));
        }
        m
    };
    // D relative to the byte start at offsets 2..8: smallest, largest; exact for dyadic q
    let mut min_rel = [0.0f64; 256];
    let mut max_rel = [0.0f64; 256];
    let mut step = [0i64; 256];
    for b in 0..256 {
        let rel: Vec<f64> = (1..=4).map(|t| table[b][t] as f64 - q * (2 * t) as f64).collect();
        min_rel[b] = rel.iter().cloned().fold(f64::INFINITY, f64::min);
        max_rel[b] = rel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        step[b] = table[b][4];
    }
    let mut p0: i64 = 0;
    let mut pm0: f64 = 0.0;
    let mut n0: u64 = 0;
    let mut word_idx: u64 = 0;
    const WORDS: usize = CHUNK / 64;
    if 2 * sched.k + 16 >= 8 * BYTE_RING as u64 {
        return Err(Error::TooLarge(format!("stretch length {} exceeds the scan history", sched.k)));
    }
    while n0 + 8 <= cap {
        let words = binary_words(seed, stream, word_idx, WORDS);
        word_idx += WORDS as u64;
        for w in words {
            for byte in w.to_le_bytes() {
                if n0 + 8 > cap {
                    return Ok(None);
                }
                let i = (n0 / 8) as usize & mask;
                hist.bytes[i] = byte;
                hist.p[i] = p0;
                hist.pm[i] = pm0;
                let d0 = drift(p0 as f64, n0, q);
                let k = sched.k;
                // rounding slack of the table sums
                let slack = 1e-15 * (d0.abs() + 16.0);
                let quiet = n0 + 8 < k
                    || (d0 + min_rel[byte as usize] > hist.pm[(n0 + 8 - k).div_ceil(8) as usize & mask] + slack
                        && ((n0 + 8) as f64) <= sched.threshold);
                if !quiet {
                    let row = &table[byte as usize];
                    for t in 1..=4usize {
                        let n = n0 + 2 * t as u64;
                        let dn = drift((p0 + row[t]) as f64, n, q);
                        sched.settle(n);
                        let k = sched.k;
                        if 2 * k + 16 >= 8 * BYTE_RING as u64 {
                            return Err(Error::TooLarge(format!("stretch length {k} exceeds the scan history")));
                        }
                        if n < k || dn > pm_at(&hist, n - k) {
                            continue;
                        }
                        let mut r = k;
                        while drift(p_at(&hist, n - r) as f64, n - r, q) < dn {
                            r += 2;
                            if r > 2 * k || r > n {
                                return Err(Error::Internal(format!("no stretch of length <= 2k at n = {n}")));
                            }
                        }
                        let p_start = p_at(&hist, n - r) as f64;
                        return Ok(Some(Hit { k, tau: n, r, p_start, p_end: (p0 + row[t]) as f64 }));
                    }
                }
                // the running maximum must hold exact drift values, as in the generic scan
                if d0 + max_rel[byte as usize] + slack > pm0 {
                    let row = &table[byte as usize];
                    for t in 1..=4usize {
                        pm0 = pm0.max(drift((p0 + row[t]) as f64, n0 + 2 * t as u64, q));
                    }
                }
                p0 += step[byte as usize];
                n0 += 8;
            }
        }
    }
    Ok(None)
}

/// Binary scans need `k >= 8` so that the lagged maximum never reaches into
/// the byte being inspected.
fn scan(env: &Environment, q: f64, sched: Schedule, cap: u64) -> Result<Option<Hit>> {
    if env.direction != Direction::Forward {
        return invalid("stretch scans read the charges forward");
    }
    match &env.source {
        Source::Random { law: ChargeLaw::BinarySymmetric, seed, stream } if sched.k >= 8 => scan_binary(*seed, *stream, q, sched, cap),
        _ => scan_generic(env, q, sched, cap),
    }
}

fn check_stretch_args(env: &Environment, q: f64, m: u64) -> Result<()> {
    if m < 2 || !m.is_multiple_of(2) {
        return invalid(format!("M must be even and at least 2, got {m}"));
    }
    if !q.is_finite() {
        return invalid("q must be finite");
    }
    if let Source::Random { law, .. } = &env.source {
        let (lo, _) = law.support_hull();
        if q <= lo {
            return Err(Error::Domain(format!("q = {q} is not above the smallest charge {lo}")));
        }
    }
    Ok(())
}

/// `tau_{M,q}` and `R_{M,q}`; `None` when no stretch occurs within `cap` charges.
pub fn find_stretch(env: &Environment, q: f64, m: u64, cap: u64) -> Result<Option<StretchTime>> {
    check_stretch_args(env, q, m)?;
    let hit = scan(env, q, Schedule::new(m, f64::INFINITY), cap)?;
    Ok(hit.map(|h| StretchTime { q, m, tau: h.tau, r: h.r }))
}

/// Same scan with the per-position scanner regardless of the charge law.
pub fn find_stretch_reference(env: &Environment, q: f64, m: u64, cap: u64) -> Result<Option<StretchTime>> {
    check_stretch_args(env, q, m)?;
    if env.direction != Direction::Forward {
        return invalid("stretch scans read the charges forward");
    }
    let hit = scan_generic(env, q, Schedule::new(m, f64::INFINITY), cap)?;
    Ok(hit.map(|h| StretchTime { q, m, tau: h.tau, r: h.r }))
}

/// `log K(2m)` for the simple walk: `log(C(2m, m) 4^{-m} / (2m - 1))`.
pub fn log_return_simple(two_m: u64) -> f64 {
    assert!(two_m >= 2 && two_m.is_multiple_of(2), "return times are positive and even");
    let m = two_m / 2;
    let central = if m < 1000 {
        (1..=m).map(|i| ((2 * i - 1) as f64 / (2 * i) as f64).ln()).sum::<f64>()
    } else {
        let x = 1.0 / m as f64;
        -0.5 * (std::f64::consts::PI * m as f64).ln() - x / 8.0 + x * x * x / 192.0
    };
    central - ((two_m - 1) as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    /// Minimal stretch length; `None` picks the smallest even value whose bound exceeds 1.
    #[serde(rename = "A")]
    pub a: Option<u64>,
    pub eps: f64,
    /// Stretch mean; `None` uses `q0 = (log M)'(-4 lam / 3)`.
    pub q: Option<f64>,
    /// Charges scanned before giving up.
    pub cap: u64,
    /// Largest `T` at which `log Z(0)` is also computed by the transfer recursion.
    pub transfer_cap: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions { a: None, eps: 0.03, q: None, cap: 1 << 40, transfer_cap: 20_000 }
    }
}

/// How the value of `log Z(0)` at `T` was obtained; both are lower bounds
/// that are exact up to the transfer window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMethod {
    Transfer,
    /// Two excursions: one over `(0, T - R]`, one over the stretch.
    TwoExcursions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(rename = "A")]
    pub a: u64,
    pub eps: f64,
    pub q: f64,
    /// Cramér functional at `q`.
    pub sigma: f64,
    pub ell: u64,
    #[serde(rename = "T")]
    pub t: u64,
    #[serde(rename = "R")]
    pub r: u64,
    pub log_z0_at_t: f64,
    pub z_method: ZMethod,
    /// Log of the analytic lower bound.
    pub log_bound: f64,
    /// Certified constant: `Z(0) >= C` at `T` when the certificate holds.
    #[serde(rename = "C")]
    pub c: f64,
    pub holds: bool,
}

/// `log c'` in the analytic bound.
pub fn log_c_prime() -> f64 {
    -(4.0 * std::f64::consts::PI * 8.0 * std::f64::consts::SQRT_2).ln()
}

/// `q0 = (log M)'(-4 lam / 3)`, the stretch mean that maximizes the bound's rate.
pub fn q0(law: &ChargeLaw, lam: f64) -> f64 {
    law.dlog_mgf(-4.0 * lam / 3.0).0
}

/// Rate `(-4 lam / 3) q - Sigma(q) - (4 lam / 3) h` of the analytic bound.
pub fn bound_rate(law: &ChargeLaw, params: Params, q: f64) -> Result<f64> {
    let c = 4.0 * params.lam / 3.0;
    Ok(-c * q - cramer(law, q)? - c * params.h)
}

/// Log of `c' exp{(3/2) A [rate - log A / A - eps]}`.
pub fn log_bound(law: &ChargeLaw, params: Params, q: f64, a: u64, eps: f64) -> Result<f64> {
    let af = a as f64;
    Ok(log_c_prime() + 1.5 * af * (bound_rate(law, params, q)? - af.ln() / af - eps))
}

/// Smallest even `A >= 2` with a bound above 1.
pub fn minimal_a(law: &ChargeLaw, params: Params, q: f64, eps: f64) -> Result<u64> {
    let rate = bound_rate(law, params, q)?;
    if rate <= eps {
        return Err(Error::NotApplicable(format!("bound rate {rate} does not exceed eps = {eps}")));
    }
    let mut a = 2u64;
    while log_bound(law, params, q, a, eps)? <= 0.0 {
        a += 2;
        if a > 1 << 32 {
            return Err(Error::NotApplicable("no A makes the bound exceed 1".into()));
        }
    }
    Ok(a)
}

/// Lower-bound certificate at the stopping time `T = tau_ell`, where `ell` is
/// the first even `k >= A` whose stretch time satisfies `log tau_k <= (Sigma(q) + eps) k`.
/// `None` when no stopping time occurs within `opts.cap` charges.
pub fn certificate(env: &Environment, params: Params, opts: CertificateOptions) -> Result<Option<Certificate>> {
    let law = match &env.source {
        Source::Random { law, .. } => law.clone(),
        Source::Explicit(_) => return invalid("certificates need a random environment with a known law"),
    };
    let h_lower = h_m(&law, 2.0 / 3.0, params.lam)?;
    if params.h >= h_lower {
        return Err(Error::NotApplicable(format!("h = {} is not below the lower bound curve {h_lower} at lam = {}", params.h, params.lam)));
    }
    if !(opts.eps > 0.0) {
        return invalid("eps must be positive");
    }
    let q = opts.q.unwrap_or_else(|| q0(&law, params.lam));
    if q >= -params.h {
        return Err(Error::NotApplicable(format!("q = {q} must be below -h = {}", -params.h)));
    }
    let a = match opts.a {
        Some(a) => a,
        None => minimal_a(&law, params, q, opts.eps)?,
    };
    check_stretch_args(env, q, a)?;
    let sigma = cramer(&law, q)?;
    let Some(hit) = scan(env, q, Schedule::new(a, sigma + opts.eps), opts.cap)? else {
        return Ok(None);
    };
    let lam = params.lam;
    let lead = hit.tau - hit.r;
    let mut log_z = log_return_simple(hit.r) + log_phi(lam * (hit.p_end - hit.p_start) + lam * params.h * hit.r as f64);
    if lead > 0 {
        log_z += log_return_simple(lead) + log_phi(lam * hit.p_start + lam * params.h * lead as f64);
    }
    let mut method = ZMethod::TwoExcursions;
    if hit.tau <= opts.transfer_cap {
        let charges = env.generate(1, hit.tau as usize)?;
        let exact = pinned_log_z(&charges, params, hit.tau as usize, Window::Full)?;
        if exact >= log_z {
            log_z = exact;
            method = ZMethod::Transfer;
        }
    }
    let lb = log_bound(&law, params, q, a, opts.eps)?;
    Ok(Some(Certificate {
        a,
        eps: opts.eps,
        q,
        sigma,
        ell: hit.k,
        t: hit.tau,
        r: hit.r,
        log_z0_at_t: log_z,
        z_method: method,
        log_bound: lb,
        c: lb.exp(),
        holds: lb > 0.0 && log_z >= lb,
    }))
}

/// Smallest even `N <= n_cap` with `Z_N(0) >= c`, scanning the transfer recursion.
pub fn first_passage_tc(env: &Environment, params: Params, c: f64, n_cap: usize, window: Window) -> Result<Option<usize>> {
    if !(c > 1.0) {
        return invalid(format!("C must exceed 1, got {c}"));
    }
    let log_c = c.ln();
    let mut prof = Profile::new();
    let mut n = 0usize;
    while n + 2 <= n_cap {
        let b = (n + CHUNK).min(n_cap - n_cap % 2);
        let charges = env.generate(n + 1, b)?;
        for pair in charges.chunks_exact(2) {
            prof.step(pair[0], pair[1], params, window);
            n += 2;
            if prof.log_z0() >= log_c {
                return Ok(Some(n));
            }
        }
    }
    Ok(None)
}

/// Empirical mean of a nonnegative sample with a heavy-tail diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub count: usize,
    pub mean: f64,
    /// Share of the total carried by the largest tenth of the sample.
    pub top_decile_share: f64,
    /// Set when that share exceeds one half.
    pub heavy_tail: bool,
}

pub fn tail_summary(values: &[f64]) -> Result<TailSummary> {
    if values.is_empty() || values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return invalid("need a nonempty sample of finite nonnegative values");
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let top = values.len().div_ceil(10);
    let share = if total > 0.0 { sorted[..top].iter().sum::<f64>() / total } else { 0.0 };
    Ok(TailSummary { count: values.len(), mean: total / values.len() as f64, top_decile_share: share, heavy_tail: share > 0.5 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::ORACLE_CAP;
    use proptest::prelude::*;

    #[test]
    fn hand_scans() {
        let all_minus = Environment::explicit(vec![-1.0; 20]);
        let s = find_stretch(&all_minus, -0.5, 4, 100).unwrap().unwrap();
        assert_eq!((s.tau, s.r), (4, 4));
        let mixed = Environment::explicit(vec![1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
        let s = find_stretch(&mixed, -0.9, 2, 100).unwrap().unwrap();
        assert_eq!((s.tau, s.r), (4, 2));
        let all_plus = Environment::explicit(vec![1.0; 50]);
        assert_eq!(find_stretch(&all_plus, -0.5, 2, 1000).unwrap(), None);
        assert!(find_stretch(&all_minus, -0.5, 3, 100).is_err());
    }

    #[test]
    fn binary_scanner_matches_reference() {
        for seed in 0..40u64 {
            for (q, m) in [(-0.5, 8u64), (-0.3, 10), (-0.6, 12), (0.0, 30), (-0.8, 8)] {
                let env = Environment::random(ChargeLaw::BinarySymmetric, seed, 3);
                let fast = find_stretch(&env, q, m, 1 << 22).unwrap();
                let slow = find_stretch_reference(&env, q, m, 1 << 22).unwrap();
                assert_eq!(fast, slow, "seed {seed} q {q} m {m}");
                assert!(fast.is_some());
            }
        }
    }

    #[test]
    fn stretch_invariants() {
        for seed in 0..30u64 {
            let env = Environment::random(ChargeLaw::BinarySymmetric, seed, 0);
            let s = find_stretch(&env, -0.5, 10, 1 << 24).unwrap().unwrap();
            assert!(s.r.is_multiple_of(2) && s.r >= 10 && s.r <= 20 && s.tau.is_multiple_of(2));
            let w = env.generate((s.tau - s.r + 1) as usize, s.tau as usize).unwrap();
            assert!(w.iter().sum::<f64>() <= -0.5 * s.r as f64 + 1e-9);
        }
    }

    #[test]
    fn ell_schedule_matches_reference() {
        for seed in 0..10u64 {
            let env = Environment::random(ChargeLaw::BinarySymmetric, seed, 9);
            let sched = Schedule::new(8, 0.25);
            let fast = scan(&env, -0.4, sched, 1 << 22).unwrap().unwrap();
            let slow = scan_generic(&env, -0.4, sched, 1 << 22).unwrap().unwrap();
            assert_eq!(fast, slow);
            // the hit respects the threshold of the final k, and k failed before
            assert!((fast.tau as f64) <= (0.25 * fast.k as f64).exp());
            assert!(fast.k >= 8);
        }
    }

    #[test]
    fn log_return_matches_walk() {
        let law = crate::walk::return_law(crate::walk::WalkSpec::simple(), 3000).unwrap();
        for n in [2u64, 4, 10, 100, 1998, 2000, 2002, 3000] {
            let direct = law.at(n as usize).ln();
            assert!((log_return_simple(n) - direct).abs() < 1e-11, "n = {n}");
        }
        // the series and the product agree where they meet
        let m = 1000u64;
        let prod: f64 = (1..=m).map(|i| ((2 * i - 1) as f64 / (2 * i) as f64).ln()).sum();
        let x = 1.0 / m as f64;
        let series = -0.5 * (std::f64::consts::PI * m as f64).ln() - x / 8.0 + x * x * x / 192.0;
        assert!((prod - series).abs() < 1e-12);
    }

    #[test]
    fn fit_m_round_trips() {
        let law = ChargeLaw::BinarySymmetric;
        for m in [2.0 / 3.0, 1.0, 0.841] {
            let h = h_m(&law, m, 4.0).unwrap();
            assert!((fit_m(&law, 4.0, h).unwrap() - m).abs() < 1e-9);
        }
        assert!(fit_m(&law, 4.0, 1.0).is_err());
        assert!(fit_m(&law, 4.0, 0.0).is_err());
        assert!(fit_m(&ChargeLaw::StandardGaussian, 1.0, 5.0).is_ok());
    }

    #[test]
    fn q0_binary() {
        let q = q0(&ChargeLaw::BinarySymmetric, 0.75);
        assert!((q + 1.0f64.tanh()).abs() < 1e-14);
    }

    #[test]
    fn first_passage_hand_case() {
        let env = Environment::explicit(vec![-1.0; 10]);
        assert_eq!(first_passage_tc(&env, Params::new(1.0, 0.0), 1.01, 10, Window::Full).unwrap(), Some(2));
        let plus = Environment::explicit(vec![1.0; 10]);
        assert_eq!(first_passage_tc(&plus, Params::new(1.0, 0.0), 1.01, 10, Window::Full).unwrap(), None);
    }

    #[test]
    fn hat_h_solves_threshold() {
        let env = Environment::random(ChargeLaw::BinarySymmetric, 5, 0);
        let opts = HatHOptions { window: Window::Full, ..HatHOptions::default() };
        let est = critical_h_estimate(&env, 0.6, 2000, opts).unwrap();
        assert!(est.saturated.is_none() && est.residual.abs() <= 1e-8);
        let charges = env.generate(1, 2000).unwrap();
        let lz = crate::transfer::excursion_oracle_log_z0(&charges, Params::new(0.6, est.h), 2000, ORACLE_CAP).unwrap();
        assert!(lz.abs() <= 1e-7);
        assert!(est.h < est.h_sat);
    }

    #[test]
    fn hat_h_saturated_low() {
        let env = Environment::explicit(vec![1.0; 100]);
        let est = critical_h_estimate(&env, 1.0, 100, HatHOptions::default()).unwrap();
        assert_eq!(est.saturated, Some(Saturation::Low));
    }

    #[test]
    fn certificate_not_applicable_above_lower_curve() {
        let env = Environment::random(ChargeLaw::BinarySymmetric, 1, 0);
        let err = certificate(&env, Params::new(1.0, 0.6), CertificateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotApplicable(_)));
    }

    #[test]
    fn small_certificate_is_consistent() {
        // a loose setting where the bound is below 1 but the stopping time is short
        for seed in 0..5u64 {
            let env = Environment::random(ChargeLaw::BinarySymmetric, seed, 0);
            let opts = CertificateOptions { a: Some(12), eps: 0.05, q: Some(-0.7), cap: 1 << 30, transfer_cap: 20_000 };
            let c = certificate(&env, Params::new(1.0, 0.3), opts).unwrap().expect("stopping time within the cap");
            assert!(c.ell >= 12 && c.r >= c.ell && c.r <= 2 * c.ell);
            assert!((c.t as f64).ln() <= (c.sigma + c.eps) * c.ell as f64 + 1e-12);
            if c.t <= 20_000 {
                let charges = env.generate(1, c.t as usize).unwrap();
                let lz = pinned_log_z(&charges, Params::new(1.0, 0.3), c.t as usize, Window::Full).unwrap();
                assert!(c.log_z0_at_t <= lz + 1e-9);
            }
        }
    }

    #[test]
    fn tail_summary_flags_heavy_tails() {
        let mut v = vec![1.0; 99];
        v.push(1000.0);
        let s = tail_summary(&v).unwrap();
        assert!(s.heavy_tail && s.count == 100);
        let flat = tail_summary(&[1.0; 20]).unwrap();
        assert!(!flat.heavy_tail && (flat.top_decile_share - 0.1).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn meander_distance_bounded(seed in 0u64..1000, lam in 0.05f64..2.0, h in -0.5f64..1.0, half in 1usize..200) {
            let env = Environment::random(ChargeLaw::BinarySymmetric, seed, 0).backward();
            let d = meander_distance(&env, Params::new(lam, h), 2 * half, Window::Full).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
        }

        #[test]
        fn explicit_scans_agree(w in proptest::collection::vec(prop_oneof![Just(-1.0f64), Just(1.0), Just(0.5), Just(-0.25)], 2..200),
                                q in -0.9f64..0.5, half_m in 1u64..10) {
            let env = Environment::explicit(w.clone());
            let m = 2 * half_m;
            if let Some(s) = find_stretch(&env, q, m, 1000).unwrap() {
                prop_assert!(s.r >= m && s.r <= 2 * m && s.r % 2 == 0);
                let sum: f64 = w[(s.tau - s.r) as usize..s.tau as usize].iter().sum();
                prop_assert!(sum <= q * s.r as f64 + 1e-9);
                // no earlier position ends a long enough stretch
                let pre: Vec<f64> = std::iter::once(0.0).chain(w.iter().scan(0.0, |a, x| { *a += x; Some(*a) })).collect();
                for n in (m..s.tau).step_by(2) {
                    for j in (0..=n - m).step_by(2) {
                        prop_assert!(pre[n as usize] - pre[j as usize] > q * (n - j) as f64);
                    }
                }
            }
        }
    }
}
