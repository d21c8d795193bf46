//! Charge laws, reproducible charge sequences and the functionals of the
//! log-moment generating function.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Law of a single charge. Always centered with unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawRepr", into = "LawRepr")]
pub enum ChargeLaw {
    BinarySymmetric,
    StandardGaussian,
    FiniteSupport { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LawRepr {
    Name(String),
    Finite {
        values: Vec<f64>,
        probs: Vec<f64>,
        #[serde(default = "yes")]
        scale: bool,
    },
}

fn yes() -> bool {
    true
}

impl TryFrom<LawRepr> for ChargeLaw {
    type Error = Error;
    fn try_from(r: LawRepr) -> Result<Self> {
        match r {
            LawRepr::Name(s) => match s.as_str() {
                "binary" => Ok(ChargeLaw::BinarySymmetric),
                "gaussian" => Ok(ChargeLaw::StandardGaussian),
                other => invalid(format!("unknown charge law {other:?}")),
            },
            LawRepr::Finite { values, probs, scale } => ChargeLaw::finite_support(values, probs, scale),
        }
    }
}

impl From<ChargeLaw> for LawRepr {
    fn from(l: ChargeLaw) -> Self {
        match l {
            ChargeLaw::BinarySymmetric => LawRepr::Name("binary".into()),
            ChargeLaw::StandardGaussian => LawRepr::Name("gaussian".into()),
            ChargeLaw::FiniteSupport { values, probs } => LawRepr::Finite { values, probs, scale: false },
        }
    }
}

impl ChargeLaw {
    /// Finite law, shifted to mean zero and (if `scale`) rescaled to unit variance.
    pub fn finite_support(values: Vec<f64>, probs: Vec<f64>, scale: bool) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return invalid("finite law needs matching nonempty values and probs");
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return invalid("finite law needs finite values and nonnegative probs");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        let (values, probs): (Vec<f64>, Vec<f64>) =
            values.into_iter().zip(probs).filter(|(_, p)| *p > 0.0).map(|(v, p)| (v, p / total)).unzip();
        let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        let mut values: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let var: f64 = values.iter().zip(&probs).map(|(v, p)| v * v * p).sum();
        if var <= 0.0 {
            return invalid("finite law is degenerate");
        }
        if scale {
            let s = var.sqrt();
            values.iter_mut().for_each(|v| *v /= s);
        }
        Ok(ChargeLaw::FiniteSupport { values, probs })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChargeLaw::BinarySymmetric => "binary",
            ChargeLaw::StandardGaussian => "gaussian",
            ChargeLaw::FiniteSupport { .. } => "finite",
        }
    }

    /// Bounded laws with support inside [-1, 1].
    pub fn is_binary(&self) -> bool {
        matches!(self, ChargeLaw::BinarySymmetric)
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, ChargeLaw::StandardGaussian)
    }

    /// Closed convex hull of the support.
    pub fn support_hull(&self) -> (f64, f64) {
        match self {
            ChargeLaw::BinarySymmetric => (-1.0, 1.0),
            ChargeLaw::StandardGaussian => (f64::NEG_INFINITY, f64::INFINITY),
            ChargeLaw::FiniteSupport { values, .. } => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    pub fn mgf(&self, a: f64) -> f64 {
        self.log_mgf(a).exp()
    }

    pub fn log_mgf(&self, a: f64) -> f64 {
        match self {
            ChargeLaw::BinarySymmetric => {
                let x = a.abs();
                x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2
            }
            ChargeLaw::StandardGaussian => 0.5 * a * a,
            ChargeLaw::FiniteSupport { values, probs } => {
                let m = values.iter().map(|v| a * v).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = values.iter().zip(probs).map(|(v, p)| p * (a * v - m).exp()).sum();
                m + s.ln()
            }
        }
    }

    /// First and second derivative of the log-MGF (tilted mean and variance).
    pub fn dlog_mgf(&self, a: f64) -> (f64, f64) {
        match self {
            ChargeLaw::BinarySymmetric => {
                let t = a.tanh();
                (t, 1.0 - t * t)
            }
            ChargeLaw::StandardGaussian => (a, 1.0),
            ChargeLaw::FiniteSupport { values, probs } => {
                let m = values.iter().map(|v| a * v).fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = values.iter().zip(probs).map(|(v, p)| p * (a * v - m).exp()).collect();
                let z: f64 = w.iter().sum();
                let mean: f64 = values.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / z;
                let var: f64 = values.iter().zip(&w).map(|(v, w)| (v - mean).powi(2) * w).sum::<f64>() / z;
                (mean, var)
            }
        }
    }

    /// Probability of the atom at `x` (zero for the Gaussian law).
    fn atom(&self, x: f64) -> f64 {
        match self {
            ChargeLaw::BinarySymmetric if x.abs() == 1.0 => 0.5,
            ChargeLaw::FiniteSupport { values, probs } => values.iter().zip(probs).filter(|(v, _)| **v == x).map(|(_, p)| p).sum(),
            _ => 0.0,
        }
    }

    /// Exact expectation of `f(omega_1 + omega_2)` for finite laws.
    pub fn pair_expectation(&self, f: impl Fn(f64) -> f64) -> Option<f64> {
        match self {
            ChargeLaw::BinarySymmetric => Some(0.25 * f(2.0) + 0.5 * f(0.0) + 0.25 * f(-2.0)),
            ChargeLaw::StandardGaussian => None,
            ChargeLaw::FiniteSupport { values, probs } => {
                let mut s = 0.0;
                for (a, pa) in values.iter().zip(probs) {
                    for (b, pb) in values.iter().zip(probs) {
                        s += pa * pb * f(a + b);
                    }
                }
                Some(s)
            }
        }
    }
}

/// Bound curve `h^{(m)}(lam) = log M(-2 m lam) / (2 m lam)`.
pub fn h_m(law: &ChargeLaw, m: f64, lam: f64) -> Result<f64> {
    if !(lam > 0.0) {
        return invalid(format!("h_m needs lam > 0, got {lam}"));
    }
    if !(m > 0.0) {
        return invalid(format!("h_m needs m > 0, got {m}"));
    }
    let a = 2.0 * m * lam;
    Ok(law.log_mgf(-a) / a)
}

/// Cramér functional `sup_a (a q - log M(a))`.
///
/// Inside the support hull the supremum is attained; it is located by a
/// safeguarded Newton iteration on `(log M)'(a) = q`. On the boundary of a
/// finite support the value is `-log P(omega = q)`.
pub fn cramer(law: &ChargeLaw, q: f64) -> Result<f64> {
    let (lo, hi) = law.support_hull();
    if !q.is_finite() || q < lo || q > hi {
        return Err(Error::Domain(format!("q = {q} outside the support hull [{lo}, {hi}]")));
    }
    if q == lo || q == hi {
        return Ok(-law.atom(q).ln());
    }
    let a = legendre_argmax(law, q)?;
    Ok((a * q - law.log_mgf(a)).max(0.0))
}

/// Solve `(log M)'(a) = q` for `q` strictly inside the support hull.
pub fn legendre_argmax(law: &ChargeLaw, q: f64) -> Result<f64> {
    let f = |a: f64| law.dlog_mgf(a).0 - q;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e8 {
            return Err(Error::Domain(format!("no tilt reaches mean {q}")));
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Domain(format!("no tilt reaches mean {q}")));
        }
    }
    let mut a = 0.5 * (lo + hi);
    for _ in 0..500 {
        let (d1, d2) = law.dlog_mgf(a);
        let g = d1 - q;
        if g == 0.0 {
            return Ok(a);
        }
        if g > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let newton = a - g / d2;
        let next = if d2 > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - a).abs() <= 1e-12 * a.abs().max(1.0) || hi - lo <= 1e-12 * a.abs().max(1.0) {
            return Ok(next);
        }
        a = next;
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Forward,
    /// On a range `[a, b]` the charges are read as `omega_{a + b - n}`.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Charges derived from `(seed, stream, index)`; `stream` is the sample index.
    Random {
        law: ChargeLaw,
        seed: u64,
        stream: u64,
    },
    Explicit(Vec<f64>),
}

/// A quenched charge sequence `omega_1, omega_2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub source: Source,
    pub direction: Direction,
}

const TWO_POW_M53: f64 = 1.0 / 9007199254740992.0;

impl Environment {
    pub fn random(law: ChargeLaw, seed: u64, stream: u64) -> Self {
        Environment { source: Source::Random { law, seed, stream }, direction: Direction::Forward }
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        Environment { source: Source::Explicit(values), direction: Direction::Forward }
    }

    pub fn backward(mut self) -> Self {
        self.direction = Direction::Backward;
        self
    }

    /// Charges with indices `a..=b` (1-based), in the environment's direction.
    pub fn generate(&self, a: usize, b: usize) -> Result<Vec<f64>> {
        if a == 0 || a > b {
            return invalid(format!("bad charge range [{a}, {b}]"));
        }
        let mut out = match &self.source {
            Source::Explicit(v) => {
                if v.len() < b {
                    return invalid(format!("explicit charges have length {}, need {b}", v.len()));
                }
                v[a - 1..b].to_vec()
            }
            Source::Random { law, seed, stream } => random_charges(law, *seed, *stream, a, b),
        };
        if self.direction == Direction::Backward {
            out.reverse();
        }
        Ok(out)
    }
}

fn rng_at(seed: u64, stream: u64, word: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word);
    rng
}

/// Raw 64-bit words backing the binary charges: charge `i` (1-based) is
/// `+1` iff bit `(i - 1) % 64` of word `(i - 1) / 64` is set.
pub fn binary_words(seed: u64, stream: u64, first_word: u64, count: usize) -> Vec<u64> {
    let mut rng = rng_at(seed, stream, 2 * first_word as u128);
    (0..count).map(|_| rng.next_u64()).collect()
}

fn random_charges(law: &ChargeLaw, seed: u64, stream: u64, a: usize, b: usize) -> Vec<f64> {
    let n = b - a + 1;
    match law {
        ChargeLaw::BinarySymmetric => {
            let w0 = (a - 1) / 64;
            let w1 = (b - 1) / 64;
            let words = binary_words(seed, stream, w0 as u64, w1 - w0 + 1);
            (a - 1..b).map(|i| if (words[i / 64 - w0] >> (i % 64)) & 1 == 1 { 1.0 } else { -1.0 }).collect()
        }
        ChargeLaw::StandardGaussian => {
            let mut rng = rng_at(seed, stream, 4 * (a as u128 - 1));
            (0..n)
                .map(|_| {
                    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53;
                    let u2 = (rng.next_u64() >> 11) as f64 * TWO_POW_M53;
                    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect()
        }
        ChargeLaw::FiniteSupport { values, probs } => {
            let mut cum = Vec::with_capacity(probs.len());
            let mut s = 0.0;
            for p in probs {
                s += p;
                cum.push(s);
            }
            let mut rng = rng_at(seed, stream, 2 * (a as u128 - 1));
            (0..n)
                .map(|_| {
                    let u = (rng.next_u64() >> 11) as f64 * TWO_POW_M53 * s;
                    let i = cum.partition_point(|&c| c <= u).min(values.len() - 1);
                    values[i]
                })
                .collect()
        }
    }
}

/// `max_{n <= N/2} -(omega_{2n-1} + omega_{2n}) / 2`: above this value of
/// `h` every pair is penalized below the interface.
pub fn h_sat(charges: &[f64], n: usize) -> Result<f64> {
    if !n.is_multiple_of(2) || n == 0 {
        return invalid(format!("h_sat needs a positive even size, got {n}"));
    }
    if charges.len() < n {
        return invalid(format!("h_sat needs {n} charges, got {}", charges.len()));
    }
    Ok(charges[..n].chunks_exact(2).map(|p| -(p[0] + p[1]) / 2.0).fold(f64::NEG_INFINITY, f64::max))
}

/// One period of the charges of the general periodic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCharges {
    #[serde(rename = "T")]
    pub t: usize,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub w0: Vec<f64>,
    pub w0_tilde: Vec<f64>,
}

impl PeriodicCharges {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return invalid("period must be at least 1");
        }
        for (name, v) in [("w_plus", &self.w_plus), ("w_minus", &self.w_minus), ("w0", &self.w0), ("w0_tilde", &self.w0_tilde)] {
            if v.len() != self.t {
                return invalid(format!("{name} has length {}, expected {}", v.len(), self.t));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return invalid(format!("{name} has non-finite entries"));
            }
        }
        Ok(())
    }

    /// Homogeneous pinning: reward `beta0` at every contact, nothing else.
    pub fn pinning(t: usize, beta0: f64) -> Self {
        PeriodicCharges { t, w_plus: vec![0.0; t], w_minus: vec![0.0; t], w0: vec![beta0; t], w0_tilde: vec![0.0; t] }
    }

    /// Copolymer with one period of charges: energy `lam (omega_n + h)`
    /// above the interface and its opposite below.
    pub fn copolymer(omega: &[f64], lam: f64, h: f64) -> Self {
        let t = omega.len();
        PeriodicCharges {
            t,
            w_plus: omega.iter().map(|w| lam * (w + h)).collect(),
            w_minus: omega.iter().map(|w| -lam * (w + h)).collect(),
            w0: vec![0.0; t],
            w0_tilde: vec![0.0; t],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mgf_values() {
        assert!((ChargeLaw::BinarySymmetric.mgf(1.0) - 1f64.cosh()).abs() < 1e-15);
        assert!((ChargeLaw::StandardGaussian.mgf(2.0) - 2f64.exp()).abs() < 1e-12);
        let f = ChargeLaw::finite_support(vec![-1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0], true).unwrap();
        for law in [ChargeLaw::BinarySymmetric, ChargeLaw::StandardGaussian, f] {
            assert_eq!(law.mgf(0.0), 1.0);
        }
    }

    #[test]
    fn table_bound_curves() {
        let b = ChargeLaw::BinarySymmetric;
        assert!((h_m(&b, 2.0 / 3.0, 0.6).unwrap() - 0.363).abs() < 5e-4);
        assert!((h_m(&b, 1.0, 0.6).unwrap() - 0.495).abs() < 5e-4);
        let small = h_m(&b, 1.0, 1e-6).unwrap();
        assert!((small - 1e-6).abs() < 1e-8);
        assert!(h_m(&b, 1.0, 0.0).is_err());
    }

    #[test]
    fn h_m_increasing_in_m() {
        let b = ChargeLaw::BinarySymmetric;
        for i in 1..=40 {
            let lam = 0.1 * i as f64;
            let mut prev = 0.0;
            for j in 1..=50 {
                let v = h_m(&b, 0.05 * j as f64, lam).unwrap();
                assert!(v > prev);
                prev = v;
            }
        }
    }

    fn closed_binary(q: f64) -> f64 {
        0.5 * (1.0 + q) * (1.0 + q).ln() + 0.5 * (1.0 - q) * (1.0 - q).ln()
    }

    /// Independent Legendre transform: coarse grid, then golden-section search.
    fn numeric_legendre(law: &ChargeLaw, q: f64) -> f64 {
        let g = |a: f64| a * q - law.log_mgf(a);
        let mut best = -50.0;
        let mut k = -50.0;
        while k <= 50.0 {
            if g(k) > g(best) {
                best = k;
            }
            k += 0.01;
        }
        let (mut lo, mut hi) = (best - 0.01, best + 0.01);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - r * (hi - lo);
            let b = lo + r * (hi - lo);
            if g(a) < g(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        g(0.5 * (lo + hi))
    }

    #[test]
    fn cramer_binary() {
        let b = ChargeLaw::BinarySymmetric;
        assert_eq!(cramer(&b, 0.0).unwrap(), 0.0);
        assert!((cramer(&b, 0.5).unwrap() - 0.1308).abs() < 1e-4);
        assert!((cramer(&b, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(cramer(&b, 1.5), Err(Error::Domain(_))));
        let mut q = -0.99;
        while q <= 0.99 {
            let c = cramer(&b, q).unwrap();
            assert!((c - closed_binary(q)).abs() < 1e-8, "q={q}");
            assert!((c - numeric_legendre(&b, q)).abs() < 1e-8, "q={q}");
            q += 0.01;
        }
        assert!((cramer(&ChargeLaw::StandardGaussian, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cramer_finite_matches_numeric() {
        let f = ChargeLaw::finite_support(vec![-1.0, 0.0, 3.0], vec![0.5, 0.3, 0.2], true).unwrap();
        let (lo, hi) = f.support_hull();
        for i in 1..20 {
            let q = lo + (hi - lo) * i as f64 / 20.0;
            assert!((cramer(&f, q).unwrap() - numeric_legendre(&f, q)).abs() < 1e-8);
        }
        assert!((cramer(&f, hi).unwrap() + 0.2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn finite_law_is_standardized() {
        let f = ChargeLaw::finite_support(vec![0.0, 5.0], vec![0.75, 0.25], true).unwrap();
        if let ChargeLaw::FiniteSupport { values, probs } = &f {
            let m: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
            let v: f64 = values.iter().zip(probs).map(|(v, p)| v * v * p).sum();
            assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
        }
        assert!(ChargeLaw::finite_support(vec![1.0], vec![1.0], true).is_err());
        let j: ChargeLaw = serde_json::from_str(r#"{"values":[-1,1],"probs":[0.5,0.5]}"#).unwrap();
        assert!(matches!(j, ChargeLaw::FiniteSupport { .. }));
        let b: ChargeLaw = serde_json::from_str(r#""binary""#).unwrap();
        assert_eq!(b, ChargeLaw::BinarySymmetric);
    }

    #[test]
    fn generate_explicit_and_backward() {
        let e = Environment::explicit(vec![1.0, -1.0, 1.0]).backward();
        assert_eq!(e.generate(1, 3).unwrap(), vec![1.0, -1.0, 1.0]);
        let e = Environment::explicit(vec![1.0, 1.0, -1.0]).backward();
        assert_eq!(e.generate(1, 3).unwrap(), vec![-1.0, 1.0, 1.0]);
        assert!(Environment::explicit(vec![1.0]).generate(1, 2).is_err());
    }

    #[test]
    fn generate_reproducible_and_sliceable() {
        for law in [
            ChargeLaw::BinarySymmetric,
            ChargeLaw::StandardGaussian,
            ChargeLaw::finite_support(vec![-1.0, 0.0, 2.0], vec![0.4, 0.4, 0.2], true).unwrap(),
        ] {
            let e = Environment::random(law.clone(), 7, 3);
            let full = e.generate(1, 300).unwrap();
            assert_eq!(full, e.generate(1, 300).unwrap());
            assert_eq!(&full[99..250], &e.generate(100, 250).unwrap()[..]);
            let other = Environment::random(law, 7, 4).generate(1, 300).unwrap();
            assert_ne!(full, other);
        }
    }

    #[test]
    fn binary_sample_mean() {
        let v = Environment::random(ChargeLaw::BinarySymmetric, 11, 0).generate(1, 10_000).unwrap();
        let m: f64 = v.iter().sum::<f64>() / 1e4;
        assert!(m.abs() < 0.03);
        assert!(v.iter().all(|x| x.abs() == 1.0));
        let g = Environment::random(ChargeLaw::StandardGaussian, 11, 0).generate(1, 100_000).unwrap();
        let m: f64 = g.iter().sum::<f64>() / 1e5;
        let s: f64 = g.iter().map(|x| x * x).sum::<f64>() / 1e5;
        assert!(m.abs() < 0.015 && (s - 1.0).abs() < 0.02);
    }

    #[test]
    fn saturation() {
        assert_eq!(h_sat(&[-1.0, -1.0, 1.0, 1.0], 4).unwrap(), 1.0);
        assert_eq!(h_sat(&[1.0; 6], 6).unwrap(), -1.0);
        assert!(h_sat(&[1.0; 6], 5).is_err());
    }

    proptest! {
        #[test]
        fn cramer_nonnegative_and_convex(q1 in -0.98f64..0.98, q2 in -0.98f64..0.98) {
            let b = ChargeLaw::BinarySymmetric;
            let (c1, c2) = (cramer(&b, q1).unwrap(), cramer(&b, q2).unwrap());
            let cm = cramer(&b, 0.5 * (q1 + q2)).unwrap();
            prop_assert!(c1 >= 0.0 && c2 >= 0.0);
            prop_assert!(cm <= 0.5 * (c1 + c2) + 1e-12);
        }

        #[test]
        fn mgf_convex(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            for law in [ChargeLaw::BinarySymmetric, ChargeLaw::StandardGaussian] {
                prop_assert!(law.mgf(0.5 * (a + b)) <= 0.5 * (law.mgf(a) + law.mgf(b)) * (1.0 + 1e-12));
            }
        }
    }
}
