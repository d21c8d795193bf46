//! Periodic inhomogeneous models over a lattice walk.
//!
//! A model is given by one period of the four charge sequences and reduces to
//! the `T x T` excursion kernel `M_{a,b}(x) = exp(Phi_{a,b}(x)) K(x)` on
//! residues mod `T`. Its column-sum matrix `B` carries the phase diagram:
//! the Perron root decides the regime, the free energy solves
//! `PF(B(F)) = 1`, and the renewal structure gives exact finite-size
//! partition functions and their sharp asymptotics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::env::PeriodicCharges;
use crate::error::{invalid, Error, Result};
pub use crate::linalg::PFData;
use crate::linalg::{inverse, pf};
use crate::transfer::log_phi;
use crate::walk::{return_law, ReturnLaw, WalkKind, WalkSpec};

/// `|delta - 1|` at or below this counts as critical.
pub const REGIME_TOL: f64 = 1e-9;
/// Between [`REGIME_TOL`] and this, asymptotic constants are refused.
pub const AMBIGUOUS_BAND: f64 = 1e-6;
/// Drifts `h_w` at or below this are set to exactly zero.
pub const H_ZERO: f64 = 1e-13;
pub const DEFAULT_X_CUT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Localized,
    StrictlyDeloc,
    Critical,
}

/// Periodic charges after the reduction `w_plus = 0`, `h_w >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicModel {
    pub charges: PeriodicCharges,
    pub walk: WalkSpec,
    pub h_w: f64,
    /// `sigma[a][b] = v_b - v_a`.
    pub sigma: Vec<Vec<f64>>,
    /// True when the upper and lower charges were exchanged to make `h_w >= 0`.
    pub swapped: bool,
    /// Per-monomer energy `(1/T) sum w_plus` removed by the reduction.
    pub shift: f64,
}

impl PeriodicModel {
    pub fn new(raw: PeriodicCharges, walk: WalkSpec) -> Result<Self> {
        raw.validate()?;
        walk.validate()?;
        if raw.t > crate::linalg::MAX_DIM {
            return Err(Error::TooLarge(format!("period {} exceeds {}", raw.t, crate::linalg::MAX_DIM)));
        }
        let t = raw.t;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / t as f64;
        let mut c = raw;
        let swapped = mean(&c.w_plus) < mean(&c.w_minus);
        if swapped {
            std::mem::swap(&mut c.w_plus, &mut c.w_minus);
        }
        let shift = mean(&c.w_plus);
        for n in 0..t {
            let up = c.w_plus[n];
            c.w_minus[n] -= up;
            c.w0_tilde[n] -= up;
            c.w_plus[n] = 0.0;
        }
        let mut h_w = -mean(&c.w_minus);
        if h_w.abs() <= H_ZERO {
            h_w = 0.0;
        }
        let mut v = vec![0.0; t];
        let mut acc = 0.0;
        for a in 1..t {
            acc += c.w_minus[a - 1];
            v[a] = acc + a as f64 * h_w;
        }
        let closing = acc + c.w_minus[t - 1] + t as f64 * h_w;
        let scale = c.w_minus.iter().fold(1.0f64, |m, x| m.max(x.abs())) * t as f64;
        if closing.abs() > 1e-9 * scale {
            return Err(Error::Internal(format!("period sum does not close: {closing:e}")));
        }
        let sigma = (0..t).map(|a| (0..t).map(|b| v[b] - v[a]).collect()).collect();
        Ok(PeriodicModel { charges: c, walk, h_w, sigma, swapped, shift })
    }

    /// Copolymer with charges `omega` (one period), coupling `lam`, asymmetry `h`.
    pub fn copolymer(omega: &[f64], lam: f64, h: f64, walk: WalkSpec) -> Result<Self> {
        if omega.is_empty() {
            return invalid("need at least one charge");
        }
        Self::new(PeriodicCharges::copolymer(omega, lam, h), walk)
    }

    pub fn t(&self) -> usize {
        self.charges.t
    }

    /// Residues reachable from 0: multiples of `gcd(span, T)`.
    pub fn classes(&self) -> Vec<usize> {
        let g = gcd(self.walk.span(), self.t());
        (0..self.t()).step_by(g).collect()
    }

    fn at(v: &[f64], residue: usize) -> f64 {
        // monomer n sits at index n - 1 and has residue n mod T
        let t = v.len();
        v[(residue + t - 1) % t]
    }

    pub fn w0(&self, beta: usize) -> f64 {
        Self::at(&self.charges.w0, beta)
    }

    pub fn w0_tilde(&self, beta: usize) -> f64 {
        Self::at(&self.charges.w0_tilde, beta)
    }

    pub fn sigma(&self, a: usize, b: usize) -> f64 {
        self.sigma[a][b]
    }

    pub fn max_abs_sigma(&self) -> f64 {
        self.sigma.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn in_class(&self, a: usize, b: usize, ell: usize) -> bool {
        let t = self.t();
        (a + ell) % t == b % t
    }

    /// Log-weight of an excursion of length `ell` from residue `a` to `b`; 0 off support.
    pub fn phi(&self, a: usize, b: usize, ell: usize) -> f64 {
        if ell == 0 || !self.in_class(a, b, ell) {
            return 0.0;
        }
        self.w0(b) + self.phi_tilde(a, b, ell)
    }

    /// [`PeriodicModel::phi`] without the contact reward; 0 at `ell = 1`.
    pub fn phi_tilde(&self, a: usize, b: usize, ell: usize) -> f64 {
        if ell == 0 || !self.in_class(a, b, ell) {
            return 0.0;
        }
        if ell == 1 {
            return self.w0_tilde(b);
        }
        // log(1/2 (1 + e^x)) with x = -ell h + sigma
        log_phi((ell as f64 * self.h_w - self.sigma(a, b)) / 2.0)
    }

    /// Tail coefficient matrix `L` with `x^{3/2} M_{a,b}(x) -> L_{a,b}`.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        let (t, ck) = (self.t(), self.walk.c_k());
        DMatrix::from_fn(t, t, |a, b| {
            let both = if self.h_w == 0.0 { 1.0 + self.sigma(a, b).exp() } else { 1.0 };
            ck * 0.5 * both * self.w0(b).exp()
        })
    }

    /// Upper-excursion part of `L`.
    pub fn l_plus_matrix(&self) -> DMatrix<f64> {
        let (t, ck) = (self.t(), self.walk.c_k());
        DMatrix::from_fn(t, t, |_, b| ck * 0.5 * self.w0(b).exp())
    }

    /// `lim sqrt(l) P(l) exp(Phi~)` with `P(l) = sum_{k > l} K(k)`.
    pub fn ltilde_matrix(&self) -> DMatrix<f64> {
        let (t, ck) = (self.t(), self.walk.c_k());
        DMatrix::from_fn(t, t, |a, b| if self.h_w == 0.0 { ck * (1.0 + self.sigma(a, b).exp()) } else { ck })
    }

    /// Probability that an excursion of length `z` from `a` to `b` is positive.
    pub fn rho_plus(&self, z: f64, a: usize, b: usize) -> f64 {
        1.0 / (1.0 + (-z * self.h_w + self.sigma(a, b)).exp())
    }

    /// Exact tilted column sums `B(b)_{a,c} = sum_x M_{a,c}(x) e^{-b x}` through
    /// the return generating function, filtered onto residue classes.
    pub fn b_exact(&self, tilt: f64) -> Result<DMatrix<f64>> {
        self.b_gf(tilt, false)
    }

    /// `sum_x x M_{a,c}(x) e^{-b x}`; needs `b > 0` unless `h_w > 0`.
    pub fn b_deriv_exact(&self, tilt: f64) -> Result<DMatrix<f64>> {
        if !(tilt > 0.0) {
            return Err(Error::Domain("first moment of B needs a positive tilt".into()));
        }
        self.b_gf(tilt, true)
    }

    fn b_gf(&self, tilt: f64, first_moment: bool) -> Result<DMatrix<f64>> {
        if !(tilt >= 0.0) {
            return Err(Error::Domain(format!("tilt must be nonnegative, got {tilt}")));
        }
        let t = self.t();
        let k1 = self.walk.step_probs()[1];
        let s_up = ((-tilt).exp(), -(-tilt).exp_m1());
        let b_dn = tilt + self.h_w;
        let s_dn = ((-b_dn).exp(), -(-b_dn).exp_m1());
        let up: Vec<f64> = (0..t).map(|d| self.class_sum(d, s_up, first_moment)).collect();
        let dn: Vec<f64> = (0..t).map(|d| self.class_sum(d, s_dn, first_moment)).collect();
        let g = gcd(self.walk.span(), t);
        let mut out = DMatrix::zeros(t, t);
        for a in 0..t {
            for b in 0..t {
                let d = (b + t - a) % t;
                if !d.is_multiple_of(g) {
                    continue;
                }
                let e0 = self.w0(b).exp();
                let sig = self.sigma(a, b).exp();
                let mut v = e0 * 0.5 * (up[d] + sig * dn[d]);
                if d == 1 % t && k1 > 0.0 {
                    // swap the generic length-1 weight for the flat-step one
                    let generic = e0 * 0.5 * (s_up.0 + sig * s_dn.0) * k1;
                    let flat = (self.w0(b) + self.w0_tilde(b)).exp() * k1 * s_up.0;
                    v += flat - generic;
                }
                out[(a, b)] = v.max(0.0);
            }
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("B overflows; charges too large".into()));
        }
        Ok(out)
    }

    /// `sum_{x >= 1, x = d mod T} K(x) s^x` (times `x` for the first moment).
    fn class_sum(&self, d: usize, (s, one_minus_s): (f64, f64), first_moment: bool) -> f64 {
        let t = self.t();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..t {
            let theta = 2.0 * PI * j as f64 / t as f64;
            let root = Complex64::from_polar(1.0, theta);
            let z = root * s;
            let omz = if j == 0 { Complex64::new(one_minus_s, 0.0) } else { Complex64::new(1.0, 0.0) - z };
            let g = if first_moment { z * self.walk.return_gf_deriv(z, omz) } else { self.walk.return_gf(z, omz) };
            acc += Complex64::from_polar(1.0, -theta * d as f64) * g;
        }
        acc.re / t as f64
    }

    /// Restriction of a `T x T` matrix to the reachable classes.
    pub fn restrict(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let c = self.classes();
        DMatrix::from_fn(c.len(), c.len(), |i, j| m[(c[i], c[j])])
    }

    /// Perron root of `B(b)` on the reachable classes.
    pub fn big_delta(&self, tilt: f64) -> Result<f64> {
        Ok(pf(&self.restrict(&self.b_exact(tilt)?))?.eigval)
    }

    /// Order parameter: Perron root of `B`.
    pub fn delta(&self) -> Result<f64> {
        self.big_delta(0.0)
    }

    pub fn classify(&self, delta: f64) -> Regime {
        if (delta - 1.0).abs() <= REGIME_TOL {
            Regime::Critical
        } else if delta > 1.0 {
            Regime::Localized
        } else {
            Regime::StrictlyDeloc
        }
    }

    /// Zero-drift, non-localized models with a nontrivial charge profile.
    pub fn is_pathological(&self, delta: f64) -> bool {
        delta <= 1.0 + REGIME_TOL && self.h_w == 0.0 && self.max_abs_sigma() > 1e-12
    }

    fn require_triple(&self, what: &str) -> Result<()> {
        if self.walk.kind != WalkKind::Triple {
            return Err(Error::NotApplicable(format!("{what} is implemented for the lazy walk only")));
        }
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `sum_{k >= 0} f(x0 + k step)` for `f(x) = x^{-3/2} e^{-tilt x}`, by Euler–Maclaurin.
fn hurwitz_tail(x0: f64, step: f64, tilt: f64) -> f64 {
    let f = x0.powf(-1.5) * (-tilt * x0).exp();
    let integral = if tilt == 0.0 {
        2.0 / x0.sqrt()
    } else {
        2.0 * (-tilt * x0).exp() / x0.sqrt() - 2.0 * (PI * tilt).sqrt() * erfc((tilt * x0).sqrt())
    };
    let df = -(1.5 / x0 + tilt) * f;
    let d3f = if tilt == 0.0 { -13.125 * x0.powf(-4.5) } else { 0.0 };
    integral / step + 0.5 * f - step * df / 12.0 + step.powi(3) * d3f / 720.0
}

/// Estimate of `sum_{x > X_cut} L x^{-3/2} e^{-tilt x}` over each class.
fn tail_estimate(model: &PeriodicModel, l: &DMatrix<f64>, x_cut: usize, tilt: f64) -> DMatrix<f64> {
    let t = model.t();
    let span = model.walk.span();
    let period = t * span / gcd(t, span);
    let mut hur = vec![0.0; t];
    for x0 in x_cut + 1..=x_cut + period {
        if x0 % span == 0 {
            hur[x0 % t] += hurwitz_tail(x0 as f64, period as f64, tilt);
        }
    }
    DMatrix::from_fn(t, t, |a, c| l[(a, c)] * hur[(c + t - a) % t])
}

/// Truncated excursion kernel with its exact and asymptotic tails.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub model: PeriodicModel,
    pub x_cut: usize,
    pub law: ReturnLaw,
    /// `m[(x - 1) T + a] = M_{a, (a + x) mod T}(x)`.
    m: Vec<f64>,
    pub l: DMatrix<f64>,
    pub ltilde: DMatrix<f64>,
    /// Exact `B`.
    pub b: DMatrix<f64>,
    pub b_truncated: DMatrix<f64>,
    /// `L` times the Hurwitz tail of `x^{-3/2}` over each class beyond the cut.
    pub tail_estimate: DMatrix<f64>,
    /// Largest gap between the exact tail `b - b_truncated` and the estimate.
    pub tail_bound: f64,
}

pub fn build_kernel(model: &PeriodicModel, x_cut: usize) -> Result<Kernel> {
    let t = model.t();
    if x_cut < 10 * t {
        return invalid(format!("X_cut must be at least 10 T = {}", 10 * t));
    }
    let law = return_law(model.walk, x_cut)?;
    let mut m = vec![0.0; x_cut * t];
    let mut b_truncated = DMatrix::zeros(t, t);
    for x in 1..=x_cut {
        let k = law.at(x);
        for a in 0..t {
            let b = (a + x) % t;
            let v = if k > 0.0 { model.phi(a, b, x).exp() * k } else { 0.0 };
            m[(x - 1) * t + a] = v;
            b_truncated[(a, b)] += v;
        }
    }
    let b = model.b_exact(0.0)?;
    let l = model.l_matrix();
    let tail_estimate = tail_estimate(model, &l, x_cut, 0.0);
    let tail_bound = (&b - &b_truncated - &tail_estimate).amax();
    Ok(Kernel { ltilde: model.ltilde_matrix(), model: model.clone(), x_cut, law, m, l, b, b_truncated, tail_estimate, tail_bound })
}

impl Kernel {
    pub fn t(&self) -> usize {
        self.model.t()
    }

    /// `M_{a,b}(x)`, zero off support and beyond the cut.
    pub fn m(&self, a: usize, b: usize, x: usize) -> f64 {
        let t = self.t();
        if x == 0 || x > self.x_cut || (a + x) % t != b {
            return 0.0;
        }
        self.m[(x - 1) * t + a]
    }

    /// Kernel value leaving `a` after `x` steps (its target residue is implied).
    pub fn m_from(&self, a: usize, x: usize) -> f64 {
        self.m[(x - 1) * self.t() + a]
    }

    /// Exact `B(b)`; falls back to the truncated sum when the tail beyond
    /// the cut is below double precision.
    pub fn b_tilted(&self, tilt: f64) -> Result<DMatrix<f64>> {
        if tilt * self.x_cut as f64 > 50.0 {
            Ok(self.truncated_sum(tilt, false))
        } else {
            self.model.b_exact(tilt)
        }
    }

    pub fn b_deriv_tilted(&self, tilt: f64) -> Result<DMatrix<f64>> {
        if tilt * self.x_cut as f64 > 60.0 {
            Ok(self.truncated_sum(tilt, true))
        } else {
            self.model.b_deriv_exact(tilt)
        }
    }

    fn truncated_sum(&self, tilt: f64, first_moment: bool) -> DMatrix<f64> {
        let t = self.t();
        let mut out = DMatrix::zeros(t, t);
        for x in 1..=self.x_cut {
            let w = (-tilt * x as f64).exp() * if first_moment { x as f64 } else { 1.0 };
            if w == 0.0 {
                break;
            }
            for a in 0..t {
                out[(a, (a + x) % t)] += self.m_from(a, x) * w;
            }
        }
        out
    }

    pub fn pf(&self) -> Result<PFData> {
        pf(&self.model.restrict(&self.b))
    }

    pub fn delta(&self) -> Result<f64> {
        Ok(self.pf()?.eigval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergy {
    pub f: f64,
    /// `-d/db PF(B(b))` at `b = F`, from the exact first moment.
    pub mu: f64,
    /// The same derivative by central differences.
    pub mu_fd: f64,
    pub pf: PFData,
    /// `|PF(B(F)) - 1|`.
    pub residual: f64,
}

/// Free energy `F > 0` solving `PF(B(F)) = 1`, by bisection.
pub fn free_energy(kernel: &Kernel) -> Result<FreeEnergy> {
    let model = &kernel.model;
    let delta = kernel.delta()?;
    if delta <= 1.0 + REGIME_TOL {
        return Err(Error::Regime(format!("free energy needs delta > 1, got {delta}")));
    }
    let big = |b: f64| -> Result<f64> { Ok(pf(&model.restrict(&kernel.b_tilted(b)?))?.eigval) };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while big(hi)? >= 1.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Bracket("no upper bracket for the free energy".into()));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if big(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let f = 0.5 * (lo + hi);
    let bf = model.restrict(&kernel.b_tilted(f)?);
    let data = pf(&bf)?;
    let deriv = model.restrict(&kernel.b_deriv_tilted(f)?);
    let zeta = DVector::from_column_slice(&data.zeta);
    let xi = DVector::from_column_slice(&data.xi);
    let mu = zeta.dot(&(&deriv * &xi));
    // central differences with one Richardson step; the square-root
    // singularity of B at b = 0 makes plain differences inaccurate for small F
    let db = (1e-5 * f.max(1.0)).min(0.5 * f);
    let central = |step: f64| -> Result<f64> { Ok(-(big(f + step)? - big(f - step)?) / (2.0 * step)) };
    let mu_fd = (4.0 * central(0.5 * db)? - central(db)?) / 3.0;
    Ok(FreeEnergy { f, mu, mu_fd, residual: (data.eigval - 1.0).abs(), pf: data })
}

/// Constant `C` in the sharp asymptotics of `Z_{0,eta}(N)` along `N = eta mod T`:
/// `C e^{FN}`, `C N^{-3/2}` or `C N^{-1/2}` by regime.
pub fn asymptotic_constant(kernel: &Kernel, eta: usize) -> Result<f64> {
    let model = &kernel.model;
    model.require_triple("asymptotic constants")?;
    let t = model.t();
    if eta >= t {
        return invalid(format!("residue {eta} out of range for period {t}"));
    }
    let delta = kernel.delta()?;
    let gap = (delta - 1.0).abs();
    if gap > REGIME_TOL && gap <= AMBIGUOUS_BAND {
        return Err(Error::AmbiguousRegime(delta - 1.0));
    }
    match model.classify(delta) {
        Regime::Localized => {
            let fe = free_energy(kernel)?;
            Ok(fe.pf.xi[0] * fe.pf.zeta[eta] * t as f64 / fe.mu)
        }
        Regime::StrictlyDeloc => {
            let r = inverse(&(DMatrix::identity(t, t) - &kernel.b))?;
            Ok((&r * &kernel.l * &r)[(0, eta)])
        }
        Regime::Critical => {
            let d = kernel.pf()?;
            let denom = quad_form(&d, &kernel.l);
            Ok((t * t) as f64 / (2.0 * PI) * d.xi[0] * d.zeta[eta] / denom)
        }
    }
}

fn quad_form(d: &PFData, m: &DMatrix<f64>) -> f64 {
    DVector::from_column_slice(&d.zeta).dot(&(m * DVector::from_column_slice(&d.xi)))
}

/// `Z_{a,(a+x) mod T}(x) e^{-b x}` for `x = 0..=n_max` by the renewal equation.
pub fn exact_partition(kernel: &Kernel, from: usize, n_max: usize, tilt: f64) -> Result<Vec<f64>> {
    let t = kernel.t();
    if from >= t {
        return invalid(format!("residue {from} out of range for period {t}"));
    }
    if n_max > kernel.x_cut {
        return Err(Error::TooLarge(format!("n_max {n_max} exceeds the kernel cut {}", kernel.x_cut)));
    }
    // tilted kernel, indexed by (length, starting residue)
    let mt: Vec<f64> = (1..=n_max)
        .flat_map(|y| {
            let w = (-tilt * y as f64).exp();
            (0..t).map(move |g| (y, g, w))
        })
        .map(|(y, g, w)| kernel.m_from(g, y) * w)
        .collect();
    let mut z = vec![0.0; n_max + 1];
    z[0] = 1.0;
    for x in 1..=n_max {
        let mut acc = 0.0;
        for y in 1..=x {
            let start = (from + x - y) % t;
            acc += z[x - y] * mt[(y - 1) * t + start];
        }
        z[x] = acc;
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LimitKind {
    Localized,
    Critical,
    /// Delocalized, endpoint pinned at residue `eta`.
    DelocConstrained {
        eta: usize,
    },
    /// Delocalized, free endpoint at residue `eta`.
    DelocFree {
        eta: usize,
    },
}

/// Semi-Markov kernel `Gamma_{a,b}(x) = M_{a,b}(x) e^{-tilt x} weight_{a,b}`
/// with an extra mass `escape_a` at `x = infinity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitKernel {
    pub kind: LimitKind,
    pub tilt: f64,
    pub weight: Vec<Vec<f64>>,
    pub escape: Vec<f64>,
    /// Row masses over `x <= X_cut` only.
    pub truncated_mass: Vec<f64>,
    /// Truncated mass plus the `L x^{-3/2}` tail estimate plus escape.
    pub estimated_mass: Vec<f64>,
    /// Row masses from the exact `B`, plus escape.
    pub exact_mass: Vec<f64>,
}

impl LimitKernel {
    pub fn at(&self, kernel: &Kernel, a: usize, b: usize, x: usize) -> f64 {
        kernel.m(a, b, x) * (-self.tilt * x as f64).exp() * self.weight[a][b]
    }

    /// Largest `|row mass - 1|` using the tail estimate.
    pub fn normalization_error(&self) -> f64 {
        self.estimated_mass.iter().fold(0.0, |m, x| m.max((x - 1.0).abs()))
    }
}

pub fn limit_kernel(kernel: &Kernel, kind: LimitKind) -> Result<LimitKernel> {
    let model = &kernel.model;
    model.require_triple("limit kernels")?;
    let t = model.t();
    let delta = kernel.delta()?;
    let regime = model.classify(delta);
    let wrong = |want: Regime| Error::Regime(format!("{kind:?} needs the {want:?} regime, delta = {delta}"));
    let (tilt, weight, escape) = match kind {
        LimitKind::Localized => {
            if regime != Regime::Localized {
                return Err(wrong(Regime::Localized));
            }
            let fe = free_energy(kernel)?;
            let xi = fe.pf.xi;
            (fe.f, DMatrix::from_fn(t, t, |a, b| xi[b] / xi[a]), vec![0.0; t])
        }
        LimitKind::Critical => {
            if regime != Regime::Critical {
                return Err(wrong(Regime::Critical));
            }
            let xi = kernel.pf()?.xi;
            (0.0, DMatrix::from_fn(t, t, |a, b| xi[b] / xi[a]), vec![0.0; t])
        }
        LimitKind::DelocConstrained { eta } | LimitKind::DelocFree { eta } => {
            if regime != Regime::StrictlyDeloc {
                return Err(wrong(Regime::StrictlyDeloc));
            }
            if eta >= t {
                return invalid(format!("residue {eta} out of range for period {t}"));
            }
            let r = inverse(&(DMatrix::identity(t, t) - &kernel.b))?;
            let (lam, mu) = match kind {
                LimitKind::DelocConstrained { .. } => (&r * &kernel.l * &r, &kernel.l * &r),
                _ => (&r * &kernel.ltilde, kernel.ltilde.clone()),
            };
            let w = DMatrix::from_fn(t, t, |a, b| lam[(b, eta)] / lam[(a, eta)]);
            (0.0, w, (0..t).map(|a| mu[(a, eta)] / lam[(a, eta)]).collect())
        }
    };
    let truncated = kernel.truncated_sum(tilt, false);
    let exact = kernel.b_tilted(tilt)?;
    let tail = tail_estimate(model, &kernel.l, kernel.x_cut, tilt);
    let row = |m: &DMatrix<f64>, a: usize| (0..t).map(|b| m[(a, b)] * weight[(a, b)]).sum::<f64>();
    let truncated_mass: Vec<f64> = (0..t).map(|a| row(&truncated, a)).collect();
    let estimated_mass = (0..t).map(|a| truncated_mass[a] + row(&tail, a) + escape[a]).collect();
    let exact_mass = (0..t).map(|a| row(&exact, a) + escape[a]).collect();
    Ok(LimitKernel {
        kind,
        tilt,
        weight: (0..t).map(|a| (0..t).map(|b| weight[(a, b)]).collect()).collect(),
        escape,
        truncated_mass,
        estimated_mass,
        exact_mass,
    })
}

/// Probabilities that the last excursion (or the excursions near the
/// endpoint) lie above the interface, in the scaling limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignParameters {
    pub eta: usize,
    /// Critical regime, pinned endpoint.
    pub p_eq: f64,
    /// Critical regime, free endpoint.
    pub q_eq: f64,
    /// Delocalized regime, pinned endpoint (absent unless `delta < 1`).
    pub p_del_c: Option<f64>,
    /// Delocalized regime, free endpoint (absent unless `delta < 1`).
    pub p_del_f: Option<f64>,
}

pub fn sign_parameters(kernel: &Kernel, eta: usize) -> Result<SignParameters> {
    let model = &kernel.model;
    model.require_triple("sign parameters")?;
    let t = model.t();
    if eta >= t {
        return invalid(format!("residue {eta} out of range for period {t}"));
    }
    let ck = model.walk.c_k();
    let lp = model.l_plus_matrix();
    let d = kernel.pf()?;
    let p_eq = quad_form(&d, &lp) / quad_form(&d, &kernel.l);
    let zsum: f64 = d.zeta.iter().sum();
    let zlt: f64 = (0..t).map(|g| d.zeta[g] * kernel.ltilde[(g, eta)]).sum();
    let q_eq = ck * zsum / zlt;
    let (p_del_c, p_del_f) = if d.eigval < 1.0 - REGIME_TOL {
        let r = inverse(&(DMatrix::identity(t, t) - &kernel.b))?;
        let c = (&r * &lp * &r)[(0, eta)] / (&r * &kernel.l * &r)[(0, eta)];
        let rowsum: f64 = (0..t).map(|a| r[(0, a)]).sum();
        let f = rowsum * ck / (&r * &kernel.ltilde)[(0, eta)];
        (Some(c), Some(f))
    } else {
        (None, None)
    };
    Ok(SignParameters { eta, p_eq, q_eq, p_del_c, p_del_f })
}

/// `c_beta = (1 / (zeta_b xi_b)) zeta L xi`, the tail constant of the return
/// time to residue `beta` of the critical limit process.
pub fn c_beta(kernel: &Kernel, beta: usize) -> Result<f64> {
    let model = &kernel.model;
    model.require_triple("c_beta")?;
    if beta >= model.t() {
        return invalid(format!("residue {beta} out of range"));
    }
    let d = kernel.pf()?;
    if model.classify(d.eigval) != Regime::Critical {
        return Err(Error::Regime(format!("c_beta needs a critical model, delta = {}", d.eigval)));
    }
    Ok(quad_form(&d, &kernel.l) / (d.zeta[beta] * d.xi[beta]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub delta: f64,
    pub regime: Regime,
    pub f: f64,
    pub mu: Option<f64>,
    /// `(eta, C(eta))`; empty for walks without asymptotic constants.
    pub constants: Vec<(usize, f64)>,
    pub pathological: bool,
    pub tail_bound: f64,
}

pub fn regime_report(kernel: &Kernel) -> Result<RegimeReport> {
    let model = &kernel.model;
    let delta = kernel.delta()?;
    let regime = model.classify(delta);
    let (f, mu) = if regime == Regime::Localized {
        let fe = free_energy(kernel)?;
        (fe.f, Some(fe.mu))
    } else {
        (0.0, None)
    };
    let gap = (delta - 1.0).abs();
    let constants = if model.walk.kind == WalkKind::Triple && !(gap > REGIME_TOL && gap <= AMBIGUOUS_BAND) {
        (0..model.t()).map(|eta| Ok((eta, asymptotic_constant(kernel, eta)?))).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(RegimeReport { delta, regime, f, mu, constants, pathological: model.is_pathological(delta), tail_bound: kernel.tail_bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lam: f64,
    pub h_c: f64,
    pub delta: f64,
}

/// Critical point of the copolymer family `lam (omega + h)` at fixed `lam`:
/// the `h` with `delta = 1`, by bisection on the decreasing map `h -> delta`.
pub fn critical_curve_point(omega: &[f64], walk: WalkSpec, lam: f64, tol: f64) -> Result<CurvePoint> {
    if !(lam > 0.0) {
        return invalid("critical curve needs lam > 0");
    }
    let mean = omega.iter().sum::<f64>() / omega.len().max(1) as f64;
    let delta = |h: f64| PeriodicModel::copolymer(omega, lam, h, walk)?.delta();
    let lo0 = -mean;
    if delta(lo0)? <= 1.0 + tol {
        return Err(Error::Bracket("delta does not exceed 1 at zero drift; the model has no transition".into()));
    }
    let (mut lo, mut hi) = (lo0, lo0 + 1.0);
    let mut tries = 0;
    while delta(hi)? >= 1.0 {
        lo = hi;
        hi = lo0 + 2.0 * (hi - lo0);
        tries += 1;
        if tries > 60 {
            return Err(Error::Bracket("no h with delta < 1".into()));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_c = 0.5 * (lo + hi);
    let d = delta(h_c)?;
    if (d - 1.0).abs() > tol {
        return Err(Error::Bracket(format!("bisection ended with |delta - 1| = {:e}", (d - 1.0).abs())));
    }
    Ok(CurvePoint { lam, h_c, delta: d })
}
