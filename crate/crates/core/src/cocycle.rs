//! Constrained annealing with a local function of `k + 1` consecutive charges.
//!
//! Tuples in `Gamma^{k+1}` are indexed big-endian in base `|Gamma|`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{pf, MAX_DIM};

pub const MAX_ALPHABET: usize = 16;
pub const TUPLE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleSpec {
    /// Symbol labels; only their order matters.
    pub alphabet: Vec<f64>,
    pub nu: Vec<f64>,
    pub k: usize,
    /// `F` on `Gamma^{k+1}`, big-endian.
    #[serde(rename = "F")]
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "coboundary", rename_all = "snake_case")]
pub enum Verdict {
    /// `F(a) = G(a_2..a_{k+1}) - G(a_1..a_k)` with this `G` on `Gamma^k`.
    Yes { g: Vec<f64>, max_residual: f64 },
    /// A cyclic word (symbol indices) along which `F` does not sum to zero.
    No { witness: Vec<usize>, cyclic_sum: f64 },
}

impl CocycleSpec {
    pub fn new(alphabet: Vec<f64>, nu: Vec<f64>, k: usize, f: Vec<f64>) -> Result<Self> {
        let spec = CocycleSpec { alphabet, nu, k, f };
        spec.validate()?;
        Ok(spec)
    }

    /// Tabulate `f` on all tuples of labels.
    pub fn from_fn(alphabet: Vec<f64>, nu: Vec<f64>, k: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let q = alphabet.len();
        let n = checked_pow(q, k + 1)?;
        let table = (0..n)
            .map(|i| {
                let labels: Vec<f64> = digits(i, q, k + 1).iter().map(|&d| alphabet[d]).collect();
                f(&labels)
            })
            .collect();
        Self::new(alphabet, nu, k, table)
    }

    pub fn q(&self) -> usize {
        self.alphabet.len()
    }

    pub fn n_tuples(&self) -> usize {
        self.q().pow(self.k as u32 + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        if q == 0 || q > MAX_ALPHABET {
            return invalid(format!("alphabet size must be in 1..={MAX_ALPHABET}, got {q}"));
        }
        if self.nu.len() != q {
            return invalid("nu must have one weight per symbol");
        }
        if self.nu.iter().any(|p| !(*p > 0.0)) {
            return invalid("nu must be strictly positive");
        }
        if (self.nu.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return invalid("nu must sum to 1");
        }
        let n = checked_pow(q, self.k + 1)?;
        if self.f.len() != n {
            return invalid(format!("F must have {n} entries, got {}", self.f.len()));
        }
        if self.f.iter().any(|x| !x.is_finite()) {
            return invalid("F must be finite");
        }
        let mean = self.mean();
        let scale = self.f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if mean.abs() > 1e-14 * scale {
            return invalid(format!("F must be centered under nu, mean is {mean:e}"));
        }
        Ok(())
    }

    /// `sum F dnu^{k+1}`.
    pub fn mean(&self) -> f64 {
        let q = self.q();
        (0..self.f.len()).map(|i| self.f[i] * digits(i, q, self.k + 1).iter().map(|&d| self.nu[d]).product::<f64>()).sum()
    }

    fn index(&self, word: impl Iterator<Item = usize>) -> usize {
        word.fold(0, |acc, d| acc * self.q() + d)
    }

    /// Sum of `F` over all windows of the cyclic word `w`.
    pub fn cyclic_sum(&self, w: &[usize]) -> f64 {
        let m = w.len();
        (0..m).map(|j| self.f[self.index((0..=self.k).map(|i| w[(j + i) % m]))]).sum()
    }
}

fn checked_pow(q: usize, e: usize) -> Result<usize> {
    let mut n: usize = 1;
    for _ in 0..e {
        n = n.checked_mul(q).filter(|n| *n <= TUPLE_CAP).ok_or_else(|| Error::TooLarge(format!("|Gamma|^{e} exceeds {TUPLE_CAP}")))?;
    }
    Ok(n)
}

/// Big-endian digits of `i` in base `q`, `len` of them.
fn digits(mut i: usize, q: usize, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = i % q;
        i /= q;
    }
    d
}

/// `A_{a,c}` is nonzero only when `c` continues `a` by one symbol:
/// `c = (a_2, ..., a_{k+1}, s)`, with weight `e^{beta F(c)} nu(s)`.
fn transitions(spec: &CocycleSpec, beta: f64) -> Vec<Vec<(usize, f64)>> {
    let q = spec.q();
    let n = spec.n_tuples();
    (0..n)
        .map(|a| {
            let shifted = (a * q) % n;
            (0..q).map(|s| (shifted + s, (beta * spec.f[shifted + s]).exp() * spec.nu[s])).collect()
        })
        .collect()
}

/// The transfer matrix `A_beta` as a dense matrix.
pub fn annealed_matrix(spec: &CocycleSpec, beta: f64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.n_tuples();
    if n > 4096 {
        return Err(Error::TooLarge(format!("dense matrix of size {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for (i, row) in transitions(spec, beta).into_iter().enumerate() {
        for (j, w) in row {
            a[(i, j)] = w;
        }
    }
    Ok(a)
}

/// `L(beta) = log` of the Perron root of `A_beta`.
pub fn cocycle_free_energy(spec: &CocycleSpec, beta: f64) -> Result<f64> {
    spec.validate()?;
    let n = spec.n_tuples();
    if n <= MAX_DIM {
        return Ok(pf(&annealed_matrix(spec, beta)?)?.eigval.ln());
    }
    // sparse power iteration; A is primitive, the Collatz–Wielandt gap closes
    let tr = transitions(spec, beta);
    let mut v = vec![1.0; n];
    for _ in 0..1_000_000 {
        let w: Vec<f64> = tr.iter().map(|row| row.iter().map(|&(j, a)| a * v[j]).sum()).collect();
        let (lo, hi) = w.iter().zip(&v).fold((f64::INFINITY, 0.0f64), |(lo, hi), (x, y)| (lo.min(x / y), hi.max(x / y)));
        if hi - lo <= 1e-14 * hi {
            return Ok((0.5 * (lo + hi)).ln());
        }
        let m = w.iter().fold(0.0f64, |m, x| m.max(*x));
        v = w.into_iter().map(|x| x / m).collect();
    }
    Err(Error::Internal("power iteration did not converge".into()))
}

/// `log Tr[A_beta^N]`.
pub fn log_partition(spec: &CocycleSpec, beta: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return invalid("N must be at least 1");
    }
    spec.validate()?;
    let tr = transitions(spec, beta);
    let size = spec.n_tuples();
    if size > 4096 {
        return Err(Error::TooLarge(format!("trace over {size} tuples")));
    }
    // trace as a sum over starting tuples of (A^N)_{ii}, one vector sweep each
    let mut total = 0.0;
    let mut log_scale = 0.0;
    let mut acc: Vec<(f64, f64)> = Vec::with_capacity(size);
    for i in 0..size {
        let mut v = vec![0.0; size];
        v[i] = 1.0;
        let mut ls = 0.0;
        for _ in 0..n {
            let mut w = vec![0.0; size];
            for (a, row) in tr.iter().enumerate() {
                if v[a] != 0.0 {
                    for &(j, x) in row {
                        w[j] += v[a] * x;
                    }
                }
            }
            let m = w.iter().fold(0.0f64, |m, x| m.max(*x));
            if m == 0.0 {
                break;
            }
            ls += m.ln();
            v = w.into_iter().map(|x| x / m).collect();
        }
        acc.push((v[i], ls));
    }
    let max_ls = acc.iter().filter(|(x, _)| *x > 0.0).map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    for (x, l) in acc {
        if x > 0.0 {
            total += x * (l - max_ls).exp();
        }
    }
    log_scale += max_ls;
    Ok(total.ln() + log_scale)
}

/// `Z_N(beta) = Tr[A_beta^N]`.
pub fn partition(spec: &CocycleSpec, beta: f64, n: usize) -> Result<f64> {
    Ok(log_partition(spec, beta, n)?.exp())
}

/// Decide whether `F` is a coboundary and either return the potential or a
/// cyclic word with nonzero sum.
pub fn is_coboundary(spec: &CocycleSpec) -> Result<Verdict> {
    spec.validate()?;
    let (q, k) = (spec.q(), spec.k);
    let n = spec.n_tuples();
    // reference symbol: smallest label
    let r = (0..q).min_by(|a, b| spec.alphabet[*a].total_cmp(&spec.alphabet[*b])).unwrap_or(0);
    let n_heads = n / q;
    let g: Vec<f64> = (0..n_heads)
        .map(|z| {
            let zeta = digits(z, q, k);
            -(1..=k).map(|i| spec.f[spec.index(zeta[i - 1..].iter().copied().chain(std::iter::repeat_n(r, i)))]).sum::<f64>()
        })
        .collect();
    let mut worst = (0.0f64, 0usize);
    for a in 0..n {
        let tail = a % n_heads;
        let head = a / q;
        let res = spec.f[a] - (g[tail] - g[head]);
        if res.abs() > worst.0.abs() {
            worst = (res, a);
        }
    }
    if worst.0.abs() <= 1e-10 {
        return Ok(Verdict::Yes { g, max_residual: worst.0.abs() });
    }
    let alpha = digits(worst.1, q, k + 1);
    let refs = std::iter::repeat_n(r, k);
    let long: Vec<usize> = alpha.iter().copied().chain(refs.clone()).collect();
    let short: Vec<usize> = alpha[..k].iter().copied().chain(refs).collect();
    let (sl, ss) = (spec.cyclic_sum(&long), if k == 0 { 0.0 } else { spec.cyclic_sum(&short) });
    let (witness, cyclic_sum) = if sl.abs() >= ss.abs() { (long, sl) } else { (short, ss) };
    Ok(Verdict::No { witness, cyclic_sum })
}
