//! Primes, y-smooth integers and exact counting functions.
//!
//! Everything here is exact 64-bit integer arithmetic. `Ψ(x, y)` is available
//! both by exhaustive product enumeration and by the Buchstab recurrence; the
//! coprime counts `Ψ_m(x, y)` and the joint valuation counts used by the
//! quadratic forms are built on top of the recurrence by inclusion–exclusion.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Largest admissible `x`; keeps every `p^ν` product representable.
pub const MAX_X: u64 = 1 << 62;

/// Default cap on memo entries and enumerated integers.
pub const DEFAULT_CAP: u64 = 100_000_000;

/// A pair `x ≥ y ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SmoothBound {
    x: u64,
    y: u64,
}

impl SmoothBound {
    pub fn new(x: u64, y: u64) -> Result<Self> {
        if y < 2 {
            return Err(Error::InvalidInput(format!("y = {y} must be at least 2")));
        }
        if x < y {
            return Err(Error::InvalidInput(format!("x = {x} must be at least y = {y}")));
        }
        if x > MAX_X {
            return Err(Error::InvalidInput(format!("x = {x} exceeds 2^62")));
        }
        Ok(SmoothBound { x, y })
    }

    pub fn x(&self) -> u64 {
        self.x
    }

    pub fn y(&self) -> u64 {
        self.y
    }
}

/// Resource caps for memo tables and enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub memo_cap: u64,
    pub enum_cap: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            memo_cap: DEFAULT_CAP,
            enum_cap: DEFAULT_CAP,
        }
    }
}

/// Primes in `[2, y]`, ascending, by the sieve of Eratosthenes.
pub fn sieve_primes(y: u64) -> Vec<u64> {
    if y < 2 {
        return Vec::new();
    }
    let n = y as usize;
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if composite[i] {
            continue;
        }
        primes.push(i as u64);
        let mut j = i.saturating_mul(i);
        while j <= n {
            composite[j] = true;
            j += i;
        }
    }
    primes
}

/// Largest `ν` with `p^ν ≤ x`, by repeated multiplication.
pub fn max_exponent(x: u64, p: u64) -> u32 {
    assert!(p >= 2, "max_exponent needs p >= 2");
    let mut nu = 0;
    let mut pow = 1u64;
    while let Some(next) = pow.checked_mul(p) {
        if next > x {
            break;
        }
        pow = next;
        nu += 1;
    }
    nu
}

/// `p^ν`, or `None` on overflow.
pub fn checked_pow(p: u64, nu: u32) -> Option<u64> {
    p.checked_pow(nu)
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// One coordinate `(p, ν)` of the index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexEntry {
    pub p: u64,
    pub nu: u32,
}

/// The ordered coordinates `{(p, ν) : p ≤ y, 1 ≤ ν ≤ ν_p(x)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSpace {
    bound: SmoothBound,
    primes: Vec<u64>,
    nu: Vec<u32>,
    offsets: Vec<usize>,
    entries: Vec<IndexEntry>,
}

/// Build the index space of a bound.
pub fn build_index_space(bound: SmoothBound) -> IndexSpace {
    let primes = sieve_primes(bound.y);
    let nu: Vec<u32> = primes.iter().map(|&p| max_exponent(bound.x, p)).collect();
    let mut offsets = Vec::with_capacity(primes.len() + 1);
    let mut entries = Vec::new();
    for (&p, &n) in primes.iter().zip(&nu) {
        offsets.push(entries.len());
        entries.extend((1..=n).map(|nu| IndexEntry { p, nu }));
    }
    offsets.push(entries.len());
    IndexSpace {
        bound,
        primes,
        nu,
        offsets,
        entries,
    }
}

impl IndexSpace {
    pub fn bound(&self) -> SmoothBound {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    /// `ν_p` for the `i`-th prime.
    pub fn nu_max(&self, prime_idx: usize) -> u32 {
        self.nu[prime_idx]
    }

    pub fn nu_table(&self) -> &[u32] {
        &self.nu
    }

    pub fn prime_index(&self, p: u64) -> Option<usize> {
        self.primes.binary_search(&p).ok()
    }

    /// Coordinates belonging to the `i`-th prime.
    pub fn block(&self, prime_idx: usize) -> std::ops::Range<usize> {
        self.offsets[prime_idx]..self.offsets[prime_idx + 1]
    }

    /// Position of `(p, ν)` for `ν ≥ 1`.
    pub fn position(&self, p: u64, nu: u32) -> Option<usize> {
        let i = self.prime_index(p)?;
        if nu == 0 || nu > self.nu[i] {
            return None;
        }
        Some(self.offsets[i] + nu as usize - 1)
    }

    /// Position for prime index `i` and `1 ≤ ν ≤ ν_p`.
    pub fn position_by_index(&self, prime_idx: usize, nu: u32) -> usize {
        debug_assert!(nu >= 1 && nu <= self.nu[prime_idx]);
        self.offsets[prime_idx] + nu as usize - 1
    }
}

/// Depth-first product generation over `S(x, y)`; yields every smooth `n ≤ x`
/// exactly once, including `n = 1`, in no particular order.
#[derive(Debug, Clone)]
pub struct SmoothIter {
    x: u64,
    primes: Vec<u64>,
    // (n, smallest prime index allowed for further factors)
    stack: Vec<(u64, usize)>,
}

impl Iterator for SmoothIter {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let (n, i) = self.stack.pop()?;
        let limit = self.x / n;
        let end = i + self.primes[i..].partition_point(|&p| p <= limit);
        for j in (i..end).rev() {
            self.stack.push((n * self.primes[j], j));
        }
        Some(n)
    }
}

pub fn enumerate_smooth(bound: SmoothBound) -> SmoothIter {
    SmoothIter {
        x: bound.x,
        primes: sieve_primes(bound.y),
        stack: vec![(1, 0)],
    }
}

/// `S(x, y)` in ascending order, subject to the enumeration cap.
pub fn enumerate_smooth_sorted(bound: SmoothBound, limits: Limits) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for n in enumerate_smooth(bound) {
        if out.len() as u64 >= limits.enum_cap {
            return Err(Error::ResourceLimit {
                what: "smooth enumeration",
                cap: limits.enum_cap,
            });
        }
        out.push(n);
    }
    out.sort_unstable();
    Ok(out)
}

/// Visit every `n ∈ S(x, y)` together with its exponent vector over the
/// primes of `space` (`exps[i] = v_{p_i}(n)`). Returns `Ψ(x, y)`.
pub(crate) fn visit_factored<F>(space: &IndexSpace, limits: Limits, mut visit: F) -> Result<u64>
where
    F: FnMut(u64, &[u32]),
{
    fn rec<F: FnMut(u64, &[u32])>(
        n: u64,
        start: usize,
        x: u64,
        primes: &[u64],
        exps: &mut [u32],
        count: &mut u64,
        cap: u64,
        visit: &mut F,
    ) -> Result<()> {
        if *count >= cap {
            return Err(Error::ResourceLimit {
                what: "smooth enumeration",
                cap,
            });
        }
        *count += 1;
        visit(n, exps);
        for j in start..primes.len() {
            let Some(m) = n.checked_mul(primes[j]) else {
                break;
            };
            if m > x {
                break;
            }
            exps[j] += 1;
            rec(m, j, x, primes, exps, count, cap, visit)?;
            exps[j] -= 1;
        }
        Ok(())
    }

    let mut exps = vec![0u32; space.primes.len()];
    let mut count = 0u64;
    rec(
        1,
        0,
        space.bound.x,
        &space.primes,
        &mut exps,
        &mut count,
        limits.enum_cap,
        &mut visit,
    )?;
    Ok(count)
}

/// How `Ψ(x, y)` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiMethod {
    Enumerate,
    Recurrence,
}

/// `Ψ(x, y) = |S(x, y)|`.
pub fn psi(bound: SmoothBound, method: PsiMethod, limits: Limits) -> Result<u64> {
    match method {
        PsiMethod::Enumerate => {
            let mut count = 0u64;
            for _ in enumerate_smooth(bound) {
                if count >= limits.enum_cap {
                    return Err(Error::ResourceLimit {
                        what: "smooth enumeration",
                        cap: limits.enum_cap,
                    });
                }
                count += 1;
            }
            Ok(count)
        }
        PsiMethod::Recurrence => PsiCounter::new(bound, limits.memo_cap).psi(bound.x),
    }
}

/// Memoized Buchstab counter for `Ψ(·, y)` and its coprime variants.
///
/// The memo is owned by the counter; share nothing between threads, build one
/// counter per worker.
#[derive(Debug)]
pub struct PsiCounter {
    bound: SmoothBound,
    primes: Vec<u64>,
    memo: HashMap<(u64, u32), u64>,
    cap: u64,
}

impl PsiCounter {
    pub fn new(bound: SmoothBound, memo_cap: u64) -> Self {
        PsiCounter {
            bound,
            primes: sieve_primes(bound.y),
            memo: HashMap::new(),
            cap: memo_cap,
        }
    }

    pub fn bound(&self) -> SmoothBound {
        self.bound
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    /// `Ψ(n, y)` for any `n ≥ 0`.
    pub fn psi(&mut self, n: u64) -> Result<u64> {
        self.count(n, self.primes.len())
    }

    /// Count of `m ≤ n` whose prime factors all lie among the first `k` primes.
    ///
    /// Unrolls `Ψ(n, p_k) = Ψ(n, p_{k−1}) + Ψ(n/p_k, p_k)`: primes with
    /// `p² > n` contribute exactly `⌊n/p⌋` each, the rest recurse on
    /// `Ψ(n, p_j) = 1 + Σ_{i<j} Ψ(⌊n/p_i⌋, p_i)`, memoized on `(n, j)`.
    fn count(&mut self, n: u64, k: usize) -> Result<u64> {
        if n == 0 {
            return Ok(0);
        }
        let k = k.min(self.primes.partition_point(|&p| p <= n));
        if k == 0 {
            return Ok(1);
        }
        if k == 1 {
            return Ok(u64::from(n.ilog2()) + 1);
        }
        let j = k.min(
            self.primes
                .partition_point(|&p| u128::from(p) * u128::from(p) <= u128::from(n)),
        );
        let tail: u64 = self.primes[j..k].iter().map(|&p| n / p).sum();
        let head = match j {
            0 => 1,
            1 => u64::from(n.ilog2()) + 1,
            _ => {
                if let Some(&v) = self.memo.get(&(n, j as u32)) {
                    v
                } else {
                    let mut s = 1u64;
                    for i in 0..j {
                        let p = self.primes[i];
                        s += self.count(n / p, i + 1)?;
                    }
                    if self.memo.len() as u64 >= self.cap {
                        return Err(Error::ResourceLimit {
                            what: "psi recurrence memo",
                            cap: self.cap,
                        });
                    }
                    self.memo.insert((n, j as u32), s);
                    s
                }
            }
        };
        Ok(head + tail)
    }

    /// `Ψ_m(n, y)`, `m` the product of `excl`, by inclusion–exclusion over the
    /// subsets of the excluded primes that are `≤ y`.
    pub fn psi_coprime(&mut self, n: u64, excl: &[u64]) -> Result<u64> {
        validate_excluded(excl)?;
        let active: Vec<u64> = excl.iter().copied().filter(|&p| p <= self.bound.y).collect();
        let mut total: i128 = 0;
        for mask in 0u32..(1 << active.len()) {
            let mut d = 1u64;
            let mut overflow = false;
            for (b, &p) in active.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    match d.checked_mul(p) {
                        Some(v) if v <= n => d = v,
                        _ => {
                            overflow = true;
                            break;
                        }
                    }
                }
            }
            if overflow {
                continue;
            }
            let term = i128::from(self.psi(n / d)?);
            if mask.count_ones() % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
        }
        debug_assert!(total >= 0);
        Ok(total as u64)
    }

    /// `#{n ∈ S(x, y) : v_p(n) = ν}` = `Ψ_p(⌊x/p^ν⌋, y)`; zero when `p^ν > x`.
    pub fn single_count(&mut self, p: u64, nu: u32) -> Result<u64> {
        match p.checked_pow(nu) {
            Some(d) if d <= self.bound.x => self.psi_coprime(self.bound.x / d, &[p]),
            _ => Ok(0),
        }
    }

    /// `#{n ∈ S(x, y) : v_p(n) = ν, v_q(n) = μ}` = `Ψ_pq(⌊x/p^ν q^μ⌋, y)`.
    pub fn joint_count(&mut self, (p, nu): (u64, u32), (q, mu): (u64, u32)) -> Result<u64> {
        if p == q {
            return Err(Error::InvalidInput(format!("joint count needs p != q (got {p})")));
        }
        let d = p
            .checked_pow(nu)
            .and_then(|a| q.checked_pow(mu).and_then(|b| a.checked_mul(b)));
        match d {
            Some(d) if d <= self.bound.x => self.psi_coprime(self.bound.x / d, &[p, q]),
            _ => Ok(0),
        }
    }
}

fn validate_excluded(excl: &[u64]) -> Result<()> {
    if excl.len() > 8 {
        return Err(Error::InvalidInput(format!(
            "at most 8 excluded primes supported (got {})",
            excl.len()
        )));
    }
    for (i, &p) in excl.iter().enumerate() {
        if !is_prime(p) {
            return Err(Error::InvalidInput(format!("{p} is not prime")));
        }
        if excl[..i].contains(&p) {
            return Err(Error::InvalidInput(format!("prime {p} listed twice")));
        }
    }
    Ok(())
}

/// `Ψ_m(x, y)` for `m = ∏ excl`.
pub fn psi_coprime(bound: SmoothBound, excl: &[u64], limits: Limits) -> Result<u64> {
    PsiCounter::new(bound, limits.memo_cap).psi_coprime(bound.x, excl)
}

/// Number of `n ∈ S(x, y)` with `v_p(n) = ν` and `v_q(n) = μ`.
pub fn joint_count(
    bound: SmoothBound,
    a: (u64, u32),
    b: (u64, u32),
    limits: Limits,
) -> Result<u64> {
    PsiCounter::new(bound, limits.memo_cap).joint_count(a, b)
}

/// Number of `n ∈ S(x, y)` with `v_p(n) = ν`.
pub fn single_count(bound: SmoothBound, a: (u64, u32), limits: Limits) -> Result<u64> {
    PsiCounter::new(bound, limits.memo_cap).single_count(a.0, a.1)
}
