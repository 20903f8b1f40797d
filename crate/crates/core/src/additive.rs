//! Real additive functions as coefficient vectors over the index space.
//!
//! Coefficients exist only for `p^ν ≤ x`; values at larger prime powers are
//! implicitly zero. Complex-valued functions are not represented: the
//! constants are attained on real functions.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::smooth::IndexSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveFunction {
    space: Arc<IndexSpace>,
    coeffs: Vec<f64>,
}

impl AdditiveFunction {
    pub fn new(space: Arc<IndexSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients, got {}",
                space.dim(),
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("coefficient {i} is not finite")));
        }
        Ok(AdditiveFunction { space, coeffs })
    }

    pub fn zero(space: Arc<IndexSpace>) -> Self {
        let coeffs = vec![0.0; space.dim()];
        AdditiveFunction { space, coeffs }
    }

    /// Indicator of the single coordinate `(p, ν)`.
    pub fn delta(space: Arc<IndexSpace>, p: u64, nu: u32) -> Result<Self> {
        let pos = space
            .position(p, nu)
            .ok_or_else(|| Error::InvalidInput(format!("({p}, {nu}) is not in the index space")))?;
        let mut f = Self::zero(space);
        f.coeffs[pos] = 1.0;
        Ok(f)
    }

    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `f(p^ν)`; zero for `ν = 0` and outside the space.
    pub fn get(&self, p: u64, nu: u32) -> f64 {
        self.space.position(p, nu).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        AdditiveFunction {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// `f(n) = Σ_{p | n} f(p^{v_p(n)})` for `n ∈ S(x, y)`.
    pub fn eval(&self, n: u64) -> Result<f64> {
        let bound = self.space.bound();
        if n == 0 || n > bound.x() {
            return Err(Error::InvalidInput(format!("{n} is not in [1, {}]", bound.x())));
        }
        let mut rest = n;
        let mut total = 0.0;
        for (i, &p) in self.space.primes().iter().enumerate() {
            if rest == 1 {
                break;
            }
            let mut nu = 0;
            while rest.is_multiple_of(p) {
                rest /= p;
                nu += 1;
            }
            if nu > 0 {
                total += self.coeffs[self.space.position_by_index(i, nu)];
            }
        }
        if rest != 1 {
            return Err(Error::InvalidInput(format!(
                "{n} has a prime factor above y = {}",
                bound.y()
            )));
        }
        Ok(total)
    }

    /// Fixture text: one `p nu value` line per coordinate.
    pub fn to_fixture(&self) -> String {
        let mut out = String::new();
        for (e, c) in self.space.entries().iter().zip(&self.coeffs) {
            let _ = writeln!(out, "{} {} {}", e.p, e.nu, c);
        }
        out
    }

    /// Parse fixture text; coordinates not listed are zero. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_fixture(space: Arc<IndexSpace>, text: &str) -> Result<Self> {
        let mut f = Self::zero(space);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [p, nu, value] = fields[..] else {
                return Err(err(format!("expected `p nu value`, got {line:?}")));
            };
            let p: u64 = p.parse().map_err(|e| err(format!("bad prime {p:?}: {e}")))?;
            let nu: u32 = nu.parse().map_err(|e| err(format!("bad exponent {nu:?}: {e}")))?;
            let value: f64 = value
                .parse()
                .map_err(|e| err(format!("bad value {value:?}: {e}")))?;
            if !value.is_finite() {
                return Err(err(format!("value {value} is not finite")));
            }
            let pos = f
                .space
                .position(p, nu)
                .ok_or_else(|| err(format!("({p}, {nu}) is not in the index space")))?;
            f.coeffs[pos] = value;
        }
        Ok(f)
    }
}

/// `f(p^ν) = prime_values[i]` for every `ν`, `p` the `i`-th prime.
pub fn strongly_additive(space: Arc<IndexSpace>, prime_values: &[f64]) -> Result<AdditiveFunction> {
    if prime_values.len() != space.primes().len() {
        return Err(Error::InvalidInput(format!(
            "expected {} prime values, got {}",
            space.primes().len(),
            prime_values.len()
        )));
    }
    let coeffs = (0..space.primes().len())
        .flat_map(|i| std::iter::repeat_n(prime_values[i], space.block(i).len()))
        .collect();
    AdditiveFunction::new(space, coeffs)
}

/// `⌊log x / (π(y) log 2)⌋`, computed as `⌊ν_2 / π(y)⌋`.
pub fn witness_exponent(space: &IndexSpace) -> u32 {
    space.nu_max(0) / space.primes().len() as u32
}

/// Indicator of `2^{ν(y)}` with `ν(y) = witness_exponent`; its Rayleigh
/// quotient tends to `e (1 − 1/π(y))^{π(y)−1}` as `x → ∞`.
pub fn power_of_two_witness(space: Arc<IndexSpace>) -> Result<AdditiveFunction> {
    let nu = witness_exponent(&space);
    if nu == 0 {
        return Err(Error::InvalidInput(format!(
            "no witness: 2^{} < 2^pi(y) with pi(y) = {}",
            space.nu_max(0),
            space.primes().len()
        )));
    }
    AdditiveFunction::delta(space, 2, nu)
}

/// `e (1 − 1/h)^{h−1}`, equal to `e` for `h = 1`.
pub fn witness_limit_constant(h: usize) -> f64 {
    assert!(h >= 1);
    let h = h as f64;
    std::f64::consts::E * (1.0 - 1.0 / h).powf(h - 1.0)
}

/// `f(2) = 1`, every other coefficient zero.
pub fn two_indicator(space: Arc<IndexSpace>) -> AdditiveFunction {
    AdditiveFunction::delta(space, 2, 1).expect("(2, 1) is always in the space since x >= 2")
}

/// I.i.d. uniform coefficients in `[−scale, scale]`, deterministic in `seed`.
pub fn random_function(space: Arc<IndexSpace>, seed: u64, scale: f64) -> Result<AdditiveFunction> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidInput(format!("scale must be positive (got {scale})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..space.dim())
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    AdditiveFunction::new(space, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::{build_index_space, enumerate_smooth, SmoothBound};
    use proptest::prelude::*;

    fn space(x: u64, y: u64) -> Arc<IndexSpace> {
        Arc::new(build_index_space(SmoothBound::new(x, y).unwrap()))
    }

    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }

    #[test]
    fn delta_eval() {
        let f = AdditiveFunction::delta(space(100, 7), 2, 1).unwrap();
        assert_eq!(f.eval(2).unwrap(), 1.0);
        assert_eq!(f.eval(6).unwrap(), 1.0);
        assert_eq!(f.eval(4).unwrap(), 0.0);
        assert_eq!(f.eval(1).unwrap(), 0.0);
        assert!(f.eval(11).is_err());
        assert!(f.eval(101).is_err());
        assert!(f.eval(0).is_err());
        assert!(AdditiveFunction::delta(space(100, 7), 2, 7).is_err());
    }

    #[test]
    fn omega_from_strongly_additive() {
        let s = space(1000, 13);
        let ones = vec![1.0; s.primes().len()];
        let omega = strongly_additive(Arc::clone(&s), &ones).unwrap();
        assert_eq!(omega.eval(360).unwrap(), 3.0);
        assert_eq!(omega.eval(1).unwrap(), 0.0);
        assert_eq!(omega.eval(2 * 3 * 5 * 7).unwrap(), 4.0);
        assert!(strongly_additive(Arc::clone(&s), &[0.0; 6]).unwrap().is_zero());
        let mut vals = vec![0.0; s.primes().len()];
        vals[0] = 2.5;
        let f = strongly_additive(Arc::clone(&s), &vals).unwrap();
        for nu in 1..=9 {
            assert_eq!(f.get(2, nu), 2.5);
        }
        assert_eq!(f.get(3, 1), 0.0);
        assert!(strongly_additive(s, &[1.0]).is_err());
    }

    #[test]
    fn witnesses() {
        let s = space(1024, 3);
        assert_eq!(witness_exponent(&s), 5);
        let f = power_of_two_witness(Arc::clone(&s)).unwrap();
        assert_eq!(f.get(2, 5), 1.0);
        assert_eq!(f.coeffs().iter().filter(|&&c| c != 0.0).count(), 1);
        assert_eq!(witness_exponent(&space(1024, 2)), 10);
        // π(3) = 2 > ν_2(3) = 1
        assert!(power_of_two_witness(space(3, 3)).is_err());

        assert!((witness_limit_constant(1) - std::f64::consts::E).abs() < 1e-15);
        assert!((witness_limit_constant(2) - std::f64::consts::E / 2.0).abs() < 1e-15);
        assert!((witness_limit_constant(2) - 1.359_141).abs() < 1e-6);
        assert!(witness_limit_constant(100) > 1.0);

        let t = two_indicator(space(3, 2));
        assert_eq!(t.coeffs(), &[1.0]);
        let t = two_indicator(space(100, 5));
        assert_eq!(t.eval(2).unwrap(), 1.0);
        assert_eq!(t.eval(4).unwrap(), 0.0);
        assert_eq!(t.eval(3).unwrap(), 0.0);
    }

    #[test]
    fn random_functions() {
        let s = space(10_000, 7);
        let a = random_function(Arc::clone(&s), 7, 2.0).unwrap();
        let b = random_function(Arc::clone(&s), 7, 2.0).unwrap();
        let c = random_function(Arc::clone(&s), 8, 2.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.coeffs().iter().all(|c| c.abs() <= 2.0));
        assert!(random_function(Arc::clone(&s), 1, 0.0).is_err());
        assert!(random_function(s, 1, -1.0).is_err());
    }

    #[test]
    fn fixture_text() {
        let s = space(1000, 5);
        let f = random_function(Arc::clone(&s), 3, 1.0).unwrap();
        let text = f.to_fixture();
        assert_eq!(text.lines().count(), s.dim());
        assert_eq!(AdditiveFunction::from_fixture(Arc::clone(&s), &text).unwrap(), f);

        let g = AdditiveFunction::from_fixture(Arc::clone(&s), "# comment\n\n2 3 1.5\n5 1 -2\n").unwrap();
        assert_eq!(g.get(2, 3), 1.5);
        assert_eq!(g.get(5, 1), -2.0);
        assert_eq!(g.get(3, 1), 0.0);
        for bad in ["2 3", "2 3 x", "7 1 1.0", "2 0 1.0", "2 1 NaN"] {
            assert!(matches!(
                AdditiveFunction::from_fixture(Arc::clone(&s), bad),
                Err(Error::Parse { line: 1, .. })
            ));
        }
    }

    proptest! {
        #[test]
        fn additivity_on_coprime_pairs(seed in any::<u64>(), i in 0usize..400, j in 0usize..400) {
            let s = space(5000, 11);
            let set: Vec<u64> = {
                let mut v: Vec<u64> = enumerate_smooth(s.bound()).collect();
                v.sort_unstable();
                v
            };
            let f = random_function(Arc::clone(&s), seed, 3.0).unwrap();
            let m = set[i % set.len()];
            let n = set[j % set.len()];
            if gcd(m, n) == 1 && m * n <= 5000 {
                let lhs = f.eval(m * n).unwrap();
                let rhs = f.eval(m).unwrap() + f.eval(n).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }
}
