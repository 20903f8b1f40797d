//! The saddle point `α(x, y)` and the scalars derived from it.
//!
//! `α` is the unique positive root of
//!
//! ```text
//! φ(α) = Σ_{p ≤ y} log p / (p^α − 1) = log x
//! ```
//!
//! `φ` decreases strictly from `+∞` (at `0⁺`) to `0` (at `+∞`), so a bracket
//! always exists. The solver bisects down to a relative width of `1e-3` and then
//! switches to safeguarded Newton steps.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::kahan_sum;
use crate::smooth::{build_index_space, IndexSpace, SmoothBound};

pub const DEFAULT_TOL: f64 = 1e-13;
const BRACKET_LOW: f64 = 1e-9;
const NEWTON_SWITCH: f64 = 1e-3;
const MAX_ITER: usize = 400;
/// Relative slack, in ulps, allowed when checking the bias-weight inequalities
/// in floating point (equality cases such as `p^{ν_p} = x` are common).
const BOUND_SLACK: f64 = 8.0 * f64::EPSILON;

/// `(φ(α), φ'(α))` over the given primes.
pub fn phi(alpha: f64, primes: &[u64]) -> Result<(f64, f64)> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("phi needs alpha > 0 (got {alpha})")));
    }
    let value = kahan_sum(primes.iter().map(|&p| {
        let lp = (p as f64).ln();
        lp / (alpha * lp).exp_m1()
    }));
    let deriv = -kahan_sum(primes.iter().map(|&p| {
        let lp = (p as f64).ln();
        let d = (alpha * lp).exp_m1();
        lp * lp * (alpha * lp).exp() / (d * d)
    }));
    Ok((value, deriv))
}

/// Solve `φ(α) = log x` to relative residual `tol`.
pub fn solve_alpha(bound: SmoothBound, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    let primes = crate::smooth::sieve_primes(bound.y());
    solve_alpha_with(&primes, (bound.x() as f64).ln(), tol)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-15..=1e-6).contains(&tol) {
        return Err(Error::InvalidInput(format!("tol = {tol:e} outside [1e-15, 1e-6]")));
    }
    Ok(())
}

fn solve_alpha_with(primes: &[u64], target: f64, tol: f64) -> Result<f64> {
    let mut lo = BRACKET_LOW;
    if phi(lo, primes)?.0 <= target {
        return Err(Error::NonConvergence {
            method: "saddle bracket",
            iterations: 0,
            detail: format!("phi({lo:e}) does not exceed log x = {target}"),
        });
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while phi(hi, primes)?.0 >= target {
        hi *= 2.0;
        grow += 1;
        if grow > 64 {
            return Err(Error::NonConvergence {
                method: "saddle bracket",
                iterations: grow,
                detail: format!("phi still above log x at alpha = {hi:e}"),
            });
        }
    }

    let mut iterations = 0;
    while hi - lo > NEWTON_SWITCH * hi {
        let mid = 0.5 * (lo + hi);
        if phi(mid, primes)?.0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    let mut a = 0.5 * (lo + hi);
    while iterations < MAX_ITER {
        iterations += 1;
        let (v, d) = phi(a, primes)?;
        let r = v - target;
        if r.abs() <= tol * target {
            return Ok(a);
        }
        if r > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let mut next = a - r / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == a {
            break;
        }
        a = next;
    }
    Err(Error::NonConvergence {
        method: "saddle Newton",
        iterations,
        detail: format!("bracket [{lo:e}, {hi:e}]"),
    })
}

/// `g_m(s) = ∏_{p | m} (1 − p^{−s})` over a set of distinct primes.
pub fn g_factor(primes: &[u64], s: f64) -> f64 {
    primes
        .iter()
        .map(|&p| -(-s * (p as f64).ln()).exp_m1())
        .product()
}

/// Immutable bundle of every scalar derived from `(x, y)` and `α`.
#[derive(Debug, Clone)]
pub struct SaddleContext {
    space: Arc<IndexSpace>,
    alpha: f64,
    tol: f64,
    log_x: f64,
    log_p: Vec<f64>,
    /// `p^{−α}` per prime.
    p_alpha: Vec<f64>,
    g: Vec<f64>,
    w: Vec<f64>,
    /// `p^{−να}` per index-space entry.
    decay: Vec<f64>,
    sigma2: f64,
    h: usize,
    u: f64,
    ubar: f64,
}

/// Solve for `α` and precompute `g_p`, `w_p`, `σ₂`, `h`, `u`, `ū`.
///
/// Fails if any bias-weight inequality is violated, which can only happen
/// through a solver defect.
pub fn build_context(bound: SmoothBound, tol: f64) -> Result<SaddleContext> {
    check_tol(tol)?;
    let space = Arc::new(build_index_space(bound));
    let log_x = (bound.x() as f64).ln();
    let alpha = solve_alpha_with(space.primes(), log_x, tol)?;
    let ctx = SaddleContext::from_alpha(space, alpha, tol);
    let violations = check_bias_bounds(&ctx);
    if let Some(v) = violations.first() {
        return Err(Error::BoundViolation(v.to_string()));
    }
    Ok(ctx)
}

impl SaddleContext {
    fn from_alpha(space: Arc<IndexSpace>, alpha: f64, tol: f64) -> Self {
        let bound = space.bound();
        let log_x = (bound.x() as f64).ln();
        let log_p: Vec<f64> = space.primes().iter().map(|&p| (p as f64).ln()).collect();
        let p_alpha: Vec<f64> = log_p.iter().map(|&lp| (-alpha * lp).exp()).collect();
        let g: Vec<f64> = log_p.iter().map(|&lp| -(-alpha * lp).exp_m1()).collect();
        let w: Vec<f64> = log_p
            .iter()
            .zip(space.nu_table())
            .map(|(&lp, &nu)| (-(nu as f64) * alpha * lp).exp())
            .collect();
        let decay = space
            .entries()
            .iter()
            .map(|e| (-(e.nu as f64) * alpha * (e.p as f64).ln()).exp())
            .collect();
        let sigma2 = kahan_sum(log_p.iter().map(|&lp| {
            let d = (alpha * lp).exp_m1();
            lp * lp * (alpha * lp).exp() / (d * d)
        }));
        let h = space.primes().len();
        let u = log_x / (bound.y() as f64).ln();
        SaddleContext {
            space,
            alpha,
            tol,
            log_x,
            log_p,
            p_alpha,
            g,
            w,
            decay,
            sigma2,
            h,
            u,
            ubar: u.min(h as f64),
        }
    }

    /// Copy with `w_p` of one prime multiplied by `factor`, bypassing the
    /// build-time checks. Used to exercise the bound checker.
    #[doc(hidden)]
    pub fn with_scaled_weight(&self, p: u64, factor: f64) -> Self {
        let mut out = self.clone();
        if let Some(i) = self.space.prime_index(p) {
            out.w[i] *= factor;
        }
        out
    }

    pub fn bound(&self) -> SmoothBound {
        self.space.bound()
    }

    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.space
    }

    pub fn primes(&self) -> &[u64] {
        self.space.primes()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn log_x(&self) -> f64 {
        self.log_x
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `π(y)`.
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn ubar(&self) -> f64 {
        self.ubar
    }

    pub fn nu(&self, prime_idx: usize) -> u32 {
        self.space.nu_max(prime_idx)
    }

    /// `g_p(α)` for the `i`-th prime.
    pub fn g(&self, prime_idx: usize) -> f64 {
        self.g[prime_idx]
    }

    /// `w_p` for the `i`-th prime.
    pub fn w(&self, prime_idx: usize) -> f64 {
        self.w[prime_idx]
    }

    /// `p^{−α}` for the `i`-th prime.
    pub fn p_alpha(&self, prime_idx: usize) -> f64 {
        self.p_alpha[prime_idx]
    }

    pub fn log_p(&self, prime_idx: usize) -> f64 {
        self.log_p[prime_idx]
    }

    /// `p^{−να}` for the `i`-th prime and any `ν ≥ 0`.
    pub fn decay(&self, prime_idx: usize, nu: u32) -> f64 {
        if nu == 0 {
            1.0
        } else {
            self.decay[self.space.position_by_index(prime_idx, nu)]
        }
    }

    /// `p^{−να}` per index-space coordinate.
    pub fn decay_table(&self) -> &[f64] {
        &self.decay
    }

    fn index_of(&self, p: u64) -> Result<usize> {
        self.space
            .prime_index(p)
            .ok_or_else(|| Error::InvalidInput(format!("{p} is not a prime <= y = {}", self.bound().y())))
    }
}

/// `w_p = p^{−α ν_p}`.
pub fn bias_weight(ctx: &SaddleContext, p: u64) -> Result<f64> {
    Ok(ctx.w(ctx.index_of(p)?))
}

/// `σ₂ = |φ'(α)|`.
pub fn sigma2(ctx: &SaddleContext) -> f64 {
    ctx.sigma2
}

/// `v_k(α) = log k − Σ_{p | k} log p / (p^α − 1)` for `k` given by its prime
/// powers `(p, ν)`; repeated primes are merged.
pub fn v_value(k: &[(u64, u32)], ctx: &SaddleContext) -> f64 {
    let mut parts: Vec<(u64, u32)> = k.to_vec();
    parts.sort_unstable();
    let mut merged: Vec<(u64, u32)> = Vec::with_capacity(parts.len());
    for (p, nu) in parts {
        match merged.last_mut() {
            Some(last) if last.0 == p => last.1 += nu,
            _ => merged.push((p, nu)),
        }
    }
    let alpha = ctx.alpha;
    kahan_sum(merged.iter().filter(|&&(_, nu)| nu > 0).map(|&(p, nu)| {
        let lp = (p as f64).ln();
        nu as f64 * lp - lp / (alpha * lp).exp_m1()
    }))
}

/// `v_{p^ν}(α)` from a prime index.
pub(crate) fn v_prime_power(ctx: &SaddleContext, prime_idx: usize, nu: u32) -> f64 {
    if nu == 0 {
        return 0.0;
    }
    let lp = ctx.log_p[prime_idx];
    nu as f64 * lp - lp / (ctx.alpha * lp).exp_m1()
}

/// `t_p(ν) = ν log p / log x`.
pub fn t_value(ctx: &SaddleContext, p: u64, nu: u32) -> Result<f64> {
    match p.checked_pow(nu) {
        Some(d) if d <= ctx.bound().x() => Ok(nu as f64 * (p as f64).ln() / ctx.log_x),
        _ => Err(Error::InvalidInput(format!("{p}^{nu} exceeds x = {}", ctx.bound().x()))),
    }
}

/// One failed bias-weight inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub p: u64,
    pub inequality: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl std::fmt::Display for BoundViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} fails at p = {}: {:e} > {:e}",
            self.inequality, self.p, self.lhs, self.rhs
        )
    }
}

/// Check `x^{−α} ≤ w_p ≤ min{(y/x)^α, x^{−α/2}}` and
/// `(xy)^{−α} ≤ w_p/p^α ≤ x^{−α}` for every prime, returning the failures.
pub fn check_bias_bounds(ctx: &SaddleContext) -> Vec<BoundViolation> {
    let a = ctx.alpha;
    let lx = ctx.log_x;
    let ly = (ctx.bound().y() as f64).ln();
    let x_a = (-a * lx).exp();
    let yx_a = (a * (ly - lx)).exp();
    let x_half = (-0.5 * a * lx).exp();
    let xy_a = (-a * (lx + ly)).exp();
    let mut out = Vec::new();
    for (i, &p) in ctx.primes().iter().enumerate() {
        let w = ctx.w[i];
        let wp = w * ctx.p_alpha[i];
        let checks: [(&'static str, f64, f64); 5] = [
            ("x^-alpha <= w_p", x_a, w),
            ("w_p <= (y/x)^alpha", w, yx_a),
            ("w_p <= x^(-alpha/2)", w, x_half),
            ("(xy)^-alpha <= w_p/p^alpha", xy_a, wp),
            ("w_p/p^alpha <= x^-alpha", wp, x_a),
        ];
        for (inequality, lhs, rhs) in checks {
            if !(lhs <= rhs * (1.0 + BOUND_SLACK)) {
                out.push(BoundViolation { p, inequality, lhs, rhs });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(x: u64, y: u64) -> SaddleContext {
        build_context(SmoothBound::new(x, y).unwrap(), DEFAULT_TOL).unwrap()
    }

    #[test]
    fn phi_single_prime() {
        let (v, d) = phi(1.0, &[2]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(d < 0.0);
        let (v, _) = phi(0.3, &[2]).unwrap();
        assert!((v - 2f64.ln() / (2f64.powf(0.3) - 1.0)).abs() < 1e-13);
        assert!(phi(0.0, &[2]).is_err());
        assert!(phi(-1.0, &[2]).is_err());
    }

    #[test]
    fn phi_is_decreasing() {
        let primes = crate::smooth::sieve_primes(50);
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let (v, d) = phi(k as f64 * 0.01, &primes).unwrap();
            assert!(v < last);
            assert!(d < 0.0);
            last = v;
        }
    }

    #[test]
    fn phi_derivative_matches_finite_difference() {
        let primes = crate::smooth::sieve_primes(30);
        for a in [0.2, 0.5, 0.9] {
            let h = 1e-6;
            let fd = (phi(a + h, &primes).unwrap().0 - phi(a - h, &primes).unwrap().0) / (2.0 * h);
            let d = phi(a, &primes).unwrap().1;
            assert!((fd - d).abs() < 1e-6 * d.abs());
        }
    }

    #[test]
    fn alpha_closed_forms() {
        // y = 2: 2^α = 1 + log 2 / log x
        for x in [3u64, 256, 1000, 1 << 40] {
            let a = solve_alpha(SmoothBound::new(x, 2).unwrap(), DEFAULT_TOL).unwrap();
            let exact = (1.0 + 2f64.ln() / (x as f64).ln()).log2();
            assert!((a - exact).abs() < 1e-12 * exact, "x={x}");
        }
        let a = solve_alpha(SmoothBound::new(256, 2).unwrap(), DEFAULT_TOL).unwrap();
        assert!((a - (9.0f64 / 8.0).log2()).abs() < 1e-13);
        assert!((a - 0.169_925_0).abs() < 1e-7);
        let a = solve_alpha(SmoothBound::new(3, 2).unwrap(), DEFAULT_TOL).unwrap();
        assert!((a - 0.705_694_6).abs() < 1e-6);
    }

    #[test]
    fn alpha_residual_contract() {
        for (x, y) in [(1000u64, 5u64), (10_000, 7), (100_000, 13), (1_000_000, 31), (1 << 40, 101)] {
            let b = SmoothBound::new(x, y).unwrap();
            for tol in [1e-6, 1e-10, DEFAULT_TOL] {
                let a = solve_alpha(b, tol).unwrap();
                let primes = crate::smooth::sieve_primes(y);
                let lx = (x as f64).ln();
                assert!((phi(a, &primes).unwrap().0 - lx).abs() <= tol * lx);
            }
        }
        assert!(solve_alpha(SmoothBound::new(10, 2).unwrap(), 1e-3).is_err());
        assert!(solve_alpha(SmoothBound::new(10, 2).unwrap(), 1e-16).is_err());
    }

    #[test]
    fn alpha_is_deterministic_and_monotone() {
        let b = SmoothBound::new(123_456, 17).unwrap();
        assert_eq!(
            solve_alpha(b, DEFAULT_TOL).unwrap().to_bits(),
            solve_alpha(b, DEFAULT_TOL).unwrap().to_bits()
        );
        let ys = [2u64, 3, 5, 7, 13, 31, 97];
        let xs = [1_000u64, 10_000, 100_000, 1_000_000, 10_000_000];
        for &y in &ys {
            let mut last = f64::INFINITY;
            for &x in &xs {
                let a = solve_alpha(SmoothBound::new(x, y).unwrap(), DEFAULT_TOL).unwrap();
                assert!(a < last);
                last = a;
            }
        }
        for &x in &xs {
            let mut last = 0.0;
            for &y in &ys {
                let a = solve_alpha(SmoothBound::new(x, y).unwrap(), DEFAULT_TOL).unwrap();
                assert!(a > last);
                last = a;
            }
        }
    }

    #[test]
    fn g_factor_values() {
        assert_eq!(g_factor(&[], 0.7), 1.0);
        assert!((g_factor(&[2], 1.0) - 0.5).abs() < 1e-16);
        assert!((g_factor(&[2, 3], 1.0) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn dim_one_context() {
        let c = ctx(3, 2);
        assert_eq!(c.h(), 1);
        assert!((c.u() - 3f64.ln() / 2f64.ln()).abs() < 1e-15);
        assert_eq!(c.ubar(), 1.0);
        let w = bias_weight(&c, 2).unwrap();
        assert!((w - 2f64.powf(-c.alpha())).abs() < 1e-15);
        assert!((w - 0.613_147_19).abs() < 1e-7);
        assert!(bias_weight(&c, 3).is_err());
    }

    #[test]
    fn y_two_closed_forms() {
        let c = ctx(256, 2);
        // w_2 = (9/8)^{-8}
        assert!((bias_weight(&c, 2).unwrap() - (9.0f64 / 8.0).powi(-8)).abs() < 1e-13);
        // σ₂ = 72 (log 2)²
        let s = 72.0 * 2f64.ln().powi(2);
        assert!((sigma2(&c) - s).abs() < 1e-10 * s);
        assert!((sigma2(&c) - 34.5926).abs() < 1e-4);
        let (_, d) = phi(c.alpha(), c.primes()).unwrap();
        assert!((sigma2(&c) + d).abs() < 1e-12 * s);
    }

    #[test]
    fn derived_scalars() {
        let c = ctx(1024, 3);
        assert_eq!(c.h(), 2);
        assert!((c.u() - 10.0 * 2f64.ln() / 3f64.ln()).abs() < 1e-14);
        assert_eq!(c.ubar(), 2.0);
        assert!(c.ubar() <= c.h() as f64);
    }

    #[test]
    fn v_and_t_values() {
        let c = ctx(10_000, 7);
        assert_eq!(v_value(&[], &c), 0.0);
        let a = c.alpha();
        let vp = |p: f64, nu: f64| nu * p.ln() - p.ln() / (p.powf(a) - 1.0);
        assert!((v_value(&[(3, 2)], &c) - vp(3.0, 2.0)).abs() < 1e-12);
        let sum = v_value(&[(2, 3)], &c) + v_value(&[(5, 1)], &c);
        assert!((v_value(&[(2, 3), (5, 1)], &c) - sum).abs() < 1e-12);
        assert!((v_value(&[(2, 1), (2, 2)], &c) - v_value(&[(2, 3)], &c)).abs() < 1e-14);

        assert_eq!(t_value(&c, 2, 0).unwrap(), 0.0);
        assert!((t_value(&c, 2, 13).unwrap() - 13.0 * 2f64.ln() / 10_000f64.ln()).abs() < 1e-15);
        assert!(t_value(&c, 2, 14).is_err());
        let c8 = ctx(8, 2);
        assert!((t_value(&c8, 2, 3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bias_bounds_over_a_grid() {
        for x in [2u64, 3, 8, 81, 1000, 65_536, 1_000_000, 1 << 40] {
            for y in [2u64, 3, 5, 11, 31, 101] {
                if y > x {
                    continue;
                }
                let c = ctx(x, y);
                assert!(check_bias_bounds(&c).is_empty(), "x={x} y={y}");
                for i in 0..c.h() {
                    assert!(c.w(i) > 0.0 && c.w(i) < 1.0);
                    assert!(c.g(i) > 0.0 && c.g(i) < 1.0);
                }
            }
        }
    }

    #[test]
    fn corrupted_weight_is_flagged() {
        let c = ctx(10_000, 7).with_scaled_weight(3, 0.5);
        let v = check_bias_bounds(&c);
        assert!(v.iter().any(|v| v.p == 3 && v.inequality == "x^-alpha <= w_p"));
        let c = ctx(10_000, 7).with_scaled_weight(2, 3.0);
        assert!(check_bias_bounds(&c).iter().any(|v| v.p == 2));
    }

    #[test]
    fn soft_order_checks() {
        for (x, y) in [(1000u64, 5u64), (10_000, 7), (100_000, 13), (1_000_000, 31), (10_000_000, 23)] {
            let c = ctx(x, y);
            let ratio = c.sigma2() * c.ubar() / (c.u() * (y as f64).ln()).powi(2);
            assert!((0.02..=50.0).contains(&ratio), "x={x} y={y} ratio={ratio}");
            assert!(c.alpha() * c.log_x() / c.ubar() >= 0.05);
        }
    }
}
