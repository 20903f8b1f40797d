//! Semi-empirical variances and the quadratic forms behind them.
//!
//! For a coefficient vector `c` over the index space,
//!
//! ```text
//! V_f  = cᵀ Q c,   Q = S/Ψ − m Lᵀ − L mᵀ + L Lᵀ
//! V(Z) = cᵀ M c,   M = ⊕_p (diag(L_p) − L_p L_pᵀ)
//! ```
//!
//! where `S` is the matrix of joint valuation counts over `S(x, y)`,
//! `m = diag(S)/Ψ` and `L` the model weight vector. The counts come either
//! from enumerating `S(x, y)` or from the coprime counting functions
//! `Ψ_p`, `Ψ_pq`; both paths fill the same [`JointCounts`] table.

use std::sync::Arc;

use crate::additive::AdditiveFunction;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SymMatrix};
use crate::model::{f_table, model_moments, weight_vector, xi_moments, Model};
use crate::numeric::{kahan_sum, PairwiseSum};
use crate::saddle::{v_prime_power, SaddleContext};
use crate::smooth::{visit_factored, IndexSpace, Limits, PsiCounter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyPath {
    Enumeration,
    Counting,
}

impl std::str::FromStr for AssemblyPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enumeration" => Ok(AssemblyPath::Enumeration),
            "counting" => Ok(AssemblyPath::Counting),
            other => Err(Error::InvalidInput(format!("unknown assembly path {other:?}"))),
        }
    }
}

/// Joint valuation counts over the extended coordinates `(p, ν)`,
/// `0 ≤ ν ≤ ν_p`.
///
/// Entry `((p, ν), (q, μ))` for `p ≠ q` is `Ψ_pq(x/p^ν q^μ, y)`; the diagonal
/// holds `Ψ_p(x/p^ν, y)`; off-diagonal entries inside one prime block are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCounts {
    space: Arc<IndexSpace>,
    psi: u64,
    offsets: Vec<usize>,
    dim: usize,
    counts: Vec<u64>,
}

impl JointCounts {
    fn empty(space: Arc<IndexSpace>) -> Self {
        let mut offsets = Vec::with_capacity(space.primes().len() + 1);
        let mut dim = 0;
        for i in 0..space.primes().len() {
            offsets.push(dim);
            dim += space.nu_max(i) as usize + 1;
        }
        offsets.push(dim);
        JointCounts {
            space,
            psi: 0,
            offsets,
            dim,
            counts: vec![0; dim * dim],
        }
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    pub fn space(&self) -> &Arc<IndexSpace> {
        &self.space
    }

    #[inline]
    fn ext(&self, prime_idx: usize, nu: u32) -> usize {
        self.offsets[prime_idx] + nu as usize
    }

    /// `Ψ_p(x/p^ν, y)` for the `i`-th prime.
    pub fn single(&self, prime_idx: usize, nu: u32) -> u64 {
        let k = self.ext(prime_idx, nu);
        self.counts[k * self.dim + k]
    }

    /// `Ψ_pq(x/p^ν q^μ, y)` for distinct prime indices.
    pub fn pair(&self, i: usize, nu: u32, j: usize, mu: u32) -> u64 {
        debug_assert_ne!(i, j);
        self.counts[self.ext(i, nu) * self.dim + self.ext(j, mu)]
    }
}

/// Fill the joint count table by the chosen path.
pub fn joint_counts(space: &Arc<IndexSpace>, path: AssemblyPath, limits: Limits) -> Result<JointCounts> {
    let mut jc = JointCounts::empty(Arc::clone(space));
    let dim = jc.dim;
    let h = space.primes().len();
    match path {
        AssemblyPath::Enumeration => {
            let offsets = jc.offsets.clone();
            let mut ext = vec![0usize; h];
            let counts = &mut jc.counts;
            let psi = visit_factored(space, limits, |_, exps| {
                for i in 0..h {
                    ext[i] = offsets[i] + exps[i] as usize;
                }
                for a in 0..h {
                    let row = ext[a] * dim;
                    for &col in &ext[a..] {
                        counts[row + col] += 1;
                    }
                }
            })?;
            jc.psi = psi;
            for r in 0..dim {
                for c in 0..r {
                    jc.counts[r * dim + c] = jc.counts[c * dim + r];
                }
            }
        }
        AssemblyPath::Counting => {
            let mut counter = PsiCounter::new(space.bound(), limits.memo_cap);
            jc.psi = counter.psi(space.bound().x())?;
            let primes = space.primes();
            for i in 0..h {
                for nu in 0..=space.nu_max(i) {
                    let a = jc.ext(i, nu);
                    jc.counts[a * dim + a] = counter.single_count(primes[i], nu)?;
                    for j in i + 1..h {
                        for mu in 0..=space.nu_max(j) {
                            let b = jc.ext(j, mu);
                            let v = counter.joint_count((primes[i], nu), (primes[j], mu))?;
                            jc.counts[a * dim + b] = v;
                            jc.counts[b * dim + a] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(jc)
}

/// `(Q, M)` with `V = cᵀQc` and `V(Z) = cᵀMc`.
#[derive(Debug, Clone)]
pub struct FormPair {
    pub space: Arc<IndexSpace>,
    pub model: Model,
    pub q: SymMatrix,
    pub m: SymMatrix,
}

impl FormPair {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }
}

/// Assemble the forms, counting by `path`. `M` is checked positive definite.
pub fn assemble_forms(ctx: &SaddleContext, model: Model, path: AssemblyPath, limits: Limits) -> Result<FormPair> {
    let jc = joint_counts(ctx.space(), path, limits)?;
    forms_from_counts(ctx, model, &jc)
}

pub fn forms_from_counts(ctx: &SaddleContext, model: Model, jc: &JointCounts) -> Result<FormPair> {
    if jc.space.bound() != ctx.bound() {
        return Err(Error::InvalidInput("count table and context differ".into()));
    }
    let space = ctx.space();
    let n = space.dim();
    let psi = jc.psi as f64;
    let l = weight_vector(ctx, model);

    // ext index of every proper coordinate, and its prime index
    let mut ext = Vec::with_capacity(n);
    let mut owner = Vec::with_capacity(n);
    for i in 0..space.primes().len() {
        for nu in 1..=space.nu_max(i) {
            ext.push(jc.ext(i, nu));
            owner.push(i);
        }
    }
    let mean: Vec<f64> = ext.iter().map(|&k| jc.counts[k * jc.dim + k] as f64 / psi).collect();

    let mut q = SymMatrix::zeros(n);
    for a in 0..n {
        for b in a..n {
            let s = jc.counts[ext[a] * jc.dim + ext[b]] as f64 / psi;
            let v = s - mean[a] * l[b] - l[a] * mean[b] + l[a] * l[b];
            q.set(a, b, v);
            q.set(b, a, v);
        }
    }

    let mut m = SymMatrix::zeros(n);
    for a in 0..n {
        for b in a..n {
            if owner[a] != owner[b] {
                continue;
            }
            let v = if a == b { l[a] - l[a] * l[a] } else { -l[a] * l[b] };
            m.set(a, b, v);
            m.set(b, a, v);
        }
    }
    Cholesky::factor(&m)?;
    Ok(FormPair {
        space: Arc::clone(space),
        model,
        q,
        m,
    })
}

/// `(1/Ψ) Σ_{n ∈ S(x,y)} (f(n) − E Z)²` by enumeration, pairwise-summed.
pub fn empirical_variance(f: &AdditiveFunction, ctx: &SaddleContext, model: Model, limits: Limits) -> Result<f64> {
    let ez = model_moments(f, ctx, model)?.mean;
    let space = ctx.space();
    let coeffs = f.coeffs();
    let mut acc = PairwiseSum::new();
    let psi = visit_factored(space, limits, |_, exps| {
        let mut value = 0.0;
        for (i, &e) in exps.iter().enumerate() {
            if e > 0 {
                value += coeffs[space.position_by_index(i, e)];
            }
        }
        let d = value - ez;
        acc.add(d * d);
    })?;
    Ok(acc.total() / psi as f64)
}

/// `(A, B)` with `A + B = V_f*`: `A` collects the same-prime terms
/// `F_p(ν)² Ψ_p(x/p^ν)/Ψ`, `B` the cross terms `F_p(ν) F_q(μ) Ψ_pq(x/p^ν q^μ)/Ψ`.
pub fn ab_decomposition(f: &AdditiveFunction, ctx: &SaddleContext, jc: &JointCounts) -> Result<(f64, f64)> {
    let tables = f_tables(f, ctx)?;
    let psi = jc.psi as f64;
    let h = ctx.primes().len();
    let a = kahan_sum((0..h).flat_map(|i| {
        let t = &tables[i];
        (0..t.len()).map(move |nu| t[nu] * t[nu] * jc.single(i, nu as u32) as f64 / psi)
    }));
    let mut b = Vec::new();
    for i in 0..h {
        for j in 0..h {
            if i == j {
                continue;
            }
            for (nu, fp) in tables[i].iter().enumerate() {
                for (mu, fq) in tables[j].iter().enumerate() {
                    let c = jc.pair(i, nu as u32, j, mu as u32);
                    if c > 0 {
                        b.push(fp * fq * c as f64 / psi);
                    }
                }
            }
        }
    }
    Ok((a, kahan_sum(b)))
}

fn f_tables(f: &AdditiveFunction, ctx: &SaddleContext) -> Result<Vec<Vec<f64>>> {
    ctx.primes().iter().map(|&p| f_table(f, p, ctx)).collect()
}

/// `y_p = (Σ_{0≤ν≤ν_p} g_p F_p(ν)²/p^{να})^{1/2}`, bounded by `√V(ξ_p*)`.
pub fn y_value(f: &AdditiveFunction, p: u64, ctx: &SaddleContext) -> Result<f64> {
    let table = f_table(f, p, ctx)?;
    let i = ctx.space().prime_index(p).expect("f_table validated p");
    let s = kahan_sum(
        table
            .iter()
            .enumerate()
            .map(|(nu, fv)| ctx.g(i) * fv * fv * ctx.decay(i, nu as u32)),
    );
    Ok(s.sqrt())
}

/// `z_p(j) = (Σ_{0≤ν≤ν_p} g_p t_p(ν)^{2j}/p^{να})^{1/2}` for `0 ≤ j ≤ 5`.
pub fn z_value(ctx: &SaddleContext, p: u64, j: u32) -> Result<f64> {
    if j > 5 {
        return Err(Error::InvalidInput(format!("j = {j} outside 0..=5")));
    }
    let i = ctx
        .space()
        .prime_index(p)
        .ok_or_else(|| Error::InvalidInput(format!("{p} is not a prime <= y")))?;
    let lp = ctx.log_p(i);
    let s = kahan_sum((0..=ctx.nu(i)).map(|nu| {
        let t = nu as f64 * lp / ctx.log_x();
        ctx.g(i) * t.powi(2 * j as i32) * ctx.decay(i, nu)
    }));
    Ok(s.sqrt())
}

/// One row of the two-prime count diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairResidual {
    pub p: u64,
    pub nu: u32,
    pub q: u64,
    pub mu: u32,
    /// `Ψ_pq(x/p^ν q^μ, y)/Ψ(x, y)`.
    pub lhs: f64,
    /// The three main terms of the two-prime local estimate.
    pub main: f64,
    /// `|lhs − main| / (g_pq(α) p^{−να} q^{−μα})`.
    pub residual: f64,
    /// `1/ū² + ū²(t_p + t_q)⁴ + ū^{5/2}(t_p + t_q)⁵`.
    pub r: f64,
}

/// Compare `Ψ_pq(x/p^ν q^μ, y)/Ψ` with
/// `g_pq/(p^{να}q^{μα})·(1 − v_{p^ν} v_{q^μ}/σ₂) + g_p Ψ_q(x/q^μ)/(p^{να}Ψ) + g_q Ψ_p(x/p^ν)/(q^{μα}Ψ)`.
/// No bound is asserted; the implied constant is unknown.
pub fn pair_count_residual(
    ctx: &SaddleContext,
    jc: &JointCounts,
    (p, nu): (u64, u32),
    (q, mu): (u64, u32),
) -> Result<PairResidual> {
    let space = ctx.space();
    let (Some(i), Some(j)) = (space.prime_index(p), space.prime_index(q)) else {
        return Err(Error::InvalidInput(format!("{p} and {q} must be primes <= y")));
    };
    if i == j {
        return Err(Error::InvalidInput("p and q must differ".into()));
    }
    let fits = p
        .checked_pow(nu)
        .and_then(|a| q.checked_pow(mu).and_then(|b| a.checked_mul(b)))
        .is_some_and(|d| d <= ctx.bound().x());
    if !fits {
        return Err(Error::InvalidInput(format!("{p}^{nu} {q}^{mu} exceeds x")));
    }
    let psi = jc.psi as f64;
    let dp = ctx.decay(i, nu);
    let dq = ctx.decay(j, mu);
    let scale = ctx.g(i) * ctx.g(j) * dp * dq;
    let lhs = jc.pair(i, nu, j, mu) as f64 / psi;
    let vv = v_prime_power(ctx, i, nu) * v_prime_power(ctx, j, mu);
    let main = scale * (1.0 - vv / ctx.sigma2())
        + ctx.g(i) * dp * jc.single(j, mu) as f64 / psi
        + ctx.g(j) * dq * jc.single(i, nu) as f64 / psi;
    let ub = ctx.ubar();
    let t = (nu as f64 * ctx.log_p(i) + mu as f64 * ctx.log_p(j)) / ctx.log_x();
    let r = 1.0 / (ub * ub) + ub * ub * t.powi(4) + ub.powf(2.5) * t.powi(5);
    Ok(PairResidual {
        p,
        nu,
        q,
        mu,
        lhs,
        main,
        residual: (lhs - main).abs() / scale,
        r,
    })
}

/// [`pair_count_residual`] over every `p < q ≤ y`, `ν, μ ≥ 0`, `p^ν q^μ ≤ x`.
pub fn pair_residual_table(ctx: &SaddleContext, jc: &JointCounts) -> Result<Vec<PairResidual>> {
    let primes = ctx.primes();
    let x = ctx.bound().x();
    let mut out = Vec::new();
    for i in 0..primes.len() {
        for j in i + 1..primes.len() {
            for nu in 0..=ctx.nu(i) {
                let a = primes[i].pow(nu);
                for mu in 0..=ctx.nu(j) {
                    match primes[j].checked_pow(mu).and_then(|b| a.checked_mul(b)) {
                        Some(d) if d <= x => {}
                        _ => break,
                    }
                    out.push(pair_count_residual(ctx, jc, (primes[i], nu), (primes[j], mu))?);
                }
            }
        }
    }
    Ok(out)
}

/// `Ψ_p(x/p^ν, y)/Ψ(x, y)` against `g_p(α)/p^{να}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub p: u64,
    pub nu: u32,
    pub empirical: f64,
    pub model: f64,
    pub ratio: f64,
}

pub fn local_ratio_table(ctx: &SaddleContext, jc: &JointCounts) -> Vec<RatioRow> {
    let psi = jc.psi as f64;
    let mut out = Vec::new();
    for (i, &p) in ctx.primes().iter().enumerate() {
        for nu in 0..=ctx.nu(i) {
            let empirical = jc.single(i, nu) as f64 / psi;
            let model = ctx.g(i) * ctx.decay(i, nu);
            out.push(RatioRow {
                p,
                nu,
                empirical,
                model,
                ratio: empirical / model,
            });
        }
    }
    out
}

/// Pieces of the cross term `B` next to the shapes of their asymptotic
/// bounds. Reported only; none of these are asserted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTermReport {
    pub a: f64,
    pub b: f64,
    pub model_variance: f64,
    /// Part of `B` with `p^ν q^μ > x^{1/(10√ū)}`.
    pub b_far: f64,
    /// `V(Z*) e^{−√ū/60}`.
    pub far_shape: f64,
    /// `−(1/σ₂) Σ_{p≠q} S_q S_p`, `S_p = Σ_ν g_p F_p(ν) v_{p^ν}/p^{να}`.
    pub c_quantity: f64,
    /// `(1/σ₂) Σ_p S_p²`, an upper bound for `c_quantity`.
    pub c_upper: f64,
    /// `V(Z*)/ū`.
    pub c_shape: f64,
    /// `h V(Z*)/ū²`.
    pub remainder_shape: f64,
    /// `V(Z*) e^{−ū/3}`.
    pub main_shape: f64,
}

pub fn cross_term_report(f: &AdditiveFunction, ctx: &SaddleContext, jc: &JointCounts) -> Result<CrossTermReport> {
    let (a, b) = ab_decomposition(f, ctx, jc)?;
    let tables = f_tables(f, ctx)?;
    let var = model_moments(f, ctx, Model::Unbiased)?.variance;
    let ub = ctx.ubar();
    let psi = jc.psi as f64;
    let cutoff = ctx.log_x() / (10.0 * ub.sqrt());
    let h = ctx.primes().len();
    let mut far = Vec::new();
    for i in 0..h {
        for j in 0..h {
            if i == j {
                continue;
            }
            for (nu, fp) in tables[i].iter().enumerate() {
                for (mu, fq) in tables[j].iter().enumerate() {
                    let log_d = nu as f64 * ctx.log_p(i) + mu as f64 * ctx.log_p(j);
                    let c = jc.pair(i, nu as u32, j, mu as u32);
                    if log_d > cutoff && c > 0 {
                        far.push(fp * fq * c as f64 / psi);
                    }
                }
            }
        }
    }
    let s: Vec<f64> = (0..h)
        .map(|i| {
            kahan_sum(tables[i].iter().enumerate().map(|(nu, fv)| {
                ctx.g(i) * fv * v_prime_power(ctx, i, nu as u32) * ctx.decay(i, nu as u32)
            }))
        })
        .collect();
    let total: f64 = s.iter().sum();
    let squares: f64 = s.iter().map(|v| v * v).sum();
    // Σ_{p≠q} S_p S_q = (Σ S)² − Σ S²
    let c_quantity = -(total * total - squares) / ctx.sigma2();
    Ok(CrossTermReport {
        a,
        b,
        model_variance: var,
        b_far: kahan_sum(far),
        far_shape: var * (-ub.sqrt() / 60.0).exp(),
        c_quantity,
        c_upper: squares / ctx.sigma2(),
        c_shape: var / ub,
        remainder_shape: h as f64 * var / (ub * ub),
        main_shape: var * (-ub / 3.0).exp(),
    })
}

/// Per-prime check `y_p ≤ √V(ξ_p*)`, returned as `(p, y_p, √V)`.
pub fn y_bound_table(f: &AdditiveFunction, ctx: &SaddleContext) -> Result<Vec<(u64, f64, f64)>> {
    ctx.primes()
        .iter()
        .map(|&p| {
            let yv = y_value(f, p, ctx)?;
            let (_, v) = xi_moments(f, p, ctx, Model::Unbiased)?;
            Ok((p, yv, v.max(0.0).sqrt()))
        })
        .collect()
}
