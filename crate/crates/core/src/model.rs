//! The biased and unbiased geometric models of an additive function.
//!
//! For each prime `p ≤ y` the biased variable `ξ_p` takes the value `f(p^ν)`
//! with probability `g_p(α) p^{−να}` for every `ν ≥ 0`; since `f(p^ν) = 0`
//! once `p^ν > x`, the whole tail `ν > ν_p` lumps onto the value zero. The
//! unbiased variable `ξ_p*` is truncated at `ν_p`, keeps mass `g_p(α)` at
//! zero and rescales the rest by `1/(1 − w_p)`. `Z_f` and `Z_f*` are the
//! independent sums over `p ≤ y`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::additive::AdditiveFunction;
use crate::error::{Error, Result};
use crate::numeric::kahan_sum;
use crate::saddle::SaddleContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Biased,
    Unbiased,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::Biased, Model::Unbiased];

    pub fn name(self) -> &'static str {
        match self {
            Model::Biased => "biased",
            Model::Unbiased => "unbiased",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(Model::Biased),
            "unbiased" => Ok(Model::Unbiased),
            other => Err(Error::InvalidInput(format!("unknown model {other:?}"))),
        }
    }
}

/// `P(value_ν)` for `ν = 1..=ν_p`, i.e. `g_p p^{−να}` or `g_p p^{−να}/(1 − w_p)`.
pub(crate) fn weight(ctx: &SaddleContext, prime_idx: usize, nu: u32, model: Model) -> f64 {
    let base = ctx.g(prime_idx) * ctx.decay(prime_idx, nu);
    match model {
        Model::Biased => base,
        Model::Unbiased => base / (1.0 - ctx.w(prime_idx)),
    }
}

/// Model weight per index-space coordinate.
pub fn weight_vector(ctx: &SaddleContext, model: Model) -> Vec<f64> {
    let space = ctx.space();
    let mut out = Vec::with_capacity(space.dim());
    for i in 0..space.primes().len() {
        for nu in 1..=space.nu_max(i) {
            out.push(weight(ctx, i, nu, model));
        }
    }
    out
}

fn prime_idx(ctx: &SaddleContext, p: u64) -> Result<usize> {
    ctx.space()
        .prime_index(p)
        .ok_or_else(|| Error::InvalidInput(format!("{p} is not a prime <= y = {}", ctx.bound().y())))
}

fn check_space(f: &AdditiveFunction, ctx: &SaddleContext) -> Result<()> {
    if f.space().bound() != ctx.bound() {
        return Err(Error::InvalidInput(format!(
            "function lives on {:?}, context on {:?}",
            f.space().bound(),
            ctx.bound()
        )));
    }
    Ok(())
}

/// Law of one `ξ_p` or `ξ_p*`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimeLaw {
    pub p: u64,
    pub model: Model,
    /// Mass at exponent `ν = 0..=ν_p`.
    pub masses: Vec<f64>,
    /// Biased only: mass of `ν > ν_p`, all carrying the value zero.
    pub tail: f64,
    /// `f(p^ν)` for `ν = 0..=ν_p`; `values[0] = 0`.
    pub values: Vec<f64>,
}

impl PrimeLaw {
    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.masses.iter().copied().chain(std::iter::once(self.tail)))
    }

    pub fn mean(&self) -> f64 {
        kahan_sum(self.masses.iter().zip(&self.values).map(|(m, v)| m * v))
    }

    pub fn second_moment(&self) -> f64 {
        kahan_sum(self.masses.iter().zip(&self.values).map(|(m, v)| m * v * v))
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.second_moment() - mean * mean
    }

    /// Distribution with equal values merged (masses summed), sorted by value.
    pub fn grouped(&self) -> Vec<(f64, f64)> {
        let mut map: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        let zero_key = 0f64.to_bits();
        for (m, v) in self.masses.iter().zip(&self.values) {
            // -0.0 and 0.0 are the same value
            let key = if *v == 0.0 { zero_key } else { v.to_bits() };
            map.entry(key).or_insert((*v, 0.0)).1 += m;
        }
        if self.tail > 0.0 {
            map.entry(zero_key).or_insert((0.0, 0.0)).1 += self.tail;
        }
        let mut out: Vec<(f64, f64)> = map.into_values().collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

pub fn prime_law(f: &AdditiveFunction, p: u64, ctx: &SaddleContext, model: Model) -> Result<PrimeLaw> {
    check_space(f, ctx)?;
    let i = prime_idx(ctx, p)?;
    let nu_p = ctx.nu(i);
    let mut masses = Vec::with_capacity(nu_p as usize + 1);
    let mut values = Vec::with_capacity(nu_p as usize + 1);
    masses.push(ctx.g(i));
    values.push(0.0);
    for nu in 1..=nu_p {
        masses.push(weight(ctx, i, nu, model));
        values.push(f.get(p, nu));
    }
    let tail = match model {
        Model::Biased => ctx.w(i) * ctx.p_alpha(i),
        Model::Unbiased => 0.0,
    };
    Ok(PrimeLaw {
        p,
        model,
        masses,
        tail,
        values,
    })
}

/// `(E ξ_p, V ξ_p)` from the closed-form sums.
///
/// Biased: `E = Σ g_p f(p^ν)/p^{να}`, `V = Σ g_p f(p^ν)²/p^{να} − E²`.
/// Unbiased: `E = Σ g_p f(p^ν)/(p^{να}(1 − w_p))` and
/// `V = g_p E² + Σ g_p F_p(ν)²/(p^{να}(1 − w_p))` with `F_p(ν) = f(p^ν) − E`.
pub fn xi_moments(f: &AdditiveFunction, p: u64, ctx: &SaddleContext, model: Model) -> Result<(f64, f64)> {
    check_space(f, ctx)?;
    let i = prime_idx(ctx, p)?;
    Ok(xi_moments_idx(f, ctx, i, model))
}

fn xi_moments_idx(f: &AdditiveFunction, ctx: &SaddleContext, i: usize, model: Model) -> (f64, f64) {
    let p = ctx.primes()[i];
    let nus = 1..=ctx.nu(i);
    let mean = kahan_sum(nus.clone().map(|nu| weight(ctx, i, nu, model) * f.get(p, nu)));
    let var = match model {
        Model::Biased => {
            let second = kahan_sum(nus.map(|nu| weight(ctx, i, nu, model) * f.get(p, nu).powi(2)));
            second - mean * mean
        }
        Model::Unbiased => {
            let rest = kahan_sum(nus.map(|nu| weight(ctx, i, nu, model) * (f.get(p, nu) - mean).powi(2)));
            ctx.g(i) * mean * mean + rest
        }
    };
    (mean, var)
}

/// Variance of `ξ_p` from the second moment of its law (independent path).
pub fn xi_variance_direct(f: &AdditiveFunction, p: u64, ctx: &SaddleContext, model: Model) -> Result<f64> {
    Ok(prime_law(f, p, ctx, model)?.variance())
}

/// `F_p(ν) = f(p^ν) − E(ξ_p*)` for `ν = 0..=ν_p`.
pub fn f_table(f: &AdditiveFunction, p: u64, ctx: &SaddleContext) -> Result<Vec<f64>> {
    let (mean, _) = xi_moments(f, p, ctx, Model::Unbiased)?;
    let i = prime_idx(ctx, p)?;
    Ok((0..=ctx.nu(i)).map(|nu| f.get(p, nu) - mean).collect())
}

/// `|Σ_ν F_p(ν) g_p/p^{να} + g_p w_p E(ξ_p*)|`, zero in exact arithmetic.
pub fn bias_identity_residual(f: &AdditiveFunction, p: u64, ctx: &SaddleContext) -> Result<f64> {
    let table = f_table(f, p, ctx)?;
    let i = prime_idx(ctx, p)?;
    let (mean, _) = xi_moments_idx(f, ctx, i, Model::Unbiased);
    let lhs = kahan_sum(
        table
            .iter()
            .enumerate()
            .map(|(nu, &fv)| fv * ctx.g(i) * ctx.decay(i, nu as u32)),
    );
    Ok((lhs + ctx.g(i) * ctx.w(i) * mean).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimeMoments {
    pub p: u64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMoments {
    pub model: Model,
    pub per_prime: Vec<PrimeMoments>,
    /// `E(Z_f)` or `E(Z_f*)`.
    pub mean: f64,
    /// `V(Z_f)` or `V(Z_f*)`, the sum of the per-prime variances.
    pub variance: f64,
}

pub fn model_moments(f: &AdditiveFunction, ctx: &SaddleContext, model: Model) -> Result<ModelMoments> {
    check_space(f, ctx)?;
    let per_prime: Vec<PrimeMoments> = ctx
        .primes()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (mean, variance) = xi_moments_idx(f, ctx, i, model);
            PrimeMoments { p, mean, variance }
        })
        .collect();
    Ok(ModelMoments {
        model,
        mean: kahan_sum(per_prime.iter().map(|m| m.mean)),
        variance: kahan_sum(per_prime.iter().map(|m| m.variance)),
        per_prime,
    })
}

/// `Σ_{p^ν} L_ν f(p^ν)² − Σ_p (Σ_ν L_ν f(p^ν))²` with `L` the model weight;
/// the double-sum form of the model variance.
pub fn model_variance_formula(f: &AdditiveFunction, ctx: &SaddleContext, model: Model) -> Result<f64> {
    check_space(f, ctx)?;
    let weights = weight_vector(ctx, model);
    let first = kahan_sum(weights.iter().zip(f.coeffs()).map(|(l, c)| l * c * c));
    let second = kahan_sum((0..ctx.primes().len()).map(|i| {
        let r = ctx.space().block(i);
        let s = kahan_sum(weights[r.clone()].iter().zip(&f.coeffs()[r]).map(|(l, c)| l * c));
        s * s
    }));
    Ok(first - second)
}

/// `f = g + h` with `h` strongly additive, `h(p^ν) = p^α E(ξ_p*)`.
pub fn canonical_decomposition(
    f: &AdditiveFunction,
    ctx: &SaddleContext,
) -> Result<(AdditiveFunction, AdditiveFunction)> {
    check_space(f, ctx)?;
    let space = ctx.space();
    let mut g = Vec::with_capacity(space.dim());
    let mut h = Vec::with_capacity(space.dim());
    for i in 0..space.primes().len() {
        let (mean, _) = xi_moments_idx(f, ctx, i, Model::Unbiased);
        let hv = mean / ctx.p_alpha(i);
        for k in space.block(i) {
            h.push(hv);
            g.push(f.coeffs()[k] - hv);
        }
    }
    Ok((
        AdditiveFunction::new(space.clone(), g)?,
        AdditiveFunction::new(space.clone(), h)?,
    ))
}

/// `g(p^ν) = F_p(ν) − g_p(α) p^α E(ξ_p*)`, the second expression for the
/// non-strongly-additive part.
pub fn canonical_g_from_f_table(f: &AdditiveFunction, ctx: &SaddleContext) -> Result<AdditiveFunction> {
    check_space(f, ctx)?;
    let space = ctx.space();
    let mut g = Vec::with_capacity(space.dim());
    for (i, &p) in space.primes().iter().enumerate() {
        let table = f_table(f, p, ctx)?;
        let mean = -table[0];
        for nu in 1..=ctx.nu(i) {
            g.push(table[nu as usize] - ctx.g(i) * mean / ctx.p_alpha(i));
        }
    }
    AdditiveFunction::new(space.clone(), g)
}

struct Sampler {
    cdf: Vec<f64>,
    values: Vec<f64>,
}

/// Stream of independent draws of `Z_f` or `Z_f*`.
pub struct ZSamples {
    laws: Vec<Sampler>,
    rng: ChaCha8Rng,
    remaining: usize,
}

impl Iterator for ZSamples {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut total = 0.0;
        for law in &self.laws {
            let u: f64 = self.rng.random();
            let k = law.cdf.partition_point(|&c| c <= u).min(law.values.len() - 1);
            total += law.values[k];
        }
        Some(total)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Draw `n_draws` samples by inverse CDF per prime, seeded.
pub fn sample_z(
    f: &AdditiveFunction,
    ctx: &SaddleContext,
    model: Model,
    seed: u64,
    n_draws: usize,
) -> Result<ZSamples> {
    if n_draws == 0 {
        return Err(Error::InvalidInput("n_draws must be at least 1".into()));
    }
    let mut laws = Vec::with_capacity(ctx.primes().len());
    for &p in ctx.primes() {
        let law = prime_law(f, p, ctx, model)?;
        let mut values = law.values.clone();
        let mut masses = law.masses.clone();
        if law.tail > 0.0 {
            values.push(0.0);
            masses.push(law.tail);
        }
        let mut acc = 0.0;
        let cdf = masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        laws.push(Sampler { cdf, values });
    }
    Ok(ZSamples {
        laws,
        rng: ChaCha8Rng::seed_from_u64(seed),
        remaining: n_draws,
    })
}
