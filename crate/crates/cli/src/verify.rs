//! Verification suites behind `friable verify`.
//!
//! Every check is a pure function of the grid point, the seed and the
//! optional weight corruption, so the report text is reproducible.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use rayon::prelude::*;

use friable_core::additive::{power_of_two_witness, random_function, two_indicator};
use friable_core::forms::{
    ab_decomposition, cross_term_report, empirical_variance, forms_from_counts, joint_counts, local_ratio_table,
    pair_residual_table, y_bound_table, z_value,
};
use friable_core::model::{
    bias_identity_residual, canonical_decomposition, model_moments, model_variance_formula, prime_law, sample_z,
};
use friable_core::numeric::rel_diff;
use friable_core::saddle::check_bias_bounds;
use friable_core::smooth::{psi, PsiMethod};
use friable_core::tk::{lower_bound_ratio, max_generalized_eigen, rayleigh, EIGEN_TOL, RESIDUAL_TOL};
use friable_core::{build_context, AssemblyPath, Limits, Model, SaddleContext, SmoothBound, DEFAULT_TOL};

pub const DEFAULT_GRID: &str = "(1e3,5);(1e4,7);(1e5,13);(1e6,31)";

/// Random functions per grid point in the identity and bound suites.
pub const FUNCTIONS_PER_POINT: u64 = 20;
pub const PROBES_PER_POINT: u64 = 1000;
pub const SAMPLE_FUNCTIONS: u64 = 3;
pub const SAMPLE_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Identities,
    Bounds,
    Eigen,
    Sampling,
    Diagnostics,
    All,
}

impl Suite {
    const MEMBERS: [Suite; 5] = [
        Suite::Identities,
        Suite::Bounds,
        Suite::Eigen,
        Suite::Sampling,
        Suite::Diagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Bounds => "bounds",
            Suite::Eigen => "eigen",
            Suite::Sampling => "sampling",
            Suite::Diagnostics => "diagnostics",
            Suite::All => "all",
        }
    }

    fn expand(self) -> Vec<Suite> {
        match self {
            Suite::All => Self::MEMBERS.to_vec(),
            s => vec![s],
        }
    }
}

impl FromStr for Suite {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = Self::MEMBERS.iter().chain([&Suite::All]);
        for &suite in all {
            if suite.name() == s {
                return Ok(suite);
            }
        }
        bail!("unknown suite {s:?}")
    }
}

/// `--corrupt-w P:FACTOR`: multiply `w_P` by `FACTOR` before the bound checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub p: u64,
    pub factor: f64,
}

impl FromStr for Corruption {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some((p, f)) = s.split_once(':') else {
            bail!("expected P:FACTOR, got {s:?}");
        };
        Ok(Corruption {
            p: p.trim().parse()?,
            factor: f.trim().parse()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub point: (u64, u64),
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        write!(
            f,
            "{tag} {} ({},{}) {}: {}",
            self.suite.name(),
            self.point.0,
            self.point.1,
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Fail).count()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        let counted = self.checks.iter().filter(|c| c.status != Status::Info).count();
        out.push_str(&format!("summary: {counted} checks, {} failed\n", self.failures()));
        out
    }
}

struct Recorder {
    suite: Suite,
    point: (u64, u64),
    checks: Vec<Check>,
}

impl Recorder {
    fn push(&mut self, name: &str, status: Status, detail: String) {
        self.checks.push(Check {
            suite: self.suite,
            point: self.point,
            name: name.to_string(),
            status,
            detail,
        });
    }

    fn truth(&mut self, name: &str, ok: bool, detail: String) {
        self.push(name, if ok { Status::Pass } else { Status::Fail }, detail);
    }

    /// Pass iff the worst error is at most `tol`; NaN fails.
    fn max_err(&mut self, name: &str, errs: impl IntoIterator<Item = f64>, tol: f64) {
        let worst = errs.into_iter().fold(0.0f64, |a, e| if e.is_nan() || a.is_nan() { f64::NAN } else { a.max(e) });
        self.truth(name, worst <= tol, format!("max {worst:.3e} tol {tol:.0e}"));
    }

    fn info(&mut self, name: &str, detail: String) {
        self.push(name, Status::Info, detail);
    }

    /// Record a computation error as a failed check instead of aborting.
    fn guard(&mut self, name: &str, r: friable_core::Result<()>) {
        if let Err(e) = r {
            self.truth(name, false, format!("error: {e}"));
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub suite: Suite,
    pub grid: Vec<(u64, u64)>,
    pub seed: u64,
    pub corrupt: Option<Corruption>,
    pub limits: Limits,
}

/// Run the selected suites; grid points are processed concurrently and
/// reported in grid order.
pub fn run(cfg: &VerifyConfig) -> Report {
    let mut checks = Vec::new();
    for suite in cfg.suite.expand() {
        let per_point: Vec<Vec<Check>> = cfg.grid.par_iter().map(|&pt| run_point(suite, pt, cfg)).collect();
        checks.extend(per_point.into_iter().flatten());
    }
    Report { checks }
}

fn run_point(suite: Suite, point: (u64, u64), cfg: &VerifyConfig) -> Vec<Check> {
    let mut rec = Recorder {
        suite,
        point,
        checks: Vec::new(),
    };
    let ctx = match SmoothBound::new(point.0, point.1).and_then(|b| build_context(b, DEFAULT_TOL)) {
        Ok(c) => c,
        Err(e) => {
            rec.truth("context", false, format!("error: {e}"));
            return rec.checks;
        }
    };
    let r = match suite {
        Suite::Identities => identities(&mut rec, &ctx, cfg),
        Suite::Bounds => bounds(&mut rec, &ctx, cfg),
        Suite::Eigen => eigen(&mut rec, &ctx, cfg),
        Suite::Sampling => sampling(&mut rec, &ctx, cfg),
        Suite::Diagnostics => diagnostics(&mut rec, &ctx, cfg),
        Suite::All => unreachable!("expanded"),
    };
    rec.guard("computation", r);
    rec.checks
}

fn seeds(cfg: &VerifyConfig, count: u64) -> impl Iterator<Item = u64> {
    let base = cfg.seed.wrapping_mul(1_000_003);
    (0..count).map(move |k| base.wrapping_add(k))
}

fn identities(rec: &mut Recorder, ctx: &SaddleContext, cfg: &VerifyConfig) -> friable_core::Result<()> {
    let bound = ctx.bound();
    let limits = cfg.limits;
    let pe = psi(bound, PsiMethod::Enumerate, limits)?;
    let pr = psi(bound, PsiMethod::Recurrence, limits)?;
    rec.truth("psi enumerate = recurrence", pe == pr, format!("{pe} vs {pr}"));

    let jc = joint_counts(ctx.space(), AssemblyPath::Counting, limits)?;
    let je = joint_counts(ctx.space(), AssemblyPath::Enumeration, limits)?;
    let partition_ok = (0..ctx.primes().len()).all(|i| (0..=ctx.nu(i)).map(|nu| jc.single(i, nu)).sum::<u64>() == jc.psi());
    rec.truth("valuation partition", partition_ok, format!("psi {}", jc.psi()));

    let mut path_errs = Vec::new();
    let mut forms = Vec::new();
    for model in Model::ALL {
        let fc = forms_from_counts(ctx, model, &jc)?;
        let fe = forms_from_counts(ctx, model, &je)?;
        let n = fc.dim();
        for a in 0..n {
            for b in 0..n {
                path_errs.push(rel_diff(fc.q.get(a, b), fe.q.get(a, b), 0.0));
            }
        }
        forms.push(fc);
    }
    rec.max_err("Q enumeration = counting", path_errs, 1e-9);

    let mut ab = Vec::new();
    let mut bias = Vec::new();
    let mut norm = Vec::new();
    let mut qform = Vec::new();
    let mut mform = Vec::new();
    let mut double_sum = Vec::new();
    let mut canon = Vec::new();
    for seed in seeds(cfg, FUNCTIONS_PER_POINT) {
        let f = random_function(ctx.space().clone(), seed, 1.0)?;
        let scale = 1.0 + f.coeffs().iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let (a, b) = ab_decomposition(&f, ctx, &jc)?;
        ab.push(rel_diff(a + b, empirical_variance(&f, ctx, Model::Unbiased, limits)?, 0.0));
        for &p in ctx.primes() {
            bias.push(bias_identity_residual(&f, p, ctx)? / scale);
            for model in Model::ALL {
                norm.push((prime_law(&f, p, ctx, model)?.total_mass() - 1.0).abs());
            }
        }
        for fp in &forms {
            let v = empirical_variance(&f, ctx, fp.model, limits)?;
            let mm = model_moments(&f, ctx, fp.model)?;
            qform.push(rel_diff(fp.q.quad_form(f.coeffs()), v, 0.0));
            mform.push(rel_diff(fp.m.quad_form(f.coeffs()), mm.variance, 0.0));
            double_sum.push(rel_diff(model_variance_formula(&f, ctx, fp.model)?, mm.variance, 0.0));
        }
        let (g, h) = canonical_decomposition(&f, ctx)?;
        let mut err = model_moments(&g, ctx, Model::Unbiased)?.mean.abs() / scale;
        for k in 0..f.coeffs().len() {
            err = err.max((g.coeffs()[k] + h.coeffs()[k] - f.coeffs()[k]).abs() / scale);
        }
        canon.push(err);
    }
    rec.max_err("A + B = V*", ab, 1e-9);
    rec.max_err("bias identity", bias, 1e-12);
    rec.max_err("law normalization", norm, 1e-12);
    rec.max_err("cQc = empirical variance", qform, 1e-10);
    rec.max_err("cMc = model variance", mform, 1e-10);
    rec.max_err("double-sum variance", double_sum, 1e-10);
    rec.max_err("canonical decomposition", canon, 1e-12);

    let t = two_indicator(ctx.space().clone());
    let (_, b) = ab_decomposition(&t, ctx, &jc)?;
    rec.truth("B = 0 for f(2) = 1", b == 0.0, format!("B = {b:e}"));
    Ok(())
}

fn bounds(rec: &mut Recorder, ctx: &SaddleContext, cfg: &VerifyConfig) -> friable_core::Result<()> {
    let checked = match cfg.corrupt {
        Some(c) => ctx.with_scaled_weight(c.p, c.factor),
        None => ctx.clone(),
    };
    let violations = check_bias_bounds(&checked);
    let detail = match violations.first() {
        None => format!("{} primes", ctx.primes().len()),
        Some(v) => format!("{} violation(s), first: {v}", violations.len()),
    };
    rec.truth("w_p bounds", violations.is_empty(), detail);

    let mut y_gap = Vec::new();
    for seed in seeds(cfg, FUNCTIONS_PER_POINT) {
        let f = random_function(ctx.space().clone(), seed, 1.0)?;
        for (_, yv, sd) in y_bound_table(&f, ctx)? {
            y_gap.push(yv - sd);
        }
    }
    rec.max_err("y_p <= sqrt V(xi_p*)", y_gap, 1e-12);

    let mut z_ok = true;
    let mut z0_max = 0.0f64;
    for &p in ctx.primes() {
        let mut last = f64::INFINITY;
        for j in 0..=5 {
            let z = z_value(ctx, p, j)?;
            z_ok &= z <= last;
            last = z;
        }
        let z0 = z_value(ctx, p, 0)?;
        z0_max = z0_max.max(z0 * z0);
    }
    rec.truth("z_p(j) nonincreasing, z_p(0)^2 <= 1", z_ok && z0_max <= 1.0, format!("max z_p(0)^2 {z0_max:.6}"));
    Ok(())
}

fn eigen(rec: &mut Recorder, ctx: &SaddleContext, cfg: &VerifyConfig) -> friable_core::Result<()> {
    let jc = joint_counts(ctx.space(), AssemblyPath::Counting, cfg.limits)?;
    for model in Model::ALL {
        let forms = forms_from_counts(ctx, model, &jc)?;
        let e = max_generalized_eigen(&forms, EIGEN_TOL)?;
        let label = |s: &str| format!("{s} [{model}]");
        rec.truth(
            &label("eigen residual"),
            e.residual <= RESIDUAL_TOL,
            format!("{:.3e} tol {RESIDUAL_TOL:.0e}, lambda {:.9}", e.residual, e.lambda),
        );
        let mut excess = Vec::new();
        for seed in seeds(cfg, PROBES_PER_POINT) {
            let f = random_function(ctx.space().clone(), seed, 1.0)?;
            excess.push(rayleigh(&f, &forms)? - e.lambda);
        }
        excess.push(rayleigh(&two_indicator(ctx.space().clone()), &forms)? - e.lambda);
        if let Ok(w) = power_of_two_witness(ctx.space().clone()) {
            excess.push(rayleigh(&w, &forms)? - e.lambda);
        }
        rec.max_err(&label("lambda_max dominates probes"), excess, 1e-10);
        if model == Model::Biased {
            match lower_bound_ratio(ctx, &forms) {
                Ok((ratio, limit)) => rec.truth(
                    "witness ratio <= C",
                    ratio <= e.lambda + 1e-10,
                    format!("ratio {ratio:.9} C {:.9} limit {limit:.6}", e.lambda),
                ),
                Err(err) => rec.info("witness ratio", format!("not available: {err}")),
            }
        }
    }
    Ok(())
}

fn sampling(rec: &mut Recorder, ctx: &SaddleContext, cfg: &VerifyConfig) -> friable_core::Result<()> {
    for (k, seed) in seeds(cfg, SAMPLE_FUNCTIONS).enumerate() {
        let f = random_function(ctx.space().clone(), seed, 1.0)?;
        let mm = model_moments(&f, ctx, Model::Unbiased)?;
        let n = SAMPLE_DRAWS as f64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for z in sample_z(&f, ctx, Model::Unbiased, seed ^ 0x5eed, SAMPLE_DRAWS)? {
            sum += z;
            sq += z * z;
        }
        let mean = sum / n;
        let var = (sq - n * mean * mean) / (n - 1.0);
        let se = (mm.variance / n).sqrt();
        let z_score = (mean - mm.mean).abs() / se;
        rec.truth(
            &format!("Z* mean f{k}"),
            z_score <= 5.0,
            format!("{mean:.6} vs {:.6}, {z_score:.2} SE", mm.mean),
        );
        let rel = rel_diff(var, mm.variance, 0.0);
        rec.truth(
            &format!("Z* variance f{k}"),
            rel <= 0.1,
            format!("{var:.6} vs {:.6}, rel {rel:.4}", mm.variance),
        );
    }
    Ok(())
}

fn diagnostics(rec: &mut Recorder, ctx: &SaddleContext, cfg: &VerifyConfig) -> friable_core::Result<()> {
    let jc = joint_counts(ctx.space(), AssemblyPath::Counting, cfg.limits)?;
    match pair_residual_table(ctx, &jc) {
        Ok(table) => {
            let finite = table.iter().all(|r| r.residual.is_finite() && r.r.is_finite());
            let worst = table.iter().map(|r| r.residual / r.r).fold(0.0f64, f64::max);
            rec.truth(
                "two-prime residual table",
                finite && (ctx.h() == 1 || !table.is_empty()),
                format!("{} rows, max residual/R {worst:.4}", table.len()),
            );
        }
        Err(e) => rec.truth("two-prime residual table", false, format!("error: {e}")),
    }
    let ratios = local_ratio_table(ctx, &jc);
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    rec.truth(
        "local ratio table",
        ratios.iter().all(|r| r.ratio.is_finite()),
        format!("ratio range [{lo:.4}, {hi:.4}]"),
    );

    let f = random_function(ctx.space().clone(), cfg.seed, 1.0)?;
    let rep = cross_term_report(&f, ctx, &jc)?;
    let values = [
        rep.a,
        rep.b,
        rep.b_far,
        rep.far_shape,
        rep.c_quantity,
        rep.c_upper,
        rep.c_shape,
        rep.remainder_shape,
        rep.main_shape,
    ];
    rec.truth(
        "cross-term report",
        values.iter().all(|v| v.is_finite()) && rep.c_quantity <= rep.c_upper + 1e-12,
        format!(
            "B {:.4e} B_far {:.4e} (shape {:.4e}) C {:.4e} <= {:.4e} (shape {:.4e})",
            rep.b, rep.b_far, rep.far_shape, rep.c_quantity, rep.c_upper, rep.c_shape
        ),
    );

    let ratio = ctx.sigma2() * ctx.ubar() / (ctx.log_x() * ctx.log_x());
    rec.info("sigma2 order", format!("sigma2 ubar/(u log y)^2 = {ratio:.4}"));
    rec.info(
        "alpha order",
        format!("alpha log x/ubar = {:.4}", ctx.alpha() * ctx.log_x() / ctx.ubar()),
    );
    Ok(())
}
