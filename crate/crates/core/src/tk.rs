//! The constants `C(x, y)` and `C*(x, y)` as largest generalized eigenvalues
//! of the form pair `(Q, M)`.

use crate::additive::{power_of_two_witness, witness_limit_constant, AdditiveFunction};
use crate::error::{Error, Result};
use crate::forms::{assemble_forms, AssemblyPath, FormPair};
use crate::linalg::{jacobi_eigen, power_iteration, Cholesky};
use crate::model::Model;
use crate::saddle::{build_context, SaddleContext};
use crate::smooth::{Limits, SmoothBound};

/// Default relative off-diagonal tolerance for the Jacobi sweeps.
pub const EIGEN_TOL: f64 = 1e-12;

/// Accepted eigen residual `‖Qv − λMv‖ / ‖Qv‖`.
pub const RESIDUAL_TOL: f64 = 1e-8;

const SIGN_THRESHOLD: f64 = 1e-10;

/// `cᵀQc / cᵀMc`.
pub fn rayleigh(f: &AdditiveFunction, forms: &FormPair) -> Result<f64> {
    rayleigh_coeffs(f.coeffs(), forms)
}

pub fn rayleigh_coeffs(c: &[f64], forms: &FormPair) -> Result<f64> {
    if c.len() != forms.dim() {
        return Err(Error::InvalidInput(format!(
            "expected {} coefficients, got {}",
            forms.dim(),
            c.len()
        )));
    }
    let den = forms.m.quad_form(c);
    let norm2: f64 = c.iter().map(|v| v * v).sum();
    let threshold = forms.dim() as f64 * 1e-14 * norm2;
    if den <= threshold {
        return Err(Error::Degenerate {
            denominator: den,
            threshold,
        });
    }
    Ok(forms.q.quad_form(c) / den)
}

#[derive(Debug, Clone)]
pub struct GenEigen {
    pub lambda: f64,
    /// `M`-normalized, first component above `1e-10` in size positive.
    pub vector: Vec<f64>,
    pub sweeps: usize,
    /// `‖Qv − λMv‖ / ‖Qv‖`.
    pub residual: f64,
}

/// Largest `λ` with `Qv = λMv`, via `M = LLᵀ` and Jacobi on `L⁻¹QL⁻ᵀ`.
pub fn max_generalized_eigen(forms: &FormPair, tol: f64) -> Result<GenEigen> {
    let chol = Cholesky::factor(&forms.m)?;
    let a = chol.congruence(&forms.q);
    let eig = jacobi_eigen(&a, tol)?;
    let n = forms.dim();
    let k = (0..n)
        .max_by(|&i, &j| eig.values[i].total_cmp(&eig.values[j]))
        .expect("index space is never empty");
    let lambda = eig.values[k];
    let y: Vec<f64> = (0..n).map(|i| eig.vectors.get(i, k)).collect();
    let mut v = chol.solve_upper(&y);

    let mnorm = forms.m.quad_form(&v).sqrt();
    let sign = v
        .iter()
        .find(|c| c.abs() > SIGN_THRESHOLD * mnorm)
        .map_or(1.0, |c| c.signum());
    for c in &mut v {
        *c *= sign / mnorm;
    }

    let qv = forms.q.mul_vec(&v);
    let mv = forms.m.mul_vec(&v);
    let num: f64 = qv.iter().zip(&mv).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = qv.iter().map(|a| a * a).sum::<f64>().sqrt();
    let residual = if den > 0.0 { num / den } else { num };
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::NonConvergence {
            method: "generalized eigensolve",
            iterations: eig.sweeps,
            detail: format!("residual {residual:e}"),
        });
    }
    Ok(GenEigen {
        lambda,
        vector: v,
        sweeps: eig.sweeps,
        residual,
    })
}

/// Cross-check of [`max_generalized_eigen`] by power iteration on the same
/// reduced matrix. Returns `(λ, iterations)`.
pub fn max_generalized_eigen_power(forms: &FormPair, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let chol = Cholesky::factor(&forms.m)?;
    let a = chol.congruence(&forms.q);
    Ok(power_iteration(&a, tol, max_iter))
}

#[derive(Debug, Clone)]
pub struct TKResult {
    pub c: f64,
    pub extremal: AdditiveFunction,
    pub model: Model,
    pub iterations: usize,
    pub residual: f64,
}

pub fn tk_from_forms(forms: &FormPair, tol: f64) -> Result<TKResult> {
    let eig = max_generalized_eigen(forms, tol)?;
    Ok(TKResult {
        c: eig.lambda,
        extremal: AdditiveFunction::new(forms.space.clone(), eig.vector)?,
        model: forms.model,
        iterations: eig.sweeps,
        residual: eig.residual,
    })
}

/// Context, forms and eigensolve in one call.
pub fn tk_constant(bound: SmoothBound, model: Model, path: AssemblyPath, tol: f64, limits: Limits) -> Result<TKResult> {
    let ctx = build_context(bound, crate::saddle::DEFAULT_TOL)?;
    let forms = assemble_forms(&ctx, model, path, limits)?;
    tk_from_forms(&forms, tol)
}

/// Rayleigh quotient of the power-of-two witness on the biased forms, and the
/// constant `e (1 − 1/π(y))^{π(y)−1}` it approaches.
pub fn lower_bound_ratio(ctx: &SaddleContext, biased: &FormPair) -> Result<(f64, f64)> {
    if biased.model != Model::Biased {
        return Err(Error::InvalidInput("lower bound uses the biased forms".into()));
    }
    let f = power_of_two_witness(ctx.space().clone())?;
    Ok((rayleigh(&f, biased)?, witness_limit_constant(ctx.h())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::additive::{random_function, two_indicator};
    use crate::linalg::SymMatrix;
    use crate::saddle::DEFAULT_TOL;
    use crate::smooth::build_index_space;
    use std::sync::Arc;

    fn forms(x: u64, y: u64, m: Model) -> (SaddleContext, FormPair) {
        let ctx = build_context(SmoothBound::new(x, y).unwrap(), DEFAULT_TOL).unwrap();
        let f = assemble_forms(&ctx, m, AssemblyPath::Counting, Limits::default()).unwrap();
        (ctx, f)
    }

    #[test]
    fn dim_one_constants() {
        let w = 1.0 / (1.0 + 2f64.ln() / 3f64.ln());
        let eb = (1.0 - w) * w;
        let vb = (eb * eb + (1.0 - eb).powi(2)) / 2.0;
        let vu = (w * w + (1.0 - w).powi(2)) / 2.0;
        let (_, fb) = forms(3, 2, Model::Biased);
        let (_, fu) = forms(3, 2, Model::Unbiased);
        let b = tk_from_forms(&fb, EIGEN_TOL).unwrap();
        let u = tk_from_forms(&fu, EIGEN_TOL).unwrap();
        assert!((b.c - vb / (eb * (1.0 - eb))).abs() < 1e-13);
        assert!((u.c - vu / (w * (1.0 - w))).abs() < 1e-13);
        assert!((b.c - 1.763_424).abs() < 1e-6);
        assert!((u.c - 1.107_946).abs() < 1e-6);
        assert!(b.extremal.coeffs()[0] > 0.0);

        let t = two_indicator(fb.space.clone());
        assert!((rayleigh(&t, &fb).unwrap() - b.c).abs() < 1e-13);
        assert!((rayleigh(&t.scaled(17.0), &fu).unwrap() - rayleigh(&t, &fu).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_rayleigh() {
        let (_, f) = forms(1000, 5, Model::Unbiased);
        let z = AdditiveFunction::zero(f.space.clone());
        assert!(matches!(rayleigh(&z, &f), Err(Error::Degenerate { .. })));
        assert!(rayleigh_coeffs(&[1.0], &f).is_err());
    }

    #[test]
    fn diagonal_pair() {
        let space = Arc::new(build_index_space(SmoothBound::new(100, 7).unwrap()));
        let n = space.dim();
        let q = SymMatrix::from_fn(n, |i, j| if i == j { 1.0 + i as f64 } else { 0.0 });
        let m = SymMatrix::from_fn(n, |i, j| if i == j { 2.0 + (i % 3) as f64 } else { 0.0 });
        let expected = (0..n).map(|i| q.get(i, i) / m.get(i, i)).fold(f64::MIN, f64::max);
        let pair = FormPair {
            space,
            model: Model::Biased,
            q,
            m,
        };
        let e = max_generalized_eigen(&pair, EIGEN_TOL).unwrap();
        assert!((e.lambda - expected).abs() < 1e-13);
    }

    #[test]
    fn eigen_dominates_probes_and_residual_small() {
        for (x, y) in [(1000u64, 5u64), (10_000, 7), (100_000, 13)] {
            for model in Model::ALL {
                let (ctx, f) = forms(x, y, model);
                let e = max_generalized_eigen(&f, EIGEN_TOL).unwrap();
                assert!(e.residual <= RESIDUAL_TOL);
                assert!((f.m.quad_form(&e.vector) - 1.0).abs() < 1e-10);
                let v = AdditiveFunction::new(ctx.space().clone(), e.vector.clone()).unwrap();
                assert!((rayleigh(&v, &f).unwrap() - e.lambda).abs() <= 1e-10 * e.lambda);
                for seed in 0..200 {
                    let g = random_function(ctx.space().clone(), seed, 1.0).unwrap();
                    assert!(rayleigh(&g, &f).unwrap() <= e.lambda + 1e-10);
                }
                let t = two_indicator(ctx.space().clone());
                assert!(rayleigh(&t, &f).unwrap() <= e.lambda + 1e-10);
            }
        }
    }

    #[test]
    fn power_cross_check() {
        let (_, f) = forms(10_000, 7, Model::Unbiased);
        let e = max_generalized_eigen(&f, EIGEN_TOL).unwrap();
        let (lp, _) = max_generalized_eigen_power(&f, 1e-14, 100_000).unwrap();
        assert!((lp - e.lambda).abs() <= 1e-6 * e.lambda);
    }

    #[test]
    fn deterministic_and_path_independent() {
        let b = SmoothBound::new(10_000, 7).unwrap();
        let l = Limits::default();
        let a = tk_constant(b, Model::Unbiased, AssemblyPath::Counting, EIGEN_TOL, l).unwrap();
        let a2 = tk_constant(b, Model::Unbiased, AssemblyPath::Counting, EIGEN_TOL, l).unwrap();
        let e = tk_constant(b, Model::Unbiased, AssemblyPath::Enumeration, EIGEN_TOL, l).unwrap();
        assert_eq!(a.c.to_bits(), a2.c.to_bits());
        assert_eq!(a.extremal, a2.extremal);
        assert!((a.c - e.c).abs() <= 1e-9 * a.c);
    }

    #[test]
    fn lower_bound_witness() {
        let (ctx, f) = forms(1 << 20, 3, Model::Biased);
        let (ratio, limit) = lower_bound_ratio(&ctx, &f).unwrap();
        assert!((limit - std::f64::consts::E / 2.0).abs() < 1e-15);
        let c = max_generalized_eigen(&f, EIGEN_TOL).unwrap().lambda;
        assert!(ratio <= c + 1e-10);
        let (_, fu) = forms(1 << 20, 3, Model::Unbiased);
        assert!(lower_bound_ratio(&ctx, &fu).is_err());
    }

    // Coordinate ascent on the Rayleigh quotient: each step maximizes over the
    // plane span{c, e_i} with a 2×2 generalized eigenproblem.
    fn coordinate_ascent(f: &FormPair, start: Vec<f64>, rounds: usize) -> f64 {
        let n = f.dim();
        let mut c = start;
        for _ in 0..rounds {
            for i in 0..n {
                let qc = f.q.mul_vec(&c);
                let mc = f.m.mul_vec(&c);
                let (a11, a12, a22) = (f.q.quad_form(&c), qc[i], f.q.get(i, i));
                let (b11, b12, b22) = (f.m.quad_form(&c), mc[i], f.m.get(i, i));
                // det(A − λB) = 0
                let qa = b11 * b22 - b12 * b12;
                let qb = -(a11 * b22 + a22 * b11 - 2.0 * a12 * b12);
                let qq = a11 * a22 - a12 * a12;
                let disc = (qb * qb - 4.0 * qa * qq).max(0.0);
                let lam = (-qb + disc.sqrt()) / (2.0 * qa);
                // null vector of A − λB
                let (r1, r2) = (a11 - lam * b11, a12 - lam * b12);
                let (s1, s2) = (a12 - lam * b12, a22 - lam * b22);
                let (t1, t2) = if r1.abs() + r2.abs() >= s1.abs() + s2.abs() { (-r2, r1) } else { (-s2, s1) };
                if t1.abs() < 1e-300 {
                    continue;
                }
                c[i] += t2 / t1;
                let norm = f.m.quad_form(&c).sqrt();
                for v in &mut c {
                    *v /= norm;
                }
            }
        }
        rayleigh_coeffs(&c, f).unwrap()
    }

    #[test]
    fn coordinate_ascent_oracle() {
        for model in Model::ALL {
            let (ctx, f) = forms(100, 5, model);
            let lambda = max_generalized_eigen(&f, EIGEN_TOL).unwrap().lambda;
            let start = random_function(ctx.space().clone(), 7, 1.0).unwrap().coeffs().to_vec();
            let best = coordinate_ascent(&f, start, 400);
            assert!(best <= lambda + 1e-10);
            assert!(lambda - best <= 1e-4, "{model}: {best} vs {lambda}");
        }
    }
}
