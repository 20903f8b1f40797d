//! Small dense symmetric linear algebra: Cholesky, cyclic Jacobi and a power
//! iteration cross-check. Dimensions here stay in the low hundreds.

use crate::error::{Error, Result};

/// Dense square matrix stored row-major; used for symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: SymMatrix,
}

impl Cholesky {
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = SymMatrix::zeros(n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k).powi(2);
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn lower(&self) -> &SymMatrix {
        &self.l
    }

    /// Solve `L z = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l.get(i, k) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        z
    }

    /// Solve `Lᵀ z = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut z = b.to_vec();
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        z
    }

    /// `L⁻¹ A L⁻ᵀ`, symmetrized.
    pub fn congruence(&self, a: &SymMatrix) -> SymMatrix {
        let n = a.dim();
        // columns of L⁻¹ A
        let mut left = SymMatrix::zeros(n);
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| a.get(i, j)).collect();
            for (i, v) in self.solve_lower(&col).into_iter().enumerate() {
                left.set(i, j, v);
            }
        }
        // (L⁻¹ A) L⁻ᵀ = (L⁻¹ (L⁻¹ A)ᵀ)ᵀ
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|j| left.get(i, j)).collect();
            for (j, v) in self.solve_lower(&row).into_iter().enumerate() {
                out.set(i, j, v);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (out.get(i, j) + out.get(j, i));
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

/// Eigen-decomposition `A = V diag(λ) Vᵀ`; column `k` of `vectors` pairs with
/// `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: SymMatrix,
    pub sweeps: usize,
}

pub const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi with row-by-row sweep order; stops once the off-diagonal
/// Frobenius norm is at most `tol` times the full norm.
pub fn jacobi_eigen(a: &SymMatrix, tol: f64) -> Result<SymEigen> {
    let n = a.dim();
    let mut a = a.clone();
    let mut v = SymMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 });
    let norm = a.frobenius();
    if norm == 0.0 || n <= 1 {
        return Ok(SymEigen {
            values: (0..n).map(|i| a.get(i, i)).collect(),
            vectors: v,
            sweeps: 0,
        });
    }
    let off = |a: &SymMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.get(i, j).powi(2);
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > tol * norm {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NonConvergence {
                method: "cyclic Jacobi",
                iterations: sweeps,
                detail: format!("off-diagonal norm {:e}", off(&a)),
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Ok(SymEigen {
        values: (0..n).map(|i| a.get(i, i)).collect(),
        vectors: v,
        sweeps,
    })
}

/// Dominant eigenvalue of a positive semidefinite matrix by power iteration,
/// started from the all-ones vector. Returns `(λ, iterations)`.
pub fn power_iteration(a: &SymMatrix, tol: f64, max_iter: usize) -> (f64, usize) {
    let n = a.dim();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = a.quad_form(&v);
    for it in 1..=max_iter {
        let w = a.mul_vec(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (0.0, it);
        }
        v = w.into_iter().map(|x| x / norm).collect();
        let next = a.quad_form(&v);
        if (next - lambda).abs() <= tol * next.abs() {
            return (next, it);
        }
        lambda = next;
    }
    (lambda, max_iter)
}
