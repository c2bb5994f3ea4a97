//! Dense symmetric linear algebra at desk scale: Cholesky factorisation,
//! conjugate gradients as an independent solve route, and an inverse-iteration
//! estimate of the smallest eigenvalue.

use crate::scalar::{real, Real};

/// Dense symmetric matrix in full row-major storage.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Real> SymmetricMatrix<F> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![F::zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.n + j] = self.data[i * self.n + j] + v;
    }

    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / scale`.
    pub fn asymmetry(&self) -> F {
        let scale = self
            .data
            .iter()
            .fold(F::zero(), |m, &v| m.max(v.abs()))
            .max(F::min_positive_value());
        let mut worst = F::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<F> {
    n: usize,
    l: Vec<F>,
}

/// Factors a symmetric positive-definite matrix; returns the index of the
/// first non-positive pivot on failure.
pub fn cholesky<F: Real>(a: &SymmetricMatrix<F>) -> Result<CholeskyFactor<F>, usize> {
    let n = a.dim();
    let mut l = vec![F::zero(); n * n];
    for k in 0..n {
        let mut pivot = a.get(k, k);
        for r in 0..k {
            pivot = pivot - l[k * n + r] * l[k * n + r];
        }
        if !(pivot > F::zero()) {
            return Err(k);
        }
        let root = pivot.sqrt();
        l[k * n + k] = root;
        for i in (k + 1)..n {
            let mut v = a.get(i, k);
            for r in 0..k {
                v = v - l[i * n + r] * l[k * n + r];
            }
            l[i * n + k] = v / root;
        }
    }
    Ok(CholeskyFactor { n, l })
}

impl<F: Real> CholeskyFactor<F> {
    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            for r in 0..i {
                x[i] = x[i] - self.l[i * n + r] * x[r];
            }
            x[i] = x[i] / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for r in (i + 1)..n {
                x[i] = x[i] - self.l[r * n + i] * x[r];
            }
            x[i] = x[i] / self.l[i * n + i];
        }
        x
    }
}

/// Conjugate gradients with relative residual tolerance. Independent of the
/// factorisation route; used as the second solve path in verification.
pub fn conjugate_gradient<F: Real>(
    a: &SymmetricMatrix<F>,
    b: &[F],
    tol: F,
    max_iter: usize,
) -> Option<Vec<F>> {
    let n = a.dim();
    let norm_b = b.iter().map(|&v| v * v).sum::<F>().sqrt();
    if norm_b == F::zero() {
        return Some(vec![F::zero(); n]);
    }
    let mut x = vec![F::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: F = r.iter().map(|&v| v * v).sum();
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * norm_b {
            return Some(x);
        }
        let ap = a.matvec(&p);
        let pap: F = p.iter().zip(&ap).map(|(&u, &v)| u * v).sum();
        if !(pap > F::zero()) {
            return None;
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let rs_new: F = r.iter().map(|&v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    if rs.sqrt() <= tol * norm_b {
        Some(x)
    } else {
        None
    }
}

/// Rayleigh-quotient estimate of the smallest eigenvalue via inverse iteration
/// with the Cholesky factor.
pub fn smallest_eigenvalue<F: Real>(
    a: &SymmetricMatrix<F>,
    factor: &CholeskyFactor<F>,
    iterations: usize,
) -> F {
    let n = a.dim();
    if n == 0 {
        return F::infinity();
    }
    let mut v = vec![F::one() / real::<F>(n as f64).sqrt(); n];
    for _ in 0..iterations {
        let w = factor.solve(&v);
        let norm = w.iter().map(|&x| x * x).sum::<F>().sqrt();
        for i in 0..n {
            v[i] = w[i] / norm;
        }
    }
    let av = a.matvec(&v);
    v.iter().zip(&av).map(|(&u, &w)| u * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> SymmetricMatrix<f64> {
        // L = [[2,0,0],[1,3,0],[0.5,-1,1.5]]; A = L L^T.
        let l = [[2.0, 0.0, 0.0], [1.0, 3.0, 0.0], [0.5, -1.0, 1.5]];
        let mut a = SymmetricMatrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                let v = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                a.add(i, j, v);
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = spd3();
        let x_true = vec![1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let f = cholesky(&a).unwrap();
        let x = f.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SymmetricMatrix::zeros(2);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        assert_eq!(cholesky(&a).unwrap_err(), 1);
    }

    #[test]
    fn cg_matches_direct_solve() {
        let a = spd3();
        let b = vec![0.3, 1.7, -0.9];
        let direct = cholesky(&a).unwrap().solve(&b);
        let iterative = conjugate_gradient(&a, &b, 1e-14, 100).unwrap();
        for (u, v) in direct.iter().zip(&iterative) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn smallest_eigenvalue_of_diagonal() {
        let mut a = SymmetricMatrix::<f64>::zeros(3);
        a.add(0, 0, 4.0);
        a.add(1, 1, 0.25);
        a.add(2, 2, 9.0);
        let f = cholesky(&a).unwrap();
        let lam = smallest_eigenvalue(&a, &f, 50);
        assert!((lam - 0.25).abs() < 1e-12);
    }
}
