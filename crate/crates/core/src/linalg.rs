//! Dense symmetric-matrix helpers for the small (d ≤ 4) covariance algebra
//! used by the Gaussian envelope and the linear optimal-transport map.

use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix of dimension {0} is not positive definite")]
    NotPositiveDefinite(usize),
    #[error("jacobi eigensolver did not converge")]
    NoConvergence,
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    pub n: usize,
    pub data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![F::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[&[F]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n);
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn matmul(&self, rhs: &Mat<F>) -> Mat<F> {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = F::zero();
                for j in 0..self.n {
                    acc += self[(i, j)] * x[j];
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> Mat<F> {
        let mut out = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn add_scaled_identity(&mut self, c: F) {
        for i in 0..self.n {
            self[(i, i)] += c;
        }
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Mat<F>) -> F {
        let mut acc = F::zero();
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = *a - *b;
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Lower-triangular Cholesky factor; errors when not positive definite.
    pub fn cholesky(&self) -> Result<Mat<F>, LinalgError> {
        let n = self.n;
        let mut l = Mat::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                for k in 0..j {
                    sum = sum - l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= F::zero() {
                        return Err(LinalgError::NotPositiveDefinite(n));
                    }
                    l[(i, j)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Ok(l)
    }

    /// Inverse of a lower-triangular matrix (forward substitution per column).
    pub fn lower_triangular_inverse(&self) -> Mat<F> {
        let n = self.n;
        let mut inv = Mat::zeros(n);
        for col in 0..n {
            let mut e = vec![F::zero(); n];
            e[col] = F::one();
            for i in 0..n {
                let mut sum = e[i];
                for k in 0..i {
                    sum = sum - self[(i, k)] * inv[(k, col)];
                }
                inv[(i, col)] = sum / self[(i, i)];
            }
        }
        inv
    }

    /// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns (eigenvalues, eigenvector matrix with eigenvectors as columns).
    pub fn sym_eig(&self) -> Result<(Vec<F>, Mat<F>), LinalgError> {
        let n = self.n;
        let mut a = self.clone();
        let mut v = Mat::identity(n);
        let tol = F::of(1e-14);
        for _sweep in 0..100 {
            let mut off = F::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            let scale = {
                let mut s = F::zero();
                for i in 0..n {
                    s += a[(i, i)] * a[(i, i)];
                }
                s.max(F::one())
            };
            if off <= tol * tol * scale {
                let eigs = (0..n).map(|i| a[(i, i)]).collect();
                return Ok((eigs, v));
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() <= F::of(1e-300) {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (F::of(2.0) * a[(p, q)]);
                    let t = {
                        let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                        sign / (theta.abs() + (theta * theta + F::one()).sqrt())
                    };
                    let c = F::one() / (t * t + F::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        Err(LinalgError::NoConvergence)
    }

    /// Apply `f` to the eigenvalues of a symmetric matrix: Q f(Λ) Qᵀ.
    pub fn sym_map(&self, f: impl Fn(F) -> F) -> Result<Mat<F>, LinalgError> {
        let (eigs, q) = self.sym_eig()?;
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = F::zero();
                for (k, &lam) in eigs.iter().enumerate() {
                    acc += q[(i, k)] * f(lam) * q[(j, k)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// Principal square root of a symmetric positive-definite matrix.
    pub fn sym_sqrt(&self) -> Result<Mat<F>, LinalgError> {
        let (eigs, _) = self.sym_eig()?;
        if eigs.iter().any(|&l| l <= F::zero()) {
            return Err(LinalgError::NotPositiveDefinite(self.n));
        }
        self.sym_map(|l| l.sqrt())
    }

    /// Inverse square root of a symmetric positive-definite matrix.
    pub fn sym_inv_sqrt(&self) -> Result<Mat<F>, LinalgError> {
        let (eigs, _) = self.sym_eig()?;
        if eigs.iter().any(|&l| l <= F::zero()) {
            return Err(LinalgError::NotPositiveDefinite(self.n));
        }
        self.sym_map(|l| F::one() / l.sqrt())
    }
}

impl<F> core::ops::Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.n + j]
    }
}

impl<F> core::ops::IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.n + j]
    }
}

/// Unbiased sample mean and covariance of row vectors.
pub fn sample_mean_cov<F: Real>(rows: &[Vec<F>]) -> (Vec<F>, Mat<F>) {
    assert!(!rows.is_empty());
    let d = rows[0].len();
    let n = rows.len();
    let nf = F::of(n as f64);
    let mut mean = vec![F::zero(); d];
    for r in rows {
        for (m, &x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m = *m / nf;
    }
    let mut cov = Mat::zeros(d);
    if n > 1 {
        for r in rows {
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
                }
            }
        }
        let denom = F::of((n - 1) as f64);
        for v in &mut cov.data {
            *v = *v / denom;
        }
    }
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_recomposes() {
        let m = Mat::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = m.cholesky().unwrap();
        let lt = l.transpose();
        let back = l.matmul(&lt);
        assert!(back.distance(&m) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert_eq!(m.cholesky().unwrap_err(), LinalgError::NotPositiveDefinite(2));
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let m = Mat::from_rows(&[&[3.0, 1.0, 0.2], &[1.0, 2.0, 0.1], &[0.2, 0.1, 1.5]]);
        let r = m.sym_sqrt().unwrap();
        assert!(r.matmul(&r).distance(&m) < 1e-10);
        let ri = m.sym_inv_sqrt().unwrap();
        assert!(ri.matmul(&r).distance(&Mat::identity(3)) < 1e-10);
    }

    #[test]
    fn lower_inverse() {
        let m = Mat::from_rows(&[&[2.0, 0.0], &[1.0, 4.0]]);
        let inv = m.lower_triangular_inverse();
        assert!(m.matmul(&inv).distance(&Mat::identity(2)) < 1e-14);
    }

    #[test]
    fn mean_cov_hand_example() {
        let rows: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ];
        let (mean, cov) = sample_mean_cov(&rows);
        assert_eq!(mean, vec![1.0, 1.0]);
        assert!((cov[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((cov[(1, 1)] - 4.0 / 3.0).abs() < 1e-15);
        assert!(cov[(0, 1)].abs() < 1e-15);
    }
}
