//! Small dense linear algebra: symmetric eigenvalues by cyclic Jacobi
//! rotations and Cholesky factorization.
//!
//! Sizes here are a few hundred at most (one row per region), so O(n^3)
//! dense routines are adequate.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Matrix(format!("expected {n}x{n}, found ragged or non-square rows")));
        }
        Ok(Self { n, data: rows.iter().flatten().copied().collect() })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| (0..n).map(|k| self[(i, k)] * other[(k, j)]).sum())
    }

    pub fn check_symmetric(&self, tol: T) -> Result<()> {
        let scale = T::one().max(self.max_abs());
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return Err(Error::Matrix(format!(
                        "not symmetric at ({i}, {j}): {} vs {}",
                        self[(i, j)],
                        self[(j, i)]
                    )));
                }
            }
        }
        Ok(())
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
/// Column `k` of `vectors` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: SquareMatrix<T>,
}

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn eig_symmetric<T: Real>(a: &SquareMatrix<T>) -> Result<Vec<T>> {
    Ok(eigh(a)?.values)
}

/// Cyclic Jacobi eigen-solver.
pub fn eigh<T: Real>(a: &SquareMatrix<T>) -> Result<SymmetricEigen<T>> {
    a.check_symmetric(T::lit(1e-10))?;
    let n = a.dim();
    // symmetrize exactly so rotations act on a truly symmetric matrix
    let mut m = SquareMatrix::from_fn(n, |i, j| (a[(i, j)] + a[(j, i)]) * T::lit(0.5));
    let mut v = SquareMatrix::identity(n);
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = SquareMatrix::from_fn(n, |row, col| v[(row, order[col])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky<T: Real>(a: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let n = a.dim();
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::Matrix(format!("matrix is not positive definite (pivot {j} = {d})")));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// `ln det A` from a Cholesky factor.
pub fn ln_det_from_cholesky<T: Real>(l: &SquareMatrix<T>) -> T {
    (0..l.dim()).map(|i| l[(i, i)].ln()).sum::<T>() * T::lit(2.0)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower<T: Real>(l: &SquareMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.dim();
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_upper_transposed<T: Real>(l: &SquareMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.dim();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}
