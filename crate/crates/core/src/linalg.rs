//! Small complex linear-algebra kernels: dense LU, preconditioned conjugate
//! gradients and restarted GMRES.
//!
//! Kept generic over [`Scalar`] so the spectral code never leaves the
//! `num-traits` world.

use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{lit, Scalar};

pub type C<T> = Complex<T>;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Dense complex matrix, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Scalar> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C::new(T::zero(), T::zero()); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_diagonal(d: &[C<T>]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<C<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C<T>]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .fold(C::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C::new(T::zero(), T::zero()) {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] = out.data[i * other.cols + j] + a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        CMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        CMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: T) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| a * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, a| m.max(a.norm()))
    }

    /// Solves `self · X = B` by LU with partial pivoting.
    pub fn solve_matrix(&self, b: &Self) -> Result<Self, LinalgError> {
        let lu = Lu::factor(self)?;
        let mut out = Self::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let x = lu.solve(&b.column(j));
            out.set_column(j, &x);
        }
        Ok(out)
    }

    pub fn solve(&self, b: &[C<T>]) -> Result<Vec<C<T>>, LinalgError> {
        Ok(Lu::factor(self)?.solve(b))
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;

    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
pub struct Lu<T> {
    n: usize,
    lu: Vec<C<T>>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &CMatrix<T>) -> Result<Self, LinalgError> {
        if a.rows != a.cols {
            return Err(LinalgError::Shape(format!("{}x{} is not square", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        for k in 0..n {
            let (p, pmax) = (k..n).map(|i| (i, lu[i * n + k].norm())).fold((k, -T::one()), |b, c| if c.1 > b.1 { c } else { b });
            if pmax <= scale * T::epsilon() * lit(1e-3) {
                return Err(LinalgError::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f == C::new(T::zero(), T::zero()) {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu[k * n + j];
                    lu[i * n + j] = lu[i * n + j] - f * v;
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        let n = self.n;
        let mut x: Vec<C<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let v = self.lu[i * n + j] * x[j];
                x[i] = x[i] - v;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let v = self.lu[i * n + j] * x[j];
                x[i] = x[i] - v;
            }
            x[i] = x[i] / self.lu[i * n + i];
        }
        x
    }
}

pub fn dot<T: Scalar>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(C::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm<T: Scalar>(a: &[C<T>]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()).sqrt()
}

#[derive(Clone, Debug)]
pub struct IterativeOutcome<T> {
    pub x: Vec<C<T>>,
    pub iterations: usize,
    /// Final relative residual `‖b - Ax‖ / ‖b‖` as tracked by the method.
    pub residual: T,
    pub converged: bool,
}

/// Conjugate gradients for a Hermitian positive definite operator with a
/// positive diagonal preconditioner.
pub fn pcg<T: Scalar>(
    mut apply: impl FnMut(&[C<T>], &mut [C<T>]),
    diag: &[T],
    b: &[C<T>],
    tol: T,
    max_iter: usize,
) -> IterativeOutcome<T> {
    let n = b.len();
    let zero = C::new(T::zero(), T::zero());
    let bnorm = norm(b);
    let mut x = vec![zero; n];
    if bnorm == T::zero() {
        return IterativeOutcome { x, iterations: 0, residual: T::zero(), converged: true };
    }
    let mut r = b.to_vec();
    let mut z: Vec<C<T>> = r.iter().zip(diag).map(|(&ri, &d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![zero; n];
    let mut rz = dot(&r, &z).re;
    let mut res = T::one();
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap).re;
        for i in 0..n {
            x[i] = x[i] + p[i] * alpha;
            r[i] = r[i] - ap[i] * alpha;
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return IterativeOutcome { x, iterations: it + 1, residual: res, converged: true };
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + p[i] * beta;
        }
    }
    IterativeOutcome { x, iterations: max_iter, residual: res, converged: false }
}

/// Restarted GMRES with a right diagonal preconditioner.
pub fn gmres<T: Scalar>(
    mut apply: impl FnMut(&[C<T>], &mut [C<T>]),
    diag: &[C<T>],
    b: &[C<T>],
    x0: Option<&[C<T>]>,
    tol: T,
    restart: usize,
    max_iter: usize,
) -> IterativeOutcome<T> {
    let n = b.len();
    let zero = C::new(T::zero(), T::zero());
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![zero; n]);
    if bnorm == T::zero() {
        return IterativeOutcome { x: vec![zero; n], iterations: 0, residual: T::zero(), converged: true };
    }
    let mut total = 0;
    let mut work = vec![zero; n];
    while total < max_iter {
        apply(&x, &mut work);
        let r: Vec<C<T>> = b.iter().zip(&work).map(|(&bi, &wi)| bi - wi).collect();
        let beta = norm(&r);
        let mut res = beta / bnorm;
        if res <= tol {
            return IterativeOutcome { x, iterations: total, residual: res, converged: true };
        }
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<C<T>>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|&ri| ri / beta).collect());
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = C::new(beta, T::zero());
        let mut k_used = 0;
        for k in 0..m {
            let z: Vec<C<T>> = v[k].iter().zip(diag).map(|(&vi, &d)| vi / d).collect();
            apply(&z, &mut work);
            let mut w = work.clone();
            for (j, vj) in v.iter().enumerate() {
                let hj = dot(vj, &w);
                h[j][k] = hj;
                for (wi, &vji) in w.iter_mut().zip(vj) {
                    *wi = *wi - vji * hj;
                }
            }
            let hnext = norm(&w);
            h[k + 1][k] = C::new(hnext, T::zero());
            for j in 0..k {
                let (a, bb) = (h[j][k], h[j + 1][k]);
                h[j][k] = a * cs[j] + sn[j] * bb;
                h[j + 1][k] = -sn[j].conj() * a + bb * cs[j];
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let an = a.norm();
            let nrm = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if an == T::zero() {
                cs[k] = T::zero();
                sn[k] = C::new(T::one(), T::zero());
                h[k][k] = bb;
            } else {
                let alpha = a / an;
                cs[k] = an / nrm;
                sn[k] = alpha * bb.conj() / nrm;
                h[k][k] = alpha * nrm;
            }
            h[k + 1][k] = zero;
            let gk = g[k];
            g[k] = gk * cs[k];
            g[k + 1] = -sn[k].conj() * gk;
            k_used = k + 1;
            total += 1;
            res = g[k + 1].norm() / bnorm;
            if res <= tol || hnext == T::zero() {
                break;
            }
            v.push(w.iter().map(|&wi| wi / hnext).collect());
        }
        let mut y = vec![zero; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc = acc - h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, &yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] = x[i] + v[j][i] / diag[i] * yj;
            }
        }
        if res <= tol {
            apply(&x, &mut work);
            let true_res = norm(&b.iter().zip(&work).map(|(&bi, &wi)| bi - wi).collect::<Vec<_>>()) / bnorm;
            if true_res <= tol * lit(10.0) {
                return IterativeOutcome { x, iterations: total, residual: true_res, converged: true };
            }
        }
    }
    apply(&x, &mut work);
    let true_res = norm(&b.iter().zip(&work).map(|(&bi, &wi)| bi - wi).collect::<Vec<_>>()) / bnorm;
    IterativeOutcome { x, iterations: total, residual: true_res, converged: true_res <= tol }
}
