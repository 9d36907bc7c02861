//! Orthonormal probabilists' Hermite polynomials, multi-index sets and
//! Gauss-Hermite quadrature for centred Gaussians.

use thiserror::Error;

use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum HermiteError {
    #[error("coefficient vector has length {got}, basis has {expected} functions")]
    Length { expected: usize, got: usize },
    #[error("multi-index set has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("quadrature of order {order} is not exact for degree {degree} products")]
    Quadrature { order: usize, degree: usize },
}

/// Values `he_0(x), ..., he_n(x)` of the orthonormal Hermite polynomials
/// (`E[he_i(Z) he_j(Z)] = δ_ij` for standard normal `Z`).
pub fn hermite_values<T: Scalar>(n: usize, x: T, out: &mut [T]) {
    out[0] = T::one();
    if n >= 1 {
        out[1] = x;
    }
    for j in 1..n {
        let jf = lit::<T>(j as f64);
        out[j + 1] = (x * out[j] - jf.sqrt() * out[j - 1]) / (jf + T::one()).sqrt();
    }
}

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`; weights sum to one.
/// Exact for polynomials of degree `≤ 2 order - 1`.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "order must be positive");
    let n = order;
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // physicists' weight e^{-x²} to standard normal
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
    nodes.reverse();
    weights.reverse();
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Nodes and weights for `E[f(U)]`, `U ~ Exp(1)`; weights sum to one.
/// Exact for polynomials of degree `≤ 2 order - 1`.
pub fn gauss_laguerre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "order must be positive");
    let n = order;
    let laguerre = |z: f64| {
        let (mut p1, mut p2) = (1.0, 0.0);
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            p1 = ((2.0 * j as f64 + 1.0 - z) * p2 - j as f64 * p3) / (j as f64 + 1.0);
        }
        (p1, p2)
    };
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let mut z = 0.0f64;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * n as f64),
            1 => z + 15.0 / (1.0 + 2.5 * n as f64),
            _ => {
                let a = (i - 1) as f64;
                z + (1.0 + 2.55 * a) / (1.9 * a) * (z - x[i - 2])
            }
        };
        for _ in 0..200 {
            let (p1, p2) = laguerre(z);
            let pp = n as f64 * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs() {
                break;
            }
        }
        let (p1, p2) = laguerre(z);
        let pp = n as f64 * (p1 - p2) / z;
        x[i] = z;
        w[i] = -1.0 / (pp * n as f64 * p2);
    }
    (x, w)
}

/// Total-degree multi-indices `|m|₁ ≤ degree` in `dim` variables, graded
/// then lexicographically descending within a degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexSet {
    dim: usize,
    degree: usize,
    indices: Vec<Vec<u8>>,
}

impl MultiIndexSet {
    pub fn total_degree(dim: usize, degree: usize) -> Self {
        let mut indices = Vec::new();
        for t in 0..=degree {
            let mut current = vec![0u8; dim];
            compositions(t, 0, &mut current, &mut indices);
        }
        if dim == 0 {
            indices.truncate(1);
        }
        MultiIndexSet { dim, degree, indices }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, i: usize) -> &[u8] {
        &self.indices[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.indices.iter().map(|v| v.as_slice())
    }

    pub fn position(&self, m: &[u8]) -> Option<usize> {
        self.indices.iter().position(|v| v.as_slice() == m)
    }

    /// Eigenvalue `-(m · rates)` of the OU generator on each basis function.
    pub fn ou_eigenvalues<T: Scalar>(&self, rates: &[T]) -> Vec<T> {
        self.indices
            .iter()
            .map(|m| -m.iter().zip(rates).fold(T::zero(), |acc, (&mi, &r)| acc + lit::<T>(mi as f64) * r))
            .collect()
    }
}

fn compositions(remaining: usize, pos: usize, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    let dim = current.len();
    if dim == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == dim - 1 {
        current[pos] = remaining as u8;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v as u8;
        compositions(remaining - v, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Tensor Hermite basis orthonormal in `L²(N(0, diag(variances)))`.
#[derive(Clone, Debug)]
pub struct HermiteBasis<T> {
    set: MultiIndexSet,
    scales: Vec<T>,
}

impl<T: Scalar> HermiteBasis<T> {
    pub fn new(set: MultiIndexSet, variances: &[T]) -> Result<Self, HermiteError> {
        if set.dim() != variances.len() {
            return Err(HermiteError::Dimension { expected: variances.len(), got: set.dim() });
        }
        Ok(HermiteBasis { set, scales: variances.iter().map(|v| v.sqrt()).collect() })
    }

    pub fn set(&self) -> &MultiIndexSet {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn scales(&self) -> &[T] {
        &self.scales
    }

    /// All basis functions at `eta`.
    pub fn evaluate(&self, eta: &[T], out: &mut [T]) {
        let d = self.set.degree();
        let dim = self.set.dim();
        let mut table = vec![T::zero(); dim * (d + 1)];
        for i in 0..dim {
            hermite_values(d, eta[i] / self.scales[i], &mut table[i * (d + 1)..(i + 1) * (d + 1)]);
        }
        for (o, m) in out.iter_mut().zip(self.set.iter()) {
            *o = m.iter().enumerate().fold(T::one(), |acc, (i, &mi)| acc * table[i * (d + 1) + mi as usize]);
        }
    }

    /// Evaluates the expansion with the given coefficients at `eta`.
    pub fn expand(&self, coeffs: &[T], eta: &[T]) -> T {
        let mut psi = vec![T::zero(); self.len()];
        self.evaluate(eta, &mut psi);
        psi.iter().zip(coeffs).fold(T::zero(), |acc, (&p, &c)| acc + p * c)
    }

    /// Coefficients of `∂/∂η_i` of the expansion, using
    /// `∂ψ_m = √m_i / σ_i ψ_{m - e_i}`.
    pub fn derivative(&self, coeffs: &[T], i: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        let mut lowered = vec![0u8; self.set.dim()];
        for (idx, m) in self.set.iter().enumerate() {
            if m[i] == 0 {
                continue;
            }
            lowered.copy_from_slice(m);
            lowered[i] -= 1;
            let target = self.set.position(&lowered).expect("total-degree sets are downward closed");
            out[target] = out[target] + coeffs[idx] * lit::<T>(m[i] as f64).sqrt() / self.scales[i];
        }
        out
    }
}

/// Tensor-product Gauss-Hermite rule for `N(0, diag(variances))`.
#[derive(Clone, Debug)]
pub struct TensorQuadrature<T> {
    pub points: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> TensorQuadrature<T> {
    pub fn new(order: usize, variances: &[T]) -> Self {
        let (x, w) = gauss_hermite(order);
        let dim = variances.len();
        let total = order.pow(dim as u32);
        let scales: Vec<T> = variances.iter().map(|v| v.sqrt()).collect();
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut digits = vec![0usize; dim];
        for _ in 0..total {
            points.push((0..dim).map(|i| lit::<T>(x[digits[i]]) * scales[i]).collect());
            weights.push(lit::<T>(digits.iter().fold(1.0, |acc, &d| acc * w[d])));
            for slot in digits.iter_mut().rev() {
                *slot += 1;
                if *slot < order {
                    break;
                }
                *slot = 0;
            }
        }
        TensorQuadrature { points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Largest deviation of the quadrature Gram matrix from the identity.
pub fn orthonormality_defect<T: Scalar>(basis: &HermiteBasis<T>, quad: &TensorQuadrature<T>) -> T {
    let n = basis.len();
    let mut gram = vec![T::zero(); n * n];
    let mut psi = vec![T::zero(); n];
    for (p, &w) in quad.points.iter().zip(&quad.weights) {
        basis.evaluate(p, &mut psi);
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = gram[i * n + j] + w * psi[i] * psi[j];
            }
        }
    }
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max(num_traits::Float::abs(gram[i * n + j] - target));
        }
    }
    worst
}
