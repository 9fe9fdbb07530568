//! Orthonormal tensor-Legendre bases on the reference cube [-1, 1]^d.

use crate::real::Real;

/// Which tensor-Legendre products are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// Total degree at most k.
    Total,
    /// Degree at most k in each variable.
    Tensor,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Total => "P",
            Self::Tensor => "Q",
        }
    }
}

/// Monomial coefficients of the orthonormal Legendre polynomials up to `max_degree`.
fn orthonormal_legendre_coefficients(max_degree: usize) -> Vec<Vec<f64>> {
    let mut p: Vec<Vec<f64>> = vec![vec![1.0]];
    if max_degree >= 1 {
        p.push(vec![0.0, 1.0]);
    }
    for n in 2..=max_degree {
        let nf = n as f64;
        let mut c = vec![0.0; n + 1];
        for (i, v) in p[n - 1].iter().enumerate() {
            c[i + 1] += (2.0 * nf - 1.0) / nf * v;
        }
        for (i, v) in p[n - 2].iter().enumerate() {
            c[i] -= (nf - 1.0) / nf * v;
        }
        p.push(c);
    }
    for (n, c) in p.iter_mut().enumerate() {
        let s = ((2 * n + 1) as f64 / 2.0).sqrt();
        c.iter_mut().for_each(|v| *v *= s);
    }
    p
}

#[derive(Debug, Clone)]
pub struct Basis<T> {
    dim: usize,
    degree: usize,
    kind: BasisKind,
    modes: Vec<[usize; 3]>,
    /// Monomial coefficients of each 1D orthonormal polynomial.
    poly: Vec<Vec<T>>,
}

impl<T: Real> Basis<T> {
    pub fn new(dim: usize, degree: usize, kind: BasisKind) -> Self {
        assert!((1..=3).contains(&dim), "basis dimension must be 1, 2 or 3");
        let mut modes = Vec::new();
        let range = |a: usize| if a < dim { degree } else { 0 };
        for k in 0..=range(2) {
            for j in 0..=range(1) {
                for i in 0..=range(0) {
                    let keep = match kind {
                        BasisKind::Total => i + j + k <= degree,
                        BasisKind::Tensor => true,
                    };
                    if keep {
                        modes.push([i, j, k]);
                    }
                }
            }
        }
        // Sort by total degree; stable so ties keep lexicographic order.
        modes.sort_by_key(|m| m[0] + m[1] + m[2]);
        let max_1d = degree;
        let poly =
            orthonormal_legendre_coefficients(max_1d).into_iter().map(|c| c.into_iter().map(T::of).collect()).collect();
        Self { dim, degree, kind, modes, poly }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[usize; 3]] {
        &self.modes
    }

    /// Total polynomial degree of mode `m`.
    pub fn mode_order(&self, m: usize) -> usize {
        self.modes[m].iter().sum()
    }

    /// Value of the constant mode, `2^{-d/2}`.
    pub fn constant_value(&self) -> T {
        T::of(2f64.powf(-(self.dim as f64) / 2.0))
    }

    /// `r`-th derivative of the orthonormal Legendre polynomial of degree `n` at `x`.
    pub fn legendre_1d(&self, n: usize, r: usize, x: T) -> T {
        let c = &self.poly[n];
        if r > n {
            return T::zero();
        }
        // Horner on the r-times differentiated coefficients.
        let mut acc = T::zero();
        for i in (r..c.len()).rev() {
            let mut f = T::one();
            for s in 0..r {
                f *= T::of_usize(i - s);
            }
            acc = acc * x + c[i] * f;
        }
        acc
    }

    /// Mixed derivative `∂^order` of every mode at reference point `xi`, written into `out`.
    pub fn eval_derivative(&self, order: [usize; 3], xi: &[T; 3], out: &mut [T]) {
        for (m, alpha) in self.modes.iter().enumerate() {
            let mut v = T::one();
            for a in 0..self.dim {
                v *= self.legendre_1d(alpha[a], order[a], xi[a]);
            }
            out[m] = v;
        }
    }

    pub fn eval(&self, xi: &[T; 3], out: &mut [T]) {
        self.eval_derivative([0; 3], xi, out)
    }

    /// Reference gradient component along `axis`.
    pub fn eval_grad(&self, axis: usize, xi: &[T; 3], out: &mut [T]) {
        let mut order = [0; 3];
        order[axis] = 1;
        self.eval_derivative(order, xi, out)
    }
}

/// All multi-indices of total order `m` in `dim` dimensions.
pub fn multi_indices(dim: usize, m: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for k in 0..=if dim > 2 { m } else { 0 } {
        for j in 0..=if dim > 1 { m - k } else { 0 } {
            let i = m - j - k;
            if dim == 1 && (j > 0 || k > 0) {
                continue;
            }
            out.push([i, j, k]);
        }
    }
    out
}
