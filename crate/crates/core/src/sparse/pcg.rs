use super::csr::CsrMatrix;
use crate::real::Real;

pub trait Preconditioner<T> {
    /// `z = M^{-1} r`.
    fn apply(&self, r: &[T], z: &mut [T]);
}

/// Identity preconditioner.
impl<T: Real> Preconditioner<T> for () {
    fn apply(&self, r: &[T], z: &mut [T]) {
        z.copy_from_slice(r);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOutcome<T> {
    pub iterations: usize,
    pub residual_norm: T,
    pub converged: bool,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Preconditioned conjugate gradients on `A x = b`, starting from the contents of `x`.
/// Stops once `||r|| <= max(rel_tol * ||b||, abs_tol)`.
pub fn pcg<T: Real, P: Preconditioner<T> + ?Sized>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    precond: &P,
    rel_tol: T,
    abs_tol: T,
    max_iter: usize,
) -> PcgOutcome<T> {
    let n = b.len();
    let mut r = b.to_vec();
    a.mul_vec_add(-T::one(), x, &mut r);
    let target = (rel_tol * dot(b, b).sqrt()).max(abs_tol);
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= target {
        return PcgOutcome { iterations: 0, residual_norm: rnorm, converged: true };
    }
    let mut z = vec![T::zero(); n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return PcgOutcome { iterations: it, residual_norm: rnorm, converged: false };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= target {
            return PcgOutcome { iterations: it, residual_norm: rnorm, converged: true };
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    PcgOutcome { iterations: max_iter, residual_norm: rnorm, converged: false }
}
