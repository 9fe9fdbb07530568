//! Modal DG fields: coefficients of a vector-valued piecewise polynomial.

use thiserror::Error;

use crate::real::Real;
use crate::space::DgSpace;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("non-finite value for component {component} in element {element}")]
    NonFinite { element: usize, component: usize },
    #[error("field shape mismatch: expected {expected} coefficients, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Coefficients laid out as `[element][component][mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgField<T> {
    n_elements: usize,
    n_components: usize,
    n_modes: usize,
    data: Vec<T>,
}

impl<T: Real> DgField<T> {
    pub fn zeros(n_elements: usize, n_components: usize, n_modes: usize) -> Self {
        Self { n_elements, n_components, n_modes, data: vec![T::zero(); n_elements * n_components * n_modes] }
    }

    pub fn zeros_like(space: &DgSpace<T>, n_components: usize) -> Self {
        Self::zeros(space.n_elements(), n_components, space.n_modes())
    }

    pub fn from_vec(n_elements: usize, n_components: usize, n_modes: usize, data: Vec<T>) -> Result<Self, FieldError> {
        let expected = n_elements * n_components * n_modes;
        if data.len() != expected {
            return Err(FieldError::Shape { expected, got: data.len() });
        }
        Ok(Self { n_elements, n_components, n_modes, data })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// All components of element `e`.
    #[inline]
    pub fn element(&self, e: usize) -> &[T] {
        let s = self.n_components * self.n_modes;
        &self.data[e * s..(e + 1) * s]
    }

    #[inline]
    pub fn element_mut(&mut self, e: usize) -> &mut [T] {
        let s = self.n_components * self.n_modes;
        &mut self.data[e * s..(e + 1) * s]
    }

    #[inline]
    pub fn coeffs(&self, e: usize, c: usize) -> &[T] {
        let o = (e * self.n_components + c) * self.n_modes;
        &self.data[o..o + self.n_modes]
    }

    #[inline]
    pub fn coeffs_mut(&mut self, e: usize, c: usize) -> &mut [T] {
        let o = (e * self.n_components + c) * self.n_modes;
        &mut self.data[o..o + self.n_modes]
    }

    /// Extracts one component as a single-component field.
    pub fn component(&self, c: usize) -> DgField<T> {
        let mut out = DgField::zeros(self.n_elements, 1, self.n_modes);
        for e in 0..self.n_elements {
            out.coeffs_mut(e, 0).copy_from_slice(self.coeffs(e, c));
        }
        out
    }

    pub fn set_component(&mut self, c: usize, src: &DgField<T>) {
        for e in 0..self.n_elements {
            self.coeffs_mut(e, c).copy_from_slice(src.coeffs(e, 0));
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &DgField<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * *b;
        }
    }

    /// `self = a * self + b * other`.
    pub fn lincomb(&mut self, a: T, b: T, other: &DgField<T>) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x = a * *x + b * *y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// First element/component holding a non-finite coefficient.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        let i = self.data.iter().position(|v| !v.is_finite())?;
        Some((i / (self.n_components * self.n_modes), (i / self.n_modes) % self.n_components))
    }

    /// Cell average of component `c` in element `e`, given the constant-mode value `b0`.
    #[inline]
    pub fn cell_average(&self, e: usize, c: usize, b0: T) -> T {
        self.coeffs(e, c)[0] * b0
    }
}

/// L2 projection of `f` onto the space by volume quadrature. `f` writes the
/// `n_components` values at a physical point into its output slice.
pub fn l2_project<T: Real, F>(space: &DgSpace<T>, n_components: usize, mut f: F) -> Result<DgField<T>, FieldError>
where
    F: FnMut(&[T; 3], &mut [T]),
{
    let nm = space.n_modes();
    let mut out = DgField::zeros_like(space, n_components);
    let mut vals = vec![T::zero(); n_components];
    for e in 0..space.n_elements() {
        for (q, (xi, w)) in space.volume.points.iter().zip(&space.volume.weights).enumerate() {
            let x = space.mesh.to_physical(e, xi);
            f(&x, &mut vals);
            let row = space.vol_phi.row(q);
            for (c, v) in vals.iter().enumerate() {
                if !v.is_finite() {
                    return Err(FieldError::NonFinite { element: e, component: c });
                }
                let coeffs = out.coeffs_mut(e, c);
                for m in 0..nm {
                    coeffs[m] += *w * *v * row[m];
                }
            }
        }
    }
    Ok(out)
}

/// Evaluates all components of `field` at reference point `xi` in element `e`.
pub fn field_eval<T: Real>(space: &DgSpace<T>, field: &DgField<T>, e: usize, xi: &[T; 3]) -> Vec<T> {
    let mut phi = vec![T::zero(); space.n_modes()];
    space.basis.eval(xi, &mut phi);
    (0..field.n_components()).map(|c| field.coeffs(e, c).iter().zip(&phi).map(|(a, b)| *a * *b).sum()).collect()
}

/// Physical gradient of component `c` at reference point `xi` in element `e`.
pub fn field_gradient<T: Real>(space: &DgSpace<T>, field: &DgField<T>, e: usize, c: usize, xi: &[T; 3]) -> [T; 3] {
    let mut d = vec![T::zero(); space.n_modes()];
    let mut g = [T::zero(); 3];
    for (a, ga) in g.iter_mut().enumerate().take(space.dim()) {
        space.basis.eval_grad(a, xi, &mut d);
        *ga = field.coeffs(e, c).iter().zip(&d).map(|(x, y)| *x * *y).sum::<T>() * space.inv_half_h(a);
    }
    g
}

/// Integral of component `c` over the whole domain (exact from the constant mode).
pub fn field_integral<T: Real>(space: &DgSpace<T>, field: &DgField<T>, c: usize) -> T {
    let jac = space.mesh.volume_jacobian();
    let scale = jac / space.basis.constant_value();
    (0..field.n_elements()).map(|e| field.coeffs(e, c)[0]).sum::<T>() * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisKind;
    use crate::mesh::{BoundaryKind, CartesianMesh};
    use approx::assert_relative_eq;

    fn space(dim: usize, k: usize, kind: BasisKind) -> DgSpace<f64> {
        let mesh = CartesianMesh::uniform(dim, -0.5, 1.0, 3, BoundaryKind::Transmissive).unwrap();
        DgSpace::new(mesh, k, kind)
    }

    #[test]
    fn projection_reproduces_polynomials_in_the_space() {
        let s = space(2, 2, BasisKind::Total);
        let f = |x: &[f64; 3]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1] - 3.0 * x[1] * x[1];
        let u = l2_project(&s, 1, |x, out| out[0] = f(x)).unwrap();
        for e in [0, 4, 8] {
            for xi in [[0.3, -0.7, 0.0], [1.0, 1.0, 0.0], [-0.2, 0.9, 0.0]] {
                let x = s.mesh.to_physical(e, &xi);
                assert_relative_eq!(field_eval(&s, &u, e, &xi)[0], f(&x), epsilon = 1e-13);
            }
            let g = field_gradient(&s, &u, e, 0, &[0.1, 0.2, 0.0]);
            let x = s.mesh.to_physical(e, &[0.1, 0.2, 0.0]);
            assert_relative_eq!(g[0], 2.0 + 0.5 * x[1], epsilon = 1e-12);
            assert_relative_eq!(g[1], -1.0 + 0.5 * x[0] - 6.0 * x[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn q2_projection_reproduces_biquadratic() {
        let s = space(3, 2, BasisKind::Tensor);
        let f = |x: &[f64; 3]| x[0] * x[0] * x[1] * x[1] * x[2] + 1.0;
        let u = l2_project(&s, 1, |x, out| out[0] = f(x)).unwrap();
        let xi = [0.4, -0.1, 0.8];
        assert_relative_eq!(field_eval(&s, &u, 13, &xi)[0], f(&s.mesh.to_physical(13, &xi)), epsilon = 1e-13);
    }

    #[test]
    fn cell_average_and_integral() {
        let s = space(2, 1, BasisKind::Total);
        let u = l2_project(&s, 2, |x, out| {
            out[0] = 2.0;
            out[1] = x[0];
        })
        .unwrap();
        let b0 = s.basis.constant_value();
        assert_relative_eq!(u.cell_average(0, 0, b0), 2.0, epsilon = 1e-14);
        assert_relative_eq!(field_integral(&s, &u, 0), 2.0 * 1.5 * 1.5, epsilon = 1e-13);
        assert_relative_eq!(u.cell_average(0, 1, b0), -0.25, epsilon = 1e-14);
    }

    #[test]
    fn projection_rejects_non_finite() {
        let s = space(2, 1, BasisKind::Total);
        let err = l2_project(&s, 2, |_, out| {
            out[0] = 1.0;
            out[1] = f64::NAN;
        })
        .unwrap_err();
        assert_eq!(err, FieldError::NonFinite { element: 0, component: 1 });
    }
}
