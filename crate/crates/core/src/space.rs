//! A DG space: mesh, basis, quadrature rules and reference tables.

use crate::basis::{Basis, BasisKind};
use crate::mesh::CartesianMesh;
use crate::quadrature::{gauss_legendre, TensorRule};
use crate::real::Real;

/// Basis values at a set of reference points, stored as `[point * n_modes + mode]`.
#[derive(Debug, Clone)]
pub struct Table<T> {
    pub n_points: usize,
    pub n_modes: usize,
    pub values: Vec<T>,
}

impl<T: Real> Table<T> {
    pub fn build(basis: &Basis<T>, points: &[[T; 3]], order: [usize; 3]) -> Self {
        let n_modes = basis.len();
        let mut values = vec![T::zero(); points.len() * n_modes];
        for (p, row) in points.iter().zip(values.chunks_mut(n_modes)) {
            basis.eval_derivative(order, p, row);
        }
        Self { n_points: points.len(), n_modes, values }
    }

    #[inline]
    pub fn row(&self, point: usize) -> &[T] {
        &self.values[point * self.n_modes..(point + 1) * self.n_modes]
    }

    /// Evaluates the expansion with coefficients `c` at point `p`.
    #[inline]
    pub fn eval(&self, point: usize, c: &[T]) -> T {
        let row = self.row(point);
        let mut s = T::zero();
        for m in 0..self.n_modes {
            s += row[m] * c[m];
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct DgSpace<T> {
    pub mesh: CartesianMesh<T>,
    pub basis: Basis<T>,
    /// Volume rule with `k + 1` Gauss points per axis.
    pub volume: TensorRule<T>,
    /// Face rule in `d - 1` dimensions with `k + 1` Gauss points per axis.
    pub face: TensorRule<T>,
    pub vol_phi: Table<T>,
    /// Reference derivatives along each axis at the volume points.
    pub vol_dphi: [Table<T>; 3],
    /// Basis traces on the face points, indexed `[axis][side]`.
    pub face_phi: [[Table<T>; 2]; 3],
}

impl<T: Real> DgSpace<T> {
    pub fn new(mesh: CartesianMesh<T>, degree: usize, kind: BasisKind) -> Self {
        let dim = mesh.dim();
        let basis = Basis::new(dim, degree, kind);
        let g = gauss_legendre::<T>(degree + 1);
        let volume = TensorRule::new(&g, dim);
        let face = TensorRule::new(&g, dim - 1);
        let vol_phi = Table::build(&basis, &volume.points, [0; 3]);
        let vol_dphi = std::array::from_fn(|a| {
            let mut order = [0; 3];
            order[a] = 1;
            let mut t = Table::build(&basis, &volume.points, order);
            if a >= dim {
                t.values.iter_mut().for_each(|v| *v = T::zero());
            }
            t
        });
        let face_phi = std::array::from_fn(|a| {
            std::array::from_fn(|side| {
                let pts = face_reference_points(&face, dim, a.min(dim - 1), side);
                Table::build(&basis, &pts, [0; 3])
            })
        });
        Self { mesh, basis, volume, face, vol_phi, vol_dphi, face_phi }
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    /// Reference points of face quadrature nodes on side `side` of an element, normal to `axis`.
    pub fn face_points(&self, axis: usize, side: usize) -> Vec<[T; 3]> {
        face_reference_points(&self.face, self.dim(), axis, side)
    }

    /// Physical coordinates of the face quadrature nodes of face `f`.
    pub fn face_physical_points(&self, f: usize) -> Vec<[T; 3]> {
        let face = self.mesh.faces()[f];
        let (e, side) = match face.minus {
            Some(m) => (m, 1),
            None => (face.plus.expect("face has an element"), 0),
        };
        self.face_points(face.axis, side).iter().map(|xi| self.mesh.to_physical(e, xi)).collect()
    }

    /// Physical coordinates of the volume quadrature nodes of element `e`.
    pub fn volume_physical_points(&self, e: usize) -> Vec<[T; 3]> {
        self.volume.points.iter().map(|xi| self.mesh.to_physical(e, xi)).collect()
    }

    /// Scale factor from reference to physical derivatives along `axis`.
    pub fn inv_half_h(&self, axis: usize) -> T {
        T::two() / self.mesh.h()[axis]
    }
}

/// Lifts a `(d-1)`-dimensional face rule onto the face `xi_axis = ±1` of the reference cube.
pub fn face_reference_points<T: Real>(face: &TensorRule<T>, dim: usize, axis: usize, side: usize) -> Vec<[T; 3]> {
    let fixed = if side == 0 { -T::one() } else { T::one() };
    face.points
        .iter()
        .map(|q| {
            let mut p = [T::zero(); 3];
            let mut k = 0;
            for (a, coord) in p.iter_mut().enumerate().take(dim) {
                if a == axis {
                    *coord = fixed;
                } else {
                    *coord = q[k];
                    k += 1;
                }
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;

    #[test]
    fn face_nodes_coincide_from_both_sides() {
        let mesh = CartesianMesh::<f64>::uniform(3, 0.0, 1.0, 3, BoundaryKind::Transmissive).unwrap();
        let space = DgSpace::new(mesh, 2, BasisKind::Total);
        for f in space.mesh.faces().iter().filter(|f| !f.is_boundary()) {
            let a = f.axis;
            let xm: Vec<_> =
                space.face_points(a, 1).iter().map(|p| space.mesh.to_physical(f.minus.unwrap(), p)).collect();
            let xp: Vec<_> =
                space.face_points(a, 0).iter().map(|p| space.mesh.to_physical(f.plus.unwrap(), p)).collect();
            for (u, v) in xm.iter().zip(&xp) {
                for c in 0..3 {
                    assert!((u[c] - v[c]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn table_sizes() {
        let mesh = CartesianMesh::<f64>::uniform(2, 0.0, 1.0, 2, BoundaryKind::Periodic).unwrap();
        let s = DgSpace::new(mesh, 2, BasisKind::Total);
        assert_eq!(s.vol_phi.n_points, 9);
        assert_eq!(s.face_phi[1][0].n_points, 3);
        assert_eq!(s.n_modes(), 6);
    }
}
