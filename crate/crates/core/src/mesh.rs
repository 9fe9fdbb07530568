//! Uniform Cartesian meshes in two and three dimensions.

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: cell count must be positive")]
    NoCells { axis: usize },
    #[error("axis {axis}: lower bound {lower} is not below upper bound {upper}")]
    EmptyExtent { axis: usize, lower: f64, upper: f64 },
    #[error("axis {axis}: periodic boundaries must be set on both sides")]
    UnpairedPeriodic { axis: usize },
}

/// How a domain boundary closes the discrete problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Periodic,
    /// Ghost states sampled from a known solution.
    Exact,
    /// Zero-gradient outflow.
    Transmissive,
    /// Slip wall.
    Reflecting,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Periodic => "periodic",
            Self::Exact => "exact",
            Self::Transmissive => "transmissive",
            Self::Reflecting => "reflecting",
        }
    }
}

/// A face normal to `axis`. `minus` lies on the lower side, `plus` on the upper side;
/// exactly one of them is `None` on a domain boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub minus: Option<usize>,
    pub plus: Option<usize>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none() || self.plus.is_none()
    }

    /// The element owning a boundary face and the boundary side (0 lower, 1 upper).
    pub fn boundary_owner(&self) -> Option<(usize, usize)> {
        match (self.minus, self.plus) {
            (Some(e), None) => Some((e, 1)),
            (None, Some(e)) => Some((e, 0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CartesianMesh<T> {
    dim: usize,
    lower: [T; 3],
    upper: [T; 3],
    cells: [usize; 3],
    h: [T; 3],
    boundary: [[BoundaryKind; 2]; 3],
    faces: Vec<Face>,
    /// `element_faces[e][2 * axis + side]`, side 0 lower and 1 upper.
    element_faces: Vec<[usize; 6]>,
}

impl<T: Real> CartesianMesh<T> {
    /// Builds a mesh over the box `lower..upper` with the given cell counts per axis.
    /// Entries beyond `dim` are ignored.
    pub fn new(
        dim: usize,
        lower: [T; 3],
        upper: [T; 3],
        cells: [usize; 3],
        boundary: [[BoundaryKind; 2]; 3],
    ) -> Result<Self, MeshError> {
        if !(2..=3).contains(&dim) {
            return Err(MeshError::Dimension(dim));
        }
        let mut h = [T::one(); 3];
        let mut cells_used = [1usize; 3];
        let mut lo = [T::zero(); 3];
        let mut up = [T::one(); 3];
        for a in 0..dim {
            if cells[a] == 0 {
                return Err(MeshError::NoCells { axis: a });
            }
            if !(lower[a] < upper[a]) {
                return Err(MeshError::EmptyExtent {
                    axis: a,
                    lower: lower[a].to_f64_lossy(),
                    upper: upper[a].to_f64_lossy(),
                });
            }
            let periodic = boundary[a].map(|b| b == BoundaryKind::Periodic);
            if periodic[0] != periodic[1] {
                return Err(MeshError::UnpairedPeriodic { axis: a });
            }
            cells_used[a] = cells[a];
            lo[a] = lower[a];
            up[a] = upper[a];
            h[a] = (upper[a] - lower[a]) / T::of_usize(cells[a]);
        }
        let mut mesh = Self {
            dim,
            lower: lo,
            upper: up,
            cells: cells_used,
            h,
            boundary,
            faces: Vec::new(),
            element_faces: Vec::new(),
        };
        mesh.build_faces();
        Ok(mesh)
    }

    /// Uniform square/cube mesh with the same boundary kind everywhere.
    pub fn uniform(dim: usize, lower: T, upper: T, n: usize, kind: BoundaryKind) -> Result<Self, MeshError> {
        Self::new(dim, [lower; 3], [upper; 3], [n; 3], [[kind; 2]; 3])
    }

    fn build_faces(&mut self) {
        let ne = self.num_elements();
        let mut element_faces = vec![[usize::MAX; 6]; ne];
        let mut faces = Vec::new();
        for a in 0..self.dim {
            let periodic = self.is_periodic(a);
            let n = self.cells[a];
            for e in 0..ne {
                let idx = self.element_index(e);
                let i = idx[a];
                // Lower face of every element, plus the upper boundary face of the last layer.
                let minus = if i > 0 {
                    let mut m = idx;
                    m[a] -= 1;
                    Some(self.element_id(m))
                } else if periodic {
                    let mut m = idx;
                    m[a] = n - 1;
                    Some(self.element_id(m))
                } else {
                    None
                };
                let f = faces.len();
                faces.push(Face { axis: a, minus, plus: Some(e) });
                element_faces[e][2 * a] = f;
                if let Some(m) = minus {
                    element_faces[m][2 * a + 1] = f;
                }
                if i == n - 1 && !periodic {
                    let f = faces.len();
                    faces.push(Face { axis: a, minus: Some(e), plus: None });
                    element_faces[e][2 * a + 1] = f;
                }
            }
        }
        self.faces = faces;
        self.element_faces = element_faces;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn lower(&self) -> [T; 3] {
        self.lower
    }

    pub fn upper(&self) -> [T; 3] {
        self.upper
    }

    /// Cell widths per axis (1 for unused axes).
    pub fn h(&self) -> [T; 3] {
        self.h
    }

    /// Cell diameter.
    pub fn diameter(&self) -> T {
        (0..self.dim).map(|a| self.h[a] * self.h[a]).sum::<T>().sqrt()
    }

    pub fn boundary(&self, axis: usize, side: usize) -> BoundaryKind {
        self.boundary[axis][side]
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.boundary[axis][0] == BoundaryKind::Periodic
    }

    pub fn num_elements(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn element_faces(&self, e: usize) -> &[usize; 6] {
        &self.element_faces[e]
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> T {
        (0..self.dim).map(|a| self.h[a]).fold(T::one(), |p, x| p * x)
    }

    pub fn domain_volume(&self) -> T {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).fold(T::one(), |p, x| p * x)
    }

    /// Ratio of the physical cell volume to the reference cube volume.
    pub fn volume_jacobian(&self) -> T {
        (0..self.dim).map(|a| self.h[a] * T::half()).fold(T::one(), |p, x| p * x)
    }

    /// Ratio of a physical face area (normal to `axis`) to the reference face area.
    pub fn face_jacobian(&self, axis: usize) -> T {
        (0..self.dim).filter(|&b| b != axis).map(|b| self.h[b] * T::half()).fold(T::one(), |p, x| p * x)
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> T {
        (0..self.dim).filter(|&b| b != axis).map(|b| self.h[b]).fold(T::one(), |p, x| p * x)
    }

    /// Lexicographic element id, first axis fastest.
    pub fn element_id(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.cells[0] * (idx[1] + self.cells[1] * idx[2])
    }

    pub fn element_index(&self, e: usize) -> [usize; 3] {
        let nx = self.cells[0];
        let ny = self.cells[1];
        [e % nx, (e / nx) % ny, e / (nx * ny)]
    }

    pub fn element_center(&self, e: usize) -> [T; 3] {
        let idx = self.element_index(e);
        let mut c = [T::zero(); 3];
        for a in 0..self.dim {
            c[a] = self.lower[a] + (T::of_usize(idx[a]) + T::half()) * self.h[a];
        }
        c
    }

    /// Maps a reference point in [-1, 1]^d to physical coordinates in element `e`.
    pub fn to_physical(&self, e: usize, xi: &[T; 3]) -> [T; 3] {
        let c = self.element_center(e);
        let mut x = [T::zero(); 3];
        for a in 0..self.dim {
            x[a] = c[a] + T::half() * self.h[a] * xi[a];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_transmissive_face_counts() {
        let m = CartesianMesh::<f64>::uniform(2, 0.0, 1.0, 2, BoundaryKind::Transmissive).unwrap();
        assert_eq!(m.faces().len(), 12);
        assert_eq!(m.faces().iter().filter(|f| !f.is_boundary()).count(), 4);
    }

    #[test]
    fn periodic_mesh_has_no_boundary_faces() {
        let m = CartesianMesh::<f64>::uniform(2, 0.0, 1.0, 2, BoundaryKind::Periodic).unwrap();
        assert_eq!(m.faces().len(), 8);
        assert!(m.faces().iter().all(|f| !f.is_boundary()));
        let m3 = CartesianMesh::<f64>::uniform(3, 0.0, 1.0, 3, BoundaryKind::Periodic).unwrap();
        assert_eq!(m3.faces().len(), 3 * 27);
    }

    #[test]
    fn every_element_face_points_back_to_the_element() {
        let m = CartesianMesh::<f64>::new(
            3,
            [0.0; 3],
            [1.0, 2.0, 3.0],
            [3, 2, 4],
            [
                [BoundaryKind::Periodic; 2],
                [BoundaryKind::Exact, BoundaryKind::Reflecting],
                [BoundaryKind::Transmissive; 2],
            ],
        )
        .unwrap();
        for e in 0..m.num_elements() {
            for a in 0..3 {
                let lower = m.faces()[m.element_faces(e)[2 * a]];
                let upper = m.faces()[m.element_faces(e)[2 * a + 1]];
                assert_eq!(lower.axis, a);
                assert_eq!(lower.plus, Some(e));
                assert_eq!(upper.minus, Some(e));
            }
        }
        assert_eq!(m.h(), [1.0 / 3.0, 1.0, 0.75]);
    }

    #[test]
    fn rejects_invalid_input() {
        let b = [[BoundaryKind::Exact; 2]; 3];
        assert_eq!(
            CartesianMesh::<f64>::new(2, [0.0; 3], [1.0; 3], [0, 4, 1], b).unwrap_err(),
            MeshError::NoCells { axis: 0 }
        );
        assert!(matches!(
            CartesianMesh::<f64>::new(2, [1.0; 3], [1.0; 3], [2, 2, 1], b),
            Err(MeshError::EmptyExtent { .. })
        ));
        let mut half = b;
        half[1][0] = BoundaryKind::Periodic;
        assert_eq!(
            CartesianMesh::<f64>::new(2, [0.0; 3], [1.0; 3], [2, 2, 1], half).unwrap_err(),
            MeshError::UnpairedPeriodic { axis: 1 }
        );
        assert_eq!(
            CartesianMesh::<f64>::new(4, [0.0; 3], [1.0; 3], [2, 2, 2], b).unwrap_err(),
            MeshError::Dimension(4)
        );
    }

    #[test]
    fn reference_map_hits_cell_corners() {
        let m = CartesianMesh::<f64>::uniform(2, -0.5, 0.5, 4, BoundaryKind::Exact).unwrap();
        let e = m.element_id([1, 2, 0]);
        let x = m.to_physical(e, &[-1.0, 1.0, 0.0]);
        assert!((x[0] + 0.25).abs() < 1e-15 && (x[1] - 0.25).abs() < 1e-15);
        assert!((m.volume_jacobian() - 0.015625).abs() < 1e-16);
    }
}
