//! Local discontinuous Galerkin discretisation of `Δφ = s` with `g = ∇φ`.
//!
//! The mixed system is reduced to a symmetric positive definite system for the
//! potential coefficients: the auxiliary variable `g` is eliminated element by
//! element because its mass matrix is diagonal in the orthonormal basis.

use thiserror::Error;

use crate::field::DgField;
use crate::real::Real;
use crate::space::DgSpace;
use crate::sparse::{grid_nested_dissection, pcg, CsrMatrix, LdlError, LdlFactor, Preconditioner};

#[derive(Debug, Error, PartialEq)]
pub enum PoissonError {
    #[error("factorisation failed: {0}")]
    Factorization(#[from] LdlError),
    #[error("conjugate gradients stalled after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("load vector has length {got}, expected {expected}")]
    LoadShape { expected: usize, got: usize },
    #[error("boundary data has length {got}, expected {expected}")]
    BoundaryShape { expected: usize, got: usize },
    #[error("non-finite entry in the load or boundary data")]
    NonFinite,
}

/// Numerical flux parameters: `φ̂ = {φ} + c12·[φ]`, `ĝ = {g} - c11 [φ] - c12 [g]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdgFlux<T> {
    pub c11: T,
    pub c12: [T; 3],
}

impl<T: Real> Default for LdgFlux<T> {
    /// Alternating fluxes with unit penalty.
    fn default() -> Self {
        Self { c11: T::one(), c12: [T::half(); 3] }
    }
}

/// How the reduced system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Sparse LDL^T with a nested-dissection ordering.
    Direct,
    /// Conjugate gradients with a two-level element-block preconditioner.
    Iterative,
    /// Direct up to [`AUTO_DIRECT_MAX_DOFS`] unknowns, iterative beyond.
    #[default]
    Auto,
}

/// Size limit for the direct solver under [`LinearSolver::Auto`].
pub const AUTO_DIRECT_MAX_DOFS: usize = 120_000;
/// Size limit for the direct solver in three dimensions under [`LinearSolver::Auto`].
pub const AUTO_DIRECT_MAX_DOFS_3D: usize = 50_000;

/// Relative residual target of the iterative solver.
pub const PCG_REL_TOL: f64 = 1e-13;
pub const PCG_MAX_ITER: usize = 2000;

#[derive(Debug, Clone)]
pub struct PoissonSolution<T> {
    /// Potential, one component.
    pub phi: DgField<T>,
    /// Gradient of the potential, `dim` components.
    pub grad: DgField<T>,
    pub iterations: usize,
}

enum Backend<T> {
    Direct(LdlFactor<T>),
    Iterative(TwoLevel<T>),
}

pub struct PoissonSolver<T> {
    dim: usize,
    ne: usize,
    nm: usize,
    jac: T,
    flux: LdgFlux<T>,
    grad_ops: Vec<CsrMatrix<T>>,
    lift_ops: Vec<CsrMatrix<T>>,
    system: CsrMatrix<T>,
    backend: Backend<T>,
    /// Pinned unknown when every boundary is periodic.
    pinned: Option<usize>,
    boundary_faces: Vec<usize>,
    n_face_points: usize,
    /// Boundary face traces: `face_weights[q] * b_i(q)` per axis and side.
    weighted_traces: [[Vec<T>; 2]; 3],
}

/// `Σ_q w_q b_i(s, q) b_m(t, q)` for the face tables of sides `s` and `t`.
fn face_mass<T: Real>(space: &DgSpace<T>, axis: usize, s: usize, t: usize) -> Vec<T> {
    let nm = space.n_modes();
    let ts = &space.face_phi[axis][s];
    let tt = &space.face_phi[axis][t];
    let mut out = vec![T::zero(); nm * nm];
    for (q, w) in space.face.weights.iter().enumerate() {
        let rs = ts.row(q);
        let rt = tt.row(q);
        for i in 0..nm {
            for m in 0..nm {
                out[i * nm + m] += *w * rs[i] * rt[m];
            }
        }
    }
    out
}

/// `D[i][m] = ∫ b_m ∂_axis b_i` on the reference cell.
fn volume_derivative<T: Real>(space: &DgSpace<T>, axis: usize) -> Vec<T> {
    let nm = space.n_modes();
    let mut out = vec![T::zero(); nm * nm];
    for (q, w) in space.volume.weights.iter().enumerate() {
        let phi = space.vol_phi.row(q);
        let dphi = space.vol_dphi[axis].row(q);
        for i in 0..nm {
            for m in 0..nm {
                out[i * nm + m] += *w * phi[m] * dphi[i];
            }
        }
    }
    out
}

fn push_block<T: Real>(
    trips: &mut Vec<(usize, usize, T)>,
    nm: usize,
    row_e: usize,
    col_e: usize,
    scale: T,
    block: &[T],
) {
    for i in 0..nm {
        for m in 0..nm {
            let v = scale * block[i * nm + m];
            if v != T::zero() {
                trips.push((row_e * nm + i, col_e * nm + m, v));
            }
        }
    }
}

impl<T: Real> PoissonSolver<T> {
    pub fn new(space: &DgSpace<T>, flux: LdgFlux<T>, solver: LinearSolver) -> Result<Self, PoissonError> {
        let mesh = &space.mesh;
        let dim = mesh.dim();
        let ne = space.n_elements();
        let nm = space.n_modes();
        let n = ne * nm;
        let jac = mesh.volume_jacobian();
        let h = mesh.h();

        let mut grad_trips: Vec<Vec<(usize, usize, T)>> = vec![Vec::new(); dim];
        let mut lift_trips: Vec<Vec<(usize, usize, T)>> = vec![Vec::new(); dim];
        let mut pen_trips: Vec<(usize, usize, T)> = Vec::new();

        for a in 0..dim {
            let d = volume_derivative(space, a);
            let s = T::two() / h[a];
            for e in 0..ne {
                push_block(&mut grad_trips[a], nm, e, e, -s, &d);
                push_block(&mut lift_trips[a], nm, e, e, jac * s, &d);
            }
        }

        let e_mass: Vec<[[Vec<T>; 2]; 2]> =
            (0..dim).map(|a| std::array::from_fn(|s| std::array::from_fn(|t| face_mass(space, a, s, t)))).collect();
        let c11 = flux.c11;
        let mut boundary_faces = Vec::new();
        for (f, face) in mesh.faces().iter().enumerate() {
            let a = face.axis;
            let jf = mesh.face_jacobian(a);
            let em = &e_mass[a];
            let cl = T::half() + flux.c12[a];
            let cr = T::half() - flux.c12[a];
            let dl = T::half() - flux.c12[a];
            let dr = T::half() + flux.c12[a];
            match (face.minus, face.plus) {
                (Some(m), Some(p)) => {
                    let gi = jf / jac;
                    push_block(&mut grad_trips[a], nm, m, m, gi * cl, &em[1][1]);
                    push_block(&mut grad_trips[a], nm, m, p, gi * cr, &em[1][0]);
                    push_block(&mut grad_trips[a], nm, p, m, -gi * cl, &em[0][1]);
                    push_block(&mut grad_trips[a], nm, p, p, -gi * cr, &em[0][0]);
                    // Lift = volume part minus the face part of ĝ.
                    push_block(&mut lift_trips[a], nm, m, m, -jf * dl, &em[1][1]);
                    push_block(&mut lift_trips[a], nm, m, p, -jf * dr, &em[1][0]);
                    push_block(&mut lift_trips[a], nm, p, m, jf * dl, &em[0][1]);
                    push_block(&mut lift_trips[a], nm, p, p, jf * dr, &em[0][0]);
                    push_block(&mut pen_trips, nm, m, m, -c11 * jf, &em[1][1]);
                    push_block(&mut pen_trips, nm, m, p, c11 * jf, &em[1][0]);
                    push_block(&mut pen_trips, nm, p, m, c11 * jf, &em[0][1]);
                    push_block(&mut pen_trips, nm, p, p, -c11 * jf, &em[0][0]);
                }
                _ => {
                    let (k, side) = face.boundary_owner().expect("boundary face has an owner");
                    let normal = if side == 1 { T::one() } else { -T::one() };
                    push_block(&mut lift_trips[a], nm, k, k, -jf * normal, &em[side][side]);
                    push_block(&mut pen_trips, nm, k, k, -c11 * jf, &em[side][side]);
                    boundary_faces.push(f);
                }
            }
        }

        let grad_ops: Vec<CsrMatrix<T>> = grad_trips.iter().map(|t| CsrMatrix::from_triplets(n, n, t)).collect();
        let lift_ops: Vec<CsrMatrix<T>> = lift_trips.iter().map(|t| CsrMatrix::from_triplets(n, n, t)).collect();
        let penalty = CsrMatrix::from_triplets(n, n, &pen_trips);
        // Σ_a L_a G_a - P, where P collects the (non-positive) penalty terms.
        let mut system = CsrMatrix::from_triplets(n, n, &[]).add_scaled(-T::one(), &penalty);
        for a in 0..dim {
            system = system.add_scaled(T::one(), &lift_ops[a].matmul(&grad_ops[a]));
        }
        debug_assert!(system.asymmetry() <= T::epsilon().sqrt() * max_abs(&system), "LDG operator lost symmetry");
        let system = symmetrize(&system);

        let periodic = [0, 1, 2].map(|a| a < dim && mesh.is_periodic(a));
        let fully_periodic = (0..dim).all(|a| periodic[a]);
        let cells = mesh.cells();
        let element_order = grid_nested_dissection(cells, periodic);
        let pinned = fully_periodic.then(|| element_order[ne - 1] * nm);
        let mut system = system;
        if let Some(p) = pinned {
            system.pin_dof(p);
        }

        let use_direct = match solver {
            LinearSolver::Direct => true,
            LinearSolver::Iterative => false,
            LinearSolver::Auto => {
                if dim == 3 {
                    n <= AUTO_DIRECT_MAX_DOFS_3D
                } else {
                    n <= AUTO_DIRECT_MAX_DOFS
                }
            }
        };
        let backend = if use_direct {
            let perm: Vec<usize> = element_order.iter().flat_map(|&e| (0..nm).map(move |i| e * nm + i)).collect();
            Backend::Direct(LdlFactor::new(&system, Some(&perm))?)
        } else {
            Backend::Iterative(TwoLevel::new(&system, nm, &element_order)?)
        };

        let weighted_traces = std::array::from_fn(|a| {
            std::array::from_fn(|s| {
                if a >= dim {
                    return Vec::new();
                }
                let t = &space.face_phi[a][s];
                let mut out = vec![T::zero(); t.values.len()];
                for (q, w) in space.face.weights.iter().enumerate() {
                    for i in 0..nm {
                        out[q * nm + i] = *w * t.row(q)[i];
                    }
                }
                out
            })
        });

        Ok(Self {
            dim,
            ne,
            nm,
            jac,
            flux,
            grad_ops,
            lift_ops,
            system,
            backend,
            pinned,
            boundary_faces,
            n_face_points: space.face.len(),
            weighted_traces,
        })
    }

    pub fn flux(&self) -> LdgFlux<T> {
        self.flux
    }

    pub fn n_dofs(&self) -> usize {
        self.ne * self.nm
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct(_))
    }

    /// The reduced symmetric positive definite operator (with the pinned row, if any).
    pub fn system_matrix(&self) -> &CsrMatrix<T> {
        &self.system
    }

    /// Ids of faces carrying Dirichlet data, in the order boundary data is expected.
    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    /// Length of a boundary data vector: one value per boundary face quadrature node.
    pub fn boundary_data_len(&self) -> usize {
        self.boundary_faces.len() * self.n_face_points
    }

    /// Load vector `∫ s b_i` for a source held as a one-component DG field.
    pub fn load_from_field(&self, source: &DgField<T>, scale: T) -> Vec<T> {
        source.as_slice().iter().map(|v| *v * scale * self.jac).collect()
    }

    /// Solves `Δφ = s` given the load `∫ s b_i` and Dirichlet values at the boundary
    /// face nodes (`None` means homogeneous). On fully periodic meshes the load is
    /// made compatible and the potential is returned with zero mean. `initial`
    /// seeds the iterative solver.
    pub fn solve(
        &self,
        space: &DgSpace<T>,
        load: &[T],
        boundary: Option<&[T]>,
        initial: Option<&[T]>,
    ) -> Result<PoissonSolution<T>, PoissonError> {
        let n = self.n_dofs();
        if load.len() != n {
            return Err(PoissonError::LoadShape { expected: n, got: load.len() });
        }
        if let Some(b) = boundary {
            if b.len() != self.boundary_data_len() {
                return Err(PoissonError::BoundaryShape { expected: self.boundary_data_len(), got: b.len() });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(PoissonError::NonFinite);
            }
        }
        if load.iter().any(|v| !v.is_finite()) {
            return Err(PoissonError::NonFinite);
        }
        let nm = self.nm;
        let mut lifted: Vec<Vec<T>> = vec![vec![T::zero(); n]; self.dim];
        let mut rhs: Vec<T> = load.iter().map(|v| -*v).collect();
        if let Some(data) = boundary {
            let nfq = self.n_face_points;
            let mesh = &space.mesh;
            let c11 = self.flux.c11;
            for (slot, &f) in self.boundary_faces.iter().enumerate() {
                let face = mesh.faces()[f];
                let a = face.axis;
                let (k, side) = face.boundary_owner().expect("boundary face has an owner");
                let jf = mesh.face_jacobian(a);
                let normal = if side == 1 { T::one() } else { -T::one() };
                let wt = &self.weighted_traces[a][side];
                for q in 0..nfq {
                    let v = data[slot * nfq + q];
                    if v == T::zero() {
                        continue;
                    }
                    for i in 0..nm {
                        let base = jf * wt[q * nm + i] * v;
                        lifted[a][k * nm + i] += normal * base / self.jac;
                        rhs[k * nm + i] += c11 * base;
                    }
                }
            }
            for a in 0..self.dim {
                self.lift_ops[a].mul_vec_add(-T::one(), &lifted[a], &mut rhs);
            }
        }
        if let Some(p) = self.pinned {
            let mean = (0..self.ne).map(|e| rhs[e * nm]).sum::<T>() / T::of_usize(self.ne);
            for e in 0..self.ne {
                rhs[e * nm] -= mean;
            }
            rhs[p] = T::zero();
        }
        let mut iterations = 0;
        let mut phi = match &self.backend {
            // A zero right-hand side has the zero solution; skip the solve.
            _ if rhs.iter().all(|v| *v == T::zero()) => rhs,
            Backend::Direct(f) => f.solve(&rhs),
            Backend::Iterative(pre) => {
                let mut x = match initial {
                    Some(x0) if x0.len() == n => x0.to_vec(),
                    _ => vec![T::zero(); n],
                };
                if let Some(p) = self.pinned {
                    x[p] = T::zero();
                }
                let out =
                    pcg(&self.system, &rhs, &mut x, pre, T::of(PCG_REL_TOL), T::min_positive_value(), PCG_MAX_ITER);
                if !out.converged {
                    return Err(PoissonError::NotConverged {
                        iterations: out.iterations,
                        residual: out.residual_norm.to_f64_lossy(),
                    });
                }
                iterations = out.iterations;
                x
            }
        };
        if self.pinned.is_some() {
            let mean = (0..self.ne).map(|e| phi[e * nm]).sum::<T>() / T::of_usize(self.ne);
            for e in 0..self.ne {
                phi[e * nm] -= mean;
            }
        }
        let mut grad = DgField::zeros(self.ne, self.dim, nm);
        for a in 0..self.dim {
            let g = self.grad_ops[a].mul_vec(&phi);
            for e in 0..self.ne {
                let dst = grad.coeffs_mut(e, a);
                for i in 0..nm {
                    dst[i] = g[e * nm + i] + lifted[a][e * nm + i];
                }
            }
        }
        Ok(PoissonSolution { phi: DgField::from_vec(self.ne, 1, nm, phi).expect("shape matches"), grad, iterations })
    }
}

fn max_abs<T: Real>(a: &CsrMatrix<T>) -> T {
    a.values().iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Averages a nearly symmetric matrix with its transpose to remove rounding asymmetry.
fn symmetrize<T: Real>(a: &CsrMatrix<T>) -> CsrMatrix<T> {
    let at = a.transpose();
    let sum = a.add_scaled(T::one(), &at);
    let n = a.nrows();
    CsrMatrix::from_triplets(n, n, &[]).add_scaled(T::half(), &sum)
}

/// Symmetric two-level preconditioner: damped element-block Jacobi smoothing around an
/// exact solve on the piecewise-constant modes.
struct TwoLevel<T> {
    system: CsrMatrix<T>,
    nm: usize,
    block_inverses: Vec<T>,
    coarse: LdlFactor<T>,
    omega: T,
}

const SMOOTHER_DAMPING: f64 = 0.7;

impl<T: Real> TwoLevel<T> {
    fn new(system: &CsrMatrix<T>, nm: usize, element_order: &[usize]) -> Result<Self, PoissonError> {
        let ne = system.nrows() / nm;
        let mut block_inverses = vec![T::zero(); ne * nm * nm];
        let mut block = vec![T::zero(); nm * nm];
        for e in 0..ne {
            for i in 0..nm {
                for j in 0..nm {
                    block[i * nm + j] = system.get(e * nm + i, e * nm + j);
                }
            }
            invert_spd(&mut block, nm)
                .ok_or(PoissonError::Factorization(LdlError::NonPositivePivot { row: e * nm, value: 0.0 }))?;
            block_inverses[e * nm * nm..(e + 1) * nm * nm].copy_from_slice(&block);
        }
        let coarse_idx: Vec<usize> = (0..ne).map(|e| e * nm).collect();
        let coarse_matrix = system.submatrix(&coarse_idx);
        let coarse = LdlFactor::new(&coarse_matrix, Some(element_order))?;
        Ok(Self { system: system.clone(), nm, block_inverses, coarse, omega: T::of(SMOOTHER_DAMPING) })
    }

    fn smooth(&self, r: &[T], z: &mut [T]) {
        let nm = self.nm;
        for (e, (zb, rb)) in z.chunks_mut(nm).zip(r.chunks(nm)).enumerate() {
            let inv = &self.block_inverses[e * nm * nm..(e + 1) * nm * nm];
            for i in 0..nm {
                let mut s = T::zero();
                for j in 0..nm {
                    s += inv[i * nm + j] * rb[j];
                }
                zb[i] += self.omega * s;
            }
        }
    }
}

impl<T: Real> Preconditioner<T> for TwoLevel<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        let n = r.len();
        let nm = self.nm;
        z.iter_mut().for_each(|v| *v = T::zero());
        self.smooth(r, z);
        let mut res = r.to_vec();
        self.system.mul_vec_add(-T::one(), z, &mut res);
        let mut coarse_rhs: Vec<T> = (0..n / nm).map(|e| res[e * nm]).collect();
        self.coarse.solve_in_place(&mut coarse_rhs);
        for (e, v) in coarse_rhs.iter().enumerate() {
            z[e * nm] += *v;
        }
        res.copy_from_slice(r);
        self.system.mul_vec_add(-T::one(), z, &mut res);
        self.smooth(&res, z);
    }
}

/// In-place inverse of a small dense SPD matrix via Cholesky. Returns `None` if not SPD.
fn invert_spd<T: Real>(a: &mut [T], n: usize) -> Option<()> {
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    // Columns of the inverse from forward and backward substitution.
    for c in 0..n {
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = if i == c { T::one() } else { T::zero() };
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in 0..n {
            a[i * n + c] = y[i];
        }
    }
    Some(())
}
