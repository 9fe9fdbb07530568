//! Post-stage limiters: oscillation-eliminating damping and the positivity-preserving
//! scaling limiter.

use rayon::prelude::*;
use thiserror::Error;

use crate::basis::multi_indices;
use crate::euler::{self, State};
use crate::field::DgField;
use crate::quadrature::{gauss_legendre, gauss_lobatto, TensorRule};
use crate::real::Real;
use crate::space::{face_reference_points, DgSpace, Table};

#[derive(Debug, Error, PartialEq)]
pub enum LimiterError {
    #[error("time step must be positive, got {0:e}")]
    NonPositiveStep(f64),
    #[error("cell average density {rho:e} in element {element} is not positive")]
    NegativeAverageDensity { element: usize, rho: f64 },
    #[error("field shape does not match the space")]
    Shape,
}

/// Reference-element derivative table `∂_ξ^α` on one face.
#[derive(Debug, Clone)]
struct FaceDerivative<T> {
    order: usize,
    table: Table<T>,
}

/// Oscillation-eliminating damping of the high modal orders, driven by interface jumps.
#[derive(Debug, Clone)]
pub struct OscillationDamper<T> {
    max_order: usize,
    degree: usize,
    mode_order: Vec<usize>,
    derivatives: [[Vec<FaceDerivative<T>>; 2]; 3],
}

/// Relative size under which a component counts as globally constant.
const FLAT_FIELD: f64 = 1e-14;

impl<T: Real> OscillationDamper<T> {
    pub fn new(space: &DgSpace<T>) -> Self {
        let dim = space.dim();
        let basis = &space.basis;
        let mode_order: Vec<usize> = (0..basis.len()).map(|m| basis.mode_order(m)).collect();
        let max_order = mode_order.iter().copied().max().unwrap_or(0);
        let derivatives = std::array::from_fn(|axis| {
            std::array::from_fn(|side| {
                if axis >= dim {
                    return Vec::new();
                }
                let points = face_reference_points(&space.face, dim, axis, side);
                (0..=max_order)
                    .flat_map(|m| multi_indices(dim, m))
                    .filter(|alpha| alpha.iter().all(|&a| a <= basis.degree()))
                    .map(|alpha| FaceDerivative {
                        order: alpha.iter().sum(),
                        table: Table::build(basis, &points, alpha),
                    })
                    .collect()
            })
        });
        Self { max_order, degree: basis.degree(), mode_order, derivatives }
    }

    /// Damping rates `θ_K^m`, stored as `[element * (max_order + 1) + m]`.
    pub fn damping_rates(&self, space: &DgSpace<T>, w: &DgField<T>, speeds: &[[T; 3]]) -> Vec<T> {
        let nm1 = self.max_order + 1;
        let ne = space.n_elements();
        let mut theta = vec![T::zero(); ne * nm1];
        if self.degree == 0 {
            return theta;
        }
        let dim = space.dim();
        let nc = w.n_components();
        let h = space.mesh.h();
        let faces = space.mesh.faces();
        let nfq = space.face.len();
        let wsum: T = space.face.weights.iter().copied().sum();

        // Global normalisation ‖u - avg_Ω u‖_∞ per component.
        let b0 = space.basis.constant_value();
        let denom: Vec<T> = (0..nc)
            .map(|c| {
                let avg = (0..ne).map(|e| w.coeffs(e, c)[0] * b0).sum::<T>() / T::of_usize(ne);
                let (mut dev, mut size) = (T::zero(), T::zero());
                for e in 0..ne {
                    for q in 0..space.volume.len() {
                        let v = space.vol_phi.eval(q, w.coeffs(e, c));
                        dev = dev.max((v - avg).abs());
                        size = size.max(v.abs());
                    }
                }
                if dev < T::of(FLAT_FIELD) * size || dev == T::zero() {
                    T::zero()
                } else {
                    dev
                }
            })
            .collect();

        let coef: Vec<[T; 3]> = (0..nm1)
            .map(|m| {
                let mut fact = T::one();
                for i in 2..=m {
                    fact *= T::of_usize(i);
                }
                let base = T::of_usize(2 * m + 1) / (T::two() * T::of_usize(2 * self.degree - 1).max(T::one()) * fact);
                std::array::from_fn(|a| if a < dim { base * h[a].powi(m as i32) } else { T::zero() })
            })
            .collect();

        // Jump seminorms per interior face, with derivatives taken in reference coordinates.
        let sigma: Vec<T> = faces
            .par_iter()
            .flat_map_iter(|face| {
                let mut out = vec![T::zero(); nm1];
                if let (Some(l), Some(r)) = (face.minus, face.plus) {
                    let a = face.axis;
                    let dl = &self.derivatives[a][1];
                    let dr = &self.derivatives[a][0];
                    let mut per_order = vec![T::zero(); nm1];
                    for c in 0..nc {
                        if denom[c] == T::zero() {
                            continue;
                        }
                        per_order.iter_mut().for_each(|v| *v = T::zero());
                        for (fl, fr) in dl.iter().zip(dr) {
                            let mut mean = T::zero();
                            for q in 0..nfq {
                                let jump = fr.table.eval(q, w.coeffs(r, c)) - fl.table.eval(q, w.coeffs(l, c));
                                mean += space.face.weights[q] * jump.abs();
                            }
                            per_order[fl.order] += mean / wsum;
                        }
                        for m in 0..nm1 {
                            out[m] = out[m].max(coef[m][a] * per_order[m] / denom[c]);
                        }
                    }
                }
                out
            })
            .collect();

        theta.par_chunks_mut(nm1).enumerate().for_each(|(e, th)| {
            for a in 0..dim {
                for s in 0..2 {
                    let f = space.mesh.element_faces(e)[2 * a + s];
                    for m in 0..nm1 {
                        th[m] += speeds[e][a] * sigma[f * nm1 + m] / h[a];
                    }
                }
            }
        });
        theta
    }

    /// Damps `w` in place over a step `dt`. With a `reference`, only `w - reference`
    /// is damped, so the reference state itself is left untouched.
    pub fn apply(
        &self,
        space: &DgSpace<T>,
        w: &mut DgField<T>,
        dt: T,
        speeds: &[[T; 3]],
        reference: Option<&DgField<T>>,
    ) -> Result<(), LimiterError> {
        if !(dt > T::zero()) {
            return Err(LimiterError::NonPositiveStep(dt.to_f64_lossy()));
        }
        if speeds.len() != space.n_elements() || reference.is_some_and(|r| r.as_slice().len() != w.as_slice().len()) {
            return Err(LimiterError::Shape);
        }
        if self.degree == 0 {
            return Ok(());
        }
        let theta = self.damping_rates(space, w, speeds);
        let nm1 = self.max_order + 1;
        let nc = w.n_components();
        let nm = space.n_modes();
        let orders = &self.mode_order;
        w.as_mut_slice().par_chunks_mut(nc * nm).enumerate().for_each(|(e, coeffs)| {
            let th = &theta[e * nm1..(e + 1) * nm1];
            // factor[j] = exp(-dt Σ_{m ≤ j} θ^m)
            let mut factor = vec![T::one(); nm1];
            let mut acc = T::zero();
            for j in 0..nm1 {
                acc += th[j];
                factor[j] = (-dt * acc).exp();
            }
            for c in 0..nc {
                for i in 1..nm {
                    let f = factor[orders[i]];
                    let k = c * nm + i;
                    match reference {
                        Some(r) => {
                            let base = r.coeffs(e, c)[i];
                            coeffs[k] = base + f * (coeffs[k] - base);
                        }
                        None => coeffs[k] *= f,
                    }
                }
            }
        });
        Ok(())
    }
}

/// How the gas energy is obtained from the evolved energy variable.
#[derive(Debug, Clone, Copy)]
pub enum EnergyRecovery<'a, T> {
    /// The last component already is the gas energy `E`.
    Conserved,
    /// The last component is `E + ½(ρ - background)φ`; `energy` holds the recovered `E`.
    Total { energy: &'a DgField<T>, phi: &'a DgField<T>, background: T },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PositivityReport {
    /// Cells whose high modes were scaled.
    pub limited_cells: usize,
    /// Check points where even the cell-average state has non-positive pressure.
    pub flagged_points: usize,
}

/// Scaling limiter enforcing `ρ ≥ ε` and `p ≥ ε` at check points.
#[derive(Debug, Clone)]
pub struct PositivityLimiter<T> {
    eps: T,
    table: Table<T>,
}

pub const DEFAULT_POSITIVITY_FLOOR: f64 = 1e-13;

const BISECTION_STEPS: usize = 60;

/// Volume Gauss points together with, for every axis, Gauss–Lobatto points along that
/// axis crossed with Gauss points along the others.
pub fn positivity_check_points<T: Real>(dim: usize, degree: usize) -> Vec<[T; 3]> {
    let gauss = gauss_legendre::<T>(degree + 1);
    let lobatto = gauss_lobatto::<T>((degree + 4) / 2);
    let mut points = TensorRule::new(&gauss, dim).points;
    for axis in 0..dim {
        let others = TensorRule::new(&gauss, dim - 1);
        for &x in &lobatto.nodes {
            for q in &others.points {
                let mut p = [T::zero(); 3];
                let mut k = 0;
                for a in 0..dim {
                    if a == axis {
                        p[a] = x;
                    } else {
                        p[a] = q[k];
                        k += 1;
                    }
                }
                points.push(p);
            }
        }
    }
    points
}

impl<T: Real> PositivityLimiter<T> {
    pub fn new(space: &DgSpace<T>, eps: T) -> Self {
        let points = positivity_check_points(space.dim(), space.basis.degree());
        Self { eps, table: Table::build(&space.basis, &points, [0; 3]) }
    }

    pub fn floor(&self) -> T {
        self.eps
    }

    pub fn n_check_points(&self) -> usize {
        self.table.n_points
    }

    /// Limits `w` in place. Cell averages are never modified.
    pub fn apply(
        &self,
        space: &DgSpace<T>,
        w: &mut DgField<T>,
        gamma: T,
        recovery: EnergyRecovery<'_, T>,
    ) -> Result<PositivityReport, LimiterError> {
        let dim = space.dim();
        let nc = w.n_components();
        let nm = space.n_modes();
        if nc != dim + 2 || w.n_modes() != nm {
            return Err(LimiterError::Shape);
        }
        let b0 = space.basis.constant_value();
        let eps = self.eps;
        let tab = &self.table;
        let results: Vec<Result<(T, usize), LimiterError>> = (0..space.n_elements())
            .into_par_iter()
            .map(|e| {
                let rho_avg = w.coeffs(e, 0)[0] * b0;
                if !(rho_avg > T::zero()) {
                    return Err(LimiterError::NegativeAverageDensity { element: e, rho: rho_avg.to_f64_lossy() });
                }
                let mut flagged = 0;
                // Density.
                let mut theta = T::one();
                let rho_min =
                    (0..tab.n_points).map(|q| tab.eval(q, w.coeffs(e, 0))).fold(T::infinity(), |a, b| a.min(b));
                if rho_min < eps {
                    theta = ((rho_avg - eps) / (rho_avg - rho_min)).max(T::zero()).min(T::one());
                }
                // Pressure along the segment from the average state.
                let theta_rho = theta;
                for q in 0..tab.n_points {
                    let mut u1: State<T> = [T::zero(); 5];
                    let mut u0: State<T> = [T::zero(); 5];
                    for c in 0..=dim {
                        u1[c] = tab.eval(q, w.coeffs(e, c));
                        u0[c] = w.coeffs(e, c)[0] * b0;
                    }
                    match recovery {
                        EnergyRecovery::Conserved => {
                            u1[euler::ENERGY] = tab.eval(q, w.coeffs(e, dim + 1));
                            u0[euler::ENERGY] = w.coeffs(e, dim + 1)[0] * b0;
                        }
                        EnergyRecovery::Total { energy, phi, background } => {
                            let phi_q = tab.eval(q, phi.coeffs(e, 0));
                            u1[euler::ENERGY] = tab.eval(q, energy.coeffs(e, 0));
                            u0[euler::ENERGY] = w.coeffs(e, dim + 1)[0] * b0 - T::half() * (u0[0] - background) * phi_q;
                        }
                    }
                    let at = |t: T| -> T {
                        let mut u = [T::zero(); 5];
                        for i in 0..5 {
                            u[i] = u0[i] + t * (u1[i] - u0[i]);
                        }
                        euler::pressure(&u, gamma)
                    };
                    if at(theta_rho) >= eps {
                        continue;
                    }
                    if !(at(T::zero()) >= eps) {
                        flagged += 1;
                        theta = T::zero();
                        continue;
                    }
                    // Superlevel sets of the concave pressure are convex: bisect.
                    let (mut lo, mut hi) = (T::zero(), theta_rho);
                    for _ in 0..BISECTION_STEPS {
                        let mid = T::half() * (lo + hi);
                        if at(mid) >= eps {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    theta = theta.min(lo);
                }
                Ok((theta, flagged))
            })
            .collect();
        let mut report = PositivityReport::default();
        let mut thetas = Vec::with_capacity(results.len());
        for r in results {
            let (theta, flagged) = r?;
            report.flagged_points += flagged;
            if theta < T::one() {
                report.limited_cells += 1;
            }
            thetas.push(theta);
        }
        w.as_mut_slice().par_chunks_mut(nc * nm).zip(&thetas).for_each(|(coeffs, &theta)| {
            if theta < T::one() {
                for c in 0..nc {
                    coeffs[c * nm + 1..(c + 1) * nm].iter_mut().for_each(|v| *v *= theta);
                }
            }
        });
        Ok(report)
    }
}
