//! Error norms, convergence orders, energy histories and symmetry probes.

use crate::field::{field_eval, DgField};
use crate::quadrature::{gauss_legendre, TensorRule};
use crate::real::Real;
use crate::space::DgSpace;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms<T> {
    pub l1: T,
    pub l2: T,
    pub linf: T,
}

/// `L1`, `L2` and `L∞` norms of `field[component] - reference`, integrated with a
/// `k + 3` point Gauss rule per axis; `L∞` is the maximum over those nodes.
pub fn error_norms<T: Real, F>(space: &DgSpace<T>, field: &DgField<T>, component: usize, reference: F) -> ErrorNorms<T>
where
    F: Fn(&[T; 3]) -> T,
{
    let rule = TensorRule::new(&gauss_legendre::<T>(space.basis.degree() + 3), space.dim());
    let jac = space.mesh.volume_jacobian();
    let (mut l1, mut l2, mut linf) = (T::zero(), T::zero(), T::zero());
    for e in 0..space.n_elements() {
        for (xi, &w) in rule.points.iter().zip(&rule.weights) {
            let d = (field_eval(space, field, e, xi)[component] - reference(&space.mesh.to_physical(e, xi))).abs();
            l1 += jac * w * d;
            l2 += jac * w * d * d;
            linf = linf.max(d);
        }
    }
    ErrorNorms { l1, l2: l2.sqrt(), linf }
}

/// Norms of the difference between two fields on the same space.
pub fn difference_norms<T: Real>(
    space: &DgSpace<T>,
    a: &DgField<T>,
    b: &DgField<T>,
    component: usize,
) -> ErrorNorms<T> {
    let mut d = a.clone();
    d.axpy(-T::one(), b);
    error_norms(space, &d, component, |_| T::zero())
}

/// `log2(coarse / fine)` for a refinement by two. A vanishing fine error gives `+∞`.
pub fn convergence_order<T: Real>(coarse: T, fine: T) -> T {
    if fine == T::zero() {
        return T::infinity();
    }
    (coarse / fine).log2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord<T> {
    pub time: T,
    pub total: T,
    pub kinetic: T,
    pub internal: T,
    pub gravitational: T,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyHistory<T> {
    pub records: Vec<EnergyRecord<T>>,
}

impl<T: Real> EnergyHistory<T> {
    pub fn push(&mut self, time: T, parts: [T; 4]) {
        let [total, kinetic, internal, gravitational] = parts;
        self.records.push(EnergyRecord { time, total, kinetic, internal, gravitational });
    }

    /// `max_t |E_tot(t) - E_tot(0)|`.
    pub fn max_drift(&self) -> T {
        let Some(first) = self.records.first() else {
            return T::zero();
        };
        self.records.iter().fold(T::zero(), |m, r| m.max((r.total - first.total).abs()))
    }

    /// Drift relative to `|E_tot(0)|`.
    pub fn max_relative_drift(&self) -> T {
        match self.records.first() {
            Some(first) if first.total != T::zero() => self.max_drift() / first.total.abs(),
            _ => self.max_drift(),
        }
    }
}

/// Cell averages of one component.
pub fn cell_averages<T: Real>(space: &DgSpace<T>, field: &DgField<T>, component: usize) -> Vec<T> {
    let b0 = space.basis.constant_value();
    (0..space.n_elements()).map(|e| field.coeffs(e, component)[0] * b0).collect()
}

/// Largest spread (max - min) of per-cell values among cells whose centres fall in the
/// same radial bin of width `bin_width` around `center`. Distances within `1e-9·bin_width`
/// of a bin edge are snapped so exact ties never split.
pub fn radial_symmetry_deviation<T: Real>(space: &DgSpace<T>, values: &[T], center: [T; 3], bin_width: T) -> T {
    let dim = space.dim();
    let tol = T::of(1e-9);
    let mut keyed: Vec<(i64, T)> = (0..space.n_elements())
        .map(|e| {
            let c = space.mesh.element_center(e);
            let r = (0..dim).map(|a| (c[a] - center[a]) * (c[a] - center[a])).sum::<T>().sqrt();
            let x = r / bin_width;
            let bin = (x + tol).floor().to_f64_lossy() as i64;
            (bin, values[e])
        })
        .collect();
    keyed.sort_by_key(|a| a.0);
    let mut worst = T::zero();
    let mut i = 0;
    while i < keyed.len() {
        let mut j = i;
        let (mut lo, mut hi) = (keyed[i].1, keyed[i].1);
        while j < keyed.len() && keyed[j].0 == keyed[i].0 {
            lo = lo.min(keyed[j].1);
            hi = hi.max(keyed[j].1);
            j += 1;
        }
        worst = worst.max(hi - lo);
        i = j;
    }
    worst
}

/// Least-squares slope of `ln y` against `t` over samples with `t` in `[t0, t1]`.
pub fn exponential_growth_rate<T: Real>(samples: &[(T, T)], t0: T, t1: T) -> Option<T> {
    let pts: Vec<(T, T)> =
        samples.iter().filter(|(t, y)| *t >= t0 && *t <= t1 && *y > T::zero()).map(|&(t, y)| (t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::of_usize(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<T>();
    let sxx = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum::<T>();
    (sxx > T::zero()).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisKind;
    use crate::field::l2_project;
    use crate::mesh::{BoundaryKind, CartesianMesh};
    use std::f64::consts::PI;

    fn space(n: usize, k: usize) -> DgSpace<f64> {
        DgSpace::new(CartesianMesh::uniform(2, 0.0, 1.0, n, BoundaryKind::Periodic).unwrap(), k, BasisKind::Total)
    }

    #[test]
    fn own_sampler_gives_zero_error() {
        let s = space(4, 2);
        let f = l2_project(&s, 1, |x, o| o[0] = 1.0 + x[0] * x[1]).unwrap();
        let n = error_norms(&s, &f, 0, |x| 1.0 + x[0] * x[1]);
        assert!(n.l1 < 1e-14 && n.l2 < 1e-14 && n.linf < 1e-14);
    }

    #[test]
    fn constant_offset_on_unit_square() {
        let s = space(3, 1);
        let f = l2_project(&s, 1, |_, o| o[0] = 2.5).unwrap();
        let n = error_norms(&s, &f, 0, |_| 2.0);
        for v in [n.l1, n.l2, n.linf] {
            assert!((v - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn projected_sine_error_matches_fine_grid_oracle() {
        let s = space(4, 2);
        let exact = |x: &[f64; 3]| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
        let f = l2_project(&s, 1, |x, o| o[0] = exact(x)).unwrap();
        let n = error_norms(&s, &f, 0, exact);
        // Midpoint-rule oracle on a fine sub-grid of every cell.
        let m = 40;
        let h = 0.25;
        let mut l2 = 0.0;
        for e in 0..s.n_elements() {
            for i in 0..m {
                for j in 0..m {
                    let xi = [-1.0 + (2 * i + 1) as f64 / m as f64, -1.0 + (2 * j + 1) as f64 / m as f64, 0.0];
                    let d = field_eval(&s, &f, e, &xi)[0] - exact(&s.mesh.to_physical(e, &xi));
                    l2 += d * d * (h / m as f64) * (h / m as f64);
                }
            }
        }
        let l2 = l2.sqrt();
        assert!((n.l2 - l2).abs() < 0.01 * l2, "{} vs {l2}", n.l2);
    }

    #[test]
    fn orders() {
        assert!((convergence_order(4e-4f64, 1e-4) - 2.0).abs() < 1e-12);
        assert!((convergence_order(2.39e-05f64, 2.81e-06) - 3.09).abs() < 5e-3);
        assert_eq!(convergence_order(1.0, 1.0), 0.0);
        assert_eq!(convergence_order(1.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn norm_ordering_holds() {
        let s = space(5, 1);
        let f = l2_project(&s, 1, |x, o| o[0] = (x[0] * 7.0).sin()).unwrap();
        let n = error_norms(&s, &f, 0, |x| (x[0] * 7.0).cos());
        assert!(n.l1 <= n.l2 * (1.0 + 1e-12) && n.l2 <= n.linf * (1.0 + 1e-12));
    }

    #[test]
    fn energy_history_drift() {
        let mut h = EnergyHistory::default();
        assert_eq!(h.max_drift(), 0.0);
        h.push(0.0, [2.0, 1.0, 1.0, 0.0]);
        h.push(0.1, [2.5, 1.0, 1.0, 0.5]);
        h.push(0.2, [1.9, 1.0, 1.0, -0.1]);
        assert_eq!(h.max_drift(), 0.5);
        assert_eq!(h.max_relative_drift(), 0.25);
    }

    #[test]
    fn radial_field_has_no_spread_and_linear_field_does() {
        let s = DgSpace::new(
            CartesianMesh::uniform(2, -1.0, 1.0, 8, BoundaryKind::Transmissive).unwrap(),
            0,
            BasisKind::Total,
        );
        let centers: Vec<[f64; 3]> = (0..s.n_elements()).map(|e| s.mesh.element_center(e)).collect();
        let radial: Vec<f64> = centers.iter().map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt().cos()).collect();
        assert!(radial_symmetry_deviation(&s, &radial, [0.0; 3], 1e-6) < 1e-14);
        // f = x: cells at equal distance r span [-x_max, x_max] within the bin.
        let linear: Vec<f64> = centers.iter().map(|c| c[0]).collect();
        let dev = radial_symmetry_deviation(&s, &linear, [0.0; 3], 1e-6);
        let r_max_group = centers.iter().map(|c| c[0].abs()).fold(0.0, f64::max);
        assert!((dev - 2.0 * r_max_group).abs() < 1e-12, "{dev}");
    }

    #[test]
    fn growth_rate_of_exponential() {
        let samples: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, 3.0 * (1.7 * i as f64 * 0.1).exp())).collect();
        let rate = exponential_growth_rate(&samples, 1.0, 4.0).unwrap();
        assert!((rate - 1.7).abs() < 1e-10);
        assert!(exponential_growth_rate(&samples, 10.0, 11.0).is_none());
    }
}
