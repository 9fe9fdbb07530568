//! Hydrostatic equilibria of self-gravitating polytropic gas.

use std::sync::OnceLock;

use thiserror::Error;

use crate::quadrature::{gauss_legendre, Rule1d};
use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum EquilibriumError {
    #[error("no closed-form Lane-Emden profile for index n = {n} in {dim}D")]
    Unsupported { n: f64, dim: usize },
    #[error("equilibrium density is not positive at ({x}, {y}, {z})")]
    NonPositiveDensity { x: f64, y: f64, z: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Nodes used for the integral representation of the 2D profile.
const BESSEL_NODES: usize = 64;

/// `J0(r) = (1/π) ∫_0^π cos(r sin α) dα` by Gauss–Legendre quadrature.
pub fn bessel_j0<T: Real>(r: T) -> T {
    static RULE: OnceLock<Rule1d<f64>> = OnceLock::new();
    let rule = RULE.get_or_init(|| gauss_legendre(BESSEL_NODES));
    let r = r.to_f64_lossy();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let s: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * (r * (half_pi * (x + 1.0)).sin()).cos()).sum();
    T::of(s * half_pi / std::f64::consts::PI)
}

/// Closed-form Lane–Emden solution `θ(ξ)` with `θ(0) = 1`, `θ'(0) = 0`.
pub fn lane_emden_theta<T: Real>(n: T, dim: usize, xi: T) -> Result<T, EquilibriumError> {
    let nf = n.to_f64_lossy();
    match (dim, nf) {
        (3, 0.0) => Ok(T::one() - xi * xi / T::of(6.0)),
        (3, 1.0) => Ok(if xi == T::zero() { T::one() } else { xi.sin() / xi }),
        (3, 5.0) => Ok(T::one() / (T::one() + xi * xi / T::of(3.0)).sqrt()),
        (2, 1.0) => Ok(bessel_j0(xi)),
        (1, 1.0) => Ok(xi.cos()),
        _ => Err(EquilibriumError::Unsupported { n: nf, dim }),
    }
}

/// Parameters of a polytrope `p = κ ρ^γ` with `γ = 1 + 1/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolytropeParams<T> {
    pub kappa: T,
    pub gravity: T,
    pub lambda: T,
    pub n: T,
}

impl<T: Real> PolytropeParams<T> {
    pub fn gamma(&self) -> T {
        T::one() + T::one() / self.n
    }

    /// Length scale `a` with `ρ = λ θ(r/a)`.
    pub fn scale_length(&self) -> T {
        let four_pi_g = T::of(4.0) * T::PI() * self.gravity;
        (self.kappa * (self.n + T::one()) * self.lambda.powf((T::one() - self.n) / self.n) / four_pi_g).sqrt()
    }
}

/// A stationary state `u = 0`, `∇p = -ρ∇φ`, `Δφ = 4πG(ρ - ρ_bg)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Equilibrium<T> {
    /// Radially symmetric Lane–Emden polytrope centred at `center`.
    Radial { params: PolytropeParams<T>, dim: usize, center: [T; 3] },
    /// Planar `n = 1` polytrope `ρ = λ sin(k·x)`, with `|k| = 1/a`.
    Planar { params: PolytropeParams<T>, wave: [T; 3] },
    /// Uniform gas whose own mass is cancelled by a neutralising background.
    Uniform { rho: T, p: T },
}

impl<T: Real> Equilibrium<T> {
    pub fn radial(params: PolytropeParams<T>, dim: usize, center: [T; 3]) -> Result<Self, EquilibriumError> {
        if !(params.kappa > T::zero()
            && params.gravity > T::zero()
            && params.lambda > T::zero()
            && params.n > T::zero())
        {
            return Err(EquilibriumError::InvalidParameter("polytrope constants must be positive"));
        }
        lane_emden_theta(params.n, dim, T::zero())?;
        Ok(Self::Radial { params, dim, center })
    }

    /// Planar profile varying along `direction` (normalised internally).
    pub fn planar(params: PolytropeParams<T>, direction: [T; 3]) -> Result<Self, EquilibriumError> {
        if params.n != T::one() {
            return Err(EquilibriumError::Unsupported { n: params.n.to_f64_lossy(), dim: 1 });
        }
        let len = (direction[0] * direction[0] + direction[1] * direction[1] + direction[2] * direction[2]).sqrt();
        if !(len > T::zero()) {
            return Err(EquilibriumError::InvalidParameter("planar direction must be non-zero"));
        }
        let a = params.scale_length();
        Ok(Self::Planar { params, wave: direction.map(|d| d / (len * a)) })
    }

    pub fn uniform(rho: T, p: T) -> Self {
        Self::Uniform { rho, p }
    }

    pub fn gamma(&self) -> Option<T> {
        match self {
            Self::Radial { params, .. } | Self::Planar { params, .. } => Some(params.gamma()),
            Self::Uniform { .. } => None,
        }
    }

    pub fn density(&self, x: &[T; 3]) -> T {
        match self {
            Self::Radial { params, dim, center } => {
                let r = (0..*dim).map(|a| (x[a] - center[a]) * (x[a] - center[a])).sum::<T>().sqrt();
                let theta =
                    lane_emden_theta(params.n, *dim, r / params.scale_length()).expect("checked at construction");
                params.lambda * theta.powf(params.n)
            }
            Self::Planar { params, wave } => params.lambda * (wave[0] * x[0] + wave[1] * x[1] + wave[2] * x[2]).sin(),
            Self::Uniform { rho, .. } => *rho,
        }
    }

    pub fn pressure(&self, x: &[T; 3]) -> T {
        match self {
            Self::Radial { params, .. } | Self::Planar { params, .. } => {
                params.kappa * self.density(x).powf(params.gamma())
            }
            Self::Uniform { p, .. } => *p,
        }
    }

    /// Potential `-κγ/(γ-1) ρ^{γ-1}` (zero for the uniform state).
    pub fn potential(&self, x: &[T; 3]) -> T {
        match self {
            Self::Radial { params, .. } | Self::Planar { params, .. } => {
                let g = params.gamma();
                -params.kappa * g / (g - T::one()) * self.density(x).powf(g - T::one())
            }
            Self::Uniform { .. } => T::zero(),
        }
    }

    /// Checks positivity of the density at the given points.
    pub fn check_positive<'a, I: IntoIterator<Item = &'a [T; 3]>>(&self, points: I) -> Result<(), EquilibriumError> {
        for x in points {
            if !(self.density(x) > T::zero()) {
                return Err(EquilibriumError::NonPositiveDensity {
                    x: x[0].to_f64_lossy(),
                    y: x[1].to_f64_lossy(),
                    z: x[2].to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bessel_matches_reference_values() {
        assert_relative_eq!(bessel_j0(0.0f64), 1.0, epsilon = 1e-15);
        assert_relative_eq!(bessel_j0(1.0f64), 0.765_197_686_557_966_6, epsilon = 1e-14);
        assert!(bessel_j0(2.404_825_557_695_773f64).abs() < 1e-14);
    }

    #[test]
    fn closed_forms() {
        assert_relative_eq!(lane_emden_theta(0.0f64, 3, 2.0).unwrap(), 1.0 - 4.0 / 6.0);
        assert_relative_eq!(lane_emden_theta(5.0f64, 3, 3.0).unwrap(), 0.5);
        assert!(lane_emden_theta(1.0f64, 3, std::f64::consts::PI).unwrap().abs() < 1e-15);
        assert!(lane_emden_theta(2.0f64, 3, 1.0).is_err());
    }

    #[test]
    fn scale_lengths_of_reference_setups() {
        let p = PolytropeParams { kappa: 2.0 * std::f64::consts::PI, gravity: 0.25, lambda: 1.0, n: 1.0 };
        assert_relative_eq!(p.scale_length(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(p.gamma(), 2.0);
        let q = PolytropeParams { kappa: 1.0, gravity: 1.0 / std::f64::consts::PI, lambda: 1.0, n: 1.0 };
        assert_relative_eq!(1.0 / q.scale_length(), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn radial_profile_is_hydrostatic() {
        // ∇p = -ρ∇φ checked by central differences.
        let params = PolytropeParams { kappa: 1.0, gravity: 1.0, lambda: 1.0, n: 1.0 };
        for dim in [2, 3] {
            let eq = Equilibrium::radial(params, dim, [0.0; 3]).unwrap();
            let x = [0.21, -0.13, 0.07];
            let h = 1e-5;
            for a in 0..dim {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let dp = (eq.pressure(&xp) - eq.pressure(&xm)) / (2.0 * h);
                let dphi = (eq.potential(&xp) - eq.potential(&xm)) / (2.0 * h);
                assert_relative_eq!(dp, -eq.density(&x) * dphi, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn planar_profile_satisfies_poisson() {
        let params = PolytropeParams { kappa: 2.0 * std::f64::consts::PI, gravity: 0.25, lambda: 1.0, n: 1.0 };
        let eq = Equilibrium::planar(params, [1.0, 1.0, 0.0]).unwrap();
        let x = [1.3, 2.1, 0.0];
        let h = 1e-4;
        let mut lap = 0.0;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            lap += (eq.potential(&xp) - 2.0 * eq.potential(&x) + eq.potential(&xm)) / (h * h);
        }
        assert_relative_eq!(lap, 4.0 * std::f64::consts::PI * 0.25 * eq.density(&x), epsilon = 1e-6);
        // Matches sin((√2/(2a))(x + y)) with a = 2.
        assert_relative_eq!(eq.density(&x), ((2f64.sqrt() / 4.0) * (x[0] + x[1])).sin(), epsilon = 1e-14);
    }
}
