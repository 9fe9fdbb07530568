//! Initial data, equilibria, domains and boundary conditions of the scenarios.

use std::f64::consts::PI;
use std::sync::Arc;

use sgdg_core::equilibrium::{EquilibriumError, PolytropeParams};
use sgdg_core::euler::{self, State};
use sgdg_core::scheme::{ExactSolution, Hydrostatic, SchemeConfig};
use sgdg_core::{BoundaryKind, CartesianMesh, Equilibrium, MeshError, Space};
use thiserror::Error;

use crate::config::{Config, ScenarioId};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// What the final state is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// The analytic solution at the final time.
    Exact,
    /// The discrete initial state (a steady state).
    Initial,
    None,
}

pub type InitialData = Box<dyn Fn(&[f64; 3]) -> State<f64> + Send + Sync>;

/// Everything needed to set up a run on one mesh.
pub struct Problem {
    pub space: Space,
    pub scheme: SchemeConfig<f64>,
    pub equilibrium: Equilibrium,
    pub exact: Option<Arc<dyn ExactSolution<f64>>>,
    pub initial: InitialData,
    pub reference: Reference,
    /// Centre of a radially symmetric solution, if any.
    pub symmetry_center: Option<[f64; 3]>,
}

/// `ρ = λ sin(w·(x - v t))` advected at constant velocity on the planar `n = 1`
/// polytrope, with `p = κρ²` and `φ = -2κρ`.
#[derive(Debug, Clone)]
pub struct TravellingWave {
    pub wave: [f64; 3],
    pub velocity: [f64; 3],
    pub kappa: f64,
    pub lambda: f64,
}

impl TravellingWave {
    fn phase(&self, x: &[f64; 3], t: f64) -> f64 {
        (0..3).map(|a| self.wave[a] * (x[a] - self.velocity[a] * t)).sum()
    }

    pub fn density(&self, x: &[f64; 3], t: f64) -> f64 {
        self.lambda * self.phase(x, t).sin()
    }
}

impl ExactSolution<f64> for TravellingWave {
    fn state(&self, x: &[f64; 3], t: f64) -> State<f64> {
        let rho = self.density(x, t);
        euler::conserved(rho, self.velocity, self.kappa * rho * rho, 2.0)
    }

    fn potential(&self, x: &[f64; 3], t: f64) -> f64 {
        -2.0 * self.kappa * self.density(x, t)
    }

    fn potential_rate(&self, x: &[f64; 3], t: f64) -> f64 {
        let speed: f64 = (0..3).map(|a| self.wave[a] * self.velocity[a]).sum();
        2.0 * self.kappa * self.lambda * speed * self.phase(x, t).cos()
    }
}

/// Centres of the five blasts of `multiblast2d`.
pub const MULTIBLAST_CENTERS: [[f64; 2]; 5] = [[-0.25, 0.3], [-0.25, 0.1], [0.025, 0.3], [0.025, 0.225], [0.1, -0.1]];

fn polytrope(config: &Config) -> PolytropeParams<f64> {
    PolytropeParams { kappa: config.kappa, gravity: config.gravity, lambda: config.lambda, n: config.n }
}

fn radius_sq(x: &[f64; 3], c: [f64; 3], dim: usize) -> f64 {
    (0..dim).map(|a| (x[a] - c[a]) * (x[a] - c[a])).sum()
}

/// Gas at rest on `eq` with the pressure changed by `dp(x, p_e)`.
fn at_rest_with<F>(eq: &Equilibrium, gamma: f64, dp: F) -> InitialData
where
    F: Fn(&[f64; 3], f64) -> f64 + Send + Sync + 'static,
{
    let eq = eq.clone();
    Box::new(move |x| {
        let pe = eq.pressure(x);
        euler::conserved(eq.density(x), [0.0; 3], pe + dp(x, pe), gamma)
    })
}

/// Builds scenario `config.scenario` on an `n`-per-axis mesh.
pub fn build(config: &Config, n: usize) -> Result<Problem, ScenarioError> {
    use ScenarioId::*;
    let id = config.scenario;
    let dim = id.dim();
    let gamma = config.gamma;
    let origin = [0.0; 3];
    let mut scheme = SchemeConfig::new(config.scheme, config.gravity, gamma);
    scheme.rate_source = config.rate_source;
    scheme.solver = config.solver;
    let unit_box = |kind| CartesianMesh::uniform(dim, -0.5, 0.5, n, kind);

    let (mesh, equilibrium, exact, initial, reference, symmetry_center): (
        _,
        Equilibrium,
        Option<Arc<dyn ExactSolution<f64>>>,
        InitialData,
        _,
        _,
    ) = match id {
        Accuracy2d | Accuracy3d => {
            let params = polytrope(config);
            let a = params.scale_length();
            let (direction, velocity, lower, upper) = if dim == 2 {
                let lo = 2f64.sqrt() * PI * a / 8.0;
                ([1.0, 1.0, 0.0], [1.0, 1.0, 0.0], lo, 3.0 * lo)
            } else {
                let lo = 3f64.sqrt() * PI * a / 18.0;
                ([1.0, 1.0, 1.0], [0.2, 0.3, 0.5], lo, 5.0 * lo)
            };
            let eq = Equilibrium::planar(params, direction)?;
            let Equilibrium::Planar { wave, .. } = eq else { unreachable!("planar constructor") };
            let exact = Arc::new(TravellingWave { wave, velocity, kappa: config.kappa, lambda: config.lambda });
            let sampler = exact.clone();
            let mesh = CartesianMesh::uniform(dim, lower, upper, n, BoundaryKind::Exact)?;
            (
                mesh,
                eq,
                Some(exact as Arc<dyn ExactSolution<f64>>),
                Box::new(move |x: &[f64; 3]| sampler.state(x, 0.0)) as InitialData,
                Reference::Exact,
                None,
            )
        }
        Wb2d | Wb3d => {
            let eq = Equilibrium::radial(polytrope(config), dim, origin)?;
            let exact = Arc::new(Hydrostatic { equilibrium: eq.clone(), gamma });
            let init = at_rest_with(&eq, gamma, |_, _| 0.0);
            (
                unit_box(BoundaryKind::Exact)?,
                eq,
                Some(exact as Arc<dyn ExactSolution<f64>>),
                init,
                Reference::Initial,
                Some(origin),
            )
        }
        Perturb2dSym | Perturb2dAsym | Perturb3d => {
            let eq = Equilibrium::radial(polytrope(config), dim, origin)?;
            let center = if id == Perturb2dAsym { [0.3, 0.3, 0.0] } else { origin };
            let mu = config.mu;
            let init = at_rest_with(&eq, gamma, move |x, _| mu * (-100.0 * radius_sq(x, center, dim)).exp());
            let symmetric = (center == origin).then_some(origin);
            (unit_box(BoundaryKind::Transmissive)?, eq, None, init, Reference::None, symmetric)
        }
        Blast2d | Explosion3d => {
            let eq = Equilibrium::radial(polytrope(config), dim, origin)?;
            let mu = config.mu;
            let init: InitialData = if id == Blast2d {
                at_rest_with(&eq, gamma, move |x, _| if radius_sq(x, origin, dim) < 0.01 { mu } else { 0.0 })
            } else {
                at_rest_with(
                    &eq,
                    gamma,
                    move |x, pe| if radius_sq(x, origin, dim) < 0.01 { (mu - 1.0) * pe } else { 0.0 },
                )
            };
            (unit_box(BoundaryKind::Transmissive)?, eq, None, init, Reference::None, Some(origin))
        }
        Multiblast2d => {
            let eq = Equilibrium::radial(polytrope(config), dim, origin)?;
            let mu = config.mu;
            let init = at_rest_with(&eq, gamma, move |x, _| {
                let hit = MULTIBLAST_CENTERS.iter().any(|c| radius_sq(x, [c[0], c[1], 0.0], 2) < 0.0025);
                if hit {
                    mu
                } else {
                    0.0
                }
            });
            (unit_box(BoundaryKind::Transmissive)?, eq, None, init, Reference::None, None)
        }
        Jeans => {
            let (rho0, p0, mu) = (config.rho0, config.jeans_pressure(), config.mu);
            scheme.background = rho0;
            let init: InitialData = Box::new(move |x| {
                let s = 1.0 + mu * (2.0 * PI * (x[0] + x[1])).sin();
                euler::conserved(rho0 * s, [0.0; 3], p0 * s, gamma)
            });
            let mesh = CartesianMesh::uniform(2, 0.0, 1.0, n, BoundaryKind::Periodic)?;
            (mesh, Equilibrium::uniform(rho0, p0), None, init, Reference::None, None)
        }
        ManufacturedPoisson => {
            let mesh = CartesianMesh::uniform(2, 0.0, 1.0, n, BoundaryKind::Exact)?;
            let init: InitialData = Box::new(|_| [0.0; 5]);
            (mesh, Equilibrium::uniform(1.0, 1.0), None, init, Reference::Exact, None)
        }
    };
    let space = Space::new(mesh, config.degree, config.basis);
    Ok(Problem { space, scheme, equilibrium, exact, initial, reference, symmetry_center })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn travelling_wave_is_hydrostatic_and_solves_poisson() {
        let c = Config::defaults(ScenarioId::Accuracy3d);
        let p = build(&c, 2).unwrap();
        let exact = p.exact.unwrap();
        let x = [0.4, 0.7, 0.9];
        let h = 1e-4;
        // Δφ = 4πGρ by central differences.
        let mut lap = 0.0;
        for a in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[a] += h;
            xm[a] -= h;
            lap += (exact.potential(&xp, 0.1) - 2.0 * exact.potential(&x, 0.1) + exact.potential(&xm, 0.1)) / (h * h);
        }
        let rho = exact.state(&x, 0.1)[0];
        assert!((lap - 4.0 * PI * c.gravity * rho).abs() < 1e-5, "{lap} vs {}", 4.0 * PI * c.gravity * rho);
        let dt = 1e-6;
        let rate = (exact.potential(&x, 0.1 + dt) - exact.potential(&x, 0.1 - dt)) / (2.0 * dt);
        assert!((rate - exact.potential_rate(&x, 0.1)).abs() < 1e-6);
    }

    #[test]
    fn travelling_wave_density_stays_positive_on_the_domain() {
        for id in [ScenarioId::Accuracy2d, ScenarioId::Accuracy3d] {
            let p = build(&Config::defaults(id), 3).unwrap();
            let lo = p.space.mesh.lower();
            let hi = p.space.mesh.upper();
            for corner in [lo, hi] {
                assert!(p.exact.as_ref().unwrap().state(&corner, 0.0)[0] > 0.0);
            }
        }
    }

    #[test]
    fn blast_raises_pressure_only_inside_the_ball() {
        let c = Config::defaults(ScenarioId::Blast2d);
        let p = build(&c, 4).unwrap();
        let inside = (p.initial)(&[0.05, 0.0, 0.0]);
        let outside = (p.initial)(&[0.2, 0.0, 0.0]);
        let pe_in = p.equilibrium.pressure(&[0.05, 0.0, 0.0]);
        let pe_out = p.equilibrium.pressure(&[0.2, 0.0, 0.0]);
        assert!((euler::pressure(&inside, 2.0) - pe_in - 100.0).abs() < 1e-10);
        assert!((euler::pressure(&outside, 2.0) - pe_out).abs() < 1e-12);
    }

    #[test]
    fn jeans_uses_a_neutralising_background() {
        let c = Config::defaults(ScenarioId::Jeans);
        let p = build(&c, 4).unwrap();
        assert_eq!(p.scheme.background, 1.0);
        let s = (p.initial)(&[0.25, 0.0, 0.0]);
        assert!((s[0] - 1.001).abs() < 1e-14);
        // Sound speed one.
        assert!((c.gamma * c.jeans_pressure() / c.rho0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn every_scenario_builds() {
        for id in ScenarioId::ALL {
            let p = build(&Config::defaults(id), 2).unwrap();
            assert_eq!(p.space.dim(), id.dim());
        }
    }
}
