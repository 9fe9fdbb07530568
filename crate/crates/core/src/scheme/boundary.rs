use crate::equilibrium::Equilibrium;
use crate::euler::{conserved, State};
use crate::real::Real;

/// A known solution, sampled for ghost states and potential boundary values.
pub trait ExactSolution<T: Real>: Send + Sync {
    /// Conserved state `(ρ, m, E)` without gravitational energy.
    fn state(&self, x: &[T; 3], t: T) -> State<T>;
    fn potential(&self, x: &[T; 3], t: T) -> T;
    /// Time derivative of the potential.
    fn potential_rate(&self, x: &[T; 3], t: T) -> T;
    /// `true` if nothing depends on `t`, so boundary samples can be taken once.
    fn is_steady(&self) -> bool {
        false
    }
}

/// A gas at rest in a stationary equilibrium, usable as exact boundary data.
#[derive(Debug, Clone)]
pub struct Hydrostatic<T> {
    pub equilibrium: Equilibrium<T>,
    pub gamma: T,
}

impl<T: Real> ExactSolution<T> for Hydrostatic<T> {
    fn state(&self, x: &[T; 3], _t: T) -> State<T> {
        let rho = self.equilibrium.density(x);
        let p = self.equilibrium.pressure(x);
        conserved(rho, [T::zero(); 3], p, self.gamma)
    }

    fn potential(&self, x: &[T; 3], _t: T) -> T {
        self.equilibrium.potential(x)
    }

    fn potential_rate(&self, _x: &[T; 3], _t: T) -> T {
        T::zero()
    }

    fn is_steady(&self) -> bool {
        true
    }
}
