//! Well-balancing and energy conservation through the public API, on meshes small
//! enough for a debug build.

use std::f64::consts::PI;
use std::sync::Arc;

use sgdg_core::equilibrium::{Equilibrium, PolytropeParams};
use sgdg_core::euler::conserved;
use sgdg_core::scheme::{
    integrate, ExactSolution, GravityOperator, Hydrostatic, LimitedOperator, RkOrder, SchemeConfig, SchemeKind,
};
use sgdg_core::{BasisKind, BoundaryKind, CartesianMesh, DgField, DgSpace, Real};

fn polytrope<T: Real>() -> Equilibrium<T> {
    let params = PolytropeParams { kappa: T::one(), gravity: T::one(), lambda: T::one(), n: T::one() };
    Equilibrium::radial(params, 2, [T::zero(); 3]).unwrap()
}

/// Largest coefficient change after `steps` steps from the projected polytrope at rest.
fn drift_from_rest<T: Real>(kind: SchemeKind, steps: usize) -> T {
    let eq = polytrope::<T>();
    let gamma = eq.gamma().unwrap();
    let mesh = CartesianMesh::uniform(2, T::of(-0.5), T::of(0.5), 6, BoundaryKind::Exact).unwrap();
    let space = DgSpace::new(mesh, 2, BasisKind::Total);
    let exact: Arc<dyn ExactSolution<T>> = Arc::new(Hydrostatic { equilibrium: eq.clone(), gamma });
    let cfg = SchemeConfig::new(kind, T::one(), gamma);
    let op = GravityOperator::new(space, cfg, eq.clone(), Some(exact)).unwrap();
    let mut sys = LimitedOperator::new(op, false, None);
    let w0 =
        sys.operator_mut().initial_state(|x| conserved(eq.density(x), [T::zero(); 3], eq.pressure(x), gamma)).unwrap();
    let mut w = w0.clone();
    let dt = T::of(1e-3);
    let t_end = dt * T::of_usize(steps);
    integrate(&mut sys, &mut w, T::zero(), t_end, T::of(0.1), RkOrder::Three, |_, _, _| Ok(())).unwrap();
    max_change(&w0, &w)
}

fn max_change<T: Real>(a: &DgField<T>, b: &DgField<T>) -> T {
    a.as_slice().iter().zip(b.as_slice()).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()))
}

#[test]
fn polytrope_at_rest_stays_put_only_with_the_preserving_scheme() {
    let sp: f64 = drift_from_rest(SchemeKind::StructurePreserving, 10);
    let std: f64 = drift_from_rest(SchemeKind::Standard, 10);
    assert!(sp < 1e-13, "structure-preserving drift {sp:e}");
    assert!(std > 1e3 * sp.max(1e-16), "standard drift {std:e} should be visibly larger");
}

#[test]
fn single_precision_run_stays_at_rest() {
    let sp: f32 = drift_from_rest(SchemeKind::StructurePreserving, 5);
    assert!(sp < 1e-5, "f32 drift {sp:e}");
}

/// Maximum of `|E_tot(t) - E_tot(0)|` over a short periodic run with a neutralising background.
fn periodic_energy_drift(kind: SchemeKind) -> (f64, f64) {
    let (rho0, gamma, mu) = (1.0, 5.0 / 3.0, 0.05);
    let p0 = rho0 / gamma;
    let mesh = CartesianMesh::uniform(2, 0.0, 1.0, 6, BoundaryKind::Periodic).unwrap();
    let space = DgSpace::new(mesh, 2, BasisKind::Total);
    let mut cfg = SchemeConfig::new(kind, 0.6674, gamma);
    cfg.background = rho0;
    let op = GravityOperator::new(space, cfg, Equilibrium::uniform(rho0, p0), None).unwrap();
    let mut sys = LimitedOperator::new(op, false, None);
    let mut w = sys
        .operator_mut()
        .initial_state(|x| {
            let s = 1.0 + mu * (2.0 * PI * (x[0] + x[1])).sin();
            conserved(rho0 * s, [0.1, -0.05, 0.0], p0 * s, gamma)
        })
        .unwrap();
    let e0 = sys.operator_mut().energy_budget(&w, 0.0).unwrap()[0];
    let mut drift: f64 = 0.0;
    integrate(&mut sys, &mut w, 0.0, 0.1, 0.1, RkOrder::Three, |t, w, sys| {
        let e = sys.operator_mut().energy_budget(w, t)?[0];
        drift = drift.max((e - e0).abs());
        Ok(())
    })
    .unwrap();
    (drift, e0.abs())
}

#[test]
fn total_energy_is_conserved_on_a_periodic_box() {
    let (sp, e0) = periodic_energy_drift(SchemeKind::StructurePreserving);
    let (std, _) = periodic_energy_drift(SchemeKind::Standard);
    assert!(sp <= 1e-12 * e0, "structure-preserving drift {sp:e} of {e0:e}");
    assert!(std > 100.0 * sp.max(1e-16), "standard drift {std:e}");
}
