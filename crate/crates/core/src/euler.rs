//! Ideal-gas Euler physics: pressure recovery, fluxes and the HLLC Riemann solver.
//!
//! States are `[ρ, m_x, m_y, m_z, E]`; two-dimensional problems keep `m_z = 0`.

use crate::real::Real;

pub type State<T> = [T; 5];

pub const RHO: usize = 0;
pub const ENERGY: usize = 4;

/// Gas pressure `(γ - 1)(E - |m|²/(2ρ))`.
#[inline]
pub fn pressure<T: Real>(u: &State<T>, gamma: T) -> T {
    let kinetic = T::half() * (u[1] * u[1] + u[2] * u[2] + u[3] * u[3]) / u[0];
    (gamma - T::one()) * (u[ENERGY] - kinetic)
}

#[inline]
pub fn sound_speed<T: Real>(rho: T, p: T, gamma: T) -> T {
    (gamma * p / rho).max(T::zero()).sqrt()
}

/// Conserved state from density, velocity and pressure.
pub fn conserved<T: Real>(rho: T, u: [T; 3], p: T, gamma: T) -> State<T> {
    let kinetic = T::half() * rho * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    [rho, rho * u[0], rho * u[1], rho * u[2], p / (gamma - T::one()) + kinetic]
}

/// Physical flux along `axis`, given the state and its pressure.
#[inline]
pub fn flux<T: Real>(u: &State<T>, p: T, axis: usize) -> State<T> {
    let un = u[1 + axis] / u[0];
    let mut f = [u[0] * un, u[1] * un, u[2] * un, u[3] * un, (u[ENERGY] + p) * un];
    f[1 + axis] += p;
    f
}

/// Spectral radius of the flux Jacobian along `axis`.
pub fn wave_speed<T: Real>(u: &State<T>, gamma: T, axis: usize) -> T {
    let p = pressure(u, gamma);
    (u[1 + axis] / u[0]).abs() + sound_speed(u[0], p, gamma)
}

/// Relative size below which the contact-speed denominator counts as degenerate.
const DEGENERATE_CONTACT: f64 = 1e-300;

/// HLLC flux through a face with unit normal `+e_axis` from `ul` to `ur`.
pub fn hllc<T: Real>(ul: &State<T>, ur: &State<T>, axis: usize, gamma: T) -> State<T> {
    let pl = pressure(ul, gamma);
    let pr = pressure(ur, gamma);
    let (rl, rr) = (ul[0], ur[0]);
    let unl = ul[1 + axis] / rl;
    let unr = ur[1 + axis] / rr;
    let cl = sound_speed(rl, pl, gamma);
    let cr = sound_speed(rr, pr, gamma);
    let sl = (unl - cl).min(unr - cr);
    let sr = (unl + cl).max(unr + cr);
    let fl = flux(ul, pl, axis);
    let fr = flux(ur, pr, axis);
    if sl >= T::zero() {
        return fl;
    }
    if sr <= T::zero() {
        return fr;
    }
    let den = rl * (sl - unl) - rr * (sr - unr);
    if den.abs() <= T::of(DEGENERATE_CONTACT) {
        // HLL average flux.
        let mut f = [T::zero(); 5];
        for i in 0..5 {
            f[i] = (sr * fl[i] - sl * fr[i] + sl * sr * (ur[i] - ul[i])) / (sr - sl);
        }
        return f;
    }
    let s_star = (pr - pl + rl * unl * (sl - unl) - rr * unr * (sr - unr)) / den;
    // `U* - U`, written so that every term vanishes exactly at a stationary contact.
    let jump = |u: &State<T>, p: T, un: T, s: T| -> State<T> {
        let rho = u[0];
        let d = (s_star - un) / (s - s_star);
        let mut v = [rho * d, u[1] * d, u[2] * d, u[3] * d, T::zero()];
        v[1 + axis] = rho * ((s_star - un) + d * s_star);
        let factor = rho * (s - un) / (s - s_star);
        v[ENERGY] = d * u[ENERGY] + factor * (s_star - un) * (s_star + p / (rho * (s - un)));
        v
    };
    let mut f = [T::zero(); 5];
    if s_star >= T::zero() {
        let du = jump(ul, pl, unl, sl);
        for i in 0..5 {
            f[i] = fl[i] + sl * du[i];
        }
    } else {
        let du = jump(ur, pr, unr, sr);
        for i in 0..5 {
            f[i] = fr[i] + sr * du[i];
        }
    }
    f
}

/// HLLC flux applied to states rescaled by `p*/p^e` on each side, where the
/// equilibrium pressure traces `pe_l`, `pe_r` meet at their mean `p*`.
/// Returns the flux and `p*`.
pub fn hllc_well_balanced<T: Real>(
    ul: &State<T>,
    ur: &State<T>,
    pe_l: T,
    pe_r: T,
    axis: usize,
    gamma: T,
) -> (State<T>, T) {
    let p_star = T::half() * (pe_l + pe_r);
    let sl = p_star / pe_l;
    let sr = p_star / pe_r;
    let a = ul.map(|v| v * sl);
    let b = ur.map(|v| v * sr);
    (hllc(&a, &b, axis, gamma), p_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const G: f64 = 1.4;

    #[test]
    fn flux_of_resting_gas_is_pure_pressure() {
        let u = conserved(1.3, [0.0; 3], 2.0, G);
        assert_relative_eq!(pressure(&u, G), 2.0, epsilon = 1e-15);
        let f = flux(&u, 2.0, 1);
        assert_eq!(f, [0.0, 0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn hllc_is_consistent() {
        let u = conserved(0.7, [0.3, -0.2, 0.1], 1.1, G);
        let p = pressure(&u, G);
        for axis in 0..3 {
            let f = hllc(&u, &u, axis, G);
            let e = flux(&u, p, axis);
            for i in 0..5 {
                assert_relative_eq!(f[i], e[i], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn supersonic_states_upwind() {
        let ul = conserved(1.0, [5.0, 0.0, 0.0], 1.0, G);
        let ur = conserved(0.5, [5.0, 0.0, 0.0], 0.8, G);
        assert_eq!(hllc(&ul, &ur, 0, G), flux(&ul, pressure(&ul, G), 0));
        let ul = conserved(1.0, [-5.0, 0.0, 0.0], 1.0, G);
        let ur = conserved(0.5, [-5.0, 0.0, 0.0], 0.8, G);
        assert_eq!(hllc(&ul, &ur, 0, G), flux(&ur, pressure(&ur, G), 0));
    }

    #[test]
    fn stationary_contact_gives_exact_pressure_flux() {
        let ul = conserved(2.0, [0.0; 3], 0.9, G);
        let ur = conserved(0.25, [0.0; 3], 0.9, G);
        let f = hllc(&ul, &ur, 2, G);
        assert_eq!(f, [0.0, 0.0, 0.0, 0.9, 0.0]);
    }

    #[test]
    fn well_balanced_flux_of_equilibrium_traces() {
        let (pl, pr) = (0.8, 0.83);
        let ul = conserved(1.0, [0.0; 3], pl, G);
        let ur = conserved(1.05, [0.0; 3], pr, G);
        let (f, ps) = hllc_well_balanced(&ul, &ur, pl, pr, 0, G);
        assert_relative_eq!(ps, 0.815, epsilon = 1e-15);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[4], 0.0);
        assert_relative_eq!(f[1], ps, epsilon = 1e-15);
    }

    /// Star state in its usual closed form, for comparison.
    fn textbook_star(u: &State<f64>, p: f64, axis: usize, s: f64, s_star: f64) -> State<f64> {
        let un = u[1 + axis] / u[0];
        let factor = u[0] * (s - un) / (s - s_star);
        let mut v = [factor, factor * u[1] / u[0], factor * u[2] / u[0], factor * u[3] / u[0], 0.0];
        v[1 + axis] = factor * s_star;
        v[4] = factor * (u[4] / u[0] + (s_star - un) * (s_star + p / (u[0] * (s - un))));
        v
    }

    #[test]
    fn hllc_matches_the_textbook_star_states() {
        let states = [
            (conserved(1.0, [0.2, 0.1, -0.3], 1.0, G), conserved(0.125, [-0.1, 0.4, 0.0], 0.1, G)),
            (conserved(0.4, [-0.5, 0.0, 0.2], 0.3, G), conserved(1.7, [0.6, -0.2, 0.1], 2.2, G)),
            (conserved(3.0, [0.0, 0.0, 0.0], 5.0, G), conserved(0.2, [1.5, 0.3, 0.3], 0.05, G)),
        ];
        for (ul, ur) in states {
            for axis in 0..3 {
                let (pl, pr) = (pressure(&ul, G), pressure(&ur, G));
                let (unl, unr) = (ul[1 + axis] / ul[0], ur[1 + axis] / ur[0]);
                let sl = (unl - sound_speed(ul[0], pl, G)).min(unr - sound_speed(ur[0], pr, G));
                let sr = (unl + sound_speed(ul[0], pl, G)).max(unr + sound_speed(ur[0], pr, G));
                let den = ul[0] * (sl - unl) - ur[0] * (sr - unr);
                let s_star = (pr - pl + ul[0] * unl * (sl - unl) - ur[0] * unr * (sr - unr)) / den;
                let (u, p, s) = if s_star >= 0.0 { (&ul, pl, sl) } else { (&ur, pr, sr) };
                let star = textbook_star(u, p, axis, s, s_star);
                let fu = flux(u, p, axis);
                let f = hllc(&ul, &ur, axis, G);
                for i in 0..5 {
                    assert_relative_eq!(f[i], fu[i] + s * (star[i] - u[i]), epsilon = 1e-13, max_relative = 1e-12);
                }
            }
        }
    }
}
