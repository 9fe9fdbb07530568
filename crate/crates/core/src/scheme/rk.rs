use crate::field::DgField;
use crate::real::Real;

use super::SchemeError;

/// A semi-discrete system `dW/dt = L(W, t)` with an optional per-stage correction.
pub trait SemiDiscrete<T: Real> {
    fn rhs(&mut self, w: &DgField<T>, t: T) -> Result<DgField<T>, SchemeError>;

    /// Applied after every stage; `dt` is the full step size and `t` the stage time.
    fn post_stage(&mut self, _w: &mut DgField<T>, _t: T, _dt: T) -> Result<(), SchemeError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkOrder {
    One,
    Two,
    Three,
}

impl RkOrder {
    pub fn from_order(order: usize) -> Option<Self> {
        match order {
            1 => Some(Self::One),
            2 => Some(Self::Two),
            3 => Some(Self::Three),
            _ => None,
        }
    }

    pub fn order(self) -> usize {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
        }
    }
}

/// Advances `w` by one strong-stability-preserving Runge-Kutta step.
pub fn ssp_rk_step<T: Real, S: SemiDiscrete<T>>(
    sys: &mut S,
    w: &mut DgField<T>,
    t: T,
    dt: T,
    order: RkOrder,
) -> Result<(), SchemeError> {
    let stage = |sys: &mut S, u: &DgField<T>, ts: T| -> Result<DgField<T>, SchemeError> {
        let mut next = u.clone();
        next.axpy(dt, &sys.rhs(u, ts)?);
        Ok(next)
    };
    let mut u1 = stage(sys, w, t)?;
    sys.post_stage(&mut u1, t + dt, dt)?;
    match order {
        RkOrder::One => {
            *w = u1;
        }
        RkOrder::Two => {
            let mut u2 = stage(sys, &u1, t + dt)?;
            u2.lincomb(T::half(), T::half(), w);
            sys.post_stage(&mut u2, t + dt, dt)?;
            *w = u2;
        }
        RkOrder::Three => {
            let quarter = T::of(0.25);
            let mut u2 = stage(sys, &u1, t + dt)?;
            u2.lincomb(quarter, T::one() - quarter, w);
            sys.post_stage(&mut u2, t + T::half() * dt, dt)?;
            let third = T::one() / T::of(3.0);
            let mut u3 = stage(sys, &u2, t + T::half() * dt)?;
            u3.lincomb(T::of(2.0) * third, third, w);
            sys.post_stage(&mut u3, t + dt, dt)?;
            *w = u3;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar decay `w' = -w` on a one-element, one-mode field.
    struct Decay;

    impl SemiDiscrete<f64> for Decay {
        fn rhs(&mut self, w: &DgField<f64>, _t: f64) -> Result<DgField<f64>, SchemeError> {
            let mut r = w.clone();
            r.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
            Ok(r)
        }
    }

    #[test]
    fn rk_orders_match_taylor_truncation() {
        for order in [RkOrder::One, RkOrder::Two, RkOrder::Three] {
            let mut errs = Vec::new();
            for n in [20, 40] {
                let dt = 1.0 / n as f64;
                let mut w = DgField::from_vec(1, 1, 1, vec![1.0]).unwrap();
                let mut t = 0.0;
                for _ in 0..n {
                    ssp_rk_step(&mut Decay, &mut w, t, dt, order).unwrap();
                    t += dt;
                }
                errs.push((w.as_slice()[0] - (-1.0f64).exp()).abs());
            }
            let rate = (errs[0] / errs[1]).log2();
            assert!((rate - order.order() as f64).abs() < 0.15, "{order:?}: {rate}");
        }
    }
}
