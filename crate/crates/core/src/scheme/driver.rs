use crate::field::DgField;
use crate::limiters::{EnergyRecovery, OscillationDamper, PositivityLimiter, PositivityReport};
use crate::real::Real;

use super::operator::GravityOperator;
use super::rk::{ssp_rk_step, RkOrder, SemiDiscrete};
use super::{SchemeError, SchemeKind};

/// Upper bound on limiter passes for the structure-preserving scheme.
const MAX_POSITIVITY_PASSES: usize = 4;

/// The spatial operator together with the limiters applied after every stage.
pub struct LimitedOperator<T: Real> {
    op: GravityOperator<T>,
    damper: Option<OscillationDamper<T>>,
    limiter: Option<PositivityLimiter<T>>,
    positivity: PositivityReport,
}

impl<T: Real> LimitedOperator<T> {
    /// `floor` enables the positivity limiter with that threshold.
    pub fn new(op: GravityOperator<T>, damping: bool, floor: Option<T>) -> Self {
        let damper = damping.then(|| OscillationDamper::new(op.space()));
        let limiter = floor.map(|eps| PositivityLimiter::new(op.space(), eps));
        Self { op, damper, limiter, positivity: PositivityReport::default() }
    }

    pub fn operator(&self) -> &GravityOperator<T> {
        &self.op
    }

    pub fn operator_mut(&mut self) -> &mut GravityOperator<T> {
        &mut self.op
    }

    pub fn into_operator(self) -> GravityOperator<T> {
        self.op
    }

    /// Accumulated positivity-limiter activity.
    pub fn positivity_report(&self) -> PositivityReport {
        self.positivity
    }

    /// Invalid states met by the residual plus points the positivity limiter could not fix.
    pub fn invalid_flags(&self) -> usize {
        self.op.invalid_events() + self.positivity.flagged_points
    }

    /// Applies the stage limiters to `w` (oscillation damping first, then positivity).
    pub fn limit(&mut self, w: &mut DgField<T>, t: T, dt: T) -> Result<(), SchemeError> {
        if let Some(damper) = &self.damper {
            let speeds = self.op.lagged_wave_speeds(w, t)?;
            damper.apply(self.op.space(), w, dt, &speeds, self.op.equilibrium_state())?;
        }
        self.enforce_positivity(w, t)
    }

    /// Positivity limiting alone, e.g. for projected initial data. A no-op when the
    /// limiter is disabled.
    pub fn enforce_positivity(&mut self, w: &mut DgField<T>, t: T) -> Result<(), SchemeError> {
        let Some(limiter) = &self.limiter else {
            return Ok(());
        };
        let gamma = self.op.config().gamma;
        let report = match self.op.config().kind {
            SchemeKind::Standard => limiter.apply(self.op.space(), w, gamma, EnergyRecovery::Conserved)?,
            SchemeKind::StructurePreserving => {
                // Limiting changes the density and therefore the potential used to
                // recover the pressure; repeat until the recovered state passes.
                let background = self.op.config().background;
                let mut total = PositivityReport::default();
                for _ in 0..MAX_POSITIVITY_PASSES {
                    self.op.recover(w, t)?;
                    let rec = self.op.cached().expect("just recovered");
                    let recovery = EnergyRecovery::Total { energy: &rec.energy, phi: &rec.phi, background };
                    let report = limiter.apply(self.op.space(), w, gamma, recovery)?;
                    total.limited_cells += report.limited_cells;
                    total.flagged_points += report.flagged_points;
                    if report.limited_cells == 0 {
                        break;
                    }
                }
                total
            }
        };
        self.positivity.limited_cells += report.limited_cells;
        self.positivity.flagged_points += report.flagged_points;
        Ok(())
    }
}

impl<T: Real> SemiDiscrete<T> for LimitedOperator<T> {
    fn rhs(&mut self, w: &DgField<T>, t: T) -> Result<DgField<T>, SchemeError> {
        self.op.residual(w, t)
    }

    fn post_stage(&mut self, w: &mut DgField<T>, t: T, dt: T) -> Result<(), SchemeError> {
        if self.damper.is_none() && self.limiter.is_none() {
            return Ok(());
        }
        self.limit(w, t, dt)
    }
}

/// Outcome of [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSummary<T> {
    pub steps: usize,
    pub final_time: T,
}

/// Advances `w` from `t0` to `t_end` with steps of `cfl · h / max(|ū|_∞ + c̄)`, the last
/// step shortened to land on `t_end`. `observer` runs after every step.
pub fn integrate<T: Real, F>(
    sys: &mut LimitedOperator<T>,
    w: &mut DgField<T>,
    t0: T,
    t_end: T,
    cfl: T,
    order: RkOrder,
    mut observer: F,
) -> Result<IntegrationSummary<T>, SchemeError>
where
    F: FnMut(T, &DgField<T>, &mut LimitedOperator<T>) -> Result<(), SchemeError>,
{
    let mut t = t0;
    let mut steps = 0;
    let tol = T::of(1e-12) * (T::one() + t_end.abs());
    while t_end - t > tol {
        let mut dt = sys.op.stable_dt(w, t, cfl)?;
        if t + dt > t_end - tol {
            dt = t_end - t;
        }
        ssp_rk_step(sys, w, t, dt, order)?;
        t += dt;
        steps += 1;
        observer(t, w, sys)?;
    }
    Ok(IntegrationSummary { steps, final_time: t })
}
