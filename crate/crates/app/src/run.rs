//! Time integration of a scenario, diagnostics, and convergence sweeps.

use std::time::Instant;

use sgdg_core::diagnostics::{self, convergence_order, EnergyHistory, ErrorNorms};
use sgdg_core::field::{field_integral, l2_project};
use sgdg_core::limiters::DEFAULT_POSITIVITY_FLOOR;
use sgdg_core::poisson::{PoissonError, PoissonSolver};
use sgdg_core::scheme::{integrate, GravityOperator, LimitedOperator, RkOrder, SchemeError};
use sgdg_core::{Field, FieldError, Space};
use thiserror::Error;

use crate::config::{Config, ScenarioId};
use crate::scenarios::{self, Reference, ScenarioError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("scenario setup failed: {0}")]
    Setup(#[from] ScenarioError),
    #[error("numerical failure at t = {time}: {source}")]
    Numerical { time: f64, source: SchemeError },
    #[error("numerical failure: {0}")]
    Poisson(#[from] PoissonError),
    #[error("numerical failure: {0}")]
    Field(#[from] FieldError),
    #[error("state became non-finite at t = {time} (element {element}, component {component})")]
    NonFinite { time: f64, element: usize, component: usize },
}

impl RunError {
    fn at(time: f64) -> impl Fn(SchemeError) -> RunError {
        move |source| RunError::Numerical { time, source }
    }
}

/// Error norms of one variable on one mesh; `orders` against the previous mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub variable: String,
    pub mesh: usize,
    pub norms: ErrorNorms<f64>,
    pub orders: Option<ErrorNorms<f64>>,
}

/// Results of one run on one mesh.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub config: Config,
    pub mesh: usize,
    pub space: Space,
    /// Final conserved state `(ρ, m, E)` with `E` excluding gravitational energy.
    pub conserved: Field,
    /// Final evolved state (`E_tot` in place of `E` for the structure-preserving scheme).
    pub evolved: Field,
    pub phi: Field,
    /// Neutralising background density of the potential equation.
    pub background: f64,
    pub errors: Vec<ErrorRow>,
    pub energy: EnergyHistory<f64>,
    /// `(t, ‖ρ_h - Πρ_e‖_L2)` after every step.
    pub density_deviation: Vec<(f64, f64)>,
    pub steps: usize,
    pub final_time: f64,
    pub invalid_flags: usize,
    /// Check points whose cell average itself was not admissible (part of `invalid_flags`).
    pub unrecoverable_points: usize,
    pub limited_cells: usize,
    /// Spread of the cell-averaged density within radial bins, for symmetric problems.
    pub radial_deviation: Option<f64>,
    pub wall_seconds: f64,
}

/// Variable names of the state components in output files.
pub fn state_names(dim: usize) -> Vec<&'static str> {
    let mut v = vec!["rho", "mom_x", "mom_y", "mom_z"];
    v.truncate(1 + dim);
    v.push("E");
    v
}

/// `‖a - b‖_L2` for one component, exact through the orthonormal modes.
fn l2_distance(space: &Space, a: &Field, b: &Field, c: usize) -> f64 {
    let jac = space.mesh.volume_jacobian();
    let s: f64 = (0..space.n_elements())
        .flat_map(|e| a.coeffs(e, c).iter().zip(b.coeffs(e, c)).map(|(x, y)| (x - y) * (x - y)))
        .sum();
    (s * jac).sqrt()
}

/// Bin width for the radial symmetry probe: half a cell.
pub fn radial_bin_width(space: &Space) -> f64 {
    0.5 * space.mesh.h()[0]
}

/// Runs `config` on `config.mesh` cells per axis.
pub fn run_scenario(config: &Config) -> Result<RunOutputs, RunError> {
    run_on_mesh(config, config.mesh)
}

/// Runs `config` on an `n`-per-axis mesh.
pub fn run_on_mesh(config: &Config, n: usize) -> Result<RunOutputs, RunError> {
    if config.scenario == ScenarioId::ManufacturedPoisson {
        return manufactured_poisson(config, n);
    }
    let clock = Instant::now();
    let problem = scenarios::build(config, n)?;
    let space = problem.space.clone();
    let dim = space.dim();
    let mut scheme = problem.scheme;
    scheme.strict = !config.positivity;
    let op = GravityOperator::new(space.clone(), scheme, problem.equilibrium.clone(), problem.exact.clone())
        .map_err(RunError::at(0.0))?;
    let floor = config.positivity.then_some(DEFAULT_POSITIVITY_FLOOR);
    let mut sys = LimitedOperator::new(op, config.damping, floor);
    let mut w = sys.operator_mut().initial_state(|x| (problem.initial)(x)).map_err(RunError::at(0.0))?;
    sys.enforce_positivity(&mut w, 0.0).map_err(RunError::at(0.0))?;

    let eq = problem.equilibrium.clone();
    let rho_e = l2_project(&space, 1, |x, out| out[0] = eq.density(x))?;
    let mut energy = EnergyHistory::default();
    let mut deviation = Vec::new();
    energy.push(0.0, sys.operator_mut().energy_budget(&w, 0.0).map_err(RunError::at(0.0))?);
    deviation.push((0.0, l2_distance(&space, &w, &rho_e, 0)));
    let initial = sys.operator_mut().conserved_and_potential(&w, 0.0).map_err(RunError::at(0.0))?;

    let order = RkOrder::from_order(config.rk_order).unwrap_or(RkOrder::Three);
    let every = config.energy_every;
    let mut step = 0usize;
    let mut last_time = 0.0;
    let mut non_finite = None;
    let result = integrate(&mut sys, &mut w, 0.0, config.t_end, config.cfl, order, |t, w, sys| {
        step += 1;
        last_time = t;
        if let Some((element, component)) = w.find_non_finite() {
            non_finite = Some((element, component));
            return Err(SchemeError::InvalidState { element, time: t, rho: f64::NAN, pressure: f64::NAN });
        }
        deviation.push((t, l2_distance(sys.operator().space(), w, &rho_e, 0)));
        if step.is_multiple_of(every) || t >= config.t_end {
            energy.push(t, sys.operator_mut().energy_budget(w, t)?);
        }
        Ok(())
    });
    let summary = match (result, non_finite) {
        (Ok(s), _) => s,
        (Err(_), Some((element, component))) => {
            return Err(RunError::NonFinite { time: last_time, element, component })
        }
        (Err(source), None) => return Err(RunError::Numerical { time: last_time, source }),
    };
    let t = summary.final_time;
    if energy.records.last().map(|r| r.time) != Some(t) {
        energy.push(t, sys.operator_mut().energy_budget(&w, t).map_err(RunError::at(t))?);
    }
    let (conserved, phi) = sys.operator_mut().conserved_and_potential(&w, t).map_err(RunError::at(t))?;

    let mut errors = Vec::new();
    let names = state_names(dim);
    match problem.reference {
        Reference::Exact => {
            let exact = problem.exact.as_ref().expect("exact reference needs a sampler");
            for (c, name) in names.iter().enumerate() {
                let idx = if c == dim + 1 { 4 } else { c };
                let norms = diagnostics::error_norms(&space, &conserved, c, |x| exact.state(x, t)[idx]);
                errors.push(ErrorRow { variable: name.to_string(), mesh: n, norms, orders: None });
            }
            let norms = diagnostics::error_norms(&space, &phi, 0, |x| exact.potential(x, t));
            errors.push(ErrorRow { variable: "phi".into(), mesh: n, norms, orders: None });
        }
        Reference::Initial => {
            for (c, name) in names.iter().enumerate() {
                let norms = diagnostics::difference_norms(&space, &conserved, &initial.0, c);
                errors.push(ErrorRow { variable: name.to_string(), mesh: n, norms, orders: None });
            }
            let norms = diagnostics::difference_norms(&space, &phi, &initial.1, 0);
            errors.push(ErrorRow { variable: "phi".into(), mesh: n, norms, orders: None });
        }
        Reference::None => {}
    }

    let radial_deviation = match (problem.symmetry_center, dim) {
        (Some(center), 2) => {
            let rho = diagnostics::cell_averages(&space, &conserved, 0);
            Some(diagnostics::radial_symmetry_deviation(&space, &rho, center, radial_bin_width(&space)))
        }
        _ => None,
    };

    Ok(RunOutputs {
        config: config.clone(),
        mesh: n,
        invalid_flags: sys.invalid_flags(),
        unrecoverable_points: sys.positivity_report().flagged_points,
        limited_cells: sys.positivity_report().limited_cells,
        space,
        conserved,
        evolved: w,
        phi,
        background: scheme.background,
        errors,
        energy,
        density_deviation: deviation,
        steps: summary.steps,
        final_time: t,
        radial_deviation,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// LDG solve of `Δφ = -2π² sin(πx) sin(πy)` with zero Dirichlet data.
fn manufactured_poisson(config: &Config, n: usize) -> Result<RunOutputs, RunError> {
    use std::f64::consts::PI;
    let clock = Instant::now();
    let problem = scenarios::build(config, n)?;
    let space = problem.space;
    let solver = PoissonSolver::new(&space, Default::default(), config.solver)?;
    let source = l2_project(&space, 1, |x, out| out[0] = -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin())?;
    let load = solver.load_from_field(&source, 1.0);
    let sol = solver.solve(&space, &load, None, None)?;
    let exact = |x: &[f64; 3]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let grad_x = |x: &[f64; 3]| PI * (PI * x[0]).cos() * (PI * x[1]).sin();
    let grad_y = |x: &[f64; 3]| PI * (PI * x[0]).sin() * (PI * x[1]).cos();
    let errors = vec![
        ErrorRow {
            variable: "phi".into(),
            mesh: n,
            norms: diagnostics::error_norms(&space, &sol.phi, 0, exact),
            orders: None,
        },
        ErrorRow {
            variable: "g_x".into(),
            mesh: n,
            norms: diagnostics::error_norms(&space, &sol.grad, 0, grad_x),
            orders: None,
        },
        ErrorRow {
            variable: "g_y".into(),
            mesh: n,
            norms: diagnostics::error_norms(&space, &sol.grad, 1, grad_y),
            orders: None,
        },
    ];
    let state = Field::zeros_like(&space, 4);
    Ok(RunOutputs {
        config: config.clone(),
        mesh: n,
        conserved: state.clone(),
        evolved: state,
        phi: sol.phi,
        background: 0.0,
        space,
        errors,
        energy: EnergyHistory::default(),
        density_deviation: Vec::new(),
        steps: 0,
        final_time: 0.0,
        invalid_flags: 0,
        unrecoverable_points: 0,
        limited_cells: 0,
        radial_deviation: None,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// A sequence of runs on refined meshes and the combined error table.
#[derive(Debug, Clone)]
pub struct Convergence {
    pub runs: Vec<RunOutputs>,
    pub table: Vec<ErrorRow>,
}

impl Convergence {
    /// Rows of one variable in mesh order.
    pub fn variable(&self, name: &str) -> Vec<&ErrorRow> {
        self.table.iter().filter(|r| r.variable == name).collect()
    }
}

/// Fills `orders` from the previous row of the same variable.
pub fn attach_orders(rows: &mut [ErrorRow]) {
    for i in 0..rows.len() {
        let prev = rows[..i].iter().rev().find(|r| r.variable == rows[i].variable).map(|r| (r.norms, r.mesh));
        rows[i].orders = prev.map(|(p, m)| {
            // Orders are per halving of h; scale when the refinement is not two.
            let levels = (rows[i].mesh as f64 / m as f64).log2();
            let o = |a: f64, b: f64| convergence_order(a, b) / levels;
            ErrorNorms {
                l1: o(p.l1, rows[i].norms.l1),
                l2: o(p.l2, rows[i].norms.l2),
                linf: o(p.linf, rows[i].norms.linf),
            }
        });
    }
}

/// Runs `config` on every mesh of `config.meshes`. Scenarios without a reference
/// solution are compared against the next finer run through cell averages.
pub fn run_convergence(config: &Config) -> Result<Convergence, RunError> {
    let mut runs = Vec::new();
    for &n in &config.meshes {
        runs.push(run_on_mesh(config, n)?);
    }
    let mut table: Vec<ErrorRow> = if runs.iter().all(|r| !r.errors.is_empty()) {
        runs.iter().flat_map(|r| r.errors.iter().cloned()).collect()
    } else {
        self_convergence(&runs)
    };
    attach_orders(&mut table);
    Ok(Convergence { runs, table })
}

/// Cell-average differences between each run and the next finer one, on the coarse mesh.
fn self_convergence(runs: &[RunOutputs]) -> Vec<ErrorRow> {
    let mut rows = Vec::new();
    for pair in runs.windows(2) {
        let (coarse, fine) = (&pair[0], &pair[1]);
        if fine.mesh % coarse.mesh != 0 {
            continue;
        }
        let ratio = fine.mesh / coarse.mesh;
        let dim = coarse.space.dim();
        let cell_vol = coarse.space.mesh.cell_volume();
        for (c, name) in state_names(dim).iter().enumerate() {
            let ca = diagnostics::cell_averages(&coarse.space, &coarse.conserved, c);
            let fa = diagnostics::cell_averages(&fine.space, &fine.conserved, c);
            let mut agg = vec![0.0; ca.len()];
            for (e, v) in fa.iter().enumerate() {
                let idx = fine.space.mesh.element_index(e);
                let ce = coarse.space.mesh.element_id(idx.map(|i| i / ratio));
                agg[ce] += v / (ratio.pow(dim as u32)) as f64;
            }
            let d: Vec<f64> = ca.iter().zip(&agg).map(|(a, b)| (a - b).abs()).collect();
            let norms = ErrorNorms {
                l1: d.iter().sum::<f64>() * cell_vol,
                l2: (d.iter().map(|x| x * x).sum::<f64>() * cell_vol).sqrt(),
                linf: d.iter().fold(0.0, |m, x| m.max(*x)),
            };
            rows.push(ErrorRow { variable: name.to_string(), mesh: coarse.mesh, norms, orders: None });
        }
    }
    rows
}

/// Total mass `∫ρ` of a run's final state.
pub fn total_mass(out: &RunOutputs) -> f64 {
    field_integral(&out.space, &out.conserved, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variable: &str, mesh: usize, e: f64) -> ErrorRow {
        ErrorRow { variable: variable.into(), mesh, norms: ErrorNorms { l1: e, l2: e, linf: e }, orders: None }
    }

    #[test]
    fn orders_pair_rows_of_the_same_variable() {
        let mut rows = vec![row("rho", 10, 8.0), row("phi", 10, 1.0), row("rho", 20, 1.0), row("phi", 20, 0.25)];
        attach_orders(&mut rows);
        assert_eq!(rows[0].orders, None);
        assert_eq!(rows[2].orders.unwrap().l1, 3.0);
        assert_eq!(rows[3].orders.unwrap().l2, 2.0);
    }

    #[test]
    fn wb2d_stays_at_rest_on_a_coarse_mesh() {
        let mut c = Config::defaults(ScenarioId::Wb2d);
        c.t_end = 0.05;
        let out = run_on_mesh(&c, 4).unwrap();
        assert!(out.steps > 0);
        for r in &out.errors {
            assert!(r.norms.linf < 1e-12, "{} {:e}", r.variable, r.norms.linf);
        }
    }

    #[test]
    fn manufactured_poisson_converges() {
        let mut c = Config::defaults(ScenarioId::ManufacturedPoisson);
        c.degree = 1;
        c.meshes = vec![4, 8];
        let conv = run_convergence(&c).unwrap();
        let phi = conv.variable("phi");
        assert!(phi[1].orders.unwrap().l2 > 1.5);
    }

    #[test]
    fn blast_self_convergence_table_has_one_row_per_variable() {
        let mut c = Config::defaults(ScenarioId::Blast2d);
        c.t_end = 1e-3;
        c.meshes = vec![4, 8];
        let conv = run_convergence(&c).unwrap();
        assert_eq!(conv.table.len(), 4);
        assert!(conv.runs[1].radial_deviation.is_some());
    }
}
