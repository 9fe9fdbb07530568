//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line with the measured
//! values next to the pinned thresholds; the process exits non-zero if any fails.
//!
//! `cargo test --release --test acceptance -- 4 8` runs only the listed criteria.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sgdg_app::{run_convergence, run_scenario, scenarios, Config, Convergence, RunOutputs, ScenarioId};
use sgdg_core::diagnostics::exponential_growth_rate;
use sgdg_core::euler::{conserved, hllc};
use sgdg_core::limiters::DEFAULT_POSITIVITY_FLOOR;
use sgdg_core::scheme::{GravityOperator, LimitedOperator, RateSource, SchemeKind};

// 1: well-balance
const WB_LINF: f64 = 1e-11;
const WB2D_FINEST_SECONDS: f64 = 120.0;
// 2: accuracy without damping
const ACCURACY_ORDERS: [f64; 3] = [3.18, 3.09, 3.05];
const ACCURACY_ORDER_BAND: f64 = 0.3;
const ACCURACY_L1_AT_10: f64 = 2.39e-5;
const ACCURACY_L1_FACTOR: f64 = 3.0;
// 3: summation by parts in the rate source
const NAIVE_ORDER_MAX: f64 = 2.6;
const SBP_ORDER_MIN: f64 = 2.9;
// 4: energy conservation
const SP_RELATIVE_DRIFT: f64 = 1e-10;
const STANDARD_DRIFT_RATIO: f64 = 1e3;
// 5: Jeans instability
const UNSTABLE_GRAVITY: f64 = 6.674;
const UNSTABLE_MESH: usize = 32;
const UNSTABLE_T_END: f64 = 2.0;
// The initial data also seed a non-growing entropy mode that is still a fifth of the
// deviation at t = 1 and about 2% by t = 2, so the fit uses the late linear phase.
const GROWTH_FIT_WINDOW: (f64, f64) = (1.5, 2.0);
const GROWTH_RATE_TOLERANCE: f64 = 0.10;
// 6: contact property of the HLLC flux
const CONTACT_SAMPLES: usize = 10_000;
const CONTACT_TOLERANCE: f64 = 1e-13;
// 7: Poisson convergence
const POISSON_ORDER_MARGIN: f64 = 0.8;
// 8: strong blast
const BLAST_RELATIVE_DRIFT: f64 = 1e-4;
const RADIAL_RATIO: f64 = 0.2;
// 9: limiter neutrality
const DAMPED_ORDER: f64 = 3.0;
const DAMPED_ORDER_BAND: f64 = 0.3;
const DAMPED_T_END: f64 = 0.2;
const DAMPED_MESHES: [usize; 3] = [10, 20, 40];
// 10: damping in 3D
const DAMPED_3D_MESHES: [usize; 3] = [4, 8, 16];
const DAMPED_3D_ORDER_MIN: f64 = 2.8;

type Outcome = Result<(bool, String), String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        (1, "well-balanced equilibria", well_balance),
        (2, "third-order accuracy", accuracy),
        (3, "summation-by-parts rate source", summation_by_parts),
        (4, "total energy conservation", energy_conservation),
        (5, "Jeans growth rate", jeans_growth),
        (6, "HLLC contact property", hllc_contact),
        (7, "Poisson convergence", poisson_convergence),
        (8, "blast positivity and symmetry", blast),
        (9, "limiter neutrality", limiter_neutrality),
        (10, "damped 3D accuracy", damped_accuracy_3d),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let clock = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("run failed: {e}")));
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id:>2} ({name}): {detail} [{:.0} s]", clock.elapsed().as_secs_f64());
        failed += usize::from(!pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn config(id: ScenarioId, edit: impl FnOnce(&mut Config)) -> Config {
    let mut c = Config::defaults(id);
    edit(&mut c);
    c
}

fn sweep(c: &Config) -> Result<Convergence, String> {
    run_convergence(c).map_err(|e| e.to_string())
}

fn single(c: &Config) -> Result<RunOutputs, String> {
    run_scenario(c).map_err(|e| e.to_string())
}

/// Orders of one variable's L1 (or L2) error between consecutive meshes.
fn orders(conv: &Convergence, variable: &str, norm: fn(&sgdg_core::diagnostics::ErrorNorms<f64>) -> f64) -> Vec<f64> {
    conv.variable(variable).iter().filter_map(|r| r.orders.as_ref().map(norm)).collect()
}

fn l1(n: &sgdg_core::diagnostics::ErrorNorms<f64>) -> f64 {
    n.l1
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn worst_linf(conv: &Convergence, dim: usize) -> f64 {
    let names = sgdg_app::run::state_names(dim);
    conv.table.iter().filter(|r| names.contains(&r.variable.as_str())).fold(0.0, |m, r| m.max(r.norms.linf))
}

fn well_balance() -> Outcome {
    let c2 = config(ScenarioId::Wb2d, |c| c.meshes = vec![10, 20, 40]);
    let conv2 = sweep(&c2)?;
    let dev2 = worst_linf(&conv2, 2);
    let finest = conv2.runs.last().map_or(f64::INFINITY, |r| r.wall_seconds);
    let c3 = config(ScenarioId::Wb3d, |c| c.meshes = vec![8, 16]);
    let conv3 = sweep(&c3)?;
    let dev3 = worst_linf(&conv3, 3);
    let pass = dev2 <= WB_LINF && dev3 <= WB_LINF && finest <= WB2D_FINEST_SECONDS;
    Ok((
        pass,
        format!(
            "2D L∞ {dev2:.2e}, 3D L∞ {dev3:.2e} (≤ {WB_LINF:.0e}); 40² run {finest:.0} s (≤ {WB2D_FINEST_SECONDS:.0} s)"
        ),
    ))
}

fn accuracy() -> Outcome {
    let c = config(ScenarioId::Accuracy2d, |c| c.meshes = vec![5, 10, 20, 40]);
    let conv = sweep(&c)?;
    let got = orders(&conv, "rho", l1);
    let at10 = conv.variable("rho").iter().find(|r| r.mesh == 10).map_or(f64::NAN, |r| r.norms.l1);
    let orders_ok =
        got.len() == 3 && got.iter().zip(ACCURACY_ORDERS).all(|(g, want)| (g - want).abs() <= ACCURACY_ORDER_BAND);
    let ratio = (at10 / ACCURACY_L1_AT_10).max(ACCURACY_L1_AT_10 / at10);
    let pass = orders_ok && ratio <= ACCURACY_L1_FACTOR;
    Ok((
        pass,
        format!(
            "ρ L1 orders [{}] vs [{}] ± {ACCURACY_ORDER_BAND}; 10² L1 {at10:.2e} vs {ACCURACY_L1_AT_10:.2e} (factor {ratio:.2} ≤ {ACCURACY_L1_FACTOR})",
            fmt(&got),
            fmt(&ACCURACY_ORDERS)
        ),
    ))
}

fn summation_by_parts() -> Outcome {
    let finest_order = |source: RateSource| -> Result<f64, String> {
        let d2 = if source == RateSource::Divergence { "naive" } else { "sbp" };
        // Parsed so the tensor basis gets its own default CFL number.
        let c = Config::parse(&format!("scenario = accuracy2d\nbasis = Q\nd2 = {d2}\n")).map_err(|e| e.to_string())?;
        let conv = sweep(&c)?;
        Ok(orders(&conv, "rho", l1).last().copied().unwrap_or(f64::NAN))
    };
    let naive = finest_order(RateSource::Divergence)?;
    let sbp = finest_order(RateSource::SummationByParts)?;
    let pass = naive <= NAIVE_ORDER_MAX && sbp >= SBP_ORDER_MIN;
    Ok((
        pass,
        format!("finest-pair ρ L1 order naive {naive:.2} (≤ {NAIVE_ORDER_MAX}), sbp {sbp:.2} (≥ {SBP_ORDER_MIN})"),
    ))
}

fn energy_conservation() -> Outcome {
    let sp = single(&config(ScenarioId::Jeans, |_| {}))?;
    let std = single(&config(ScenarioId::Jeans, |c| c.scheme = SchemeKind::Standard))?;
    let e0 = sp.energy.records.first().map_or(f64::NAN, |r| r.total.abs());
    let (sp_drift, std_drift) = (sp.energy.max_drift(), std.energy.max_drift());
    let pass = sp_drift <= SP_RELATIVE_DRIFT * e0 && std_drift >= STANDARD_DRIFT_RATIO * sp_drift;
    Ok((
        pass,
        format!(
            "SP drift {sp_drift:.2e} (≤ {:.2e} = {SP_RELATIVE_DRIFT:.0e}·|E0|), standard {std_drift:.2e} (ratio {:.1e} ≥ {STANDARD_DRIFT_RATIO:.0e})",
            SP_RELATIVE_DRIFT * e0,
            std_drift / sp_drift
        ),
    ))
}

fn jeans_growth() -> Outcome {
    let c = config(ScenarioId::Jeans, |c| {
        c.gravity = UNSTABLE_GRAVITY;
        c.mesh = UNSTABLE_MESH;
        c.t_end = UNSTABLE_T_END;
    });
    let out = single(&c)?;
    // Unit sound speed and wave vector (2π, 2π).
    let (sound_sq, k_sq) = (1.0, 8.0 * PI * PI);
    let expected = (4.0 * PI * c.gravity * c.rho0 - sound_sq * k_sq).sqrt();
    let fitted =
        exponential_growth_rate(&out.density_deviation, GROWTH_FIT_WINDOW.0, GROWTH_FIT_WINDOW.1).unwrap_or(f64::NAN);
    let rel = (fitted - expected).abs() / expected;
    Ok((
        rel <= GROWTH_RATE_TOLERANCE,
        format!("fitted rate {fitted:.4} vs {expected:.4} (relative error {rel:.3} ≤ {GROWTH_RATE_TOLERANCE})"),
    ))
}

fn hllc_contact() -> Outcome {
    let gamma = 1.4;
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..CONTACT_SAMPLES {
        let rho_l = 10f64.powf(rng.gen_range(-2.0..2.0));
        let rho_r = 10f64.powf(rng.gen_range(-2.0..2.0));
        let p = 10f64.powf(rng.gen_range(-2.0..1.0));
        let axis = rng.gen_range(0..3);
        let f = hllc(&conserved(rho_l, [0.0; 3], p, gamma), &conserved(rho_r, [0.0; 3], p, gamma), axis, gamma);
        let mut want = [0.0; 5];
        want[1 + axis] = p;
        let err = f.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err);
        failures += usize::from(err.is_nan() || err > CONTACT_TOLERANCE);
    }
    Ok((
        failures == 0,
        format!("{failures} of {CONTACT_SAMPLES} samples off by more than {CONTACT_TOLERANCE:.0e}; worst {worst:.1e}"),
    ))
}

fn poisson_convergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for degree in [1, 2] {
        let c = config(ScenarioId::ManufacturedPoisson, |c| {
            c.degree = degree;
            c.meshes = vec![8, 16, 32];
        });
        let conv = sweep(&c)?;
        let got = orders(&conv, "phi", |n| n.l2);
        let need = degree as f64 + POISSON_ORDER_MARGIN;
        pass &= got.len() == 2 && got.iter().all(|&o| o >= need);
        parts.push(format!("k={degree} φ L2 orders [{}] (≥ {need})", fmt(&got)));
    }
    Ok((pass, parts.join("; ")))
}

fn blast() -> Outcome {
    let sp = single(&config(ScenarioId::Blast2d, |_| {}))?;
    let std = single(&config(ScenarioId::Blast2d, |c| c.scheme = SchemeKind::Standard))?;
    let drift = sp.energy.max_relative_drift();
    let (r_sp, r_std) = (sp.radial_deviation.unwrap_or(f64::NAN), std.radial_deviation.unwrap_or(f64::NAN));
    let pass = sp.invalid_flags == 0 && drift <= BLAST_RELATIVE_DRIFT && r_sp <= RADIAL_RATIO * r_std;
    Ok((
        pass,
        format!(
            "invalid flags {} (standard {}); relative drift {drift:.2e} (≤ {BLAST_RELATIVE_DRIFT:.0e}); radial deviation SP {r_sp:.2e} vs standard {r_std:.2e} (ratio {:.3} ≤ {RADIAL_RATIO})",
            sp.invalid_flags,
            std.invalid_flags,
            r_sp / r_std
        ),
    ))
}

/// Largest coefficient change when damping and positivity limiting are applied to
/// the projected equilibrium; zero means bit-identical.
fn limiter_change(id: ScenarioId, kind: SchemeKind) -> Result<f64, String> {
    let c = config(id, |c| c.scheme = kind);
    let problem = scenarios::build(&c, c.mesh).map_err(|e| e.to_string())?;
    let op =
        GravityOperator::new(problem.space.clone(), problem.scheme, problem.equilibrium.clone(), problem.exact.clone())
            .map_err(|e| e.to_string())?;
    let mut sys = LimitedOperator::new(op, true, Some(DEFAULT_POSITIVITY_FLOOR));
    let w0 = sys.operator_mut().initial_state(|x| (problem.initial)(x)).map_err(|e| e.to_string())?;
    let mut w = w0.clone();
    for step in 0..3 {
        sys.limit(&mut w, 0.01 * step as f64, 0.01).map_err(|e| e.to_string())?;
    }
    let identical = w0.as_slice().iter().zip(w.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
    let change = w0.as_slice().iter().zip(w.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(if identical { 0.0 } else { change.max(f64::MIN_POSITIVE) })
}

fn limiter_neutrality() -> Outcome {
    // Neutrality is a property of the well-balanced scheme; the standard scheme damps
    // the full state, so its change is only reported.
    let mut changed = Vec::new();
    let mut standard = Vec::new();
    for id in [ScenarioId::Wb2d, ScenarioId::Wb3d] {
        let change = limiter_change(id, SchemeKind::StructurePreserving)?;
        if change > 0.0 {
            changed.push(format!("{} changed by {change:.1e}", id.name()));
        }
        standard.push(format!("{:.1e}", limiter_change(id, SchemeKind::Standard)?));
    }
    let c = config(ScenarioId::Accuracy2d, |c| {
        c.damping = true;
        c.t_end = DAMPED_T_END;
        c.meshes = DAMPED_MESHES.to_vec();
    });
    let got = orders(&sweep(&c)?, "rho", l1);
    let orders_ok = !got.is_empty() && got.iter().all(|o| (o - DAMPED_ORDER).abs() <= DAMPED_ORDER_BAND);
    let neutral = if changed.is_empty() { "bit-identical".to_string() } else { changed.join(", ") };
    Ok((
        changed.is_empty() && orders_ok,
        format!(
            "limited SP equilibria {neutral} (standard scheme moves them by {}); damped ρ L1 orders [{}] within {DAMPED_ORDER} ± {DAMPED_ORDER_BAND}",
            standard.join(", "),
            fmt(&got)
        ),
    ))
}

fn damped_accuracy_3d() -> Outcome {
    let c = config(ScenarioId::Accuracy3d, |c| {
        c.damping = true;
        c.meshes = DAMPED_3D_MESHES.to_vec();
    });
    let got = orders(&sweep(&c)?, "rho", l1);
    let finest = got.last().copied().unwrap_or(f64::NAN);
    Ok((
        finest >= DAMPED_3D_ORDER_MIN,
        format!("ρ L1 orders [{}]; finest pair {finest:.2} (≥ {DAMPED_3D_ORDER_MIN})", fmt(&got)),
    ))
}
