//! CSV tables, legacy VTK snapshots and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sgdg_core::euler;
use sgdg_core::field::field_eval;
use sgdg_core::quadrature::{gauss_legendre, TensorRule};
use thiserror::Error;

use crate::config::Config;
use crate::run::{ErrorRow, RunOutputs};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, OutputError> {
    fs::write(&path, text).map_err(|source| OutputError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

/// `variable,mesh,L1,L1_order,L2,L2_order,Linf,Linf_order`; orders blank on the first mesh.
pub fn errors_csv(rows: &[ErrorRow]) -> String {
    let mut s = String::from("variable,mesh,L1,L1_order,L2,L2_order,Linf,Linf_order\n");
    for r in rows {
        let o = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.variable,
            r.mesh,
            sci(r.norms.l1),
            o(r.orders.map(|x| x.l1)),
            sci(r.norms.l2),
            o(r.orders.map(|x| x.l2)),
            sci(r.norms.linf),
            o(r.orders.map(|x| x.linf)),
        );
    }
    s
}

/// `t,E_tot,E_kin,E_int,E_grav` with full precision.
pub fn energy_csv(out: &RunOutputs) -> String {
    let mut s = String::from("t,E_tot,E_kin,E_int,E_grav\n");
    for r in &out.energy.records {
        let _ = writeln!(s, "{:?},{:?},{:?},{:?},{:?}", r.time, r.total, r.kinetic, r.internal, r.gravitational);
    }
    s
}

/// Named scalar arrays `rho, mom_x, mom_y[, mom_z], E_tot, phi, p` at reference points
/// `xi` of every element, element-major.
fn point_values(out: &RunOutputs, points: &[[f64; 3]]) -> Vec<(&'static str, Vec<f64>)> {
    let dim = out.space.dim();
    let gamma = out.config.gamma;
    let bg = out.background;
    let mut names = vec!["rho", "mom_x", "mom_y", "mom_z"];
    names.truncate(1 + dim);
    names.extend(["E_tot", "phi", "p"]);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for e in 0..out.space.n_elements() {
        for xi in points {
            let u = field_eval(&out.space, &out.conserved, e, xi);
            let phi = field_eval(&out.space, &out.phi, e, xi)[0];
            let mut state = [0.0; 5];
            state[..=dim].copy_from_slice(&u[..=dim]);
            state[euler::ENERGY] = u[dim + 1];
            for c in 0..=dim {
                cols[c].push(u[c]);
            }
            cols[dim + 1].push(u[dim + 1] + 0.5 * (u[0] - bg) * phi);
            cols[dim + 2].push(phi);
            cols[dim + 3].push(euler::pressure(&state, gamma));
        }
    }
    names.into_iter().zip(cols).collect()
}

fn vtk_header(title: &str, dims: [usize; 3], origin: [f64; 3], spacing: [f64; 3], n_cells: usize) -> String {
    format!(
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS {} {} {}\nORIGIN {:?} {:?} {:?}\nSPACING {:?} {:?} {:?}\nCELL_DATA {n_cells}\n",
        dims[0], dims[1], dims[2], origin[0], origin[1], origin[2], spacing[0], spacing[1], spacing[2]
    )
}

fn vtk_arrays(s: &mut String, arrays: &[(&'static str, Vec<f64>)]) {
    for (name, values) in arrays {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(s, "{v:?}");
        }
    }
}

/// Cell averages as cell data on the mesh.
pub fn cell_vtk(out: &RunOutputs) -> String {
    let mesh = &out.space.mesh;
    let cells = mesh.cells();
    let h = mesh.h();
    let dim = out.space.dim();
    let mut dims = [1; 3];
    let mut spacing = [1.0; 3];
    for a in 0..dim {
        dims[a] = cells[a] + 1;
        spacing[a] = h[a];
    }
    let origin = mesh.lower();
    // Exact element means from a Gauss rule; a midpoint sample would not be.
    let rule = TensorRule::new(&gauss_legendre::<f64>(out.space.basis.degree() + 1), dim);
    let arrays: Vec<_> = point_values(out, &rule.points)
        .into_iter()
        .map(|(n, v)| (n, weighted_average(v, &rule.weights, dim)))
        .collect();
    let mut s = vtk_header(
        &format!("{} cell averages t={:?}", out.config.scenario.name(), out.final_time),
        dims,
        origin,
        spacing,
        mesh.num_elements(),
    );
    vtk_arrays(&mut s, &arrays);
    s
}

fn weighted_average(values: Vec<f64>, weights: &[f64], dim: usize) -> Vec<f64> {
    let total = 2f64.powi(dim as i32);
    values.chunks(weights.len()).map(|c| c.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total).collect()
}

/// Values at `(k+1)^d` equispaced sub-cell centres per element, as cell data on the
/// refined grid.
pub fn subcell_vtk(out: &RunOutputs) -> String {
    let mesh = &out.space.mesh;
    let dim = out.space.dim();
    let per = out.space.basis.degree() + 1;
    let cells = mesh.cells();
    let h = mesh.h();
    let mut dims = [1; 3];
    let mut spacing = [1.0; 3];
    let mut fine = [1; 3];
    for a in 0..dim {
        fine[a] = cells[a] * per;
        dims[a] = fine[a] + 1;
        spacing[a] = h[a] / per as f64;
    }
    let centres: Vec<f64> = (0..per).map(|i| -1.0 + (2 * i + 1) as f64 / per as f64).collect();
    // Local sub-cell points, x fastest.
    let mut local = Vec::new();
    let n3 = if dim == 3 { per } else { 1 };
    for k in 0..n3 {
        for j in 0..per {
            for i in 0..per {
                local.push([centres[i], centres[j], if dim == 3 { centres[k] } else { 0.0 }]);
            }
        }
    }
    let arrays = point_values(out, &local);
    let n_fine: usize = fine.iter().product();
    let mut s = vtk_header(
        &format!("{} sub-cell values t={:?}", out.config.scenario.name(), out.final_time),
        dims,
        mesh.lower(),
        spacing,
        n_fine,
    );
    // Scatter element-major samples into the global x-fastest ordering.
    let mut reordered = Vec::with_capacity(arrays.len());
    for (name, values) in arrays {
        let mut g = vec![0.0; n_fine];
        for e in 0..mesh.num_elements() {
            let idx = mesh.element_index(e);
            for (l, v) in values[e * local.len()..(e + 1) * local.len()].iter().enumerate() {
                let li = [l % per, (l / per) % per, l / (per * per)];
                let gi = [idx[0] * per + li[0], idx[1] * per + li[1], idx[2] * per + li[2]];
                g[gi[0] + fine[0] * (gi[1] + fine[1] * gi[2])] = *v;
            }
        }
        reordered.push((name, g));
    }
    vtk_arrays(&mut s, &reordered);
    s
}

/// Resolved configuration plus provenance, readable by [`Config::parse`].
pub fn manifest(config: &Config, out: Option<&RunOutputs>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# sgdg {} revision {}",
        env!("CARGO_PKG_VERSION"),
        option_env!("SGDG_REVISION").unwrap_or("unknown")
    );
    if let Some(o) = out {
        let _ = writeln!(
            s,
            "# mesh {} steps {} final_time {:?} wall_seconds {:.3}",
            o.mesh, o.steps, o.final_time, o.wall_seconds
        );
        let _ = writeln!(
            s,
            "# invalid_flags {} unrecoverable_points {} limited_cells {}",
            o.invalid_flags, o.unrecoverable_points, o.limited_cells
        );
        if let Some(d) = o.radial_deviation {
            let _ = writeln!(s, "# radial_deviation {d:e}");
        }
    }
    s.push_str(&config.to_text());
    s
}

/// Files written for a single run.
pub fn write_run(out: &RunOutputs, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    let mut files = vec![write(dir.join("manifest.txt"), &manifest(&out.config, Some(out)))?];
    if !out.errors.is_empty() {
        files.push(write(dir.join("errors.csv"), &errors_csv(&out.errors))?);
    }
    if !out.energy.records.is_empty() {
        files.push(write(dir.join("energy.csv"), &energy_csv(out))?);
    }
    files.push(write(dir.join("cells.vtk"), &cell_vtk(out))?);
    files.push(write(dir.join("subcells.vtk"), &subcell_vtk(out))?);
    Ok(files)
}

/// Files written for a convergence sweep: the table, the manifest, and the finest run.
pub fn write_convergence(
    config: &Config,
    rows: &[ErrorRow],
    finest: &RunOutputs,
    dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    let mut files = write_run(finest, dir)?;
    files.retain(|p| !p.ends_with("errors.csv") && !p.ends_with("manifest.txt"));
    files.push(write(dir.join("manifest.txt"), &manifest(config, Some(finest)))?);
    files.push(write(dir.join("errors.csv"), &errors_csv(rows))?);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioId;
    use crate::run::{attach_orders, run_on_mesh};
    use sgdg_core::diagnostics::ErrorNorms;

    #[test]
    fn errors_csv_leaves_first_orders_blank() {
        let n = |e| ErrorNorms { l1: e, l2: e, linf: e };
        let mut rows = vec![
            ErrorRow { variable: "rho".into(), mesh: 10, norms: n(0.8), orders: None },
            ErrorRow { variable: "rho".into(), mesh: 20, norms: n(0.1), orders: None },
        ];
        attach_orders(&mut rows);
        let csv = errors_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "variable,mesh,L1,L1_order,L2,L2_order,Linf,Linf_order");
        assert_eq!(lines[1], "rho,10,8.000000e-1,,8.000000e-1,,8.000000e-1,");
        assert_eq!(lines[2], "rho,20,1.000000e-1,3.000,1.000000e-1,3.000,1.000000e-1,3.000");
    }

    #[test]
    fn vtk_files_have_one_value_per_cell() {
        let mut c = Config::defaults(ScenarioId::Wb2d);
        c.t_end = 0.0;
        let out = run_on_mesh(&c, 3).unwrap();
        let vtk = cell_vtk(&out);
        assert!(vtk.contains("DIMENSIONS 4 4 1"));
        assert!(vtk.contains("CELL_DATA 9"));
        for name in ["rho", "mom_x", "mom_y", "E_tot", "phi", "p"] {
            assert!(vtk.contains(&format!("SCALARS {name} double 1")), "{name}");
        }
        assert!(!vtk.contains("mom_z"));
        let values = vtk.lines().skip_while(|l| !l.starts_with("SCALARS rho")).skip(2).take(9);
        let rho: Vec<f64> = values.map(|v| v.parse().unwrap()).collect();
        // Cell averages equal the constant mode.
        let b0 = out.space.basis.constant_value();
        for (e, r) in rho.iter().enumerate() {
            assert!((r - out.conserved.coeffs(e, 0)[0] * b0).abs() < 1e-13);
        }
        let fine = subcell_vtk(&out);
        assert!(fine.contains("DIMENSIONS 10 10 1") && fine.contains("CELL_DATA 81"));
    }

    #[test]
    fn manifest_parses_back() {
        let c = Config::defaults(ScenarioId::Blast2d);
        assert_eq!(Config::parse(&manifest(&c, None)).unwrap(), c);
    }
}
