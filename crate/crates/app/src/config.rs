//! `key = value` run configuration with per-scenario defaults.
//!
//! Lines starting with `#` are comments and a single `[scenario]` section header is
//! accepted. The only required key is `scenario`; everything else falls back to the
//! scenario's defaults. [`Config::to_text`] writes a file that parses back to the same
//! configuration, which is how run manifests are produced.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sgdg_core::poisson::LinearSolver;
use sgdg_core::scheme::{RateSource, SchemeKind};
use sgdg_core::BasisKind;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("unknown scenario `{0}` (see `sgdg list-scenarios`)")]
    UnknownScenario(String),
    #[error("missing `scenario` key")]
    MissingScenario,
    #[error("key `{key}`: cannot read `{value}` as {expected}")]
    Type { key: String, value: String, expected: &'static str },
    #[error("key `{key}` = {value}: {reason}")]
    Range { key: &'static str, value: String, reason: &'static str },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Every scenario the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Accuracy2d,
    Wb2d,
    Perturb2dSym,
    Perturb2dAsym,
    Blast2d,
    Multiblast2d,
    Jeans,
    Accuracy3d,
    Wb3d,
    Perturb3d,
    Explosion3d,
    ManufacturedPoisson,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 12] = [
        Self::Accuracy2d,
        Self::Wb2d,
        Self::Perturb2dSym,
        Self::Perturb2dAsym,
        Self::Blast2d,
        Self::Multiblast2d,
        Self::Jeans,
        Self::Accuracy3d,
        Self::Wb3d,
        Self::Perturb3d,
        Self::Explosion3d,
        Self::ManufacturedPoisson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Accuracy2d => "accuracy2d",
            Self::Wb2d => "wb2d",
            Self::Perturb2dSym => "perturb2d_sym",
            Self::Perturb2dAsym => "perturb2d_asym",
            Self::Blast2d => "blast2d",
            Self::Multiblast2d => "multiblast2d",
            Self::Jeans => "jeans",
            Self::Accuracy3d => "accuracy3d",
            Self::Wb3d => "wb3d",
            Self::Perturb3d => "perturb3d",
            Self::Explosion3d => "explosion3d",
            Self::ManufacturedPoisson => "manufactured_poisson",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::Accuracy2d => "travelling sine wave on a planar n=1 polytrope, exact boundaries",
            Self::Wb2d => "2D n=1 polytrope at rest; should stay at the discrete equilibrium",
            Self::Perturb2dSym => "small Gaussian pressure bump at the centre of the 2D polytrope",
            Self::Perturb2dAsym => "Gaussian pressure bump off the centre of the 2D polytrope",
            Self::Blast2d => "strong pressure jump inside r < 0.1 on the 2D polytrope",
            Self::Multiblast2d => "five small blasts on the 2D polytrope",
            Self::Jeans => "periodic Jeans wave against a neutralising background",
            Self::Accuracy3d => "travelling sine wave on a planar n=1 polytrope in 3D",
            Self::Wb3d => "3D n=1 polytrope at rest",
            Self::Perturb3d => "small Gaussian pressure bump on the 3D polytrope",
            Self::Explosion3d => "tenfold pressure jump inside r < 0.1 on the 3D polytrope",
            Self::ManufacturedPoisson => "LDG Poisson solve against sin(pi x) sin(pi y)",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Accuracy3d | Self::Wb3d | Self::Perturb3d | Self::Explosion3d => 3,
            _ => 2,
        }
    }

    /// Scenarios whose equilibrium is a polytrope with `γ = 1 + 1/n`.
    pub fn is_polytrope(self) -> bool {
        !matches!(self, Self::Jeans | Self::ManufacturedPoisson)
    }
}

impl FromStr for ScenarioId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| ConfigError::UnknownScenario(s.to_string()))
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: ScenarioId,
    /// Polytropic constant (`K` for the 3D scenarios).
    pub kappa: f64,
    /// Gravitational constant.
    pub gravity: f64,
    /// Central or peak density (`ρ0` for the 3D polytropes).
    pub lambda: f64,
    /// Polytropic index.
    pub n: f64,
    pub gamma: f64,
    /// Background density of the Jeans problem.
    pub rho0: f64,
    /// Perturbation amplitude; its meaning depends on the scenario.
    pub mu: f64,
    /// Cells per axis for `run`.
    pub mesh: usize,
    /// Cells per axis for `convergence`.
    pub meshes: Vec<usize>,
    pub degree: usize,
    pub basis: BasisKind,
    pub scheme: SchemeKind,
    pub rate_source: RateSource,
    pub rk_order: usize,
    pub damping: bool,
    pub positivity: bool,
    pub t_end: f64,
    pub cfl: f64,
    pub solver: LinearSolver,
    /// Record the energy budget every this many steps.
    pub energy_every: usize,
    pub output_dir: PathBuf,
}

const KEYS: [&str; 22] = [
    "scenario",
    "kappa",
    "G",
    "lambda",
    "n",
    "gamma",
    "rho0",
    "mu",
    "mesh",
    "meshes",
    "degree",
    "basis",
    "scheme",
    "d2",
    "rk_order",
    "oe",
    "pp",
    "t_end",
    "cfl",
    "solver",
    "energy_every",
    "output_dir",
];

/// Largest stable CFL number observed for SSP-RK3 with the HLLC flux, per degree,
/// for `P^k` in two dimensions; `Q^k` and 3D are scaled down from it.
fn default_cfl(dim: usize, degree: usize, basis: BasisKind) -> f64 {
    let base = match degree {
        0 => 0.4,
        1 => 0.2,
        2 => 0.1,
        _ => 0.07,
    };
    let tensor = if basis == BasisKind::Tensor { 0.7 } else { 1.0 };
    let dims = if dim == 3 { 2.0 / 3.0 } else { 1.0 };
    base * tensor * dims
}

impl Config {
    /// Desk-scale defaults for a scenario.
    pub fn defaults(scenario: ScenarioId) -> Self {
        use ScenarioId::*;
        let pi = std::f64::consts::PI;
        let mut c = Config {
            scenario,
            kappa: 1.0,
            gravity: 1.0,
            lambda: 1.0,
            n: 1.0,
            gamma: 2.0,
            rho0: 1.0,
            mu: 0.0,
            mesh: 40,
            meshes: vec![10, 20, 40],
            degree: 2,
            basis: BasisKind::Total,
            scheme: SchemeKind::StructurePreserving,
            rate_source: RateSource::SummationByParts,
            rk_order: 3,
            damping: false,
            positivity: false,
            t_end: 0.1,
            cfl: 0.0,
            solver: LinearSolver::Auto,
            energy_every: 1,
            output_dir: PathBuf::from("output").join(scenario.name()),
        };
        match scenario {
            Accuracy2d => {
                c.kappa = 2.0 * pi;
                c.gravity = 0.25;
                c.t_end = 0.8;
                c.mesh = 20;
                c.meshes = vec![5, 10, 20, 40];
            }
            Wb2d => {
                c.t_end = 5.0;
                c.mesh = 20;
                c.meshes = vec![10, 20, 40];
            }
            Perturb2dSym => {
                c.mu = 0.01;
                c.mesh = 50;
            }
            Perturb2dAsym => {
                c.mu = 0.1;
                c.mesh = 50;
            }
            Blast2d => {
                c.mu = 100.0;
                c.mesh = 100;
                c.t_end = 0.05;
                c.damping = true;
                c.positivity = true;
            }
            Multiblast2d => {
                c.mu = 100.0;
                c.mesh = 100;
                c.t_end = 0.02;
                c.damping = true;
                c.positivity = true;
            }
            Jeans => {
                c.gravity = 0.6674;
                c.gamma = 5.0 / 3.0;
                c.mu = 1e-3;
                c.mesh = 64;
                c.meshes = vec![16, 32, 64];
                c.t_end = 2.6;
                c.damping = true;
                c.positivity = true;
            }
            Accuracy3d => {
                c.kappa = 2.0 * pi;
                c.gravity = 1.0 / pi;
                c.t_end = 0.3;
                c.mesh = 8;
                c.meshes = vec![4, 8, 16];
            }
            Wb3d => {
                c.gravity = 1.0 / pi;
                c.t_end = 1.0;
                c.mesh = 8;
                c.meshes = vec![4, 8, 16];
            }
            Perturb3d => {
                c.gravity = 1.0 / pi;
                c.mu = 1e-3;
                c.mesh = 16;
            }
            Explosion3d => {
                c.mu = 10.0;
                c.mesh = 24;
                c.meshes = vec![12, 24];
                c.t_end = 0.15;
                c.damping = true;
                c.positivity = true;
            }
            ManufacturedPoisson => {
                c.mesh = 16;
                c.meshes = vec![8, 16, 32];
                c.t_end = 0.0;
            }
        }
        c.cfl = default_cfl(scenario.dim(), c.degree, c.basis);
        c
    }

    /// Large reference resolutions in place of the desk defaults.
    pub fn full_scale(mut self) -> Self {
        use ScenarioId::*;
        match self.scenario {
            Accuracy2d => self.meshes = vec![5, 10, 20, 40, 80],
            Wb2d => self.meshes = vec![10, 20, 40, 80],
            Perturb2dSym | Perturb2dAsym => self.mesh = 200,
            Blast2d | Multiblast2d => self.mesh = 400,
            Jeans => self.mesh = 200,
            Accuracy3d => self.meshes = vec![8, 16, 32, 64],
            Wb3d => self.meshes = vec![8, 16, 32],
            Perturb3d | Explosion3d => self.mesh = 60,
            ManufacturedPoisson => self.meshes = vec![8, 16, 32, 64],
        }
        self
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut seen_section = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if name.trim() != "scenario" || seen_section {
                    return Err(ConfigError::UnknownSection { line, name: name.trim().to_string() });
                }
                seen_section = true;
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: body.to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line, text: body.to_string() });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if entries.iter().any(|(_, k, _)| k == key) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
            entries.push((line, key.to_string(), value.to_string()));
        }
        let scenario: ScenarioId =
            entries.iter().find(|(_, k, _)| k == "scenario").ok_or(ConfigError::MissingScenario)?.2.parse()?;
        let mut c = Config::defaults(scenario);
        let has = |key: &str| entries.iter().any(|(_, k, _)| k == key);
        let (cfl_given, gamma_given) = (has("cfl"), has("gamma"));
        for (_, key, value) in &entries {
            c.set(key, value)?;
        }
        if scenario.is_polytrope() && !gamma_given {
            c.gamma = 1.0 + 1.0 / c.n;
        }
        if !cfl_given {
            c.cfl = default_cfl(scenario.dim(), c.degree, c.basis);
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "scenario" => {}
            "kappa" => self.kappa = number(key, value)?,
            "G" => self.gravity = number(key, value)?,
            "lambda" => self.lambda = number(key, value)?,
            "n" => self.n = number(key, value)?,
            "gamma" => self.gamma = number(key, value)?,
            "rho0" => self.rho0 = number(key, value)?,
            "mu" => self.mu = number(key, value)?,
            "mesh" => self.mesh = integer(key, value)?,
            "meshes" => self.meshes = value.split(',').map(|v| integer(key, v.trim())).collect::<Result<_, _>>()?,
            "degree" => self.degree = integer(key, value)?,
            "basis" => {
                self.basis = match value {
                    "P" | "p" => BasisKind::Total,
                    "Q" | "q" => BasisKind::Tensor,
                    _ => return Err(type_error(key, value, "P or Q")),
                }
            }
            "scheme" => {
                self.scheme = match value {
                    "sp" => SchemeKind::StructurePreserving,
                    "std" => SchemeKind::Standard,
                    _ => return Err(type_error(key, value, "sp or std")),
                }
            }
            "d2" => {
                self.rate_source = match value {
                    "sbp" => RateSource::SummationByParts,
                    "naive" => RateSource::Divergence,
                    _ => return Err(type_error(key, value, "sbp or naive")),
                }
            }
            "rk_order" => self.rk_order = integer(key, value)?,
            "oe" => self.damping = boolean(key, value)?,
            "pp" => self.positivity = boolean(key, value)?,
            "t_end" => self.t_end = number(key, value)?,
            "cfl" => self.cfl = number(key, value)?,
            "solver" => {
                self.solver = match value {
                    "auto" => LinearSolver::Auto,
                    "direct" => LinearSolver::Direct,
                    "iterative" => LinearSolver::Iterative,
                    _ => return Err(type_error(key, value, "auto, direct or iterative")),
                }
            }
            "energy_every" => self.energy_every = integer(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => unreachable!("keys are checked against KEYS"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn range(key: &'static str, value: impl ToString, reason: &'static str) -> ConfigError {
            ConfigError::Range { key, value: value.to_string(), reason }
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(range("cfl", self.cfl, "must lie in (0, 1]"));
        }
        if !(1..=3).contains(&self.rk_order) {
            return Err(range("rk_order", self.rk_order, "must be 1, 2 or 3"));
        }
        if self.degree > 4 {
            return Err(range("degree", self.degree, "at most 4 is supported"));
        }
        if self.mesh == 0 {
            return Err(range("mesh", self.mesh, "must be positive"));
        }
        if self.meshes.is_empty() || self.meshes.contains(&0) {
            return Err(range("meshes", format!("{:?}", self.meshes), "must be a non-empty list of positive sizes"));
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return Err(range("G", self.gravity, "must be positive"));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(range("gamma", self.gamma, "must exceed 1"));
        }
        if !(self.kappa > 0.0 && self.lambda > 0.0 && self.rho0 > 0.0) {
            return Err(range("kappa", self.kappa, "kappa, lambda and rho0 must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(range("t_end", self.t_end, "must be a non-negative number"));
        }
        if !self.mu.is_finite() {
            return Err(range("mu", self.mu, "must be finite"));
        }
        if self.energy_every == 0 {
            return Err(range("energy_every", self.energy_every, "must be positive"));
        }
        if self.scenario.is_polytrope() {
            let supported = match self.scenario.dim() {
                3 => [0.0, 1.0, 5.0].contains(&self.n),
                _ => self.n == 1.0,
            };
            if !supported {
                return Err(range("n", self.n, "no closed-form equilibrium for this index"));
            }
            if (self.gamma - (1.0 + 1.0 / self.n)).abs() > 1e-12 {
                return Err(range("gamma", self.gamma, "polytropes need gamma = 1 + 1/n"));
            }
            let planar = matches!(self.scenario, ScenarioId::Accuracy2d | ScenarioId::Accuracy3d);
            if planar && self.n != 1.0 {
                return Err(range("n", self.n, "the travelling wave needs n = 1"));
            }
        }
        if self.scenario == ScenarioId::Jeans && self.mu.abs() >= 1.0 {
            return Err(range("mu", self.mu, "the Jeans perturbation must stay below 1"));
        }
        Ok(())
    }

    /// Key-value text that [`Config::parse`] reads back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let basis = if self.basis == BasisKind::Tensor { "Q" } else { "P" };
        let solver = match self.solver {
            LinearSolver::Auto => "auto",
            LinearSolver::Direct => "direct",
            LinearSolver::Iterative => "iterative",
        };
        let meshes: Vec<String> = self.meshes.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "[scenario]");
        let _ = writeln!(s, "scenario = {}", self.scenario.name());
        let _ = writeln!(s, "kappa = {:?}", self.kappa);
        let _ = writeln!(s, "G = {:?}", self.gravity);
        let _ = writeln!(s, "lambda = {:?}", self.lambda);
        let _ = writeln!(s, "n = {:?}", self.n);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "rho0 = {:?}", self.rho0);
        let _ = writeln!(s, "mu = {:?}", self.mu);
        let _ = writeln!(s, "mesh = {}", self.mesh);
        let _ = writeln!(s, "meshes = {}", meshes.join(","));
        let _ = writeln!(s, "degree = {}", self.degree);
        let _ = writeln!(s, "basis = {basis}");
        let _ = writeln!(s, "scheme = {}", self.scheme.name());
        let _ = writeln!(s, "d2 = {}", self.rate_source.name());
        let _ = writeln!(s, "rk_order = {}", self.rk_order);
        let _ = writeln!(s, "oe = {}", self.damping);
        let _ = writeln!(s, "pp = {}", self.positivity);
        let _ = writeln!(s, "t_end = {:?}", self.t_end);
        let _ = writeln!(s, "cfl = {:?}", self.cfl);
        let _ = writeln!(s, "solver = {solver}");
        let _ = writeln!(s, "energy_every = {}", self.energy_every);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        s
    }

    /// Squared Jeans oscillation frequency `c0²|k|² - 4πGρ0`; negative means unstable.
    pub fn jeans_omega_squared(&self) -> f64 {
        let pi = std::f64::consts::PI;
        let c0_sq = self.gamma * self.jeans_pressure() / self.rho0;
        c0_sq * JEANS_WAVE_NORM_SQ - 4.0 * pi * self.gravity * self.rho0
    }

    /// Background pressure of the Jeans problem, `ρ0/γ` so that the sound speed is one.
    pub fn jeans_pressure(&self) -> f64 {
        self.rho0 / self.gamma
    }
}

/// `|k|²` for the Jeans wave vector `(2π, 2π)`.
pub const JEANS_WAVE_NORM_SQ: f64 = 8.0 * std::f64::consts::PI * std::f64::consts::PI;

fn type_error(key: &str, value: &str, expected: &'static str) -> ConfigError {
    ConfigError::Type { key: key.to_string(), value: value.to_string(), expected }
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| type_error(key, value, "a number"))
}

fn integer(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| type_error(key, value, "a non-negative integer"))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(type_error(key, value, "true or false")),
    }
}
