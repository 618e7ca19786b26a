//! Scenario configuration: schema, parsing and validation.
//!
//! Relative paths inside a configuration resolve against the directory of
//! the configuration file.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::checkpoint::read_checkpoint;
use crate::dynamics::{init_adiabatic, FieldState, PhysicalConstants, Potential, MAX_DT_OMEGA};
use crate::error::{Error, Result, ValidationErrors};
use crate::lattice::io::{read_real, MAGIC};
use crate::lattice::{make_grid, Grid, RealLattice};

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AxisEntry {
    pub points: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisEntry>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        let axes: Vec<(usize, f64)> = self.axes.iter().map(|a| (a.points, a.length)).collect();
        make_grid(&axes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "one")]
    pub m: f64,
    pub c: f64,
}

impl ConstantsSpec {
    pub fn build(&self) -> Result<PhysicalConstants> {
        PhysicalConstants::new(self.h, self.m, self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// `½ m ω² |x|²` about the grid centre, with `m` from the constants.
    Harmonic { omega: f64 },
    /// `g·x`.
    Linear { g: Vec<f64> },
    /// `−depth·exp(−|x|²/2 width²)`.
    GaussianWell { depth: f64, width: f64 },
    /// Samples in row-major site order, either a lattice record or plain
    /// text numbers separated by whitespace or commas.
    Tabulated { file: PathBuf },
}

impl PotentialSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, PotentialSpec::Zero)
    }

    /// Rotation invariant about the grid centre.
    pub fn is_radial(&self) -> bool {
        matches!(
            self,
            PotentialSpec::Zero | PotentialSpec::Harmonic { .. } | PotentialSpec::GaussianWell { .. }
        )
    }

    /// Copy with every file path made absolute against `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        match self {
            PotentialSpec::Tabulated { file } => PotentialSpec::Tabulated {
                file: absolute(base, file),
            },
            other => other.clone(),
        }
    }

    pub fn build(
        &self,
        grid: &Arc<Grid>,
        constants: &PhysicalConstants,
        base: &Path,
    ) -> Result<Potential> {
        let n = grid.ndim();
        let pot = match self {
            PotentialSpec::Zero => Potential::zero(grid),
            PotentialSpec::Harmonic { omega } => {
                positive("omega", *omega)?;
                Potential::harmonic(grid, constants.m, *omega)
            }
            PotentialSpec::Linear { g } => {
                vector_len("g", g, n)?;
                Potential::linear(grid, g)
            }
            PotentialSpec::GaussianWell { depth, width } => {
                if !depth.is_finite() {
                    return Err(Error::InvalidGrid(format!("depth must be finite, got {depth}")));
                }
                positive("width", *width)?;
                Potential::gaussian_well(grid, *depth, *width)
            }
            PotentialSpec::Tabulated { file } => {
                let values = read_tabulated(&absolute(base, file), grid)?;
                Potential::from_samples(values)
            }
        };
        Ok(pot.with_descriptor(serde_json::to_value(self.resolved(base))?))
    }
}

fn read_tabulated(path: &Path, grid: &Arc<Grid>) -> Result<RealLattice> {
    let bytes = std::fs::read(path)?;
    let expected = grid.len();
    if bytes.starts_with(MAGIC) {
        let f = read_real(bytes.as_slice())?;
        if f.values().len() != expected || **f.grid() != **grid {
            return Err(Error::SampleCount {
                expected,
                actual: f.values().len(),
            });
        }
        return RealLattice::from_vec(grid, f.into_values());
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format("tabulated potential is neither a lattice record nor text".into()))?;
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("cannot parse {t:?} as a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(Error::SampleCount {
            expected,
            actual: values.len(),
        });
    }
    RealLattice::from_vec(grid, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// `ψ = amplitude·exp(ik·x)`; every `k_j L_j/2π` must be an integer.
    PlaneWave {
        k: Vec<f64>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Unit-norm `ψ ∝ exp(ik·(x−x₀) − |x−x₀|²/4 width²)`.
    GaussianPacket {
        center: Vec<f64>,
        width: f64,
        #[serde(default)]
        k: Option<Vec<f64>>,
    },
    /// Random band-limited `(p, q)` with Fourier modes up to `max_mode` per
    /// axis. The seed falls back to the command-line seed, then to zero.
    RandomSmooth {
        max_mode: usize,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Saved state; its grid and constants must match the configuration.
    Checkpoint { file: PathBuf },
}

impl InitialStateSpec {
    /// Build the starting state. Every variant except `checkpoint` is slaved
    /// to the adiabatic relations.
    pub fn build(
        &self,
        grid: &Arc<Grid>,
        constants: &PhysicalConstants,
        base: &Path,
        fallback_seed: Option<u64>,
    ) -> Result<FieldState> {
        let n = grid.ndim();
        let psi: Vec<Complex64> = match self {
            InitialStateSpec::PlaneWave { k, amplitude } => {
                vector_len("k", k, n)?;
                for (a, kk) in k.iter().enumerate() {
                    let m = kk * grid.length(a) / (2.0 * PI);
                    if (m - m.round()).abs() > 1e-9 * m.abs().max(1.0) {
                        return Err(Error::InvalidGrid(format!(
                            "k[{a}] = {kk} is not a multiple of 2π/L = {}",
                            2.0 * PI / grid.length(a)
                        )));
                    }
                    if m.round().abs() >= (grid.points(a) / 2) as f64 {
                        return Err(Error::InvalidGrid(format!(
                            "k[{a}] = {kk} is not below the Nyquist wavenumber"
                        )));
                    }
                }
                (0..grid.len())
                    .map(|site| {
                        let x = grid.position(site);
                        let ph: f64 = k.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                        Complex64::from_polar(*amplitude, ph)
                    })
                    .collect()
            }
            InitialStateSpec::GaussianPacket { center, width, k } => {
                vector_len("center", center, n)?;
                positive("width", *width)?;
                let zero = vec![0.0; n];
                let k = k.as_deref().unwrap_or(&zero);
                vector_len("k", k, n)?;
                let raw: Vec<Complex64> = (0..grid.len())
                    .map(|site| {
                        let x = grid.position(site);
                        let mut r2 = 0.0;
                        let mut ph = 0.0;
                        for a in 0..n {
                            let d = x[a] - center[a];
                            r2 += d * d;
                            ph += k[a] * d;
                        }
                        Complex64::from_polar((-r2 / (4.0 * width * width)).exp(), ph)
                    })
                    .collect();
                let norm: f64 = raw.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume();
                let s = 1.0 / norm.sqrt();
                raw.into_iter().map(|v| v * s).collect()
            }
            InitialStateSpec::RandomSmooth {
                max_mode,
                amplitude,
                seed,
            } => {
                for a in 0..n {
                    if *max_mode >= grid.points(a) / 2 {
                        return Err(Error::InvalidGrid(format!(
                            "max_mode {max_mode} is not below the Nyquist index {} of axis {a}",
                            grid.points(a) / 2
                        )));
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed.or(fallback_seed).unwrap_or(0));
                let (p, q) = random_smooth_pair(grid, *max_mode, *amplitude, &mut rng);
                return init_adiabatic(&p, &q, constants);
            }
            InitialStateSpec::Checkpoint { file } => {
                let f = std::fs::File::open(absolute(base, file))?;
                let ck = read_checkpoint(std::io::BufReader::new(f))?;
                if **ck.state.grid() != **grid {
                    return Err(Error::GridMismatch);
                }
                if ck.constants != *constants {
                    return Err(Error::InvalidConstants(format!(
                        "checkpoint was written with h={}, m={}, c={}",
                        ck.constants.h, ck.constants.m, ck.constants.c
                    )));
                }
                return FieldState::from_fields(
                    ck.state
                        .fields()
                        .into_iter()
                        .map(|f| RealLattice::from_vec(grid, f.values().to_vec()))
                        .collect::<Result<Vec<_>>>()?,
                    ck.state.time,
                );
            }
        };
        let s = std::f64::consts::SQRT_2;
        let q = RealLattice::from_vec(grid, psi.iter().map(|v| v.re * s).collect())?;
        let p = RealLattice::from_vec(grid, psi.iter().map(|v| v.im * s).collect())?;
        init_adiabatic(&p, &q, constants)
    }
}

/// Sum of Fourier modes with `|m_a| ≤ max_mode` on every axis, coefficients
/// uniform in `[−1, 1]` damped by `1/(1 + |m|²)`.
pub fn random_smooth_pair<R: Rng>(
    grid: &Arc<Grid>,
    max_mode: usize,
    amplitude: f64,
    rng: &mut R,
) -> (RealLattice, RealLattice) {
    let n = grid.ndim();
    let width = 2 * max_mode + 1;
    let count = width.pow(n as u32);
    let mut field = || {
        let terms: Vec<(Vec<f64>, f64, f64)> = (0..count)
            .map(|idx| {
                let mut rest = idx;
                let mut kv = Vec::with_capacity(n);
                let mut m2 = 0.0;
                for a in 0..n {
                    let m = (rest % width) as f64 - max_mode as f64;
                    rest /= width;
                    m2 += m * m;
                    kv.push(2.0 * PI * m / grid.length(a));
                }
                let damp = amplitude / (1.0 + m2);
                (kv, damp * rng.gen_range(-1.0..1.0), damp * rng.gen_range(-1.0..1.0))
            })
            .collect();
        RealLattice::from_fn(grid, |x| {
            terms
                .iter()
                .map(|(kv, a, b)| {
                    let ph: f64 = kv.iter().zip(x).map(|(k, xx)| k * xx).sum();
                    a * ph.cos() + b * ph.sin()
                })
                .sum()
        })
    };
    let p = field();
    let q = field();
    (p, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
    /// Write a checkpoint every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

impl EvolutionSpec {
    pub fn sample_count(&self) -> usize {
        self.steps / self.sample_every.max(1) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Charges,
    CompareSchrodinger,
    Ehrenfest,
    DispersionScan,
    BetaScan,
}

fn default_dispersion_samples() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DispersionSpec {
    /// Integer mode vectors; defaults to `1..=8` along the first axis,
    /// clipped below its Nyquist index.
    #[serde(default)]
    pub modes: Option<Vec<Vec<i64>>>,
    #[serde(default = "default_dispersion_samples")]
    pub samples: usize,
}

impl Default for DispersionSpec {
    fn default() -> Self {
        Self {
            modes: None,
            samples: default_dispersion_samples(),
        }
    }
}

impl DispersionSpec {
    pub fn resolved_modes(&self, grid: &Grid) -> Vec<Vec<i64>> {
        match &self.modes {
            Some(m) => m.clone(),
            None => {
                let top = 8.min(grid.points(0) as i64 / 2 - 1);
                (1..=top)
                    .map(|m| {
                        let mut v = vec![0; grid.ndim()];
                        v[0] = m;
                        v
                    })
                    .collect()
            }
        }
    }
}

/// Pass/fail thresholds reported in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative drift of energy, momentum and phase charge.
    pub charge_drift: f64,
    /// Relative drift of angular momentum.
    pub angular_momentum_drift: f64,
    /// Largest `|d⟨p⟩/dt − ⟨−∂V⟩|`.
    pub ehrenfest_residual: f64,
    /// Relative error of measured branch frequencies.
    pub dispersion_relative: f64,
    /// Smallest acceptable residual ratio between `β = h/2, 2h` and `β = h`.
    pub beta_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            charge_drift: 1e-9,
            angular_momentum_drift: 1e-8,
            ehrenfest_residual: 5e-4,
            dispersion_relative: 1e-6,
            beta_ratio: 10.0,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("charge_drift", self.charge_drift),
            ("angular_momentum_drift", self.angular_momentum_drift),
            ("ehrenfest_residual", self.ehrenfest_residual),
            ("dispersion_relative", self.dispersion_relative),
            ("beta_ratio", self.beta_ratio),
        ]
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub constants: ConstantsSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub initial_state: InitialStateSpec,
    pub evolution: EvolutionSpec,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Accept `dt·mc²/h` above the stability bound.
    #[serde(default)]
    pub allow_large_dt: bool,
    #[serde(default)]
    pub dispersion: DispersionSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    #[schemars(skip)]
    pub base_dir: PathBuf,
    /// Seed for `random_smooth` states without their own seed.
    #[serde(skip)]
    #[schemars(skip)]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        absolute(&self.base_dir, p)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn has_task(&self, t: Task) -> bool {
        self.tasks.contains(&t)
    }
}

/// Command-line settings applied on top of a configuration document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub allow_large_dt: bool,
    pub seed: Option<u64>,
}

/// JSON schema of the configuration document.
pub fn config_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ScenarioConfig)).expect("schema serialises")
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGrid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn vector_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidGrid(format!(
            "{name} has {} components, grid has {n} axes",
            v.len()
        )));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} has non-finite component {bad}")));
    }
    Ok(())
}

/// Parse and validate a document with paths relative to the working
/// directory and no overrides.
pub fn parse_config(text: &str) -> std::result::Result<ScenarioConfig, ValidationErrors> {
    parse_config_with(text, Path::new("."), &Overrides::default())
}

/// Parse and validate, reporting every problem found.
pub fn parse_config_with(
    text: &str,
    base_dir: &Path,
    overrides: &Overrides,
) -> std::result::Result<ScenarioConfig, ValidationErrors> {
    let mut errors = ValidationErrors::default();
    let doc: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            errors.push("$", format!("not valid JSON: {e}"));
            return Err(errors);
        }
    };
    let Some(obj) = doc.as_object() else {
        errors.push("$", "top level must be an object");
        return Err(errors);
    };

    const KNOWN: [&str; 10] = [
        "grid",
        "constants",
        "potential",
        "initial_state",
        "evolution",
        "tasks",
        "output_dir",
        "allow_large_dt",
        "dispersion",
        "tolerances",
    ];
    for key in obj.keys() {
        if !KNOWN.contains(&key.as_str()) {
            errors.push(key.clone(), format!("unknown field; expected one of {}", KNOWN.join(", ")));
        }
    }

    let grid: Option<GridSpec> = section(obj, "grid", &mut errors, None);
    let constants: Option<ConstantsSpec> = section(obj, "constants", &mut errors, None);
    let potential = section(obj, "potential", &mut errors, Some(PotentialSpec::default()));
    let initial_state: Option<InitialStateSpec> = section(obj, "initial_state", &mut errors, None);
    let evolution: Option<EvolutionSpec> = section(obj, "evolution", &mut errors, None);
    let tasks = section(obj, "tasks", &mut errors, Some(Vec::new()));
    let output_dir = section(obj, "output_dir", &mut errors, Some(default_output_dir()));
    let allow_large_dt = section(obj, "allow_large_dt", &mut errors, Some(false));
    let dispersion = section(obj, "dispersion", &mut errors, Some(DispersionSpec::default()));
    let tolerances = section(obj, "tolerances", &mut errors, Some(Tolerances::default()));

    let (
        Some(grid),
        Some(constants),
        Some(potential),
        Some(initial_state),
        Some(evolution),
        Some(tasks),
        Some(output_dir),
        Some(allow_large_dt),
        Some(dispersion),
        Some(tolerances),
    ) = (
        grid,
        constants,
        potential,
        initial_state,
        evolution,
        tasks,
        output_dir,
        allow_large_dt,
        dispersion,
        tolerances,
    )
    else {
        return Err(errors);
    };
    if !errors.is_empty() {
        return Err(errors);
    }

    let cfg = ScenarioConfig {
        grid,
        constants,
        potential,
        initial_state,
        evolution,
        tasks,
        output_dir: overrides.output_dir.clone().unwrap_or(output_dir),
        allow_large_dt: allow_large_dt || overrides.allow_large_dt,
        dispersion,
        tolerances,
        base_dir: base_dir.to_path_buf(),
        seed: overrides.seed,
    };
    validate(&cfg, &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Read, parse and validate a configuration file. Relative paths resolve
/// against the file's directory.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        base
    };
    parse_config_with(&text, &base, overrides).map_err(Error::Validation)
}

fn section<T: DeserializeOwned>(
    obj: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    errors: &mut ValidationErrors,
    default: Option<T>,
) -> Option<T> {
    let Some(value) = obj.get(key) else {
        if default.is_none() {
            errors.push(key, "missing required field");
        }
        return default;
    };
    match serde_path_to_error::deserialize::<_, T>(value.clone()) {
        Ok(v) => Some(v),
        Err(e) => {
            let inner = e.path().to_string();
            let path = if inner == "." || inner.is_empty() {
                key.to_string()
            } else if inner.starts_with('[') {
                format!("{key}{inner}")
            } else {
                format!("{key}.{inner}")
            };
            errors.push(path, e.into_inner().to_string());
            None
        }
    }
}

fn validate(cfg: &ScenarioConfig, errors: &mut ValidationErrors) {
    let grid = match cfg.grid.build() {
        Ok(g) => Some(g),
        Err(e) => {
            errors.push("grid.axes", strip_prefix(&e));
            None
        }
    };
    let constants = match cfg.constants.build() {
        Ok(k) => Some(k),
        Err(e) => {
            errors.push("constants", strip_prefix(&e));
            None
        }
    };

    let ev = &cfg.evolution;
    if !(ev.dt.is_finite() && ev.dt > 0.0) {
        errors.push("evolution.dt", format!("must be positive and finite, got {}", ev.dt));
    } else if let Some(k) = &constants {
        let w = k.planck_frequency();
        let product = ev.dt * w;
        if product > MAX_DT_OMEGA && !cfg.allow_large_dt {
            errors.push(
                "evolution.dt",
                format!(
                    "dt·ω_P = {product:.6} exceeds the bound {MAX_DT_OMEGA} \
                     (ω_P = mc²/h = {w}); use dt ≤ {:.6e} or set allow_large_dt",
                    MAX_DT_OMEGA / w
                ),
            );
        }
    }
    if ev.sample_every == 0 {
        errors.push("evolution.sample_every", "must be at least 1");
    } else if ev.steps % ev.sample_every != 0 {
        errors.push(
            "evolution.sample_every",
            format!("{} does not divide steps = {}", ev.sample_every, ev.steps),
        );
    }
    match ev.checkpoint_every {
        Some(0) => errors.push("evolution.checkpoint_every", "must be at least 1"),
        Some(c) if ev.steps % c != 0 => errors.push(
            "evolution.checkpoint_every",
            format!("{c} does not divide steps = {}", ev.steps),
        ),
        _ => {}
    }

    let mut seen = BTreeSet::new();
    for (i, t) in cfg.tasks.iter().enumerate() {
        if !seen.insert(*t) {
            errors.push(format!("tasks[{i}]"), "duplicate task");
        }
    }
    let needs_series = cfg.has_task(Task::Ehrenfest) || cfg.has_task(Task::BetaScan);
    if needs_series && ev.sample_every > 0 && ev.sample_count() < 3 {
        errors.push(
            "evolution",
            format!(
                "ehrenfest and beta_scan need at least 3 samples, steps/sample_every + 1 = {}",
                ev.sample_count()
            ),
        );
    }

    for (name, v) in cfg.tolerances.entries() {
        if !(v.is_finite() && v > 0.0) {
            errors.push(format!("tolerances.{name}"), format!("must be positive, got {v}"));
        }
    }

    let (Some(grid), Some(k)) = (grid, constants) else {
        return;
    };

    if cfg.has_task(Task::DispersionScan) {
        if cfg.dispersion.samples < 4 {
            errors.push("dispersion.samples", "must be at least 4");
        }
        for (i, m) in cfg.dispersion.resolved_modes(&grid).iter().enumerate() {
            let path = format!("dispersion.modes[{i}]");
            if m.len() != grid.ndim() {
                errors.push(path, format!("has {} components, grid has {} axes", m.len(), grid.ndim()));
            } else if m.iter().all(|&v| v == 0) {
                errors.push(path, "the zero mode has no slow branch");
            } else if let Some(a) = (0..grid.ndim()).find(|&a| m[a].unsigned_abs() as usize >= grid.points(a) / 2) {
                errors.push(path, format!("component {a} is not below the Nyquist index {}", grid.points(a) / 2));
            }
        }
        if cfg.dispersion.resolved_modes(&grid).is_empty() {
            errors.push("dispersion.modes", "no modes to scan");
        }
    }

    if let Err(e) = cfg.potential.build(&grid, &k, &cfg.base_dir) {
        errors.push("potential", describe(&e, &grid));
    }
    if let Err(e) = cfg.initial_state.build(&grid, &k, &cfg.base_dir, cfg.seed) {
        errors.push("initial_state", describe(&e, &grid));
    }
}

fn describe(e: &Error, grid: &Grid) -> String {
    match e {
        Error::SampleCount { expected, actual } => format!(
            "expected {expected} samples for the {} grid, found {actual}",
            grid.shape()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("×")
        ),
        Error::GridMismatch => format!("file grid differs from the declared grid {grid}"),
        other => strip_prefix(other),
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::InvalidGrid(m) | Error::InvalidConstants(m) | Error::Format(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"axes": [{"points": 32, "length": 6.283185307179586}]},
        "constants": {"c": 4.0},
        "initial_state": {"type": "plane_wave", "k": [1.0]},
        "evolution": {"dt": 0.01, "steps": 10},
        "tasks": ["charges"]
    }"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.constants.h, 1.0);
        assert_eq!(cfg.constants.m, 1.0);
        assert_eq!(cfg.potential, PotentialSpec::Zero);
        assert_eq!(cfg.evolution.sample_every, 1);
        assert_eq!(cfg.output_dir, PathBuf::from("output"));
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert_eq!(cfg.tolerances.ehrenfest_residual, 5e-4);
        assert_eq!(cfg.tasks, vec![Task::Charges]);
    }

    #[test]
    fn large_dt_names_the_bound() {
        let text = MINIMAL.replace("\"dt\": 0.01", "\"dt\": 0.1");
        let errs = parse_config(&text).unwrap_err();
        let e = errs.iter().find(|e| e.path == "evolution.dt").unwrap();
        assert!(e.message.contains("dt·ω_P"), "{}", e.message);
        assert!(e.message.contains("0.5"));
        let ok = parse_config_with(
            &text,
            Path::new("."),
            &Overrides {
                allow_large_dt: true,
                ..Default::default()
            },
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn every_error_is_reported() {
        let text = r#"{
            "grid": {"axes": [{"points": 7, "length": 1.0}]},
            "constants": {"c": 1.0, "hbar": 2.0},
            "initial_state": {"type": "plane_wave", "k": [1.0]},
            "evolution": {"dt": 0.01, "steps": 10, "sample_every": 3},
            "tasks": ["charges", "teleport"],
            "colour": "blue"
        }"#;
        let errs = parse_config(text).unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["colour", "constants.hbar", "tasks[1]"]);

        let text = r#"{
            "grid": {"axes": [{"points": 7, "length": 1.0}]},
            "constants": {"c": -1.0},
            "initial_state": {"type": "plane_wave", "k": [1.0]},
            "evolution": {"dt": 0.01, "steps": 10, "sample_every": 3}
        }"#;
        let errs = parse_config(text).unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["grid.axes", "constants", "evolution.sample_every"]);
    }

    #[test]
    fn tabulated_sample_count_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("v.txt"), "1 2 3\n4 5").unwrap();
        let text = MINIMAL.replace(
            "\"tasks\"",
            "\"potential\": {\"type\": \"tabulated\", \"file\": \"v.txt\"}, \"tasks\"",
        );
        let errs = parse_config_with(&text, dir.path(), &Overrides::default()).unwrap_err();
        let e = errs.iter().find(|e| e.path == "potential").unwrap();
        assert!(e.message.contains("expected 32 samples"), "{}", e.message);
        assert!(e.message.contains("found 5"), "{}", e.message);
    }

    #[test]
    fn plane_wave_must_fit_the_box() {
        let text = MINIMAL.replace("\"k\": [1.0]", "\"k\": [1.5]");
        let errs = parse_config(&text).unwrap_err();
        assert_eq!(errs.0[0].path, "initial_state");
    }

    #[test]
    fn schema_lists_sections() {
        let s = config_schema();
        let props = s["properties"].as_object().unwrap();
        for key in ["grid", "constants", "potential", "initial_state", "evolution", "tasks"] {
            assert!(props.contains_key(key), "{key}");
        }
        assert!(!props.contains_key("base_dir"));
    }

    #[test]
    fn gaussian_packet_is_normalised() {
        let cfg = parse_config(&MINIMAL.replace(
            r#"{"type": "plane_wave", "k": [1.0]}"#,
            r#"{"type": "gaussian_packet", "center": [0.5], "width": 0.7, "k": [2.0]}"#,
        ))
        .unwrap();
        let g = cfg.grid.build().unwrap();
        let k = cfg.constants.build().unwrap();
        let s = cfg.initial_state.build(&g, &k, Path::new("."), None).unwrap();
        let norm = 0.5
            * s.p
                .values()
                .iter()
                .zip(s.q.values())
                .map(|(a, b)| a * a + b * b)
                .sum::<f64>()
            * g.cell_volume();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
