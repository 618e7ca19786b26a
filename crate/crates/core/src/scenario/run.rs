//! Scenario execution and artifact emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ScenarioConfig, Task};
use crate::charges::{write_charge_csv, ChargeRecord};
use crate::dynamics::checkpoint::write_checkpoint;
use crate::dynamics::dispersion::{branch_frequencies, measure_branch_frequencies};
use crate::dynamics::{DtPolicy, Stepper};
use crate::error::{Error, Result};
use crate::lattice::io::fmt_f64;
use crate::quantum::{ehrenfest_check, to_wavefunction, SchrodingerStepper, Wavefunction};

/// Execution settings that do not change results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub lattice_format_version: u32,
    pub checkpoint_format_version: u32,
    pub config_sha256: String,
    pub config: ScenarioConfig,
    pub threads: usize,
    pub seed: Option<u64>,
    pub final_time: f64,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub timings_seconds: Vec<(String, f64)>,
}

/// Outcome of a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
}

#[derive(Serialize)]
struct CompareReport {
    dt: f64,
    times: Vec<f64>,
    l2_deviation: Vec<f64>,
    reference_norm: Vec<f64>,
}

#[derive(Serialize)]
struct BetaScanReport {
    h: f64,
    entries: Vec<crate::quantum::BetaScanEntry>,
    best_beta: f64,
    ratio_half: f64,
    ratio_double: f64,
}

/// Run a validated scenario, writing every artifact into its output
/// directory.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    pool.install(|| run_inner(cfg, opts))
}

fn run_inner(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary> {
    let started = Instant::now();
    let mut timings = Vec::new();
    let out = cfg.output_path();
    fs::create_dir_all(&out)?;

    let grid = cfg.grid.build()?;
    let k = cfg.constants.build()?;
    let pot = cfg.potential.build(&grid, &k, &cfg.base_dir)?;
    let start = cfg.initial_state.build(&grid, &k, &cfg.base_dir, cfg.seed)?;
    let ev = &cfg.evolution;
    let policy = if cfg.allow_large_dt {
        DtPolicy::Warn
    } else {
        DtPolicy::Enforce
    };
    timings.push(("setup".to_string(), started.elapsed().as_secs_f64()));

    let want_charges = cfg.has_task(Task::Charges);
    let want_compare = cfg.has_task(Task::CompareSchrodinger);
    let want_series = cfg.has_task(Task::Ehrenfest) || cfg.has_task(Task::BetaScan);
    let evolve = want_charges || want_compare || want_series || ev.checkpoint_every.is_some();

    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut final_time = start.time;

    if evolve {
        let t0 = Instant::now();
        let stepper = Stepper::new(&pot, &k, ev.dt, policy)?;
        let oracle = if want_compare {
            Some(SchrodingerStepper::new(&pot, &k, ev.dt)?)
        } else {
            None
        };
        let mut spectral = stepper.to_spectral(&start)?;
        let mut state = start.clone();
        let mut reference = if want_compare {
            Some(to_wavefunction(&start.p, &start.q)?.psi().values().to_vec())
        } else {
            None
        };

        let mut records = Vec::new();
        let mut compare = CompareReport {
            dt: ev.dt,
            times: Vec::new(),
            l2_deviation: Vec::new(),
            reference_norm: Vec::new(),
        };
        let mut series_t = Vec::new();
        let mut series_w: Vec<Wavefunction> = Vec::new();

        let mut step = 0usize;
        loop {
            if !state.is_finite() {
                return Err(Error::Blowup {
                    step,
                    what: "non-finite field sample".into(),
                });
            }
            if step % ev.sample_every == 0 {
                if want_charges {
                    let r = ChargeRecord::measure(&state, &pot, &k)?;
                    if !r.is_finite() {
                        return Err(Error::Blowup {
                            step,
                            what: "non-finite charge".into(),
                        });
                    }
                    records.push(r);
                }
                if let Some(psi) = &reference {
                    let w = to_wavefunction(&state.p, &state.q)?;
                    let dv = grid.cell_volume();
                    let (d2, n2) = w.psi().values().iter().zip(psi).fold((0.0, 0.0), |(d, n), (a, b)| {
                        (d + (a - b).norm_sqr(), n + b.norm_sqr())
                    });
                    if !(d2.is_finite() && n2.is_finite()) {
                        return Err(Error::Blowup {
                            step,
                            what: "non-finite reference solution".into(),
                        });
                    }
                    compare.times.push(state.time);
                    compare.l2_deviation.push((d2 * dv).sqrt());
                    compare.reference_norm.push(n2 * dv);
                }
                if want_series {
                    series_t.push(state.time);
                    series_w.push(to_wavefunction(&state.p, &state.q)?.with_hbar(k.h));
                }
            }
            if let Some(every) = ev.checkpoint_every {
                if step > 0 && step % every == 0 {
                    let name = format!("checkpoint_{step:08}.pfck");
                    let mut w = BufWriter::new(fs::File::create(out.join(&name))?);
                    write_checkpoint(&mut w, &state, &k, pot.descriptor())?;
                    w.flush()?;
                }
            }
            if step == ev.steps {
                break;
            }
            let chunk = next_stop(step, ev.sample_every, ev.checkpoint_every) - step;
            stepper.advance(&mut spectral, chunk);
            if let (Some(o), Some(psi)) = (&oracle, reference.as_mut()) {
                o.advance(psi, chunk);
            }
            step += chunk;
            // the time stamp is recomputed from the step count to avoid drift
            spectral.time = start.time + step as f64 * ev.dt;
            state = stepper.to_fields(&spectral);
        }
        final_time = state.time;
        timings.push(("evolution".to_string(), t0.elapsed().as_secs_f64()));

        if want_charges {
            let mut buf = Vec::new();
            write_charge_csv(&mut buf, grid.ndim(), &records)?;
            fs::write(out.join("charges.csv"), buf)?;
            checks.extend(charge_checks(cfg, &records));
        }
        if want_compare {
            write_json(&out.join("compare.json"), &compare)?;
        }
        if want_series {
            let t1 = Instant::now();
            let report = ehrenfest_check(&series_t, &series_w, &pot, &k)?;
            if cfg.has_task(Task::Ehrenfest) {
                write_json(&out.join("ehrenfest.json"), &report)?;
                checks.push(Check::at_most(
                    "ehrenfest.max_abs_residual",
                    report.max_abs_residual,
                    cfg.tolerances.ehrenfest_residual,
                ));
            }
            if cfg.has_task(Task::BetaScan) {
                let r = |i: usize| report.beta_scan[i].max_abs_residual;
                let best = report
                    .beta_scan
                    .iter()
                    .min_by(|a, b| a.max_abs_residual.total_cmp(&b.max_abs_residual))
                    .map(|e| e.beta)
                    .unwrap_or(k.h);
                let scan = BetaScanReport {
                    h: k.h,
                    entries: report.beta_scan.clone(),
                    best_beta: best,
                    ratio_half: r(0) / r(1),
                    ratio_double: r(2) / r(1),
                };
                write_json(&out.join("beta_scan.json"), &scan)?;
                checks.push(Check::at_least(
                    "beta_scan.min_ratio",
                    scan.ratio_half.min(scan.ratio_double),
                    cfg.tolerances.beta_ratio,
                ));
            }
            timings.push(("ehrenfest".to_string(), t1.elapsed().as_secs_f64()));
        }
    }

    if cfg.has_task(Task::DispersionScan) {
        let t2 = Instant::now();
        let mut csv = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=grid.ndim()).map(|a| format!("mode_{a}")).collect();
        header.extend(
            [
                "k",
                "measured_slow",
                "analytic_slow",
                "relative_error_slow",
                "measured_fast",
                "analytic_fast",
                "relative_error_fast",
            ]
            .map(String::from),
        );
        csv.write_record(&header)?;
        let mut worst: f64 = 0.0;
        for mode in cfg.dispersion.resolved_modes(&grid) {
            let kmag = mode
                .iter()
                .enumerate()
                .map(|(a, m)| (2.0 * std::f64::consts::PI * *m as f64 / grid.length(a)).powi(2))
                .sum::<f64>()
                .sqrt();
            let measured = measure_branch_frequencies(&grid, &mode, &k, ev.dt, cfg.dispersion.samples)?;
            let exact = branch_frequencies(kmag, &k);
            let rel_slow = ((measured.slow - exact.slow) / exact.slow).abs();
            let rel_fast = ((measured.fast - exact.fast) / exact.fast).abs();
            worst = worst.max(rel_slow);
            let mut row: Vec<String> = mode.iter().map(|m| m.to_string()).collect();
            row.extend(
                [
                    kmag,
                    measured.slow,
                    exact.slow,
                    rel_slow,
                    measured.fast,
                    exact.fast,
                    rel_fast,
                ]
                .map(fmt_f64),
            );
            csv.write_record(&row)?;
        }
        let bytes = csv.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        fs::write(out.join("dispersion.csv"), bytes)?;
        checks.push(Check::at_most(
            "dispersion.max_relative_error_slow",
            worst,
            cfg.tolerances.dispersion_relative,
        ));
        timings.push(("dispersion_scan".to_string(), t2.elapsed().as_secs_f64()));
    }

    for name in list_outputs(&out)? {
        let data = fs::read(out.join(&name))?;
        files.push(FileEntry {
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
            name,
        });
    }
    timings.push(("total".to_string(), started.elapsed().as_secs_f64()));

    let config_json = serde_json::to_vec(cfg)?;
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        lattice_format_version: crate::lattice::io::FORMAT_VERSION,
        checkpoint_format_version: crate::dynamics::checkpoint::CHECKPOINT_VERSION,
        config_sha256: hex::encode(Sha256::digest(&config_json)),
        config: cfg.clone(),
        threads: opts.threads,
        seed: cfg.seed,
        final_time,
        files,
        checks,
        timings_seconds: timings,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunSummary {
        output_dir: out,
        manifest,
    })
}

fn next_stop(step: usize, sample_every: usize, checkpoint_every: Option<usize>) -> usize {
    let mut next = (step / sample_every + 1) * sample_every;
    if let Some(c) = checkpoint_every {
        next = next.min((step / c + 1) * c);
    }
    next
}

/// Artifacts this program writes, sorted by name. Files of other origin in
/// the output directory are ignored.
fn list_outputs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        let ours = matches!(
            name.as_str(),
            "charges.csv" | "compare.json" | "ehrenfest.json" | "dispersion.csv" | "beta_scan.json"
        ) || (name.starts_with("checkpoint_") && name.ends_with(".pfck"));
        if ours {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    fs::write(path, text)?;
    Ok(())
}

/// Largest deviation from the first sample, divided by `|first|` unless
/// that is zero.
fn relative_drift(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return 0.0;
    };
    let worst = values.map(|v| (v - first).abs()).fold(0.0, f64::max);
    if first.abs() > 0.0 {
        worst / first.abs()
    } else {
        worst
    }
}

fn charge_checks(cfg: &ScenarioConfig, records: &[ChargeRecord]) -> Vec<Check> {
    let tol = &cfg.tolerances;
    let mut out = vec![Check::at_most(
        "charges.phase_charge_drift",
        relative_drift(records.iter().map(|r| r.phase_charge)),
        tol.charge_drift,
    )];
    if cfg.potential.is_zero() {
        out.push(Check::at_most(
            "charges.energy_drift",
            relative_drift(records.iter().map(|r| r.energy)),
            tol.charge_drift,
        ));
        let n = records.first().map_or(0, |r| r.momentum.len());
        for j in 0..n {
            out.push(Check::at_most(
                &format!("charges.m_{}_drift", j + 1),
                relative_drift(records.iter().map(|r| r.momentum[j])),
                tol.charge_drift,
            ));
        }
    }
    if cfg.potential.is_radial() {
        if let Some(first) = records.first().and_then(|r| r.angular_momentum.as_ref()) {
            for (i, label) in first.labels().iter().enumerate() {
                out.push(Check::at_most(
                    &format!("charges.{label}_drift"),
                    relative_drift(records.iter().map(|r| {
                        r.angular_momentum.as_ref().expect("dimension is fixed").components()[i]
                    })),
                    tol.angular_momentum_drift,
                ));
            }
        }
    }
    out
}

/// What `inspect` reports about a saved state.
#[derive(Debug, Clone)]
pub struct Inspection {
    pub grid: String,
    pub time: f64,
    pub norm: f64,
    pub constants: crate::dynamics::PhysicalConstants,
    pub potential: serde_json::Value,
    /// `None` when the potential cannot be rebuilt from its descriptor.
    pub record: Option<ChargeRecord>,
    pub momentum: Vec<f64>,
    pub phase_charge: f64,
}

/// Read a checkpoint and evaluate its charges.
pub fn inspect_checkpoint(path: &Path) -> Result<Inspection> {
    let f = fs::File::open(path)?;
    let ck = crate::dynamics::checkpoint::read_checkpoint(std::io::BufReader::new(f))?;
    let s = &ck.state;
    let record = serde_json::from_value::<super::config::PotentialSpec>(ck.potential.clone())
        .ok()
        .and_then(|spec| spec.build(s.grid(), &ck.constants, Path::new("")).ok())
        .map(|pot| ChargeRecord::measure(s, &pot, &ck.constants))
        .transpose()?;
    Ok(Inspection {
        grid: s.grid().to_string(),
        time: s.time,
        norm: crate::charges::pair_norm(s),
        constants: ck.constants,
        potential: ck.potential,
        record,
        momentum: crate::charges::momentum_charge(s),
        phase_charge: crate::charges::phase_charge(s),
    })
}

impl std::fmt::Display for Inspection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "grid: {}", self.grid)?;
        writeln!(f, "time: {}", fmt_f64(self.time))?;
        writeln!(
            f,
            "constants: h={} m={} c={}",
            fmt_f64(self.constants.h),
            fmt_f64(self.constants.m),
            fmt_f64(self.constants.c)
        )?;
        writeln!(f, "potential: {}", self.potential)?;
        writeln!(f, "norm: {}", fmt_f64(self.norm))?;
        match &self.record {
            Some(r) => writeln!(f, "energy: {}", fmt_f64(r.energy))?,
            None => writeln!(f, "energy: unavailable (potential cannot be rebuilt)")?,
        }
        for (j, m) in self.momentum.iter().enumerate() {
            writeln!(f, "m_{}: {}", j + 1, fmt_f64(*m))?;
        }
        if let Some(l) = self.record.as_ref().and_then(|r| r.angular_momentum.as_ref()) {
            for (label, v) in l.labels().iter().zip(l.components()) {
                writeln!(f, "{label}: {}", fmt_f64(*v))?;
            }
        }
        writeln!(f, "phase_charge: {}", fmt_f64(self.phase_charge))?;
        if let Some(r) = &self.record {
            writeln!(f, "adiabatic_residual: {}", fmt_f64(r.adiabatic_residual))?;
        }
        Ok(())
    }
}
