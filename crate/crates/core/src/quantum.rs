//! Wavefunction side of the field/quantum dictionary.
//!
//! `ψ = (q + ip)/√2`. Substituting the adiabatic relations into the field
//! equations for `(p, q)` gives
//!
//! ```text
//! i h ∂_t ψ = −(h²/2m) ∇²ψ + V ψ
//! ```
//!
//! which [`SchrodingerStepper`] integrates independently of the field
//! stepper, as a reference solution.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::charges::{AntisymmetricMatrix, BOUNDARY_MASS_THRESHOLD, BOUNDARY_SHELL};
use crate::dynamics::{FieldState, PhysicalConstants, Potential};
use crate::error::{Error, Result};
use crate::lattice::{ensure_same_grid, outer_shell_fraction, ComplexLattice, Grid, RealLattice};
use crate::series::{centered_differences, uniform_step};

#[derive(Debug, Clone)]
pub struct Wavefunction {
    psi: ComplexLattice,
    hbar: f64,
}

impl Wavefunction {
    pub fn new(psi: ComplexLattice, hbar: f64) -> Self {
        Self { psi, hbar }
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn psi(&self) -> &ComplexLattice {
        &self.psi
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.psi.grid()
    }

    /// `∫ |ψ|²`.
    pub fn norm(&self) -> f64 {
        self.psi.norm_sqr()
    }

    /// Copy scaled to unit norm. A zero wavefunction is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        Self {
            psi: self.psi.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)),
            hbar: self.hbar,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.psi.is_finite()
    }

    fn density(&self) -> RealLattice {
        RealLattice::from_raw(
            self.grid(),
            self.psi.values().iter().map(|v| v.norm_sqr()).collect(),
        )
    }
}

/// `ψ = (q + ip)/√2` with `hbar = 1`.
pub fn to_wavefunction(p: &RealLattice, q: &RealLattice) -> Result<Wavefunction> {
    ensure_same_grid(p.grid(), q.grid())?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let data = q
        .values()
        .iter()
        .zip(p.values())
        .map(|(a, b)| Complex64::new(a * s, b * s))
        .collect();
    Ok(Wavefunction::new(ComplexLattice::from_raw(q.grid(), data), 1.0))
}

/// Inverse of [`to_wavefunction`]: returns `(p, q)`.
pub fn from_wavefunction(w: &Wavefunction) -> (RealLattice, RealLattice) {
    let s = std::f64::consts::SQRT_2;
    let grid = w.grid();
    let p = w.psi.values().iter().map(|v| v.im * s).collect();
    let q = w.psi.values().iter().map(|v| v.re * s).collect();
    (RealLattice::from_raw(grid, p), RealLattice::from_raw(grid, q))
}

/// Whether expectation values are divided by `∫|ψ|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Raw integrals.
    #[default]
    Raw,
    /// Divide by the norm.
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumExpectation {
    pub value: Vec<f64>,
    /// Imaginary part of each raw integral; zero up to roundoff.
    pub imaginary: Vec<f64>,
}

/// `⟨p̂_j⟩ = Re ∫ ψ* (−i hbar ∂_j ψ)`.
pub fn momentum_expectation(
    w: &Wavefunction,
    hbar: f64,
    normalization: Normalization,
) -> MomentumExpectation {
    let grid = w.grid();
    let dv = grid.cell_volume();
    let scale = match normalization {
        Normalization::Raw => 1.0,
        Normalization::Normalized => 1.0 / w.norm(),
    };
    let mut value = Vec::with_capacity(grid.ndim());
    let mut imaginary = Vec::with_capacity(grid.ndim());
    for j in 0..grid.ndim() {
        let d = w.psi.spectral_derivative(j).expect("axis below ndim");
        let raw: Complex64 = w
            .psi
            .values()
            .iter()
            .zip(d.values())
            .map(|(a, b)| a.conj() * b * Complex64::new(0.0, -hbar))
            .sum::<Complex64>()
            * dv;
        value.push(raw.re * scale);
        imaginary.push(raw.im);
    }
    MomentumExpectation { value, imaginary }
}

/// `⟨L̂_lk⟩ = Re ∫ ψ* hbar (−i x_l ∂_k + i x_k ∂_l) ψ`, raw, about the grid
/// centre.
pub fn angular_momentum_expectation(w: &Wavefunction, hbar: f64) -> Result<AntisymmetricMatrix> {
    let grid = w.grid();
    let n = grid.ndim();
    if n < 2 {
        return Err(Error::DimensionTooLow {
            required: 2,
            actual: n,
        });
    }
    let frac = outer_shell_fraction(&w.density(), BOUNDARY_SHELL);
    if frac > BOUNDARY_MASS_THRESHOLD {
        log::warn!("{frac:.3e} of |psi|^2 lies near the box boundary; <L> is unreliable");
    }
    let derivs: Vec<ComplexLattice> = (0..n)
        .map(|j| w.psi.spectral_derivative(j).expect("axis below ndim"))
        .collect();
    let mut out = AntisymmetricMatrix::zeros(n);
    for l in 0..n {
        for k in l + 1..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (site, psi) in w.psi.values().iter().enumerate() {
                let x = grid.position(site);
                let op = derivs[l].values()[site] * x[k] - derivs[k].values()[site] * x[l];
                acc += psi.conj() * Complex64::new(-op.im, op.re);
            }
            out.set(l, k, acc.re * hbar * grid.cell_volume());
        }
    }
    Ok(out)
}

/// `∫ |ψ|² (−∂_j V)`.
pub fn force_expectation(w: &Wavefunction, pot: &Potential) -> Result<Vec<f64>> {
    ensure_same_grid(w.grid(), pot.grid())?;
    let dv = w.grid().cell_volume();
    Ok(pot
        .gradient()
        .iter()
        .map(|g| {
            -w.psi
                .values()
                .iter()
                .zip(g.values())
                .map(|(a, b)| a.norm_sqr() * b)
                .sum::<f64>()
                * dv
        })
        .collect())
}

/// `∫ V|ψ|² + (ħ²/2m) Σ_j ∫ |∂_jψ|²` with `ħ` the wavefunction's hbar.
pub fn energy_expectation(w: &Wavefunction, pot: &Potential, mass: f64) -> Result<f64> {
    ensure_same_grid(w.grid(), pot.grid())?;
    let dv = w.grid().cell_volume();
    let potential: f64 = w
        .psi
        .values()
        .iter()
        .zip(pot.values().values())
        .map(|(a, v)| a.norm_sqr() * v)
        .sum::<f64>()
        * dv;
    let mut kinetic = 0.0;
    for j in 0..w.grid().ndim() {
        kinetic += w.psi.spectral_derivative(j)?.norm_sqr();
    }
    Ok(potential + w.hbar * w.hbar / (2.0 * mass) * kinetic)
}

/// Split-step Fourier solver for `i h ∂_t ψ = −(h²/2m)∇²ψ + Vψ`.
#[derive(Debug, Clone)]
pub struct SchrodingerStepper {
    grid: Arc<Grid>,
    dt: f64,
    half_phase: Option<Vec<Complex64>>,
    full_phase: Option<Vec<Complex64>>,
    kinetic: Vec<Complex64>,
}

impl SchrodingerStepper {
    pub fn new(pot: &Potential, k: &PhysicalConstants, dt: f64) -> Result<Self> {
        k.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTimeStep(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        let grid = pot.grid().clone();
        let phase = |tau: f64| -> Option<Vec<Complex64>> {
            (!pot.is_zero()).then(|| {
                pot.values()
                    .values()
                    .iter()
                    .map(|v| Complex64::from_polar(1.0, -v * tau / k.h))
                    .collect()
            })
        };
        let kinetic = (0..grid.len())
            .map(|site| {
                let k2: f64 = (0..grid.ndim())
                    .map(|a| grid.fft_wavenumbers(a)[grid.axis_index(site, a)].powi(2))
                    .sum();
                Complex64::from_polar(1.0, -k.h * k2 * dt / (2.0 * k.m))
            })
            .collect();
        Ok(Self {
            half_phase: phase(0.5 * dt),
            full_phase: phase(dt),
            grid,
            dt,
            kinetic,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Apply `steps` Strang steps in place, merging adjacent half phases.
    pub fn advance(&self, psi: &mut [Complex64], steps: usize) {
        if steps == 0 {
            return;
        }
        let mul = |psi: &mut [Complex64], ph: &[Complex64]| {
            for (a, b) in psi.iter_mut().zip(ph) {
                *a *= b;
            }
        };
        if let Some(h) = &self.half_phase {
            mul(psi, h);
        }
        for s in 0..steps {
            self.grid.fft(psi);
            mul(psi, &self.kinetic);
            self.grid.ifft(psi);
            match (&self.full_phase, s + 1 == steps) {
                (Some(f), false) => mul(psi, f),
                (Some(_), true) => mul(psi, self.half_phase.as_deref().expect("set with full")),
                (None, _) => {}
            }
        }
    }

    pub fn evolve(&self, w: &Wavefunction, steps: usize) -> Result<Wavefunction> {
        ensure_same_grid(w.grid(), &self.grid)?;
        let mut data = w.psi.values().to_vec();
        self.advance(&mut data, steps);
        Ok(Wavefunction::new(
            ComplexLattice::from_raw(&self.grid, data),
            w.hbar,
        ))
    }

    pub fn step(&self, w: &Wavefunction) -> Result<Wavefunction> {
        self.evolve(w, 1)
    }
}

/// One split step; see [`SchrodingerStepper`] for repeated use.
pub fn schrodinger_step(
    w: &Wavefunction,
    pot: &Potential,
    k: &PhysicalConstants,
    dt: f64,
) -> Result<Wavefunction> {
    ensure_same_grid(w.grid(), pot.grid())?;
    SchrodingerStepper::new(pot, k, dt)?.step(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaScanEntry {
    pub beta: f64,
    pub max_abs_residual: f64,
}

/// Both sides of `d⟨p̂_j⟩/dt = ⟨−∂_jV⟩` along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EhrenfestReport {
    /// Interior sample times at which both sides are evaluated.
    pub times: Vec<f64>,
    pub lhs: Vec<Vec<f64>>,
    pub rhs: Vec<Vec<f64>>,
    pub max_abs_residual: f64,
    /// `log2` of the residual ratio between every-other-sample and
    /// every-sample differencing; `None` with fewer than five samples.
    pub order_estimate: Option<f64>,
    /// Residual with `hbar` replaced by each trial `β`.
    pub beta_scan: Vec<BetaScanEntry>,
}

/// Ehrenfest check on equally spaced wavefunction samples, with `hbar = h`
/// on the momentum side.
pub fn ehrenfest_check(
    times: &[f64],
    states: &[Wavefunction],
    pot: &Potential,
    k: &PhysicalConstants,
) -> Result<EhrenfestReport> {
    if times.len() != states.len() {
        return Err(Error::SampleCount {
            expected: times.len(),
            actual: states.len(),
        });
    }
    let step = uniform_step(times)?;
    let momenta: Vec<Vec<f64>> = states
        .iter()
        .map(|w| momentum_expectation(w, k.h, Normalization::Raw).value)
        .collect();
    let forces = states
        .iter()
        .map(|w| force_expectation(w, pot))
        .collect::<Result<Vec<_>>>()?;

    let lhs = centered_differences(&momenta, step);
    let rhs: Vec<Vec<f64>> = forces[1..forces.len() - 1].to_vec();
    let max_abs_residual = max_residual(&lhs, &rhs, 1.0);

    let order_estimate = (times.len() >= 5).then(|| {
        let coarse_m: Vec<Vec<f64>> = momenta.iter().step_by(2).cloned().collect();
        let coarse_f: Vec<Vec<f64>> = forces.iter().step_by(2).cloned().collect();
        let coarse_l = centered_differences(&coarse_m, 2.0 * step);
        let coarse = max_residual(&coarse_l, &coarse_f[1..coarse_f.len() - 1], 1.0);
        (coarse / max_abs_residual).log2()
    });

    let beta_scan = [0.5, 1.0, 2.0]
        .iter()
        .map(|f| BetaScanEntry {
            beta: f * k.h,
            max_abs_residual: max_residual(&lhs, &rhs, *f),
        })
        .collect();

    Ok(EhrenfestReport {
        times: times[1..times.len() - 1].to_vec(),
        lhs,
        rhs,
        max_abs_residual,
        order_estimate,
        beta_scan,
    })
}

/// [`ehrenfest_check`] on a field trajectory, through `ψ = (q + ip)/√2`.
pub fn ehrenfest_check_fields(
    history: &[FieldState],
    pot: &Potential,
    k: &PhysicalConstants,
) -> Result<EhrenfestReport> {
    let times: Vec<f64> = history.iter().map(|s| s.time).collect();
    let states = history
        .iter()
        .map(|s| to_wavefunction(&s.p, &s.q))
        .collect::<Result<Vec<_>>>()?;
    ehrenfest_check(&times, &states, pot, k)
}

fn max_residual(lhs: &[Vec<f64>], rhs: &[Vec<f64>], lhs_scale: f64) -> f64 {
    lhs.iter()
        .zip(rhs)
        .flat_map(|(a, b)| a.iter().zip(b).map(move |(x, y)| (lhs_scale * x - y).abs()))
        .fold(0.0, f64::max)
}
