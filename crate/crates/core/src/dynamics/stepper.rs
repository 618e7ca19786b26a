//! Strang-split time stepping with exact sub-flows.
//!
//! The pairs are packed into complex fields `Ψ = q + ip`, `Φ_j = Q_j + iP_j`
//! and `Ξ_j = η_j + iπ_j`. In these variables the field equations contain no
//! complex conjugates:
//!
//! ```text
//! ∂_t Ψ   = −i(V/h) Ψ − (c/2) Σ_j ∂_j(Φ_j + Ξ_j)
//! ∂_t Φ_j =  iω_P Φ_j − (c/2) ∂_j Ψ
//! ∂_t Ξ_j =  iω_P Ξ_j − (c/2) ∂_j Ψ
//! ```
//!
//! The potential term is a site-wise phase `exp(−iV dt/h)` on `Ψ` alone,
//! which is exactly the rotation of `(q, p)` by `V dt/h`. The rest is
//! diagonal in Fourier space: each wave vector carries a `(1+2n)`-component
//! linear system whose generator is skew-Hermitian. Its exponential is
//! computed once per mode and reused for every step.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{FieldState, PhysicalConstants, Potential};
use crate::error::{Error, Result};
use crate::lattice::{ensure_same_grid, Grid, RealLattice};

/// Largest `|dt|·ω_P` accepted under [`DtPolicy::Enforce`].
pub const MAX_DT_OMEGA: f64 = 0.5;

const PARALLEL_MODES: usize = 4096;

/// What to do when `|dt|·ω_P` exceeds [`MAX_DT_OMEGA`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DtPolicy {
    #[default]
    Enforce,
    Warn,
}

/// Per-mode generator `A(k)` of the potential-free flow, acting on
/// `(Ψ̂, Φ̂_1..Φ̂_n, Ξ̂_1..Ξ̂_n)`.
pub fn mode_generator(k: &[f64], constants: &PhysicalConstants) -> DMatrix<Complex64> {
    let n = k.len();
    let dim = 1 + 2 * n;
    let w = constants.planck_frequency();
    let half_c = 0.5 * constants.c;
    let mut a = DMatrix::<Complex64>::zeros(dim, dim);
    for j in 0..n {
        let coupling = Complex64::new(0.0, -half_c * k[j]);
        for col in [1 + j, 1 + n + j] {
            a[(0, col)] = coupling;
            a[(col, 0)] = coupling;
            a[(col, col)] = Complex64::new(0.0, w);
        }
    }
    a
}

/// Fields in the packed complex representation, all in Fourier space.
///
/// Storage is interleaved: component `c` of mode `m` sits at
/// `m * (1 + 2n) + c`, with component 0 being `Ψ̂`.
#[derive(Debug, Clone)]
pub struct SpectralState {
    grid: Arc<Grid>,
    data: Vec<Complex64>,
    pub time: f64,
}

impl SpectralState {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn dim(&self) -> usize {
        1 + 2 * self.grid.ndim()
    }

    /// Amplitude of component `component` in FFT mode `mode`.
    pub fn amplitude(&self, mode: usize, component: usize) -> Complex64 {
        self.data[mode * self.dim() + component]
    }

    /// Unnormalised spectrum of `Ψ = q + ip`.
    pub fn psi_spectrum(&self) -> Vec<Complex64> {
        self.data.iter().step_by(self.dim()).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Cached propagators for one `(grid, potential, constants, dt)`.
pub struct Stepper {
    grid: Arc<Grid>,
    constants: PhysicalConstants,
    dt: f64,
    dim: usize,
    propagators: Vec<Complex64>,
    half_phase: Option<Vec<Complex64>>,
    full_phase: Option<Vec<Complex64>>,
}

impl Stepper {
    /// Precompute every per-mode exponential. `dt` may be negative (backward
    /// stepping) but not zero.
    pub fn new(
        pot: &Potential,
        constants: &PhysicalConstants,
        dt: f64,
        policy: DtPolicy,
    ) -> Result<Self> {
        constants.validate()?;
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidTimeStep(format!(
                "dt must be finite and non-zero, got {dt}"
            )));
        }
        let stiffness = dt.abs() * constants.planck_frequency();
        if stiffness > MAX_DT_OMEGA {
            let msg = format!(
                "|dt|·ω_P = {stiffness:.4} exceeds the bound {MAX_DT_OMEGA} (dt = {dt}, ω_P = {})",
                constants.planck_frequency()
            );
            match policy {
                DtPolicy::Enforce => return Err(Error::InvalidTimeStep(msg)),
                DtPolicy::Warn => log::warn!("{msg}"),
            }
        }

        let grid = Arc::clone(pot.grid());
        let n = grid.ndim();
        let dim = 1 + 2 * n;
        let mut propagators = Vec::with_capacity(grid.len() * dim * dim);
        let mut k = vec![0.0; n];
        for mode in 0..grid.len() {
            for (a, ka) in k.iter_mut().enumerate() {
                *ka = grid.derivative_wavenumbers(a)[grid.axis_index(mode, a)];
            }
            let e = (mode_generator(&k, constants) * Complex64::new(dt, 0.0)).exp();
            for r in 0..dim {
                for c in 0..dim {
                    propagators.push(e[(r, c)]);
                }
            }
        }

        let (half_phase, full_phase) = if pot.is_zero() {
            (None, None)
        } else {
            let phase = |scale: f64| -> Vec<Complex64> {
                pot.values()
                    .values()
                    .iter()
                    .map(|v| Complex64::from_polar(1.0, -v * scale * dt / constants.h))
                    .collect()
            };
            (Some(phase(0.5)), Some(phase(1.0)))
        };

        Ok(Self {
            grid,
            constants: *constants,
            dt,
            dim,
            propagators,
            half_phase,
            full_phase,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Propagator of one mode as a `(1+2n)²` row-major block.
    pub fn mode_propagator(&self, mode: usize) -> &[Complex64] {
        let d2 = self.dim * self.dim;
        &self.propagators[mode * d2..(mode + 1) * d2]
    }

    /// Pack and transform a real-space state.
    pub fn to_spectral(&self, s: &FieldState) -> Result<SpectralState> {
        ensure_same_grid(&self.grid, s.grid())?;
        let n = self.grid.ndim();
        let len = self.grid.len();
        let mut data = vec![Complex64::new(0.0, 0.0); len * self.dim];
        let mut pack = |component: usize, re: &RealLattice, im: &RealLattice| {
            let mut buf: Vec<Complex64> = re
                .values()
                .iter()
                .zip(im.values())
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect();
            self.grid.fft(&mut buf);
            for (m, v) in buf.into_iter().enumerate() {
                data[m * self.dim + component] = v;
            }
        };
        pack(0, &s.q, &s.p);
        for j in 0..n {
            pack(1 + j, &s.aux_q[j], &s.aux_p[j]);
            pack(1 + n + j, &s.eta[j], &s.pi[j]);
        }
        Ok(SpectralState {
            grid: Arc::clone(&self.grid),
            data,
            time: s.time,
        })
    }

    /// Transform back and unpack into real fields.
    pub fn to_fields(&self, st: &SpectralState) -> FieldState {
        let n = self.grid.ndim();
        let unpack = |component: usize| -> (RealLattice, RealLattice) {
            let mut buf = self.component(st, component);
            self.grid.ifft(&mut buf);
            let re = buf.iter().map(|v| v.re).collect();
            let im = buf.iter().map(|v| v.im).collect();
            (
                RealLattice::from_raw(&self.grid, re),
                RealLattice::from_raw(&self.grid, im),
            )
        };
        let (q, p) = unpack(0);
        let mut s = FieldState {
            p,
            q,
            aux_p: Vec::with_capacity(n),
            aux_q: Vec::with_capacity(n),
            pi: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
            time: st.time,
        };
        for j in 0..n {
            let (qq, pp) = unpack(1 + j);
            s.aux_q.push(qq);
            s.aux_p.push(pp);
        }
        for j in 0..n {
            let (e, pi) = unpack(1 + n + j);
            s.eta.push(e);
            s.pi.push(pi);
        }
        s
    }

    fn component(&self, st: &SpectralState, component: usize) -> Vec<Complex64> {
        st.data
            .iter()
            .skip(component)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    fn apply_propagators(&self, data: &mut [Complex64]) {
        let dim = self.dim;
        let d2 = dim * dim;
        let kernel = |(v, e): (&mut [Complex64], &[Complex64])| {
            let mut out = [Complex64::new(0.0, 0.0); 7];
            for (r, o) in out.iter_mut().enumerate().take(dim) {
                let row = &e[r * dim..(r + 1) * dim];
                *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            }
            v.copy_from_slice(&out[..dim]);
        };
        if self.grid.len() >= PARALLEL_MODES && rayon::current_num_threads() > 1 {
            data.par_chunks_mut(dim)
                .zip(self.propagators.par_chunks(d2))
                .for_each(kernel);
        } else {
            data.chunks_mut(dim)
                .zip(self.propagators.chunks(d2))
                .for_each(kernel);
        }
    }

    fn apply_phase(&self, data: &mut [Complex64], phase: &[Complex64]) {
        let mut psi: Vec<Complex64> = data.iter().step_by(self.dim).copied().collect();
        self.grid.ifft(&mut psi);
        for (v, ph) in psi.iter_mut().zip(phase) {
            *v *= ph;
        }
        self.grid.fft(&mut psi);
        for (slot, v) in data.iter_mut().step_by(self.dim).zip(psi) {
            *slot = v;
        }
    }

    /// Advance a spectral state by `steps` Strang steps. Interior half-step
    /// phases are merged, which is algebraically identical to repeating
    /// [`Stepper::step`].
    pub fn advance(&self, st: &mut SpectralState, steps: usize) {
        if steps == 0 {
            return;
        }
        match (&self.half_phase, &self.full_phase) {
            (Some(half), Some(full)) => {
                self.apply_phase(&mut st.data, half);
                self.apply_propagators(&mut st.data);
                for _ in 1..steps {
                    self.apply_phase(&mut st.data, full);
                    self.apply_propagators(&mut st.data);
                }
                self.apply_phase(&mut st.data, half);
            }
            _ => {
                for _ in 0..steps {
                    self.apply_propagators(&mut st.data);
                }
            }
        }
        st.time += steps as f64 * self.dt;
    }

    /// One Strang step: half potential rotation, exact mode flow, half rotation.
    pub fn step(&self, s: &FieldState) -> Result<FieldState> {
        self.evolve(s, 1)
    }

    pub fn evolve(&self, s: &FieldState, steps: usize) -> Result<FieldState> {
        let mut st = self.to_spectral(s)?;
        self.advance(&mut st, steps);
        Ok(self.to_fields(&st))
    }
}

/// One step of the full field dynamics with the default `dt` policy.
pub fn step_full(
    s: &FieldState,
    pot: &Potential,
    constants: &PhysicalConstants,
    dt: f64,
) -> Result<FieldState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(format!("dt must be positive, got {dt}")));
    }
    ensure_same_grid(s.grid(), pot.grid())?;
    Stepper::new(pot, constants, dt, DtPolicy::Enforce)?.step(s)
}
