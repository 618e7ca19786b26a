//! Field state, Hamiltonian density and Hamilton's field equations.
//!
//! The theory has `1 + 2n` canonical pairs on an `n`-dimensional lattice:
//! the primary pair `(p, q)` and two auxiliary pairs per axis, `(P_j, Q_j)`
//! and `(π_j, η_j)`. The Hamiltonian density is
//!
//! ```text
//! H = (V/2h)(p² + q²) − (mc²/2h) Σ_j (P_j² + Q_j² + π_j² + η_j²)
//!     − (c/2) p Σ_j ∂_j(Q_j + η_j) − (c/2) Σ_j (P_j + π_j) ∂_j q
//! ```
//!
//! with coordinates `{q, Q_j, η_j}` and momenta `{p, P_j, π_j}`. Varying it
//! gives the equations implemented in [`equations_of_motion`].
//!
//! When the fields vary slowly compared to `ω_P = mc²/h`, the auxiliary
//! pairs are slaved to gradients of `(p, q)`:
//! `Q_j = η_j = κ ∂_j p` and `P_j = π_j = −κ ∂_j q` with `κ = h/2mc`.
//! Substituting these into the `(p, q)` equations gives, for
//! `ψ = (q + ip)/√2`, the Schrödinger equation
//! `ih ∂_t ψ = −(h²/2m) ∇²ψ + V ψ`.

pub mod checkpoint;
pub mod dispersion;
pub mod stepper;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    ensure_same_grid, integrate, spectral_derivative, spectral_gradient, Grid, RealLattice,
};

pub use stepper::{step_full, DtPolicy, SpectralState, Stepper, MAX_DT_OMEGA};

/// Planck constant, mass and speed constant of the field theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub h: f64,
    pub m: f64,
    pub c: f64,
}

impl PhysicalConstants {
    pub fn new(h: f64, m: f64, c: f64) -> Result<Self> {
        let k = Self { h, m, c };
        k.validate()?;
        Ok(k)
    }

    /// `h = m = 1`, leaving `c` as the single stiffness parameter.
    pub fn natural(c: f64) -> Result<Self> {
        Self::new(1.0, 1.0, c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h", self.h), ("m", self.m), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConstants(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Fast oscillation scale of the auxiliary pairs, `mc²/h`.
    pub fn planck_frequency(&self) -> f64 {
        self.m * self.c * self.c / self.h
    }

    /// Gradient coupling of the adiabatic relations, `h/2mc`.
    pub fn kappa(&self) -> f64 {
        self.h / (2.0 * self.m * self.c)
    }
}

/// All `2(1+2n)` real fields at one instant.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub p: RealLattice,
    pub q: RealLattice,
    pub aux_p: Vec<RealLattice>,
    pub aux_q: Vec<RealLattice>,
    pub pi: Vec<RealLattice>,
    pub eta: Vec<RealLattice>,
    pub time: f64,
}

/// Time derivative of every field of a [`FieldState`].
#[derive(Debug, Clone)]
pub struct FieldDerivative {
    pub p: RealLattice,
    pub q: RealLattice,
    pub aux_p: Vec<RealLattice>,
    pub aux_q: Vec<RealLattice>,
    pub pi: Vec<RealLattice>,
    pub eta: Vec<RealLattice>,
}

/// Field names in canonical storage order.
pub fn field_names(ndim: usize) -> Vec<String> {
    let mut names = vec!["p".to_string(), "q".to_string()];
    for prefix in ["P", "Q", "pi", "eta"] {
        names.extend((1..=ndim).map(|j| format!("{prefix}_{j}")));
    }
    names
}

impl FieldState {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let z = RealLattice::zeros(grid);
        let n = grid.ndim();
        Self {
            p: z.clone(),
            q: z.clone(),
            aux_p: vec![z.clone(); n],
            aux_q: vec![z.clone(); n],
            pi: vec![z.clone(); n],
            eta: vec![z; n],
            time: 0.0,
        }
    }

    /// Assemble a state from lattices in canonical order (see [`field_names`]).
    pub fn from_fields(fields: Vec<RealLattice>, time: f64) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Format("no fields supplied".into()))?;
        let grid = Arc::clone(first.grid());
        let n = grid.ndim();
        if fields.len() != 2 * (1 + 2 * n) {
            return Err(Error::Format(format!(
                "expected {} fields for a {n}-dimensional grid, got {}",
                2 * (1 + 2 * n),
                fields.len()
            )));
        }
        for f in &fields {
            ensure_same_grid(&grid, f.grid())?;
        }
        let mut it = fields.into_iter();
        let p = it.next().unwrap();
        let q = it.next().unwrap();
        let aux_p = it.by_ref().take(n).collect();
        let aux_q = it.by_ref().take(n).collect();
        let pi = it.by_ref().take(n).collect();
        let eta = it.collect();
        Ok(Self {
            p,
            q,
            aux_p,
            aux_q,
            pi,
            eta,
            time,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.q.grid()
    }

    pub fn ndim(&self) -> usize {
        self.grid().ndim()
    }

    /// Borrow every field in canonical order.
    pub fn fields(&self) -> Vec<&RealLattice> {
        let mut out = vec![&self.p, &self.q];
        out.extend(&self.aux_p);
        out.extend(&self.aux_q);
        out.extend(&self.pi);
        out.extend(&self.eta);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|f| f.is_finite())
    }

    fn check_shape(&self) -> Result<()> {
        let grid = self.grid();
        let n = grid.ndim();
        if [&self.aux_p, &self.aux_q, &self.pi, &self.eta]
            .iter()
            .any(|v| v.len() != n)
        {
            return Err(Error::GridMismatch);
        }
        for f in self.fields() {
            ensure_same_grid(grid, f.grid())?;
        }
        Ok(())
    }
}

impl FieldDerivative {
    pub fn fields(&self) -> Vec<&RealLattice> {
        let mut out = vec![&self.p, &self.q];
        out.extend(&self.aux_p);
        out.extend(&self.aux_q);
        out.extend(&self.pi);
        out.extend(&self.eta);
        out
    }
}

/// External potential samples and their gradient.
#[derive(Debug, Clone)]
pub struct Potential {
    values: RealLattice,
    gradient: Vec<RealLattice>,
    zero: bool,
    descriptor: serde_json::Value,
}

impl Potential {
    pub fn zero(grid: &Arc<Grid>) -> Self {
        let z = RealLattice::zeros(grid);
        Self {
            gradient: vec![z.clone(); grid.ndim()],
            values: z,
            zero: true,
            descriptor: serde_json::json!({ "type": "zero" }),
        }
    }

    /// Tabulated potential; the gradient is taken spectrally.
    pub fn from_samples(values: RealLattice) -> Self {
        let gradient = spectral_gradient(&values);
        let zero = values.values().iter().all(|&v| v == 0.0);
        Self {
            values,
            gradient,
            zero,
            descriptor: serde_json::json!({ "type": "tabulated" }),
        }
    }

    /// Potential with an analytically known gradient.
    pub fn analytic(
        grid: &Arc<Grid>,
        value: impl Fn(&[f64]) -> f64,
        gradient: impl Fn(&[f64], usize) -> f64,
    ) -> Self {
        let values = RealLattice::from_fn(grid, value);
        let gradient = (0..grid.ndim())
            .map(|j| RealLattice::from_fn(grid, |x| gradient(x, j)))
            .collect();
        let zero = values.values().iter().all(|&v| v == 0.0);
        Self {
            values,
            gradient,
            zero,
            descriptor: serde_json::Value::Null,
        }
    }

    /// `V = ½ m ω² |x|²` about the grid centre.
    pub fn harmonic(grid: &Arc<Grid>, mass: f64, omega: f64) -> Self {
        let s = mass * omega * omega;
        Self::analytic(
            grid,
            |x| 0.5 * s * x.iter().map(|v| v * v).sum::<f64>(),
            |x, j| s * x[j],
        )
        .with_descriptor(serde_json::json!({ "type": "harmonic", "omega": omega }))
    }

    /// `V = g·x`.
    pub fn linear(grid: &Arc<Grid>, g: &[f64]) -> Self {
        let descriptor = serde_json::json!({ "type": "linear", "g": g });
        let g = g.to_vec();
        let gg = g.clone();
        Self::analytic(
            grid,
            move |x| x.iter().zip(&g).map(|(a, b)| a * b).sum(),
            move |_, j| gg[j],
        )
        .with_descriptor(descriptor)
    }

    /// `V = −depth · exp(−|x|²/2w²)`.
    pub fn gaussian_well(grid: &Arc<Grid>, depth: f64, width: f64) -> Self {
        let w2 = width * width;
        let v = move |x: &[f64]| -depth * (-x.iter().map(|a| a * a).sum::<f64>() / (2.0 * w2)).exp();
        Self::analytic(grid, v, move |x, j| -v(x) * x[j] / w2).with_descriptor(
            serde_json::json!({ "type": "gaussian_well", "depth": depth, "width": width }),
        )
    }

    pub fn with_descriptor(mut self, descriptor: serde_json::Value) -> Self {
        self.descriptor = descriptor;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.values.grid()
    }

    pub fn values(&self) -> &RealLattice {
        &self.values
    }

    pub fn gradient(&self) -> &[RealLattice] {
        &self.gradient
    }

    /// True when every sample is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Where this potential came from; stored in checkpoints.
    pub fn descriptor(&self) -> &serde_json::Value {
        &self.descriptor
    }
}

fn check_inputs(s: &FieldState, pot: &Potential) -> Result<()> {
    s.check_shape()?;
    ensure_same_grid(s.grid(), pot.grid())
}

/// Pointwise Hamiltonian density.
pub fn hamiltonian_density(
    s: &FieldState,
    pot: &Potential,
    k: &PhysicalConstants,
) -> Result<RealLattice> {
    check_inputs(s, pot)?;
    let grid = s.grid();
    let n = grid.ndim();
    let h = k.h;
    let mass_term = k.m * k.c * k.c / (2.0 * h);
    let half_c = 0.5 * k.c;

    let grad_q = spectral_gradient(&s.q);
    let mut div_aux = vec![0.0; grid.len()];
    for j in 0..n {
        let d = spectral_derivative(&(&s.aux_q[j] + &s.eta[j]), j)?;
        for (acc, v) in div_aux.iter_mut().zip(d.values()) {
            *acc += v;
        }
    }

    let v = pot.values().values();
    let p = s.p.values();
    let q = s.q.values();
    let out = (0..grid.len())
        .map(|i| {
            let mut aux_sq = 0.0;
            let mut flux = 0.0;
            for j in 0..n {
                let (pj, qj) = (s.aux_p[j].values()[i], s.aux_q[j].values()[i]);
                let (pij, etaj) = (s.pi[j].values()[i], s.eta[j].values()[i]);
                aux_sq += pj * pj + qj * qj + pij * pij + etaj * etaj;
                flux += (pj + pij) * grad_q[j].values()[i];
            }
            v[i] / (2.0 * h) * (p[i] * p[i] + q[i] * q[i])
                - mass_term * aux_sq
                - half_c * p[i] * div_aux[i]
                - half_c * flux
        })
        .collect();
    Ok(RealLattice::from_raw(grid, out))
}

/// Integrated Hamiltonian density.
pub fn total_energy(s: &FieldState, pot: &Potential, k: &PhysicalConstants) -> Result<f64> {
    Ok(integrate(&hamiltonian_density(s, pot, k)?))
}

/// Hamilton's field equations for the density above.
///
/// ```text
/// ∂_t q   =  (V/h) p − (c/2) Σ_j ∂_j(Q_j + η_j)
/// ∂_t p   = −(V/h) q − (c/2) Σ_j ∂_j(P_j + π_j)
/// ∂_t Q_j = −ω_P P_j − (c/2) ∂_j q        ∂_t η_j = −ω_P π_j − (c/2) ∂_j q
/// ∂_t P_j =  ω_P Q_j − (c/2) ∂_j p        ∂_t π_j =  ω_P η_j − (c/2) ∂_j p
/// ```
pub fn equations_of_motion(
    s: &FieldState,
    pot: &Potential,
    k: &PhysicalConstants,
) -> Result<FieldDerivative> {
    check_inputs(s, pot)?;
    let grid = s.grid();
    let n = grid.ndim();
    let w = k.planck_frequency();
    let half_c = 0.5 * k.c;
    let inv_h = 1.0 / k.h;

    let grad_q = spectral_gradient(&s.q);
    let grad_p = spectral_gradient(&s.p);
    let mut div_coord = RealLattice::zeros(grid);
    let mut div_mom = RealLattice::zeros(grid);
    for j in 0..n {
        div_coord = &div_coord + &spectral_derivative(&(&s.aux_q[j] + &s.eta[j]), j)?;
        div_mom = &div_mom + &spectral_derivative(&(&s.aux_p[j] + &s.pi[j]), j)?;
    }

    let vp = pot.values().zip_map(&s.p, |v, p| v * p * inv_h)?;
    let vq = pot.values().zip_map(&s.q, |v, q| v * q * inv_h)?;
    let dq = &vp - &(&div_coord * half_c);
    let dp = &(-&vq) - &(&div_mom * half_c);

    let mut aux_q = Vec::with_capacity(n);
    let mut aux_p = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    let mut pi = Vec::with_capacity(n);
    for j in 0..n {
        let dq_drive = &grad_q[j] * half_c;
        let dp_drive = &grad_p[j] * half_c;
        aux_q.push(&(&s.aux_p[j] * -w) - &dq_drive);
        aux_p.push(&(&s.aux_q[j] * w) - &dp_drive);
        eta.push(&(&s.pi[j] * -w) - &dq_drive);
        pi.push(&(&s.eta[j] * w) - &dp_drive);
    }

    Ok(FieldDerivative {
        p: dp,
        q: dq,
        aux_p,
        aux_q,
        pi,
        eta,
    })
}

/// Build the slaved state `Q = η = κ∇p`, `P = π = −κ∇q` at time zero.
pub fn init_adiabatic(p: &RealLattice, q: &RealLattice, k: &PhysicalConstants) -> Result<FieldState> {
    ensure_same_grid(p.grid(), q.grid())?;
    let kappa = k.kappa();
    let grad_p = spectral_gradient(p);
    let grad_q = spectral_gradient(q);
    let aux_q: Vec<RealLattice> = grad_p.iter().map(|g| g * kappa).collect();
    let aux_p: Vec<RealLattice> = grad_q.iter().map(|g| g * -kappa).collect();
    Ok(FieldState {
        p: p.clone(),
        q: q.clone(),
        eta: aux_q.clone(),
        pi: aux_p.clone(),
        aux_p,
        aux_q,
        time: 0.0,
    })
}

const RESIDUAL_FLOOR: f64 = 1e-300;

/// Largest relative L² deviation of the auxiliary fields from the slaved
/// relations, over every axis and all four relations.
pub fn adiabatic_residual(s: &FieldState, k: &PhysicalConstants) -> f64 {
    let kappa = k.kappa();
    let grad_p = spectral_gradient(&s.p);
    let grad_q = spectral_gradient(&s.q);
    let mut worst: f64 = 0.0;
    for j in 0..s.ndim() {
        let want_coord = &grad_p[j] * kappa;
        let want_mom = &grad_q[j] * -kappa;
        for (actual, want) in [
            (&s.aux_q[j], &want_coord),
            (&s.eta[j], &want_coord),
            (&s.aux_p[j], &want_mom),
            (&s.pi[j], &want_mom),
        ] {
            let dev = (actual - want).l2_norm();
            worst = worst.max(dev / want.l2_norm().max(RESIDUAL_FLOOR));
        }
    }
    worst
}
