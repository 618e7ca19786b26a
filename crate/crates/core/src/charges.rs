//! Noether charges of the field theory.
//!
//! The time row of the canonical stress-energy tensor needs no Lagrangian:
//!
//! ```text
//! T⁰_j = p ∂_j q + Σ_i (P_i ∂_j Q_i + π_i ∂_j η_i)
//! ```
//!
//! Reported momenta use the opposite overall sign, `m_j = −∫ T⁰_j`, so a
//! plane wave `ψ ∝ exp(ikx)` carries momentum `+k`, in agreement with the
//! expectation of `−i∂_j`. Angular momentum uses the same sign-fixed density
//! with coordinates measured from the grid centre.

use std::io::Write;

use crate::dynamics::{adiabatic_residual, total_energy, FieldState, PhysicalConstants, Potential};
use crate::error::{Error, Result};
use crate::lattice::io::fmt_f64;
use crate::lattice::{
    ensure_same_grid, integrate, outer_shell_fraction, spectral_derivative, spectral_gradient,
    RealLattice,
};
use crate::series::{centered_differences, uniform_step};

/// Relative width of the boundary shell checked before x-weighted integrals.
pub const BOUNDARY_SHELL: f64 = 0.1;
/// Warn when more than this fraction of the norm sits in the boundary shell.
pub const BOUNDARY_MASS_THRESHOLD: f64 = 1e-8;

/// Antisymmetric `n×n` matrix stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct AntisymmetricMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl AntisymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, l: usize, k: usize) -> usize {
        debug_assert!(l < k && k < self.n);
        l * self.n - l * (l + 1) / 2 + (k - l - 1)
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        match l.cmp(&k) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[self.slot(l, k)],
            std::cmp::Ordering::Greater => -self.upper[self.slot(k, l)],
        }
    }

    /// Set component `(l, k)`; `(k, l)` follows by antisymmetry.
    pub fn set(&mut self, l: usize, k: usize, value: f64) {
        match l.cmp(&k) {
            std::cmp::Ordering::Equal => {}
            std::cmp::Ordering::Less => {
                let s = self.slot(l, k);
                self.upper[s] = value;
            }
            std::cmp::Ordering::Greater => {
                let s = self.slot(k, l);
                self.upper[s] = -value;
            }
        }
    }

    /// Upper-triangle components in the order `(1,2), (1,3), (2,3)`.
    pub fn components(&self) -> &[f64] {
        &self.upper
    }

    /// One-based labels matching [`AntisymmetricMatrix::components`].
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in 0..self.n {
            for k in l + 1..self.n {
                out.push(format!("L_{}{}", l + 1, k + 1));
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|v| v * factor).collect(),
        }
    }
}

/// `T⁰_j` exactly as written above (no sign flip), one lattice per axis.
pub fn momentum_density(s: &FieldState) -> Vec<RealLattice> {
    let n = s.ndim();
    let grad_q = spectral_gradient(&s.q);
    let grad_aux_q: Vec<Vec<RealLattice>> = s.aux_q.iter().map(spectral_gradient).collect();
    let grad_eta: Vec<Vec<RealLattice>> = s.eta.iter().map(spectral_gradient).collect();
    (0..n)
        .map(|j| {
            let mut acc: Vec<f64> = s
                .p
                .values()
                .iter()
                .zip(grad_q[j].values())
                .map(|(a, b)| a * b)
                .collect();
            for i in 0..n {
                for (site, v) in acc.iter_mut().enumerate() {
                    *v += s.aux_p[i].values()[site] * grad_aux_q[i][j].values()[site]
                        + s.pi[i].values()[site] * grad_eta[i][j].values()[site];
                }
            }
            RealLattice::from_raw(s.grid(), acc)
        })
        .collect()
}

/// Full momentum charge `m_j = −∫ T⁰_j`.
pub fn momentum_charge(s: &FieldState) -> Vec<f64> {
    momentum_density(s).iter().map(|d| -integrate(d)).collect()
}

/// Momentum carried by `(p, q)` alone, `m_j = −∫ p ∂_j q`.
pub fn momentum_charge_reduced(p: &RealLattice, q: &RealLattice) -> Result<Vec<f64>> {
    ensure_same_grid(p.grid(), q.grid())?;
    spectral_gradient(q)
        .iter()
        .map(|dq| Ok(-crate::lattice::inner_product(p, dq)?))
        .collect()
}

/// Contribution of the slaved auxiliary pairs to the momentum of an
/// adiabatic state: `−2κ² ∫ Σ_i ∂_i p ∂_j ∂_i q`.
///
/// With this sign, `momentum_charge(init_adiabatic(p, q))` equals
/// `momentum_charge_reduced(p, q) + momentum_correction_term(p, q)`.
pub fn momentum_correction_term(
    p: &RealLattice,
    q: &RealLattice,
    k: &PhysicalConstants,
) -> Result<Vec<f64>> {
    ensure_same_grid(p.grid(), q.grid())?;
    let n = p.grid().ndim();
    let kappa = k.kappa();
    let grad_p = spectral_gradient(p);
    let grad_q = spectral_gradient(q);
    let mut out = vec![0.0; n];
    for (i, dq) in grad_q.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            let djdi_q = spectral_derivative(dq, j)?;
            *o += crate::lattice::inner_product(&grad_p[i], &djdi_q)?;
        }
    }
    Ok(out.into_iter().map(|v| -2.0 * kappa * kappa * v).collect())
}

/// Angular momentum about the grid centre.
pub fn angular_momentum_charge(s: &FieldState) -> Result<AntisymmetricMatrix> {
    angular_momentum_charge_about(s, &vec![0.0; s.ndim()])
}

/// Angular momentum `L_lk = ∫ (x_l μ_k − x_k μ_l)` with `μ = −T⁰` and
/// coordinates measured from `origin`. Moving the origin to `a` changes
/// `L_lk` by `−(a_l m_k − a_k m_l)`.
pub fn angular_momentum_charge_about(
    s: &FieldState,
    origin: &[f64],
) -> Result<AntisymmetricMatrix> {
    let grid = s.grid();
    let n = grid.ndim();
    if n < 2 {
        return Err(Error::DimensionTooLow {
            required: 2,
            actual: n,
        });
    }
    if origin.len() != n {
        return Err(Error::InvalidGrid(format!(
            "origin has {} components, grid has {n} axes",
            origin.len()
        )));
    }
    warn_on_boundary_mass(&s.p, &s.q);
    let density = momentum_density(s);
    let dv = grid.cell_volume();
    let mut out = AntisymmetricMatrix::zeros(n);
    for l in 0..n {
        for k in l + 1..n {
            let mut acc = 0.0;
            for site in 0..grid.len() {
                let x = grid.position(site);
                let (xl, xk) = (x[l] - origin[l], x[k] - origin[k]);
                acc -= xl * density[k].values()[site] - xk * density[l].values()[site];
            }
            out.set(l, k, acc * dv);
        }
    }
    Ok(out)
}

fn warn_on_boundary_mass(p: &RealLattice, q: &RealLattice) {
    let density = p
        .zip_map(q, |a, b| 0.5 * (a * a + b * b))
        .expect("state fields share a grid");
    let frac = outer_shell_fraction(&density, BOUNDARY_SHELL);
    if frac > BOUNDARY_MASS_THRESHOLD {
        log::warn!(
            "{frac:.3e} of the norm lies in the outer {:.0}% of the box; \
             angular momentum is unreliable",
            BOUNDARY_SHELL * 100.0
        );
    }
}

/// Charge of the simultaneous rotation of every canonical pair:
/// `½ ∫ [p² + q² + Σ_j (P_j² + Q_j² + π_j² + η_j²)]`.
pub fn phase_charge(s: &FieldState) -> f64 {
    0.5 * s
        .fields()
        .iter()
        .map(|f| f.values().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        * s.grid().cell_volume()
}

/// `∫ |ψ|²` for `ψ = (q + ip)/√2`.
pub fn pair_norm(s: &FieldState) -> f64 {
    0.5 * s
        .p
        .values()
        .iter()
        .zip(s.q.values())
        .map(|(a, b)| a * a + b * b)
        .sum::<f64>()
        * s.grid().cell_volume()
}

/// Momentum balance at one interior sample of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSample {
    pub time: f64,
    pub residual: Vec<f64>,
}

/// `d/dt m_j^reduced + (1/h) ∫ |ψ|² ∂_j V` at every interior sample, with the
/// time derivative taken by centred differences over the samples.
pub fn momentum_balance_residual(
    history: &[FieldState],
    pot: &Potential,
    k: &PhysicalConstants,
) -> Result<Vec<BalanceSample>> {
    let times: Vec<f64> = history.iter().map(|s| s.time).collect();
    let step = uniform_step(&times)?;
    for s in history {
        ensure_same_grid(s.grid(), pot.grid())?;
    }
    let momenta = history
        .iter()
        .map(|s| momentum_charge_reduced(&s.p, &s.q))
        .collect::<Result<Vec<_>>>()?;
    let rates = centered_differences(&momenta, step);
    let mut out = Vec::with_capacity(rates.len());
    for (i, rate) in rates.into_iter().enumerate() {
        let s = &history[i + 1];
        let residual = rate
            .iter()
            .zip(pot.gradient())
            .map(|(r, g)| {
                let push: f64 = s
                    .p
                    .values()
                    .iter()
                    .zip(s.q.values())
                    .zip(g.values())
                    .map(|((p, q), dv)| 0.5 * (p * p + q * q) * dv)
                    .sum::<f64>()
                    * s.grid().cell_volume();
                r + push / k.h
            })
            .collect();
        out.push(BalanceSample {
            time: s.time,
            residual,
        });
    }
    Ok(out)
}

/// Conserved and diagnostic quantities of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeRecord {
    pub time: f64,
    pub energy: f64,
    pub momentum: Vec<f64>,
    pub angular_momentum: Option<AntisymmetricMatrix>,
    pub phase_charge: f64,
    pub adiabatic_residual: f64,
    pub norm: f64,
}

impl ChargeRecord {
    pub fn measure(s: &FieldState, pot: &Potential, k: &PhysicalConstants) -> Result<Self> {
        let angular_momentum = if s.ndim() >= 2 {
            Some(angular_momentum_charge(s)?)
        } else {
            None
        };
        let record = Self {
            time: s.time,
            energy: total_energy(s, pot, k)?,
            momentum: momentum_charge(s),
            angular_momentum,
            phase_charge: phase_charge(s),
            adiabatic_residual: adiabatic_residual(s, k),
            norm: pair_norm(s),
        };
        Ok(record)
    }

    pub fn is_finite(&self) -> bool {
        self.energy.is_finite()
            && self.momentum.iter().all(|v| v.is_finite())
            && self
                .angular_momentum
                .as_ref()
                .is_none_or(|l| l.components().iter().all(|v| v.is_finite()))
            && self.phase_charge.is_finite()
            && self.norm.is_finite()
    }
}

/// CSV header for an `ndim`-dimensional record series.
pub fn charge_csv_header(ndim: usize) -> Vec<String> {
    let mut h = vec!["time".to_string(), "energy".to_string()];
    h.extend((1..=ndim).map(|j| format!("m_{j}")));
    if ndim >= 2 {
        h.extend(AntisymmetricMatrix::zeros(ndim).labels());
    }
    h.extend(["phase_charge", "adiabatic_residual", "norm"].map(String::from));
    h
}

/// Write a record series as CSV with a header row and 17 significant digits.
pub fn write_charge_csv<W: Write>(w: W, ndim: usize, records: &[ChargeRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(charge_csv_header(ndim))?;
    for r in records {
        let mut row = vec![fmt_f64(r.time), fmt_f64(r.energy)];
        row.extend(r.momentum.iter().map(|v| fmt_f64(*v)));
        if let Some(l) = &r.angular_momentum {
            row.extend(l.components().iter().map(|v| fmt_f64(*v)));
        }
        row.push(fmt_f64(r.phase_charge));
        row.push(fmt_f64(r.adiabatic_residual));
        row.push(fmt_f64(r.norm));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
