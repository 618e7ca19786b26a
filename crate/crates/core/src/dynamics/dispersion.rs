//! Per-mode dispersion of the potential-free dynamics.
//!
//! For a plane wave `Ψ ∝ exp(i(k·x − λt))` the longitudinal auxiliary
//! combination `Σ_j k̂_j(Φ_j + Ξ_j)` is the only field it couples to, and the
//! pair oscillates with the two roots of
//!
//! ```text
//! λ² + ω_P λ − k²c²/2 = 0.
//! ```
//!
//! The slow root tends to `hk²/2m` when `κk → 0`; the fast root sits near
//! `−ω_P`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::stepper::{DtPolicy, Stepper};
use super::{init_adiabatic, PhysicalConstants, Potential};
use crate::error::{Error, Result};
use crate::lattice::{Grid, RealLattice};

/// Angular frequencies of the two branches, with `Ψ ∝ exp(−iλt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFrequencies {
    pub slow: f64,
    pub fast: f64,
}

/// Closed-form roots for a wave vector of magnitude `k`.
pub fn branch_frequencies(k: f64, constants: &PhysicalConstants) -> BranchFrequencies {
    let w = constants.planck_frequency();
    let drive = k * k * constants.c * constants.c;
    let root = (w * w + 2.0 * drive).sqrt();
    BranchFrequencies {
        // cancellation-free form of (−ω_P + root)/2
        slow: drive / (w + root),
        fast: -(w + root) / 2.0,
    }
}

/// Run the stepper on an adiabatic plane wave with integer mode numbers
/// `mode` and recover both branch frequencies from the sampled amplitudes.
///
/// The amplitude pair `(Ψ̂, Σ k̂_j(Φ̂_j + Ξ̂_j))` evolves under a fixed 2×2
/// one-step map; it is fitted by least squares over `samples` steps and its
/// eigenvalues `exp(−iλ dt)` give the frequencies.
pub fn measure_branch_frequencies(
    grid: &Arc<Grid>,
    mode: &[i64],
    constants: &PhysicalConstants,
    dt: f64,
    samples: usize,
) -> Result<BranchFrequencies> {
    let n = grid.ndim();
    if mode.len() != n {
        return Err(Error::InvalidGrid(format!(
            "mode has {} components, grid has {n} axes",
            mode.len()
        )));
    }
    if mode.iter().all(|&m| m == 0) {
        return Err(Error::InvalidGrid("the zero mode has no slow branch".into()));
    }
    if samples < 4 {
        return Err(Error::TooFewSamples {
            required: 4,
            actual: samples,
        });
    }
    let mut flat = 0;
    let mut kvec = vec![0.0; n];
    for a in 0..n {
        let np = grid.points(a) as i64;
        if mode[a].abs() >= np / 2 {
            return Err(Error::InvalidGrid(format!(
                "mode {} on axis {a} is not below the Nyquist index {}",
                mode[a],
                np / 2
            )));
        }
        flat += (mode[a].rem_euclid(np) as usize) * grid.stride(a);
        kvec[a] = 2.0 * std::f64::consts::PI * mode[a] as f64 / grid.length(a);
    }
    let kmag = kvec.iter().map(|v| v * v).sum::<f64>().sqrt();

    let phase = |x: &[f64]| x.iter().zip(&kvec).map(|(a, b)| a * b).sum::<f64>();
    let q = RealLattice::from_fn(grid, |x| phase(x).cos());
    let p = RealLattice::from_fn(grid, |x| phase(x).sin());
    let start = init_adiabatic(&p, &q, constants)?;

    let stepper = Stepper::new(&Potential::zero(grid), constants, dt, DtPolicy::Warn)?;
    let mut st = stepper.to_spectral(&start)?;
    let observe = |st: &super::SpectralState| -> [Complex64; 2] {
        let psi = st.amplitude(flat, 0);
        let aux: Complex64 = (0..n)
            .map(|j| (st.amplitude(flat, 1 + j) + st.amplitude(flat, 1 + n + j)) * (kvec[j] / kmag))
            .sum();
        [psi, aux]
    };

    let mut series = Vec::with_capacity(samples + 1);
    series.push(observe(&st));
    for _ in 0..samples {
        stepper.advance(&mut st, 1);
        series.push(observe(&st));
    }

    let rows = samples;
    let x = DMatrix::from_fn(rows, 2, |r, c| series[r][c]);
    let y = DMatrix::from_fn(rows, 2, |r, c| series[r + 1][c]);
    let map_t = x
        .svd(true, true)
        .solve(&y, 1e-300)
        .map_err(|e| Error::Blowup {
            step: samples,
            what: format!("mode fit failed: {e}"),
        })?;
    let tr = map_t[(0, 0)] + map_t[(1, 1)];
    let det = map_t[(0, 0)] * map_t[(1, 1)] - map_t[(0, 1)] * map_t[(1, 0)];
    let disc = (tr * tr / 4.0 - det).sqrt();
    let roots = [tr / 2.0 + disc, tr / 2.0 - disc];
    let mut freqs: Vec<f64> = roots.iter().map(|z| -z.arg() / dt).collect();
    freqs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    Ok(BranchFrequencies {
        slow: freqs[0],
        fast: freqs[1],
    })
}
