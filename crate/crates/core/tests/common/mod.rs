//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use noether_lattice::dynamics::{FieldState, PhysicalConstants};
use noether_lattice::lattice::{Grid, RealLattice};
use num_complex::Complex64;
use rand::Rng;

/// Band-limited random field: Fourier modes `|m_a| ≤ max_mode` per axis,
/// coefficients uniform in `[−1, 1]` and damped by `1/(1 + |m|²)`.
pub fn smooth_field<R: Rng>(grid: &Arc<Grid>, max_mode: i64, rng: &mut R) -> RealLattice {
    let n = grid.ndim();
    let mut terms = Vec::new();
    let mut idx = vec![-max_mode; n];
    loop {
        let k: Vec<f64> = (0..n)
            .map(|a| 2.0 * PI * idx[a] as f64 / grid.length(a))
            .collect();
        let m2: i64 = idx.iter().map(|m| m * m).sum();
        let damp = 1.0 / (1.0 + m2 as f64);
        terms.push((k, damp * rng.gen_range(-1.0..1.0), damp * rng.gen_range(-1.0..1.0)));
        let mut a = 0;
        loop {
            if a == n {
                return build(grid, &terms);
            }
            idx[a] += 1;
            if idx[a] <= max_mode {
                break;
            }
            idx[a] = -max_mode;
            a += 1;
        }
    }
}

fn build(grid: &Arc<Grid>, terms: &[(Vec<f64>, f64, f64)]) -> RealLattice {
    RealLattice::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(k, a, b)| {
                let ph: f64 = k.iter().zip(x).map(|(kk, xx)| kk * xx).sum();
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    })
}

/// Every canonical field independently random.
pub fn random_state<R: Rng>(grid: &Arc<Grid>, max_mode: i64, rng: &mut R) -> FieldState {
    let count = 2 + 4 * grid.ndim();
    let fields = (0..count).map(|_| smooth_field(grid, max_mode, rng)).collect();
    FieldState::from_fields(fields, 0.0).unwrap()
}

/// `(p, q)` with `(q + ip)/√2 = ψ`.
pub fn pair_from_psi(grid: &Arc<Grid>, psi: impl Fn(&[f64]) -> Complex64) -> (RealLattice, RealLattice) {
    let s = std::f64::consts::SQRT_2;
    let p = RealLattice::from_fn(grid, |x| psi(x).im * s);
    let q = RealLattice::from_fn(grid, |x| psi(x).re * s);
    (p, q)
}

/// `∫ |ψ|²` with `ψ = (q + ip)/√2`, computed directly.
pub fn pair_norm(p: &RealLattice, q: &RealLattice) -> f64 {
    0.5 * p
        .values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| a * a + b * b)
        .sum::<f64>()
        * p.grid().cell_volume()
}

pub fn natural(c: f64) -> PhysicalConstants {
    PhysicalConstants::natural(c).unwrap()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sixth-order centred difference along `axis`, written out site by site.
pub fn fd6(f: &RealLattice, axis: usize) -> RealLattice {
    let g = f.grid();
    let n = g.points(axis) as isize;
    let stride = g.stride(axis) as isize;
    let h = g.spacing(axis);
    let w = [(1, 45.0), (2, -9.0), (3, 1.0)];
    let v = f.values();
    let data = (0..v.len())
        .map(|site| {
            let i = g.axis_index(site, axis) as isize;
            let base = site as isize - i * stride;
            let at = |o: isize| v[(base + (i + o).rem_euclid(n) * stride) as usize];
            w.iter().map(|&(o, c)| c * (at(o) - at(-o))).sum::<f64>() / (60.0 * h)
        })
        .collect();
    RealLattice::from_vec(g, data).unwrap()
}
