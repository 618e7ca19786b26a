//! Periodic lattices, spectral calculus and quadrature.
//!
//! Every field in the crate lives on a [`Grid`]: a periodic box of one to
//! three axes, sampled on an even number of points per axis. Site
//! coordinates run from `-L/2` to `L/2 - dx` on each axis, so the geometric
//! centre of the box is the origin.
//!
//! Derivatives are spectral. The Nyquist coefficient of a first derivative
//! is dropped so that derivatives of real fields stay real; the same
//! convention is used everywhere a derivative appears (energies, equations
//! of motion, the per-mode propagator), which keeps all discrete
//! integration-by-parts identities exact up to roundoff.

pub mod io;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlannerScalar};

use crate::error::{Error, Result};

pub const MAX_AXES: usize = 3;
pub const MIN_POINTS: usize = 4;

/// Points and physical length of one periodic axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub points: usize,
    pub length: f64,
}

/// Geometry of a periodic lattice together with its FFT plans.
pub struct Grid {
    axes: Vec<AxisSpec>,
    strides: Vec<usize>,
    len: usize,
    fft_k: Vec<Vec<f64>>,
    deriv_k: Vec<Vec<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

/// Build a grid from `(points, length)` pairs, one per axis.
pub fn make_grid(axes: &[(usize, f64)]) -> Result<Arc<Grid>> {
    Grid::new(axes)
}

impl Grid {
    pub fn new(axes: &[(usize, f64)]) -> Result<Arc<Grid>> {
        if axes.is_empty() || axes.len() > MAX_AXES {
            return Err(Error::InvalidGrid(format!(
                "expected 1 to {MAX_AXES} axes, got {}",
                axes.len()
            )));
        }
        for (i, &(points, length)) in axes.iter().enumerate() {
            if points < MIN_POINTS || points % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: point count must be even and at least {MIN_POINTS}, got {points}"
                )));
            }
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: length must be positive and finite, got {length}"
                )));
            }
        }

        let specs: Vec<AxisSpec> = axes
            .iter()
            .map(|&(points, length)| AxisSpec { points, length })
            .collect();
        let mut strides = vec![1; specs.len()];
        for a in (0..specs.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * specs[a + 1].points;
        }
        let len = specs.iter().map(|a| a.points).product();

        let mut planner = FftPlannerScalar::new();
        let mut fft_k = Vec::with_capacity(specs.len());
        let mut deriv_k = Vec::with_capacity(specs.len());
        let mut forward = Vec::with_capacity(specs.len());
        let mut inverse = Vec::with_capacity(specs.len());
        for a in &specs {
            let n = a.points;
            let base = 2.0 * std::f64::consts::PI / a.length;
            let k: Vec<f64> = (0..n).map(|j| base * signed_frequency(j, n) as f64).collect();
            let mut dk = k.clone();
            dk[n / 2] = 0.0;
            fft_k.push(k);
            deriv_k.push(dk);
            forward.push(planner.plan_fft_forward(n));
            inverse.push(planner.plan_fft_inverse(n));
        }

        Ok(Arc::new(Grid {
            axes: specs,
            strides,
            len,
            fft_k,
            deriv_k,
            forward,
            inverse,
        }))
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of lattice sites.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn points(&self, axis: usize) -> usize {
        self.axes[axis].points
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.axes[axis].length
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].length / self.axes[axis].points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.ndim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| a.length).product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.ndim() {
            Ok(())
        } else {
            Err(Error::AxisOutOfRange {
                axis,
                ndim: self.ndim(),
            })
        }
    }

    /// Wavenumbers `2πm/L` for `m = -N/2 .. N/2-1`, in increasing order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points(axis);
        let base = 2.0 * std::f64::consts::PI / self.length(axis);
        (0..n).map(|j| base * (j as f64 - (n / 2) as f64)).collect()
    }

    /// Wavenumbers in FFT storage order.
    pub fn fft_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.fft_k[axis]
    }

    /// Wavenumbers used by first derivatives: FFT order, Nyquist set to zero.
    pub fn derivative_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.deriv_k[axis]
    }

    /// Site coordinates along one axis, `-L/2 + i·dx`.
    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        let dx = self.spacing(axis);
        let half = 0.5 * self.length(axis);
        (0..self.points(axis)).map(|i| -half + i as f64 * dx).collect()
    }

    /// Per-axis index of a flat (row-major) site index.
    pub fn axis_index(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.axes[axis].points
    }

    pub fn position(&self, site: usize) -> [f64; MAX_AXES] {
        let mut x = [0.0; MAX_AXES];
        for (a, xa) in x.iter_mut().enumerate().take(self.ndim()) {
            let i = self.axis_index(site, a);
            *xa = -0.5 * self.length(a) + i as f64 * self.spacing(a);
        }
        x
    }

    /// Flat index of the mode with the negated wave vector.
    pub fn mirror_index(&self, site: usize) -> usize {
        let mut out = 0;
        for a in 0..self.ndim() {
            let n = self.points(a);
            let i = self.axis_index(site, a);
            out += ((n - i) % n) * self.strides[a];
        }
        out
    }

    /// Unnormalised forward DFT over all axes, in place.
    pub fn fft(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse DFT over all axes, normalised so `ifft(fft(f)) == f`.
    pub fn ifft(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len, "buffer does not match grid size");
        for axis in 0..self.ndim() {
            let plan = &plans[axis];
            let n = self.points(axis);
            let stride = self.strides[axis];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let outer = self.len / (n * stride);
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * n * stride + i;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Multiply a spectrum by `i·k_axis` (derivative wavenumbers).
    pub(crate) fn apply_derivative(&self, spec: &mut [Complex64], axis: usize) {
        let k = &self.deriv_k[axis];
        for (site, v) in spec.iter_mut().enumerate() {
            let kk = k[self.axis_index(site, axis)];
            *v = Complex64::new(-kk * v.im, kk * v.re);
        }
    }

    pub(crate) fn same_as(self: &Arc<Self>, other: &Arc<Grid>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("axes", &self.axes).finish()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .axes
            .iter()
            .map(|a| format!("{} pts x {}", a.points, a.length))
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

fn signed_frequency(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

pub(crate) fn ensure_same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// One real sample per site, row-major.
#[derive(Clone, Debug)]
pub struct RealLattice {
    grid: Arc<Grid>,
    data: Vec<f64>,
}

impl RealLattice {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            data: vec![value; grid.len()],
        }
    }

    /// Wrap existing samples, rejecting wrong lengths and non-finite values.
    pub fn from_vec(grid: &Arc<Grid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::SampleCount {
                expected: grid.len(),
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            data,
        })
    }

    /// Sample `f` at every site position (slice of length `ndim`).
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = grid.ndim();
        let data = (0..grid.len())
            .map(|s| {
                let x = grid.position(s);
                f(&x[..n])
            })
            .collect();
        Self {
            grid: Arc::clone(grid),
            data,
        }
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            data,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.grid, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &RealLattice, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self::from_raw(
            &self.grid,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sqrt(∫ f²)`.
    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub(crate) fn to_complex(&self) -> Vec<Complex64> {
        self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }
}

impl Add for &RealLattice {
    type Output = RealLattice;

    fn add(self, rhs: &RealLattice) -> RealLattice {
        self.zip_map(rhs, |a, b| a + b)
            .expect("adding lattices on different grids")
    }
}

impl Sub for &RealLattice {
    type Output = RealLattice;

    fn sub(self, rhs: &RealLattice) -> RealLattice {
        self.zip_map(rhs, |a, b| a - b)
            .expect("subtracting lattices on different grids")
    }
}

impl Mul<f64> for &RealLattice {
    type Output = RealLattice;

    fn mul(self, rhs: f64) -> RealLattice {
        self.scaled(rhs)
    }
}

impl Neg for &RealLattice {
    type Output = RealLattice;

    fn neg(self) -> RealLattice {
        self.scaled(-1.0)
    }
}

/// One complex sample per site, row-major.
#[derive(Clone, Debug)]
pub struct ComplexLattice {
    grid: Arc<Grid>,
    data: Vec<Complex64>,
}

impl ComplexLattice {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_vec(grid: &Arc<Grid>, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::SampleCount {
                expected: grid.len(),
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            data,
        })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let n = grid.ndim();
        let data = (0..grid.len())
            .map(|s| {
                let x = grid.position(s);
                f(&x[..n])
            })
            .collect();
        Self {
            grid: Arc::clone(grid),
            data,
        }
    }

    /// Combine real and imaginary parts sample by sample.
    pub fn from_parts(re: &RealLattice, im: &RealLattice) -> Result<Self> {
        ensure_same_grid(re.grid(), im.grid())?;
        Ok(Self::from_raw(
            re.grid(),
            re.values()
                .iter()
                .zip(im.values())
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect(),
        ))
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            data,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.data
    }

    pub fn re(&self) -> RealLattice {
        RealLattice::from_raw(&self.grid, self.data.iter().map(|v| v.re).collect())
    }

    pub fn im(&self) -> RealLattice {
        RealLattice::from_raw(&self.grid, self.data.iter().map(|v| v.im).collect())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_raw(&self.grid, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `∫ |f|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// `sqrt(∫ |a - b|²)`.
    pub fn l2_distance(&self, other: &ComplexLattice) -> Result<f64> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }

    pub fn spectral_derivative(&self, axis: usize) -> Result<ComplexLattice> {
        self.grid.check_axis(axis)?;
        let mut spec = self.data.clone();
        self.grid.fft(&mut spec);
        self.grid.apply_derivative(&mut spec, axis);
        self.grid.ifft(&mut spec);
        Ok(Self::from_raw(&self.grid, spec))
    }
}

/// Spectral first derivative along `axis`.
pub fn spectral_derivative(f: &RealLattice, axis: usize) -> Result<RealLattice> {
    let grid = f.grid();
    grid.check_axis(axis)?;
    let mut spec = f.to_complex();
    grid.fft(&mut spec);
    grid.apply_derivative(&mut spec, axis);
    grid.ifft(&mut spec);
    Ok(RealLattice::from_raw(
        grid,
        spec.into_iter().map(|v| v.re).collect(),
    ))
}

/// Spectral derivatives along every axis from a single forward transform.
pub fn spectral_gradient(f: &RealLattice) -> Vec<RealLattice> {
    let grid = f.grid();
    let mut spec = f.to_complex();
    grid.fft(&mut spec);
    (0..grid.ndim())
        .map(|axis| {
            let mut d = spec.clone();
            grid.apply_derivative(&mut d, axis);
            grid.ifft(&mut d);
            RealLattice::from_raw(grid, d.into_iter().map(|v| v.re).collect())
        })
        .collect()
}

/// Sum of second derivatives, each built as two first derivatives.
pub fn spectral_laplacian(f: &RealLattice) -> RealLattice {
    let grid = f.grid();
    let mut spec = f.to_complex();
    grid.fft(&mut spec);
    for (site, v) in spec.iter_mut().enumerate() {
        let k2: f64 = (0..grid.ndim())
            .map(|a| grid.derivative_wavenumbers(a)[grid.axis_index(site, a)].powi(2))
            .sum();
        *v *= -k2;
    }
    grid.ifft(&mut spec);
    RealLattice::from_raw(grid, spec.into_iter().map(|v| v.re).collect())
}

/// Periodic trapezoid rule: sum of samples times the cell volume.
pub fn integrate(f: &RealLattice) -> f64 {
    f.values().iter().sum::<f64>() * f.grid().cell_volume()
}

/// `∫ a·b`.
pub fn inner_product(a: &RealLattice, b: &RealLattice) -> Result<f64> {
    ensure_same_grid(a.grid(), b.grid())?;
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok(s * a.grid().cell_volume())
}

/// Fraction of `∫ density` carried by sites within `shell·L` of the box
/// boundary along any axis.
pub fn outer_shell_fraction(density: &RealLattice, shell: f64) -> f64 {
    let grid = density.grid();
    let total: f64 = density.values().iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let outer: f64 = density
        .values()
        .iter()
        .enumerate()
        .filter(|(site, _)| {
            let x = grid.position(*site);
            (0..grid.ndim()).any(|a| x[a].abs() >= (0.5 - shell) * grid.length(a))
        })
        .map(|(_, v)| v)
        .sum();
    outer / total
}
