//! Periodic Fourier machinery on a uniform grid of `(-L, L)`.
//!
//! Coefficients follow the continuous normalization
//! `û_k = (1/2L) ∫ e^{-iπkx/L} u(x) dx`, approximated by the trapezoid rule,
//! so that `u(x_j) = Σ_k û_k e^{iπk x_j/L}` over `k ∈ {-N/2, …, N/2-1}`.
//! Spectral operators are applied as diagonal multipliers on these modes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{FnlsError, Result};

/// Uniform periodic grid `x_j = -L + j h`, `h = 2L/N`, together with FFT plans.
pub struct SpectralGrid {
    n: usize,
    half_length: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n", &self.n)
            .field("half_length", &self.half_length)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_length == other.half_length
    }
}

impl SpectralGrid {
    /// Builds the grid for `n` nodes on `(-half_length, half_length)`.
    ///
    /// `n` must be even and at least 4, `half_length` positive and finite.
    pub fn new(n: usize, half_length: f64) -> Result<Arc<Self>> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(FnlsError::invalid(
                "n",
                format!("expected an even number of nodes >= 4, got {n}"),
            ));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(FnlsError::invalid(
                "l",
                format!("half-period must be positive and finite, got {half_length}"),
            ));
        }
        let mut planner = FftPlanner::new();
        Ok(Arc::new(SpectralGrid {
            n,
            half_length,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Period `2L`.
    pub fn period(&self) -> f64 {
        2.0 * self.half_length
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Integer wavenumber stored at FFT slot `index`.
    pub fn wavenumber(&self, index: usize) -> i64 {
        let n = self.n as i64;
        let i = index as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumbers in storage order; covers `-N/2..N/2` exactly once.
    pub fn wavenumbers(&self) -> Vec<i64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    /// FFT slot holding integer wavenumber `k`, if it is on this grid.
    pub fn slot(&self, k: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if k < -half || k >= half {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.n as i64) as usize)
        }
    }

    /// Physical wavenumber `πk/L` of an integer wavenumber.
    pub fn physical(&self, k: i64) -> f64 {
        PI * k as f64 / self.half_length
    }

    /// The unmatched mode `-N/2`.
    pub fn nyquist(&self) -> i64 {
        -((self.n / 2) as i64)
    }

    /// Evaluates `symbol` at every wavenumber, in storage order.
    pub fn symbol_table(&self, mut symbol: impl FnMut(i64) -> Complex64) -> Vec<Complex64> {
        (0..self.n).map(|i| symbol(self.wavenumber(i))).collect()
    }

    pub(crate) fn fft_forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// Applies a precomputed diagonal multiplier (storage order) to nodal values in place.
    pub(crate) fn apply_table(&self, values: &mut [Complex64], table: &[Complex64]) {
        debug_assert_eq!(values.len(), self.n);
        debug_assert_eq!(table.len(), self.n);
        self.fft_forward(values);
        let scale = 1.0 / self.n as f64;
        for (v, m) in values.iter_mut().zip(table) {
            *v *= m * scale;
        }
        self.fft_inverse(values);
    }
}

fn same_grid(a: &Arc<SpectralGrid>, b: &Arc<SpectralGrid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(FnlsError::GridMismatch {
            left: format!("{a:?}"),
            right: format!("{b:?}"),
        })
    }
}

/// Complex nodal values of a `2L`-periodic function at one instant.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<SpectralGrid>,
    values: Vec<Complex64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: &Arc<SpectralGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(FnlsError::invalid(
                "values",
                format!("expected {} nodal values, got {}", grid.n(), values.len()),
            ));
        }
        Ok(Field {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        Field {
            grid: Arc::clone(grid),
            values: vec![Complex64::new(0.0, 0.0); grid.n()],
        }
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        Field {
            grid: Arc::clone(grid),
            values: (0..grid.n()).map(|j| f(grid.node(j))).collect(),
        }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &Field,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Field> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Field {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: Complex64) -> Field {
        self.map(|z| z * factor)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn conj(&self) -> Field {
        self.map(|z| z.conj())
    }

    /// Real part as a complex field with zero imaginary part.
    pub fn re(&self) -> Field {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    /// Imaginary part as a complex field with zero imaginary part.
    pub fn im(&self) -> Field {
        self.map(|z| Complex64::new(z.im, 0.0))
    }

    /// Cyclic shift by `shift` nodes: `out_j = in_{j - shift}`.
    pub fn shift_nodes(&self, shift: isize) -> Field {
        let n = self.len() as isize;
        let values = (0..n)
            .map(|j| self.values[(j - shift).rem_euclid(n) as usize])
            .collect();
        Field {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Discrete `L²` inner product `h Σ_j a_j conj(b_j)`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        same_grid(&self.grid, &other.grid)?;
        let h = self.grid.spacing();
        let sum: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(sum * h)
    }

    /// Trigonometric interpolation onto another grid with the same period.
    pub fn resample(&self, target: &Arc<SpectralGrid>) -> Result<Field> {
        if target.half_length() != self.grid.half_length() {
            return Err(FnlsError::GridMismatch {
                left: format!("{:?}", self.grid),
                right: format!("{target:?}"),
            });
        }
        let src = forward_transform(self);
        let mut out = Coefficients::zeros(target);
        let (ns, nt) = (self.grid.n() as i64, target.n() as i64);
        for i in 0..self.grid.n() {
            let k = self.grid.wavenumber(i);
            let c = src.modes[i];
            if nt > ns && k == -ns / 2 {
                // split the source Nyquist mode symmetrically
                out.add_mode(k, c * 0.5);
                out.add_mode(-k, c * 0.5);
            } else if nt < ns && k.abs() >= nt / 2 {
                if k.abs() == nt / 2 {
                    out.add_mode(-nt / 2, c);
                }
            } else {
                out.add_mode(k, c);
            }
        }
        Ok(inverse_transform(&out))
    }
}

/// Fourier coefficients `û_k` in FFT storage order (see [`SpectralGrid::wavenumber`]).
#[derive(Clone, Debug)]
pub struct Coefficients {
    grid: Arc<SpectralGrid>,
    modes: Vec<Complex64>,
}

impl Coefficients {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        Coefficients {
            grid: Arc::clone(grid),
            modes: vec![Complex64::new(0.0, 0.0); grid.n()],
        }
    }

    pub fn from_fn(grid: &Arc<SpectralGrid>, f: impl FnMut(i64) -> Complex64) -> Self {
        Coefficients {
            grid: Arc::clone(grid),
            modes: grid.symbol_table(f),
        }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    /// Storage-order slice.
    pub fn modes(&self) -> &[Complex64] {
        &self.modes
    }

    pub fn modes_mut(&mut self) -> &mut [Complex64] {
        &mut self.modes
    }

    /// Coefficient of wavenumber `k`; zero outside the grid's band.
    pub fn mode(&self, k: i64) -> Complex64 {
        self.grid
            .slot(k)
            .map(|i| self.modes[i])
            .unwrap_or_default()
    }

    pub fn set_mode(&mut self, k: i64, value: Complex64) {
        if let Some(i) = self.grid.slot(k) {
            self.modes[i] = value;
        }
    }

    fn add_mode(&mut self, k: i64, value: Complex64) {
        if let Some(i) = self.grid.slot(k) {
            self.modes[i] += value;
        }
    }

    /// Evaluates the trigonometric interpolant and its first two derivatives at `x`.
    ///
    /// The Nyquist mode is taken as its real cosine form so that real data
    /// interpolates to real values.
    pub fn eval_with_derivatives(&self, x: f64) -> [Complex64; 3] {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        let nyq = self.grid.nyquist();
        for (i, &c) in self.modes.iter().enumerate() {
            let k = self.grid.wavenumber(i);
            let kappa = self.grid.physical(k);
            if k == nyq {
                let (s, co) = (kappa * x).sin_cos();
                out[0] += c * co;
                out[1] += c * (-kappa * s);
                out[2] += c * (-kappa * kappa * co);
            } else {
                let e = Complex64::from_polar(1.0, kappa * x);
                let ik = Complex64::new(0.0, kappa);
                out[0] += c * e;
                out[1] += c * e * ik;
                out[2] += c * e * (ik * ik);
            }
        }
        out
    }
}

fn parity(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `û_k = (1/N) Σ_j u(x_j) e^{-iπk x_j/L}`.
pub fn forward_transform(field: &Field) -> Coefficients {
    let grid = &field.grid;
    let mut modes = field.values.clone();
    grid.fft_forward(&mut modes);
    let scale = 1.0 / grid.n() as f64;
    for (i, m) in modes.iter_mut().enumerate() {
        // x_0 = -L contributes the phase e^{iπk} = (-1)^k
        *m *= parity(grid.wavenumber(i)) * scale;
    }
    Coefficients {
        grid: Arc::clone(grid),
        modes,
    }
}

/// Exact inverse of [`forward_transform`].
pub fn inverse_transform(coeffs: &Coefficients) -> Field {
    let grid = &coeffs.grid;
    let mut values: Vec<Complex64> = coeffs
        .modes
        .iter()
        .enumerate()
        .map(|(i, &c)| c * parity(grid.wavenumber(i)))
        .collect();
    grid.fft_inverse(&mut values);
    Field {
        grid: Arc::clone(grid),
        values,
    }
}

/// Applies the Fourier multiplier `symbol(k)` (integer wavenumber) to a field.
pub fn apply_multiplier(field: &Field, symbol: impl Fn(i64) -> Complex64) -> Field {
    let table = field.grid.symbol_table(symbol);
    let mut values = field.values.clone();
    field.grid.apply_table(&mut values, &table);
    Field {
        grid: Arc::clone(&field.grid),
        values,
    }
}

/// Symbol `|πk/L|^{power}` with the zero mode mapped to zero.
pub(crate) fn abs_power_table(grid: &SpectralGrid, power: f64) -> Vec<f64> {
    (0..grid.n())
        .map(|i| {
            let k = grid.wavenumber(i);
            if k == 0 {
                0.0
            } else {
                grid.physical(k).abs().powf(power)
            }
        })
        .collect()
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(FnlsError::invalid(
            "s",
            format!("fractional order must lie in (0, 1], got {s}"),
        ))
    }
}

/// `(-∂xx)^s`: multiplies mode `k` by `|πk/L|^{2s}`. The Nyquist mode is kept.
pub fn fractional_laplacian(field: &Field, s: f64) -> Result<Field> {
    check_order(s)?;
    Ok(abs_derivative(field, 2.0 * s))
}

/// `|D|^power`: multiplies mode `k` by `|πk/L|^{power}` (zero mode to zero).
pub fn abs_derivative(field: &Field, power: f64) -> Field {
    let table: Vec<Complex64> = abs_power_table(&field.grid, power)
        .into_iter()
        .map(|m| Complex64::new(m, 0.0))
        .collect();
    let mut values = field.values.clone();
    field.grid.apply_table(&mut values, &table);
    Field {
        grid: Arc::clone(&field.grid),
        values,
    }
}

/// Pseudospectral first derivative; the Nyquist mode is annihilated.
pub fn derivative(field: &Field) -> Field {
    let grid = Arc::clone(&field.grid);
    let nyq = grid.nyquist();
    apply_multiplier(field, |k| {
        if k == nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, grid.physical(k))
        }
    })
}

/// Largest wavenumber magnitude kept by [`dealias`].
pub fn dealias_cutoff(n: usize) -> i64 {
    (n / 3) as i64
}

/// 2/3-rule projection: zeroes every mode with `|k| > floor(N/3)`.
pub fn dealias(field: &Field) -> Field {
    let cutoff = dealias_cutoff(field.grid.n());
    apply_multiplier(field, |k| {
        if k.abs() > cutoff {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// `sqrt(h Σ_j |u_j|²)`.
pub fn l2_norm(field: &Field) -> f64 {
    let h = field.grid.spacing();
    (h * field.values.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
}

/// `sqrt(2L Σ_k (1 + κ_k²)^s |û_k|²)` with `κ_k = πk/L`.
pub fn hs_norm(field: &Field, s: f64) -> f64 {
    let coeffs = forward_transform(field);
    let grid = &field.grid;
    let sum: f64 = coeffs
        .modes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let kappa = grid.physical(grid.wavenumber(i));
            (1.0 + kappa * kappa).powf(s) * c.norm_sqr()
        })
        .sum();
    (grid.period() * sum).sqrt()
}

pub fn linf_norm(field: &Field) -> f64 {
    field.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unweighted Euclidean norm `sqrt(Σ_j |u_j|²)` of the nodal vector.
pub fn euclidean_norm(field: &Field) -> f64 {
    field.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
