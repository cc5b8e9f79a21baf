//! Reference solutions: the closed-form `s = 1` soliton and numerically
//! generated traveling-wave profiles for fractional orders.
//!
//! A traveling wave has the form `u(x, t) = Φ(x - λ₂t) e^{iλ₁t}` where the
//! complex profile `Φ` solves
//! `(λ₁ + (-∂xx)^s) Φ + iλ₂ Φ' - |Φ|²Φ = 0`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{FnlsError, Result};
use crate::spectral::{check_order, l2_norm, Field, SpectralGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolitonParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub x0: f64,
    pub theta0: f64,
}

impl SolitonParams {
    pub fn new(lambda1: f64, lambda2: f64, x0: f64, theta0: f64) -> Result<Self> {
        let p = SolitonParams {
            lambda1,
            lambda2,
            x0,
            theta0,
        };
        p.validate()?;
        Ok(p)
    }

    /// `a = λ₁ - λ₂²/4`.
    pub fn a(&self) -> f64 {
        self.lambda1 - 0.25 * self.lambda2 * self.lambda2
    }

    pub fn amplitude(&self) -> f64 {
        (2.0 * self.a()).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda1, self.lambda2, self.x0, self.theta0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(FnlsError::invalid("soliton", "parameters must be finite"));
        }
        if self.a() <= 0.0 {
            return Err(FnlsError::invalid(
                "lambda1",
                format!(
                    "soliton needs a = lambda1 - lambda2^2/4 > 0, got {}",
                    self.a()
                ),
            ));
        }
        Ok(())
    }

    /// Exact value at `(x, t)` on the real line.
    pub fn eval(&self, x: f64, t: f64) -> Complex64 {
        let a = self.a();
        let xi = x - self.lambda2 * t - self.x0;
        let rho = (2.0 * a).sqrt() / (a.sqrt() * xi).cosh();
        let phase = 0.5 * self.lambda2 * xi + self.theta0 + self.lambda1 * t;
        Complex64::from_polar(rho, phase)
    }
}

/// Samples the `s = 1` soliton at time `t` on the grid nodes (no periodic wrapping).
pub fn nls_soliton(grid: &Arc<SpectralGrid>, t: f64, params: &SolitonParams) -> Result<Field> {
    params.validate()?;
    Ok(Field::from_fn(grid, |x| params.eval(x, t)))
}

/// Profile-equation symbol `λ₁ + |κ|^{2s} - λ₂κ`; the unmatched Nyquist mode
/// gets no first-derivative contribution.
fn profile_symbol(grid: &SpectralGrid, s: f64, lambda1: f64, lambda2: f64) -> Vec<f64> {
    let nyq = grid.nyquist();
    (0..grid.n())
        .map(|i| {
            let k = grid.wavenumber(i);
            let kappa = grid.physical(k);
            let drift = if k == nyq { 0.0 } else { lambda2 * kappa };
            lambda1 + kappa.abs().powf(2.0 * s) - drift
        })
        .collect()
}

/// `(λ₁ + (-∂xx)^s)Φ + iλ₂Φ' - |Φ|²Φ`, evaluated spectrally.
pub fn residual_operator(phi: &Field, s: f64, lambda1: f64, lambda2: f64) -> Result<Field> {
    check_order(s)?;
    let grid = phi.grid();
    let symbol: Vec<Complex64> = profile_symbol(grid, s, lambda1, lambda2)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    let mut values = phi.values().to_vec();
    grid.apply_table(&mut values, &symbol);
    for (v, z) in values.iter_mut().zip(phi.values()) {
        *v -= z * z.norm_sqr();
    }
    Field::new(grid, values)
}

#[derive(Clone, Debug)]
pub struct ProfileResult {
    pub profile: Field,
    /// `l2_norm` of [`residual_operator`] at the returned profile.
    pub residual: f64,
    pub iterations: usize,
    /// Last stabilizing factor; tends to 1 at a fixed point.
    pub stabilizer: f64,
    pub s: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Stabilization exponent for a cubic nonlinearity.
const STABILIZER_EXPONENT: f64 = 1.5;

/// Petviashvili iteration for a traveling-wave profile, started from the
/// `s = 1` soliton with the same `(λ₁, λ₂)`.
///
/// Stops once the relative change is at most `tol` and the residual at most `100 tol`.
pub fn petviashvili_profile(
    grid: &Arc<SpectralGrid>,
    s: f64,
    lambda1: f64,
    lambda2: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ProfileResult> {
    if !(s > 0.5 && s <= 1.0) {
        return Err(FnlsError::Unsupported {
            name: "s",
            reason: format!("profile generation supports s in (1/2, 1], got {s}"),
        });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(FnlsError::invalid("tol", format!("must be positive, got {tol}")));
    }
    let symbol = profile_symbol(grid, s, lambda1, lambda2);
    if let Some((i, v)) = symbol
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(FnlsError::invalid(
            "lambda1",
            format!(
                "profile symbol lambda1 + |kappa|^2s - lambda2*kappa must be positive, got {v} at k = {}",
                grid.wavenumber(i)
            ),
        ));
    }
    let seed = SolitonParams::new(lambda1, lambda2, 0.0, 0.0)?;
    let mut phi = nls_soliton(grid, 0.0, &seed)?.into_values();

    let n = grid.n();
    let scale = 1.0 / n as f64;
    let mut phi_hat = vec![Complex64::new(0.0, 0.0); n];
    let mut g_hat = vec![Complex64::new(0.0, 0.0); n];
    let mut history = Vec::new();

    for iteration in 1..=max_iters {
        phi_hat.copy_from_slice(&phi);
        grid.fft_forward(&mut phi_hat);
        for (g, z) in g_hat.iter_mut().zip(&phi) {
            *g = z * z.norm_sqr();
        }
        grid.fft_forward(&mut g_hat);

        let mut linear = 0.0;
        let mut cubic = 0.0;
        for i in 0..n {
            linear += symbol[i] * phi_hat[i].norm_sqr();
            cubic += (g_hat[i] * phi_hat[i].conj()).re;
        }
        if !(cubic > 0.0 && linear.is_finite()) {
            return Err(FnlsError::ProfileDivergence {
                iterations: iteration,
                last: history.last().copied().unwrap_or(f64::NAN),
                history,
            });
        }
        let stabilizer = linear / cubic;
        let factor = stabilizer.powf(STABILIZER_EXPONENT) * scale;

        let mut next = g_hat.clone();
        for (v, l) in next.iter_mut().zip(&symbol) {
            *v *= factor / l;
        }
        grid.fft_inverse(&mut next);

        let mut diff = 0.0;
        let mut size = 0.0;
        for (a, b) in next.iter().zip(&phi) {
            diff += (a - b).norm_sqr();
            size += a.norm_sqr();
        }
        let change = (diff / size).sqrt();
        phi = next;

        let field = Field::new(grid, phi.clone())?;
        let residual = l2_norm(&residual_operator(&field, s, lambda1, lambda2)?);
        history.push(residual);
        if !residual.is_finite() {
            break;
        }
        if change <= tol && residual <= 100.0 * tol {
            return Ok(ProfileResult {
                profile: field,
                residual,
                iterations: iteration,
                stabilizer,
                s,
                lambda1,
                lambda2,
            });
        }
    }
    Err(FnlsError::ProfileDivergence {
        iterations: history.len(),
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}
