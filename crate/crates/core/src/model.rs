//! The semidiscrete cubic fNLS system `u_t = F(u)` with
//! `F(u) = -i(-∂xx)^s u + i Π(|u|²u)`, and its conserved quantities.
//!
//! Invariants carry the quadrature weight `h`, so they converge to the
//! continuous mass, momentum and Hamiltonian as `N` grows.

use num_complex::Complex64;

use crate::error::{FnlsError, Result};
use crate::spectral::{self, abs_derivative, check_order, dealias, derivative, Field};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    s: f64,
    dealias: bool,
    cubic: bool,
}

impl ModelParams {
    pub fn new(s: f64, dealias: bool) -> Result<Self> {
        check_order(s)?;
        Ok(ModelParams {
            s,
            dealias,
            cubic: true,
        })
    }

    /// Same operator with the cubic term switched off (linear dispersive flow).
    pub fn linear(self) -> Self {
        ModelParams {
            cubic: false,
            ..self
        }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    pub fn is_cubic(&self) -> bool {
        self.cubic
    }

    /// Nonlinear forcing `Π f(u)` as it enters `F`, honoring the dealias and
    /// cubic switches.
    pub(crate) fn forcing(&self, u: &Field) -> Field {
        if !self.cubic {
            return Field::zeros(u.grid());
        }
        let f = nonlinearity(u);
        if self.dealias {
            dealias(&f)
        } else {
            f
        }
    }
}

/// Conserved quantities at time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantRecord {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub hamiltonian: f64,
}

impl InvariantRecord {
    pub fn measure(t: f64, u: &Field, params: &ModelParams) -> Self {
        InvariantRecord {
            t,
            mass: mass(u),
            momentum: momentum(u),
            hamiltonian: hamiltonian(u, params),
        }
    }
}

/// Pointwise `|u|²u`.
pub fn nonlinearity(u: &Field) -> Field {
    u.map(|z| z * z.norm_sqr())
}

pub fn rhs(u: &Field, params: &ModelParams) -> Field {
    let lap = abs_derivative(u, 2.0 * params.s);
    let forcing = params.forcing(u);
    lap.zip_map(&forcing, |l, f| I * (f - l))
        .expect("operators preserve the grid")
}

/// `I₁ = (h/2) Σ |u_j|²`.
pub fn mass(u: &Field) -> f64 {
    0.5 * spectral::l2_norm(u).powi(2)
}

/// `I₂ = (h/2) Σ Im(u_j conj(D u)_j)`.
pub fn momentum(u: &Field) -> f64 {
    let du = derivative(u);
    let h = u.grid().spacing();
    0.5 * h
        * u.values()
            .iter()
            .zip(du.values())
            .map(|(a, b)| (a * b.conj()).im)
            .sum::<f64>()
}

/// `H = h Σ [ ½ |(|D|^s u)_j|² - |u_j|⁴/2 ]`.
pub fn hamiltonian(u: &Field, params: &ModelParams) -> f64 {
    let ds = abs_derivative(u, params.s);
    let h = u.grid().spacing();
    h * u
        .values()
        .iter()
        .zip(ds.values())
        .map(|(z, d)| 0.5 * d.norm_sqr() - 0.5 * z.norm_sqr().powi(2))
        .sum::<f64>()
}

/// A-priori `H^s` bound data for initial data `u0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HsBound {
    pub c_inf: f64,
    pub c_star: f64,
    /// Present when `c_star > 0` and `I₁/2 + H >= 0`.
    pub c_s: Option<f64>,
    pub satisfied: bool,
}

/// `C_∞ = (Σ_{|k| <= N/2} (1 + |k|^s)^{-2})^{1/2}`.
pub fn sobolev_embedding_constant(n: usize, s: f64) -> f64 {
    let half = (n / 2) as i64;
    // summed from the small terms up
    let mut sum = 0.0;
    for k in (1..=half).rev() {
        sum += 2.0 / (1.0 + (k as f64).powf(s)).powi(2);
    }
    (sum + 1.0).sqrt()
}

pub fn hs_bound_diagnostic(u0: &Field, params: &ModelParams) -> Result<HsBound> {
    if params.s <= 0.5 {
        return Err(FnlsError::Unsupported {
            name: "s",
            reason: format!("the a-priori H^s bound needs s > 1/2, got {}", params.s),
        });
    }
    let c_inf = sobolev_embedding_constant(u0.grid().n(), params.s);
    let i1 = mass(u0);
    let energy = hamiltonian(u0, params);
    let c_star = 1.0 - c_inf * c_inf * i1;
    let satisfied = c_star >= 0.0 && 0.5 * i1 + energy >= 0.0;
    let c_s = (c_star > 0.0 && 0.5 * i1 + energy >= 0.0)
        .then(|| ((2.0 * energy + i1) / c_star).sqrt());
    Ok(HsBound {
        c_inf,
        c_star,
        c_s,
        satisfied,
    })
}
