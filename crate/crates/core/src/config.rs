//! JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FnlsError, Result};
use crate::integrators::{step_count, CompositionScheme, SolverParams};
use crate::model::ModelParams;
use crate::spectral::SpectralGrid;

fn default_scheme_p() -> u32 {
    2
}
fn default_fp_tol() -> f64 {
    SolverParams::DEFAULT_FP_TOL
}
fn default_fp_max_iters() -> usize {
    SolverParams::DEFAULT_FP_MAX_ITERS
}
fn default_invariant_stride() -> usize {
    1
}
fn default_snapshot_stride() -> usize {
    100
}
fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}
fn default_profile_tol() -> f64 {
    1e-12
}

/// Initial data for a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Soliton {
        lambda1: f64,
        lambda2: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        theta0: f64,
    },
    ProfileFile {
        path: PathBuf,
    },
    Petviashvili {
        lambda1: f64,
        lambda2: f64,
        #[serde(default = "default_profile_tol")]
        tol: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Half-period `L` of the domain `(-L, L)`.
    pub l: f64,
    pub n: usize,
    pub s: f64,
    pub dt: f64,
    /// Final time `T`.
    pub t: f64,
    #[serde(default = "default_scheme_p")]
    pub scheme_p: u32,
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "default_fp_max_iters")]
    pub fp_max_iters: usize,
    #[serde(default)]
    pub dealias: bool,
    pub initial: InitialCondition,
    #[serde(default = "default_invariant_stride")]
    pub invariant_stride: usize,
    #[serde(default = "default_snapshot_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// A soliton run with the default solver controls.
    pub fn soliton(l: f64, n: usize, s: f64, dt: f64, t: f64, lambda1: f64, lambda2: f64) -> Self {
        RunConfig {
            l,
            n,
            s,
            dt,
            t,
            scheme_p: default_scheme_p(),
            fp_tol: default_fp_tol(),
            fp_max_iters: default_fp_max_iters(),
            dealias: false,
            initial: InitialCondition::Soliton {
                lambda1,
                lambda2,
                x0: 0.0,
                theta0: 0.0,
            },
            invariant_stride: default_invariant_stride(),
            snapshot_stride: default_snapshot_stride(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let field = unknown_field(&e.to_string()).unwrap_or_else(|| "config".to_string());
            FnlsError::config(field, e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FnlsError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every field against the ranges the solver accepts.
    pub fn validate(&self) -> Result<()> {
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(FnlsError::config("l", format!("must be positive, got {}", self.l)));
        }
        if self.n < 4 || !self.n.is_multiple_of(2) {
            return Err(FnlsError::config("n", format!("must be even and >= 4, got {}", self.n)));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(FnlsError::config("s", format!("must lie in (0, 1], got {}", self.s)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(FnlsError::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(FnlsError::config("t", format!("must be positive, got {}", self.t)));
        }
        step_count(self.t, self.dt)
            .map_err(|_| FnlsError::config("dt", format!("dt = {} does not divide t = {}", self.dt, self.t)))?;
        if !(1..=4).contains(&self.scheme_p) {
            return Err(FnlsError::config(
                "scheme_p",
                format!("must lie in 1..=4, got {}", self.scheme_p),
            ));
        }
        if !(self.fp_tol.is_finite() && self.fp_tol > 0.0) {
            return Err(FnlsError::config("fp_tol", format!("must be positive, got {}", self.fp_tol)));
        }
        if self.fp_max_iters == 0 {
            return Err(FnlsError::config("fp_max_iters", "must be at least 1"));
        }
        if self.invariant_stride == 0 {
            return Err(FnlsError::config("invariant_stride", "must be at least 1"));
        }
        if self.snapshot_stride == 0 {
            return Err(FnlsError::config("snapshot_stride", "must be at least 1"));
        }
        match &self.initial {
            InitialCondition::Soliton { lambda1, lambda2, .. } => {
                if lambda1 - 0.25 * lambda2 * lambda2 <= 0.0 {
                    return Err(FnlsError::config(
                        "initial.soliton.lambda1",
                        "needs lambda1 - lambda2^2/4 > 0",
                    ));
                }
            }
            InitialCondition::Petviashvili { tol, lambda1, lambda2 } => {
                if self.s <= 0.5 {
                    return Err(FnlsError::config(
                        "s",
                        format!("profile generation needs s in (1/2, 1], got {}", self.s),
                    ));
                }
                if !(tol.is_finite() && *tol > 0.0) {
                    return Err(FnlsError::config("initial.petviashvili.tol", "must be positive"));
                }
                if lambda1 - 0.25 * lambda2 * lambda2 <= 0.0 {
                    return Err(FnlsError::config(
                        "initial.petviashvili.lambda1",
                        "needs lambda1 - lambda2^2/4 > 0 for the seed soliton",
                    ));
                }
            }
            InitialCondition::ProfileFile { .. } => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<SpectralGrid>> {
        SpectralGrid::new(self.n, self.l)
    }

    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.s, self.dealias)
    }

    pub fn scheme(&self) -> Result<CompositionScheme> {
        CompositionScheme::yoshida(self.scheme_p)
    }

    pub fn solver(&self) -> Result<SolverParams> {
        SolverParams::with_tolerance(self.dt, self.fp_tol, self.fp_max_iters)
    }

    pub fn steps(&self) -> Result<usize> {
        step_count(self.t, self.dt)
    }
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}
