//! Time stepping by composition of the implicit midpoint rule (IMR).
//!
//! A step of size `k` chains `q = 3^{p-1}` midpoint substeps of sizes
//! `b_1 k, …, b_q k`. Each substep solves `X = Y + (k b_j / 2) F(X)` with the
//! fixed-point iteration preconditioned by the exact inverse of the linear
//! part, which is diagonal in Fourier space, then sets `Y' = 2X - Y`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{FnlsError, Result};
use crate::model::{InvariantRecord, ModelParams};
use crate::spectral::{abs_power_table, dealias_cutoff, euclidean_norm, Field, SpectralGrid};

/// Stage coefficients of a triple-jump composition of order `2p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionScheme {
    level: u32,
    coefficients: Vec<f64>,
}

impl CompositionScheme {
    /// Recursive triple jump: level `p` is `[w₁c, w₀c, w₁c]` built from level `p-1`,
    /// with `w₁ = 1/(2 - 2^{1/(2p-1)})` and `w₀ = 1 - 2w₁`.
    pub fn yoshida(level: u32) -> Result<Self> {
        if level < 1 {
            return Err(FnlsError::invalid(
                "scheme_p",
                "composition level must be at least 1",
            ));
        }
        if level > 6 {
            return Err(FnlsError::invalid(
                "scheme_p",
                format!("composition level {level} would need 3^{} stages", level - 1),
            ));
        }
        let mut coefficients = vec![1.0];
        for p in 2..=level {
            let root = 2f64.powf(1.0 / f64::from(2 * p - 1));
            let outer = 1.0 / (2.0 - root);
            let inner = 1.0 - 2.0 * outer;
            coefficients = [outer, inner, outer]
                .iter()
                .flat_map(|w| coefficients.iter().map(move |c| w * c))
                .collect();
        }
        Ok(CompositionScheme {
            level,
            coefficients,
        })
    }

    /// The implicit midpoint rule itself (`q = 1`).
    pub fn midpoint() -> Self {
        CompositionScheme {
            level: 1,
            coefficients: vec![1.0],
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn stages(&self) -> usize {
        self.coefficients.len()
    }

    pub fn order(&self) -> u32 {
        2 * self.level
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.coefficients.iter().fold(0.0, |m, b| m.max(b.abs()))
    }
}

/// Step size and fixed-point controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    k: f64,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub stability_check: bool,
}

impl SolverParams {
    pub const DEFAULT_FP_TOL: f64 = 1e-13;
    pub const DEFAULT_FP_MAX_ITERS: usize = 200;

    /// Default fixed-point controls for time step `k`.
    ///
    /// `k` may be negative for backward stepping; [`evolve`] requires `k > 0`.
    pub fn new(k: f64) -> Result<Self> {
        Self::with_tolerance(k, Self::DEFAULT_FP_TOL, Self::DEFAULT_FP_MAX_ITERS)
    }

    pub fn with_tolerance(k: f64, fp_tol: f64, fp_max_iters: usize) -> Result<Self> {
        if !(k.is_finite() && k != 0.0) {
            return Err(FnlsError::invalid("dt", format!("time step must be nonzero and finite, got {k}")));
        }
        if !(fp_tol.is_finite() && fp_tol > 0.0) {
            return Err(FnlsError::invalid("fp_tol", format!("must be positive, got {fp_tol}")));
        }
        if fp_max_iters == 0 {
            return Err(FnlsError::invalid("fp_max_iters", "must be at least 1"));
        }
        Ok(SolverParams {
            k,
            fp_tol,
            fp_max_iters,
            stability_check: true,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Same controls with a different (nonzero) step.
    pub fn with_step(self, k: f64) -> Result<Self> {
        let mut out = Self::with_tolerance(k, self.fp_tol, self.fp_max_iters)?;
        out.stability_check = self.stability_check;
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub fp_iterations_per_stage: Vec<usize>,
    /// `3 R² |k| N max|b_j|` with `R` the Euclidean norm of the nodal vector.
    pub stability_margin: f64,
    pub warnings: Vec<String>,
}

/// Reusable midpoint-stage solver for one grid and one model.
#[derive(Clone, Debug)]
pub struct StageSolver {
    grid: Arc<SpectralGrid>,
    model: ModelParams,
    laplacian: Vec<f64>,
    keep: Vec<bool>,
}

impl StageSolver {
    pub fn new(grid: &Arc<SpectralGrid>, model: ModelParams) -> Self {
        let cutoff = dealias_cutoff(grid.n());
        let keep = (0..grid.n())
            .map(|i| !model.dealias() || grid.wavenumber(i).abs() <= cutoff)
            .collect();
        StageSolver {
            grid: Arc::clone(grid),
            model,
            laplacian: abs_power_table(grid, 2.0 * model.s()),
            keep,
        }
    }

    /// Solves one midpoint substep of size `k b_j` from `y_prev`.
    ///
    /// Returns the new stage value `2X* - y_prev` and the number of fixed-point iterations.
    pub fn solve(&self, y_prev: &Field, b_j: f64, sp: &SolverParams) -> Result<(Field, usize)> {
        if b_j == 0.0 || !b_j.is_finite() {
            return Err(FnlsError::invalid("b_j", format!("stage coefficient must be nonzero, got {b_j}")));
        }
        if **y_prev.grid() != *self.grid {
            return Err(FnlsError::GridMismatch {
                left: format!("{:?}", y_prev.grid()),
                right: format!("{:?}", self.grid),
            });
        }
        let grid = &self.grid;
        let n = grid.n();
        let half_step = 0.5 * sp.k() * b_j;
        let scale = 1.0 / n as f64;
        let i_c = Complex64::new(0.0, half_step);

        // (I + i c (-∂xx)^s)^{-1}, with the 1/N of the round trip folded in
        let inverse: Vec<Complex64> = self
            .laplacian
            .iter()
            .map(|&lap| scale / Complex64::new(1.0, half_step * lap))
            .collect();

        let mut y_hat = y_prev.values().to_vec();
        grid.fft_forward(&mut y_hat);

        let mut current = y_prev.values().to_vec();
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        let mut last_change = f64::INFINITY;

        for iteration in 1..=sp.fp_max_iters {
            if self.model.is_cubic() {
                for (dst, z) in next.iter_mut().zip(&current) {
                    *dst = z * z.norm_sqr();
                }
                grid.fft_forward(&mut next);
                for i in 0..n {
                    let forcing = if self.keep[i] { next[i] } else { Complex64::new(0.0, 0.0) };
                    next[i] = (y_hat[i] + i_c * forcing) * inverse[i];
                }
            } else {
                for i in 0..n {
                    next[i] = y_hat[i] * inverse[i];
                }
            }
            grid.fft_inverse(&mut next);

            let mut diff = 0.0;
            let mut size = 0.0;
            for (a, b) in next.iter().zip(&current) {
                diff += (a - b).norm_sqr();
                size += a.norm_sqr();
            }
            let (diff, size) = (diff.sqrt(), size.sqrt());
            std::mem::swap(&mut current, &mut next);
            if !(diff.is_finite() && size.is_finite()) {
                return Err(FnlsError::StageDivergence {
                    stage: None,
                    iterations: iteration,
                    residual: f64::INFINITY,
                });
            }
            last_change = if size > 0.0 { diff / size } else { diff };
            if diff <= sp.fp_tol * size {
                for (x, y) in current.iter_mut().zip(y_prev.values()) {
                    *x = 2.0 * *x - y;
                }
                return Ok((Field::new(grid, current)?, iteration));
            }
        }
        Err(FnlsError::StageDivergence {
            stage: None,
            iterations: sp.fp_max_iters,
            residual: last_change,
        })
    }

    /// One composition step; stage `j` uses substep `b_j k`.
    pub fn step(
        &self,
        u: &Field,
        scheme: &CompositionScheme,
        sp: &SolverParams,
    ) -> Result<(Field, StepReport)> {
        let mut report = StepReport {
            fp_iterations_per_stage: Vec::with_capacity(scheme.stages()),
            ..StepReport::default()
        };
        if sp.stability_check {
            let r = euclidean_norm(u);
            report.stability_margin =
                3.0 * r * r * sp.k().abs() * self.grid.n() as f64 * scheme.max_abs_coefficient();
            if report.stability_margin >= 1.0 {
                report.warnings.push(format!(
                    "uniqueness condition 3R²kN·max|b| < 1 violated (value {:.3e})",
                    report.stability_margin
                ));
            }
        }
        let mut stage = u.clone();
        for (j, &b) in scheme.coefficients().iter().enumerate() {
            let (next, iters) = self.solve(&stage, b, sp).map_err(|e| match e {
                FnlsError::StageDivergence {
                    iterations,
                    residual,
                    ..
                } => FnlsError::StageDivergence {
                    stage: Some(j + 1),
                    iterations,
                    residual,
                },
                other => other,
            })?;
            report.fp_iterations_per_stage.push(iters);
            stage = next;
        }
        Ok((stage, report))
    }
}

/// Solves the midpoint fixed point for one stage of size `k b_j`.
pub fn imr_stage_solve(
    y_prev: &Field,
    b_j: f64,
    sp: &SolverParams,
    mp: &ModelParams,
) -> Result<(Field, usize)> {
    StageSolver::new(y_prev.grid(), *mp).solve(y_prev, b_j, sp)
}

/// Advances `u` by one composition step.
pub fn step(
    u: &Field,
    scheme: &CompositionScheme,
    sp: &SolverParams,
    mp: &ModelParams,
) -> Result<(Field, StepReport)> {
    StageSolver::new(u.grid(), *mp).step(u, scheme, sp)
}

/// Callback invoked by [`evolve`] after every step (and once at `t = 0`).
pub trait Observer {
    fn observe(&mut self, step: usize, t: f64, u: &Field) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(usize, f64, &Field) -> Result<()>,
{
    fn observe(&mut self, step: usize, t: f64, u: &Field) -> Result<()> {
        self(step, t, u)
    }
}

/// Records invariants every `stride` steps.
#[derive(Clone, Debug)]
pub struct InvariantRecorder {
    pub stride: usize,
    model: ModelParams,
    pub records: Vec<InvariantRecord>,
}

impl InvariantRecorder {
    pub fn new(stride: usize, model: ModelParams) -> Self {
        InvariantRecorder {
            stride: stride.max(1),
            model,
            records: Vec::new(),
        }
    }
}

impl Observer for InvariantRecorder {
    fn observe(&mut self, step: usize, t: f64, u: &Field) -> Result<()> {
        if step.is_multiple_of(self.stride) {
            self.records.push(InvariantRecord::measure(t, u, &self.model));
        }
        Ok(())
    }
}

/// Keeps copies of the field every `stride` steps.
#[derive(Clone, Debug)]
pub struct SnapshotRecorder {
    pub stride: usize,
    pub snapshots: Vec<(f64, Field)>,
}

impl SnapshotRecorder {
    pub fn new(stride: usize) -> Self {
        SnapshotRecorder {
            stride: stride.max(1),
            snapshots: Vec::new(),
        }
    }
}

impl Observer for SnapshotRecorder {
    fn observe(&mut self, step: usize, t: f64, u: &Field) -> Result<()> {
        if step.is_multiple_of(self.stride) {
            self.snapshots.push((t, u.clone()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOutcome {
    pub field: Field,
    pub steps: usize,
    pub final_time: f64,
    pub mean_fp_iterations: f64,
    pub max_stability_margin: f64,
    /// Euclidean norm of the initial nodal vector.
    pub initial_radius: f64,
    /// Steps at which the uniqueness condition was violated.
    pub stability_warnings: usize,
}

/// Number of steps `T/k`, which must evaluate to a positive integer.
pub fn step_count(t_final: f64, k: f64) -> Result<usize> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(FnlsError::invalid("t", format!("final time must be positive, got {t_final}")));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(FnlsError::invalid("dt", format!("time step must be positive, got {k}")));
    }
    let ratio = t_final / k;
    if ratio.round() != ratio || ratio < 1.0 {
        return Err(FnlsError::invalid(
            "dt",
            format!("dt = {k} does not divide T = {t_final} (T/dt = {ratio})"),
        ));
    }
    Ok(ratio as usize)
}

/// Integrates from `t = 0` to `t_final` in `T/k` steps.
///
/// Observers see step 0 and every subsequent step; each applies its own stride.
pub fn evolve(
    u0: &Field,
    t_final: f64,
    scheme: &CompositionScheme,
    sp: &SolverParams,
    mp: &ModelParams,
    observers: &mut [&mut dyn Observer],
) -> Result<EvolveOutcome> {
    let steps = step_count(t_final, sp.k())?;
    let solver = StageSolver::new(u0.grid(), *mp);
    for obs in observers.iter_mut() {
        obs.observe(0, 0.0, u0)?;
    }
    let mut u = u0.clone();
    let mut total_iters = 0usize;
    let mut max_margin: f64 = 0.0;
    let mut warnings = 0;
    for n in 1..=steps {
        let t = n as f64 * sp.k();
        let (next, report) = solver
            .step(&u, scheme, sp)
            .map_err(|e| FnlsError::Evolve {
                step: n,
                time: t,
                source: Box::new(e),
            })?;
        total_iters += report.fp_iterations_per_stage.iter().sum::<usize>();
        max_margin = max_margin.max(report.stability_margin);
        warnings += usize::from(!report.warnings.is_empty());
        u = next;
        for obs in observers.iter_mut() {
            obs.observe(n, t, &u)?;
        }
    }
    Ok(EvolveOutcome {
        field: u,
        steps,
        final_time: steps as f64 * sp.k(),
        mean_fp_iterations: total_iters as f64 / (steps * scheme.stages()) as f64,
        max_stability_margin: max_margin,
        initial_radius: euclidean_norm(u0),
        stability_warnings: warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mass, momentum};
    use crate::spectral::{forward_transform, l2_norm, linf_norm};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bump(grid: &Arc<SpectralGrid>) -> Field {
        Field::from_fn(grid, |x| {
            Complex64::from_polar(1.2 / (1.3 * x).cosh(), 0.2 * x)
        })
    }

    #[test]
    fn coefficients_level_one_and_two() {
        let imr = CompositionScheme::yoshida(1).unwrap();
        assert_eq!(imr.coefficients(), &[1.0]);
        assert_eq!(imr.order(), 2);
        assert_eq!(imr, CompositionScheme::midpoint());

        let s = CompositionScheme::yoshida(2).unwrap();
        let b = s.coefficients();
        assert_eq!(s.stages(), 3);
        assert_relative_eq!(b[0], 1.351207191959658, epsilon = 1e-14);
        assert_relative_eq!(b[1], -1.702414383919316, epsilon = 1e-14);
        assert_eq!(b[0], b[2]);
        assert!(CompositionScheme::yoshida(0).is_err());
    }

    #[test]
    fn coefficient_order_conditions() {
        for p in 1..=4 {
            let s = CompositionScheme::yoshida(p).unwrap();
            let b = s.coefficients();
            assert_eq!(b.len(), 3usize.pow(p - 1));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14, "p={p}");
            for j in 0..b.len() {
                assert!((b[j] - b[b.len() - 1 - j]).abs() < 1e-14);
                assert!(b[j] != 0.0);
            }
            if p >= 2 {
                assert!(b.iter().map(|x| x.powi(3)).sum::<f64>().abs() < 1e-12, "p={p}");
            }
        }
    }

    #[test]
    fn zero_field_is_fixed() {
        let g = SpectralGrid::new(32, PI).unwrap();
        let sp = SolverParams::new(0.1).unwrap();
        let mp = ModelParams::new(0.8, false).unwrap();
        let (y, iters) = imr_stage_solve(&Field::zeros(&g), 1.0, &sp, &mp).unwrap();
        assert_eq!(iters, 1);
        assert_eq!(linf_norm(&y), 0.0);
    }

    #[test]
    fn linear_stage_is_cayley_map() {
        let g = SpectralGrid::new(64, 4.0).unwrap();
        let sp = SolverParams::new(0.05).unwrap();
        let s = 0.65;
        let mp = ModelParams::new(s, false).unwrap().linear();
        let u = bump(&g);
        let b = -1.7;
        let (y, iters) = imr_stage_solve(&u, b, &sp, &mp).unwrap();
        assert!(iters <= 2);
        let half = 0.5 * sp.k() * b;
        let before = forward_transform(&u);
        let after = forward_transform(&y);
        for k in g.wavenumbers() {
            let lam = g.physical(k).abs().powf(2.0 * s);
            let z = c(1.0, -half * lam) / c(1.0, half * lam);
            assert!((after.mode(k) - before.mode(k) * z).norm() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn converged_stage_satisfies_fixed_point() {
        let g = SpectralGrid::new(256, 16.0 * PI).unwrap();
        let sp = SolverParams::with_tolerance(1e-2, 1e-13, 200).unwrap();
        let mp = ModelParams::new(1.0, false).unwrap();
        let u = Field::from_fn(&g, |x| Complex64::from_polar(2f64.sqrt() / x.cosh(), 0.0));
        let (y, _) = imr_stage_solve(&u, 1.0, &sp, &mp).unwrap();
        // re-substitute X* = (Y + Y_prev)/2
        let x = y.add(&u).unwrap().scale(c(0.5, 0.0));
        let f = crate::model::rhs(&x, &mp);
        let residual = x
            .sub(&u)
            .unwrap()
            .sub(&f.scale(c(0.5 * sp.k(), 0.0)))
            .unwrap();
        assert!(l2_norm(&residual) <= 10.0 * sp.fp_tol * l2_norm(&x));
    }

    #[test]
    fn divergence_is_reported() {
        let g = SpectralGrid::new(64, PI).unwrap();
        let sp = SolverParams::with_tolerance(5.0, 1e-13, 30).unwrap();
        let mp = ModelParams::new(1.0, false).unwrap();
        let u = bump(&g).scale(c(4.0, 0.0));
        let err = step(&u, &CompositionScheme::yoshida(2).unwrap(), &sp, &mp).unwrap_err();
        assert!(matches!(err, FnlsError::StageDivergence { stage: Some(1), .. }), "{err}");
    }

    #[test]
    fn single_stage_step_matches_stage_solve() {
        let g = SpectralGrid::new(64, 8.0).unwrap();
        let sp = SolverParams::new(0.02).unwrap();
        let mp = ModelParams::new(0.9, false).unwrap();
        let u = bump(&g);
        let (a, report) = step(&u, &CompositionScheme::midpoint(), &sp, &mp).unwrap();
        let (b, iters) = imr_stage_solve(&u, 1.0, &sp, &mp).unwrap();
        assert_eq!(a, b);
        assert_eq!(report.fp_iterations_per_stage, vec![iters]);
    }

    #[test]
    fn step_preserves_mass_and_momentum() {
        let g = SpectralGrid::new(128, 8.0).unwrap();
        let sp = SolverParams::new(0.02).unwrap();
        let mp = ModelParams::new(0.75, false).unwrap();
        let u = bump(&g);
        let (v, _) = step(&u, &CompositionScheme::yoshida(2).unwrap(), &sp, &mp).unwrap();
        assert!((l2_norm(&v) - l2_norm(&u)).abs() <= 10.0 * sp.fp_tol * l2_norm(&u));
        assert!((momentum(&v) - momentum(&u)).abs() <= 100.0 * sp.fp_tol * mass(&u));
    }

    #[test]
    fn stability_margin_warns() {
        let g = SpectralGrid::new(64, 8.0).unwrap();
        let sp = SolverParams::new(0.05).unwrap();
        let mp = ModelParams::new(1.0, false).unwrap();
        let u = bump(&g);
        let (_, report) = step(&u, &CompositionScheme::yoshida(2).unwrap(), &sp, &mp).unwrap();
        let r2 = u.values().iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert_relative_eq!(
            report.stability_margin,
            3.0 * r2 * 0.05 * 64.0 * 1.702414383919316,
            max_relative = 1e-12
        );
        assert_eq!(report.warnings.len(), 1);

        let small = u.scale(c(1e-3, 0.0));
        let (_, report) = step(&small, &CompositionScheme::yoshida(2).unwrap(), &sp, &mp).unwrap();
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn step_count_validation() {
        assert_eq!(step_count(10.0, 0.025).unwrap(), 400);
        assert_eq!(step_count(100.0, 3.125e-3).unwrap(), 32000);
        assert!(matches!(
            step_count(1.0, 0.3),
            Err(FnlsError::InvalidParameter { name: "dt", .. })
        ));
        assert!(step_count(0.0, 0.1).is_err());
        assert!(step_count(1.0, -0.1).is_err());
        assert!(step_count(0.05, 0.1).is_err());
    }

    #[test]
    fn evolve_runs_exact_step_count() {
        let g = SpectralGrid::new(32, 4.0).unwrap();
        let k = 0.01;
        let sp = SolverParams::new(k).unwrap();
        let mp = ModelParams::new(1.0, false).unwrap();
        let mut seen = Vec::new();
        let mut obs = |n: usize, t: f64, _: &Field| {
            seen.push((n, t));
            Ok(())
        };
        let out = evolve(&bump(&g), 10.0 * k, &CompositionScheme::midpoint(), &sp, &mp, &mut [&mut obs]).unwrap();
        assert_eq!(out.steps, 10);
        assert_relative_eq!(out.final_time, 0.1, max_relative = 1e-15);
        assert_eq!(seen.len(), 11);
        assert_eq!(seen[10].0, 10);

        let zero = evolve(&Field::zeros(&g), 0.1, &CompositionScheme::midpoint(), &sp, &mp, &mut []).unwrap();
        assert_eq!(linf_norm(&zero.field), 0.0);
    }

    #[test]
    fn evolve_is_deterministic() {
        let g = SpectralGrid::new(64, 8.0).unwrap();
        let sp = SolverParams::new(0.05).unwrap();
        let mp = ModelParams::new(0.75, true).unwrap();
        let scheme = CompositionScheme::yoshida(2).unwrap();
        let a = evolve(&bump(&g), 1.0, &scheme, &sp, &mp, &mut []).unwrap();
        let b = evolve(&bump(&g), 1.0, &scheme, &sp, &mp, &mut []).unwrap();
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn evolve_annotates_failures() {
        let g = SpectralGrid::new(64, PI).unwrap();
        let sp = SolverParams::with_tolerance(1.0, 1e-13, 20).unwrap();
        let mp = ModelParams::new(1.0, false).unwrap();
        let u = bump(&g).scale(c(5.0, 0.0));
        let err = evolve(&u, 2.0, &CompositionScheme::midpoint(), &sp, &mp, &mut []).unwrap_err();
        match err {
            FnlsError::Evolve { step, source, .. } => {
                assert_eq!(step, 1);
                assert!(matches!(*source, FnlsError::StageDivergence { .. }));
            }
            other => panic!("unexpected {other}"),
        }
    }
}
