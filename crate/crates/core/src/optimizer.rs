//! Inexact Gauss-Newton-Krylov outer loop with Armijo backtracking.
//!
//! Each iteration solves `H d = g` by conjugate gradients in the `<L., .>`
//! metric, with `g` the metric gradient and `H` the Gauss-Newton operator,
//! and updates `v0 <- v0 - eps d`.

use std::time::Instant;

use crate::error::{invalid, Result};
use crate::problem::{GradientReport, RegistrationProblem};
use crate::spectral::{BandLimitedField, SpectralOperators};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub max_outer_iterations: usize,
    pub cg_max_iterations: usize,
    pub cg_relative_tolerance: f64,
    pub initial_step: f64,
    pub backtracking_factor: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    pub gradient_tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_outer_iterations: 10,
            cg_max_iterations: 20,
            cg_relative_tolerance: 1e-1,
            initial_step: 1.0,
            backtracking_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 10,
            gradient_tolerance: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cg_relative_tolerance", self.cg_relative_tolerance),
            ("initial_step", self.initial_step),
            ("sufficient_decrease", self.sufficient_decrease),
            ("gradient_tolerance", self.gradient_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("backtracking_factor", self.backtracking_factor),
            ("sufficient_decrease", self.sufficient_decrease),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return invalid(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.cg_max_iterations == 0 {
            return invalid("cg_max_iterations must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: BandLimitedField,
    pub iterations: usize,
    /// `||H x_k - b||_V` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Set when `<H p, p>_V <= 0` was met; the iterate before that direction
    /// is returned.
    pub negative_curvature: bool,
}

/// Conjugate gradients for `H x = b` in the `<L., .>` inner product, started
/// from zero.
pub fn cg_solve(
    mut hvp: impl FnMut(&BandLimitedField) -> Result<BandLimitedField>,
    rhs: &BandLimitedField,
    ops: &SpectralOperators,
    max_iterations: usize,
    relative_tolerance: f64,
) -> Result<CgOutcome> {
    ops.check(rhs, "cg_solve")?;
    let mut x = BandLimitedField::zeros(ops.band());
    let b_norm = ops.norm_v(rhs);
    let mut history = vec![b_norm];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            residual_history: history,
            converged: true,
            negative_curvature: false,
        });
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = b_norm * b_norm;
    for it in 1..=max_iterations {
        let hp = hvp(&p)?;
        let curvature = ops.inner_product_v(&hp, &p)?;
        if curvature <= 0.0 || !curvature.is_finite() {
            return Ok(CgOutcome {
                solution: x,
                iterations: it - 1,
                residual_history: history,
                converged: false,
                negative_curvature: true,
            });
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &hp);
        let rr_new = ops.inner_product_v(&r, &r)?;
        history.push(rr_new.max(0.0).sqrt());
        if rr_new.sqrt() <= relative_tolerance * b_norm {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                residual_history: history,
                converged: true,
                negative_curvature: false,
            });
        }
        p = r.plus(rr_new / rr, &p);
        rr = rr_new;
    }
    Ok(CgOutcome {
        solution: x,
        iterations: max_iterations,
        residual_history: history,
        converged: false,
        negative_curvature: false,
    })
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub iteration: usize,
    pub energy: f64,
    pub mse_rel: f64,
    pub grad_inf_rel: f64,
    pub cg_iterations: usize,
    pub step_length: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<ConvergenceRow>,
    /// The last iteration found no acceptable step.
    pub stalled: bool,
    /// A CG solve met non-positive curvature.
    pub negative_curvature: bool,
}

impl ConvergenceRecord {
    fn push(&mut self, row: ConvergenceRow) {
        debug_assert!(self.rows.last().map_or(true, |r| r.iteration < row.iteration));
        self.rows.push(row);
    }
}

/// Result of one accepted or rejected outer step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub v0: BandLimitedField,
    /// Report at the new point, gradient included, when a step was accepted.
    pub report: Option<GradientReport>,
    pub step_length: f64,
    pub cg: CgOutcome,
    /// The Gauss-Newton direction failed and a gradient step was taken.
    pub used_gradient_fallback: bool,
    pub stalled: bool,
}

/// `max |iota(g)|` over the grid and all components.
pub fn gradient_inf_norm(g: &BandLimitedField, ops: &SpectralOperators) -> Result<f64> {
    Ok(ops.include(g)?.max_abs())
}

/// `(MSE_rel, grad_inf_rel)` at `v0` relative to the initial gradient norm.
pub fn metrics(problem: &RegistrationProblem, v0: &BandLimitedField, g0_norm: f64) -> Result<(f64, f64)> {
    let report = problem.gradient(v0)?;
    let mse_rel = problem.mse_rel(&report.forward.warped)?;
    let g = gradient_inf_norm(report.gradient.as_ref().expect("gradient requested"), problem.ops())?;
    let rel = if g0_norm > 0.0 { g / g0_norm } else { 0.0 };
    Ok((mse_rel, rel))
}

/// Backtracks from `config.initial_step` along `-direction` until the Armijo
/// condition holds. Returns the accepted step and the trial point's report.
fn line_search(
    problem: &RegistrationProblem,
    report: &GradientReport,
    direction: &BandLimitedField,
    config: &OptimizerConfig,
) -> Result<Option<(f64, BandLimitedField)>> {
    let g = report.gradient.as_ref().expect("gradient report");
    let slope = problem.ops().inner_product_v(g, direction)?;
    if !(slope > 0.0) {
        return Ok(None);
    }
    let mut eps = config.initial_step;
    for _ in 0..=config.max_backtracks {
        let trial = report.v0.plus(-eps, direction);
        match problem.evaluate(&trial) {
            Ok(r) if r.energy <= report.energy - config.sufficient_decrease * eps * slope => {
                return Ok(Some((eps, trial)));
            }
            Ok(_) | Err(crate::Error::NumericalBlowup { .. }) => {}
            Err(e) => return Err(e),
        }
        eps *= config.backtracking_factor;
    }
    Ok(None)
}

/// One Gauss-Newton-Krylov iteration from a report that carries a gradient.
pub fn step_from(problem: &RegistrationProblem, report: &GradientReport, config: &OptimizerConfig) -> Result<StepOutcome> {
    let g = report.gradient.as_ref().ok_or_else(|| {
        crate::Error::InvalidState("step_from needs a report produced by gradient()".into())
    })?;
    let cg = cg_solve(
        |p| problem.gauss_newton_hvp(report, p),
        g,
        problem.ops(),
        config.cg_max_iterations,
        config.cg_relative_tolerance,
    )?;
    let mut fallback = false;
    let mut accepted = if cg.iterations > 0 { line_search(problem, report, &cg.solution, config)? } else { None };
    if accepted.is_none() {
        fallback = true;
        accepted = line_search(problem, report, g, config)?;
    }
    Ok(match accepted {
        Some((eps, v)) => StepOutcome {
            report: Some(problem.gradient(&v)?),
            v0: v,
            step_length: eps,
            cg,
            used_gradient_fallback: fallback,
            stalled: false,
        },
        None => StepOutcome {
            v0: report.v0.clone(),
            report: None,
            step_length: 0.0,
            cg,
            used_gradient_fallback: fallback,
            stalled: true,
        },
    })
}

/// Gradient at `v0` followed by one iteration.
pub fn step(problem: &RegistrationProblem, v0: &BandLimitedField, config: &OptimizerConfig) -> Result<StepOutcome> {
    step_from(problem, &problem.gradient(v0)?, config)
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub v0: BandLimitedField,
    pub record: ConvergenceRecord,
    pub report: GradientReport,
}

/// Runs up to `max_outer_iterations` steps, calling `on_row` after each
/// recorded row (row 0 describes the initial point).
pub fn run(
    problem: &RegistrationProblem,
    v0_init: &BandLimitedField,
    config: &OptimizerConfig,
    mut on_row: impl FnMut(&ConvergenceRow) -> Result<()>,
) -> Result<RunOutcome> {
    config.validate()?;
    let clock = Instant::now();
    let mut report = problem.gradient(v0_init)?;
    let g0 = gradient_inf_norm(report.gradient.as_ref().expect("gradient"), problem.ops())?;
    let mut record = ConvergenceRecord::default();
    let row = ConvergenceRow {
        iteration: 0,
        energy: report.energy,
        mse_rel: problem.mse_rel(&report.forward.warped)?,
        grad_inf_rel: 1.0,
        cg_iterations: 0,
        step_length: 0.0,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    on_row(&row)?;
    record.push(row);
    let mut v0 = v0_init.clone();
    if g0 == 0.0 {
        return Ok(RunOutcome { v0, record, report });
    }
    for it in 1..=config.max_outer_iterations {
        let out = step_from(problem, &report, config)?;
        record.negative_curvature |= out.cg.negative_curvature;
        let Some(next) = out.report else {
            record.stalled = true;
            break;
        };
        debug_assert!(next.energy <= report.energy);
        let g = gradient_inf_norm(next.gradient.as_ref().expect("gradient"), problem.ops())?;
        let row = ConvergenceRow {
            iteration: it,
            energy: next.energy,
            mse_rel: problem.mse_rel(&next.forward.warped)?,
            grad_inf_rel: g / g0,
            cg_iterations: out.cg.iterations,
            step_length: out.step_length,
            wall_time_s: clock.elapsed().as_secs_f64(),
        };
        on_row(&row)?;
        let done = row.grad_inf_rel <= config.gradient_tolerance;
        record.push(row);
        v0 = out.v0;
        report = next;
        if done {
            break;
        }
    }
    Ok(RunOutcome { v0, record, report })
}
