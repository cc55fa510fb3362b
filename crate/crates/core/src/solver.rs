//! Alternating split Bregman iteration for the weighted least-gradient
//! problem, together with the classical fixed-point baseline it replaces.
//!
//! One Bregman sweep, with `u_f` a fixed voltage matching the boundary data
//! and `a = |J|` the weight:
//!
//! 1. solve `Laplacian u = div(d - b)` with zero boundary values,
//! 2. set `v = u + u_f`,
//! 3. `d = shrink(grad v + b, a/lambda)` (vectorial soft threshold),
//! 4. `b = b + grad v - d`.
//!
//! The iteration stops when the relative change of `v` drops below the
//! configured tolerance; the conductivity is then `sigma = a / |grad v|`
//! with a relative floor on the gradient magnitude, and the physical current
//! is recovered from the dual variable as `J = -lambda b`.
//!
//! The sweep is an operator-splitting step of a firmly non-expansive map, so
//! the step sizes `|x_{k+1} - x_k|` are non-increasing and the residuals
//! `|grad v^{k+1} - d^k|` are square-summable; both are recorded per
//! iteration, along with primal/dual energies and the duality gap.

use thiserror::Error;

use crate::dual;
use crate::elliptic::{
    apply_laplacian, harmonic_extension, poisson_dirichlet_cg_with, conductivity_solve,
    DirichletPoisson, EllipticError, SolveReport,
};
use crate::field::{
    divergence, gradient, magnitude, BoundaryData, FieldError, ScalarField, VectorField2,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sub-solve failed at iteration {iteration}: {detail}")]
    SubSolver { iteration: usize, detail: String },
    #[error("iterates became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// How the Poisson sub-problem is solved in each sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    /// Direct fast-transform solve to the sub-solver tolerance.
    Exact,
    /// Conjugate-gradient solve to the error budget `alpha0 * rho^k` at
    /// sweep `k`. The geometric decay (`rho < 1`) keeps the budgets summable,
    /// which the convergence theory requires; `alpha0 = 0` reproduces the
    /// exact path verbatim.
    Approximate { alpha0: f64, rho: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct ReconstructionConfig {
    /// Coupling weight of the quadratic penalty. The reconstruction is
    /// invariant to it; it only reschedules the iteration.
    pub lambda: f64,
    /// Stop when the relative change of `v` drops to this value.
    pub tol: f64,
    pub max_iters: usize,
    /// Residual tolerance for the inner elliptic solves.
    pub sub_solver_tol: f64,
    /// Relative floor on `|grad v|` in the conductivity recovery:
    /// `eps = gradient_floor_rel * max |grad v|`.
    pub gradient_floor_rel: f64,
    pub mode: SolveMode,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            lambda: 1.0,
            tol: 1e-4,
            max_iters: 500,
            sub_solver_tol: 1e-10,
            gradient_floor_rel: 1e-8,
            mode: SolveMode::Exact,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "tolerance must be non-negative, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(SolverError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.sub_solver_tol.is_finite() && self.sub_solver_tol > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "sub-solver tolerance must be positive, got {}",
                self.sub_solver_tol
            )));
        }
        if !(self.gradient_floor_rel.is_finite() && self.gradient_floor_rel > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "gradient floor must be positive, got {}",
                self.gradient_floor_rel
            )));
        }
        if let SolveMode::Approximate { alpha0, rho } = self.mode {
            if !(alpha0.is_finite() && alpha0 >= 0.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "alpha0 must be non-negative, got {alpha0}"
                )));
            }
            if !(rho.is_finite() && rho > 0.0 && rho < 1.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "rho must lie in (0, 1) so the error budgets are summable, got {rho}"
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shrinkage
// ---------------------------------------------------------------------------

/// Vectorial soft threshold: the pointwise minimizer of
/// `a |e| + (lambda/2) |q - e|^2`, namely
/// `max(|q| - a/lambda, 0) * q / |q|` (zero where `q` vanishes).
pub fn shrink(q: &VectorField2, a: &ScalarField, lambda: f64) -> VectorField2 {
    let grid = q.grid();
    assert_eq!(grid.nx(), a.grid().nx(), "grid mismatch");
    let mut out = VectorField2::zeros(grid);
    for k in 0..grid.len() {
        let qx = q.x()[k];
        let qy = q.y()[k];
        let m = qx.hypot(qy);
        let t = a.values()[k] / lambda;
        if m > t {
            let s = (m - t) / m;
            out.x_mut()[k] = s * qx;
            out.y_mut()[k] = s * qy;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Iteration state and trace
// ---------------------------------------------------------------------------

/// State after `k` sweeps. `v = u + u_f` is the voltage iterate; `d` tracks
/// `grad v` and `b` accumulates the constraint violations (the dual variable
/// up to the factor `lambda`).
#[derive(Debug, Clone)]
pub struct BregmanState {
    pub k: usize,
    pub u: ScalarField,
    pub v: ScalarField,
    pub d: VectorField2,
    pub b: VectorField2,
}

/// Per-sweep diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct TraceEntry {
    pub k: usize,
    /// `|grad v^{k+1} - d^k|`; square-summable, drives convergence.
    pub residual: f64,
    /// `|grad v^{k+1}|`, the scale the residual is judged against.
    pub gradient_norm: f64,
    /// `|x_{k+1} - x_k|` of the underlying splitting map; equals
    /// `lambda * residual` and never increases.
    pub step_size: f64,
    /// Weighted gradient energy of the current voltage.
    pub energy: f64,
    /// Raw dual objective of `lambda b`.
    pub dual_value: f64,
    /// Dual objective after clipping `lambda b` into the constraint ball.
    pub dual_feasible: f64,
    /// `energy - dual_feasible`.
    pub gap: f64,
    /// Pre-clip magnitude excess `max(|lambda b| - a)`.
    pub dual_violation: f64,
    /// Relative change of `v` in this sweep (the stopping quantity).
    pub rel_change: f64,
    pub sub_iterations: usize,
    pub sub_residual: f64,
    /// Relative error of the recovered conductivity outside the gradient
    /// floor, when ground truth was supplied.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub entries: Vec<TraceEntry>,
}

impl IterationTrace {
    pub fn new() -> Self {
        IterationTrace::default()
    }

    pub fn last(&self) -> Option<&TraceEntry> {
        self.entries.last()
    }
}

// ---------------------------------------------------------------------------
// Conductivity recovery
// ---------------------------------------------------------------------------

/// `sigma = a / max(|grad v|, eps)` plus the mask of floored nodes.
#[derive(Debug, Clone)]
pub struct SigmaRecovery {
    pub sigma: ScalarField,
    /// True where `|grad v|` fell below the floor; the data does not
    /// determine the conductivity there.
    pub mask: Vec<bool>,
    pub floored_fraction: f64,
}

pub fn recover_sigma(a: &ScalarField, v: &ScalarField, floor_rel: f64) -> SigmaRecovery {
    let grid = v.grid();
    assert_eq!(grid.nx(), a.grid().nx(), "grid mismatch");
    let mag = magnitude(&gradient(v));
    let gmax = mag.max_value();
    let len = grid.len();
    if gmax <= 0.0 {
        return SigmaRecovery {
            sigma: ScalarField::zeros(grid),
            mask: vec![true; len],
            floored_fraction: 1.0,
        };
    }
    let eps = floor_rel * gmax;
    let mut mask = vec![false; len];
    let mut floored = 0usize;
    let mut sigma = ScalarField::zeros(grid);
    for k in 0..len {
        let m = mag.values()[k];
        if m < eps {
            mask[k] = true;
            floored += 1;
        }
        sigma.values_mut()[k] = a.values()[k] / m.max(eps);
    }
    SigmaRecovery {
        sigma,
        mask,
        floored_fraction: floored as f64 / len as f64,
    }
}

/// Relative L2 error over all nodes.
pub fn relative_l2_error(estimate: &ScalarField, truth: &ScalarField) -> f64 {
    estimate.sub(truth).norm() / truth.norm().max(f64::MIN_POSITIVE)
}

/// Relative L2 error over nodes where `mask` is false. Floored nodes carry
/// no information about the conductivity, so error reporting excludes them.
pub fn masked_relative_l2_error(
    estimate: &ScalarField,
    truth: &ScalarField,
    mask: &[bool],
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((e, t), m) in estimate
        .values()
        .iter()
        .zip(truth.values())
        .zip(mask)
    {
        if !m {
            num += (e - t) * (e - t);
            den += t * t;
        }
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

// ---------------------------------------------------------------------------
// The Bregman sweep
// ---------------------------------------------------------------------------

/// The voltage-change stopping test is only trusted once the split residual
/// has dropped below this fraction of the gradient norm.
const LOCK_FRACTION: f64 = 0.1;

/// Precomputed problem data shared by all sweeps of one reconstruction:
/// the weight, the reference voltage and its gradient, and the factored
/// Poisson solver.
pub struct BregmanContext {
    a: ScalarField,
    u_f: ScalarField,
    /// Interior Laplacian of the reference voltage. The sweep's Poisson
    /// right-hand side is `div(d - b) - lap_uf`; the correction vanishes for
    /// a harmonic reference but makes the iterates exactly invariant to
    /// zero-boundary shifts of `u_f` in general.
    lap_uf: ScalarField,
    poisson: DirichletPoisson,
    config: ReconstructionConfig,
}

impl BregmanContext {
    /// Build the context from boundary data; the reference voltage is the
    /// discrete harmonic extension of `f`.
    pub fn new(
        a: &ScalarField,
        f: &BoundaryData,
        config: ReconstructionConfig,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        if a.grid().nx() != f.grid().nx() {
            return Err(FieldError::GridMismatch(a.grid().nx(), f.grid().nx()).into());
        }
        let (u_f, report) = harmonic_extension(f, config.sub_solver_tol);
        if !report.converged {
            return Err(SolverError::SubSolver {
                iteration: 0,
                detail: format!(
                    "harmonic extension residual {} above tolerance",
                    report.relative_residual
                ),
            });
        }
        Ok(Self::with_reference_voltage(a, u_f, config))
    }

    /// Build the context with an explicit reference voltage (any field whose
    /// boundary trace equals the measured voltage). The reconstruction does
    /// not depend on the interior values of `u_f`.
    pub fn with_reference_voltage(
        a: &ScalarField,
        u_f: ScalarField,
        config: ReconstructionConfig,
    ) -> Self {
        let poisson = DirichletPoisson::new(a.grid());
        let lap_uf = apply_laplacian(&u_f);
        BregmanContext {
            a: a.clone(),
            u_f,
            lap_uf,
            poisson,
            config,
        }
    }

    pub fn config(&self) -> &ReconstructionConfig {
        &self.config
    }

    pub fn reference_voltage(&self) -> &ScalarField {
        &self.u_f
    }

    /// Zero-initialized state: `u = 0`, `v = u_f`, `d = b = 0`.
    pub fn initial_state(&self) -> BregmanState {
        let grid = self.a.grid();
        BregmanState {
            k: 0,
            u: ScalarField::zeros(grid),
            v: self.u_f.clone(),
            d: VectorField2::zeros(grid),
            b: VectorField2::zeros(grid),
        }
    }

    fn sub_solve(
        &self,
        rhs: &ScalarField,
        state: &BregmanState,
    ) -> Result<(ScalarField, SolveReport), SolverError> {
        let exact = |iteration: usize| -> Result<(ScalarField, SolveReport), SolverError> {
            let (u, report) = self.poisson.solve_reporting(rhs, self.config.sub_solver_tol);
            if !report.converged {
                return Err(SolverError::SubSolver {
                    iteration,
                    detail: format!(
                        "direct solve residual {} above tolerance {}",
                        report.relative_residual, self.config.sub_solver_tol
                    ),
                });
            }
            Ok((u, report))
        };
        match self.config.mode {
            SolveMode::Exact => exact(state.k + 1),
            SolveMode::Approximate { alpha0, rho } => {
                let alpha_k = alpha0 * rho.powi(state.k as i32);
                if alpha_k <= 0.0 {
                    return exact(state.k + 1);
                }
                // An h-weighted gradient error |grad(u - u*)| <= alpha_k is
                // implied by a residual norm of alpha_k * sqrt(mu_min) / h,
                // with mu_min the smallest eigenvalue of the negative
                // Laplacian.
                let target = alpha_k * self.poisson.min_eigenvalue().sqrt()
                    / self.a.grid().h();
                let (u, report) = poisson_dirichlet_cg_with(
                    rhs,
                    self.config.sub_solver_tol,
                    50_000,
                    Some(target),
                    Some(&state.u),
                );
                if !report.converged {
                    return Err(SolverError::SubSolver {
                        iteration: state.k + 1,
                        detail: format!(
                            "inexact solve missed its error budget {alpha_k:.3e}"
                        ),
                    });
                }
                Ok((u, report))
            }
        }
    }

    /// One sweep. Appends a trace entry and returns the advanced state.
    pub fn step(
        &self,
        state: &BregmanState,
        trace: &mut IterationTrace,
        truth: Option<&ScalarField>,
    ) -> Result<BregmanState, SolverError> {
        let rhs = divergence(&state.d.sub(&state.b)).sub(&self.lap_uf);
        let (u_new, sub_report) = self.sub_solve(&rhs, state)?;
        let v_new = u_new.add(&self.u_f);
        if !v_new.is_finite() {
            return Err(SolverError::NonFinite {
                iteration: state.k + 1,
            });
        }
        let gv = gradient(&v_new);
        let residual = gv.sub(&state.d).norm();
        let q = gv.add(&state.b);
        let d_new = shrink(&q, &self.a, self.config.lambda);
        let b_new = q.sub(&d_new);

        let scaled_b = b_new.scale(self.config.lambda);
        let energy = dual::primal_energy(&v_new, &self.a);
        let dual_value = dual::dual_objective(&scaled_b, &self.u_f);
        let candidate = dual::project_feasible(&scaled_b, &self.a);
        let dual_feasible = dual::dual_objective(&candidate.b, &self.u_f);
        let v_norm = v_new.norm();
        let diff_norm = v_new.sub(&state.v).norm();
        let rel_change = if v_norm > 0.0 {
            diff_norm / v_norm
        } else if diff_norm > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let error = truth.map(|t| {
            let rec = recover_sigma(&self.a, &v_new, self.config.gradient_floor_rel);
            masked_relative_l2_error(&rec.sigma, t, &rec.mask)
        });
        trace.entries.push(TraceEntry {
            k: state.k + 1,
            residual,
            gradient_norm: gv.norm(),
            step_size: self.config.lambda * residual,
            energy,
            dual_value,
            dual_feasible,
            gap: energy - dual_feasible,
            dual_violation: candidate.max_violation,
            rel_change,
            sub_iterations: sub_report.iterations,
            sub_residual: sub_report.relative_residual,
            error,
        });
        Ok(BregmanState {
            k: state.k + 1,
            u: u_new,
            v: v_new,
            d: d_new,
            b: b_new,
        })
    }
}

// ---------------------------------------------------------------------------
// Full reconstructions
// ---------------------------------------------------------------------------

/// A completed reconstruction with its diagnostics.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub sigma: ScalarField,
    pub v: ScalarField,
    /// Physical current recovered from the dual variable, `J = -lambda b`.
    pub current: VectorField2,
    /// Nodes where the gradient floor was active in the recovery.
    pub floor_mask: Vec<bool>,
    pub floored_fraction: f64,
    pub trace: IterationTrace,
    pub converged: bool,
    pub iterations: usize,
    pub final_state: BregmanState,
}

/// Optional knobs for [`reconstruct_with`].
#[derive(Debug, Default)]
pub struct ReconstructOptions<'a> {
    /// Initial `(d, b)`; zeros when absent. Convergence does not depend on
    /// the choice.
    pub init: Option<(VectorField2, VectorField2)>,
    /// Ground-truth conductivity for per-sweep error reporting.
    pub truth: Option<&'a ScalarField>,
    /// Replace the harmonic reference voltage (must match `f` on the
    /// boundary).
    pub reference_voltage: Option<ScalarField>,
}

pub fn reconstruct(
    a: &ScalarField,
    f: &BoundaryData,
    config: ReconstructionConfig,
) -> Result<Reconstruction, SolverError> {
    reconstruct_with(a, f, config, ReconstructOptions::default())
}

pub fn reconstruct_with(
    a: &ScalarField,
    f: &BoundaryData,
    config: ReconstructionConfig,
    options: ReconstructOptions,
) -> Result<Reconstruction, SolverError> {
    let ctx = match options.reference_voltage {
        Some(u_f) => {
            config.validate()?;
            BregmanContext::with_reference_voltage(a, u_f, config)
        }
        None => BregmanContext::new(a, f, config)?,
    };
    let mut state = ctx.initial_state();
    if let Some((d0, b0)) = options.init {
        if d0.grid().nx() != a.grid().nx() || b0.grid().nx() != a.grid().nx() {
            return Err(FieldError::GridMismatch(d0.grid().nx(), a.grid().nx()).into());
        }
        state.d = d0;
        state.b = b0;
    }
    let mut trace = IterationTrace::new();
    let mut converged = false;
    while state.k < config.max_iters {
        state = ctx.step(&state, &mut trace, options.truth)?;
        // The voltage shadow of the iteration is stationary while b is still
        // ramping up to the shrink threshold (it starts at exactly the
        // reference voltage), so the relative-change test only counts once
        // d has locked onto grad v.
        let stop = trace.last().map(|e| {
            e.rel_change <= config.tol && e.residual <= LOCK_FRACTION * e.gradient_norm
        });
        if stop.unwrap_or(false) {
            converged = true;
            break;
        }
    }
    let recovery = recover_sigma(a, &state.v, config.gradient_floor_rel);
    let current = dual::recover_current(&state.b, config.lambda);
    Ok(Reconstruction {
        sigma: recovery.sigma,
        v: state.v.clone(),
        current,
        floor_mask: recovery.mask,
        floored_fraction: recovery.floored_fraction,
        trace,
        converged,
        iterations: state.k,
        final_state: state,
    })
}

/// Reconstruction with inexact Poisson sub-solves. Requires an
/// [`SolveMode::Approximate`] configuration.
pub fn approximate_reconstruct(
    a: &ScalarField,
    f: &BoundaryData,
    config: ReconstructionConfig,
) -> Result<Reconstruction, SolverError> {
    if !matches!(config.mode, SolveMode::Approximate { .. }) {
        return Err(SolverError::InvalidConfig(
            "approximate_reconstruct requires SolveMode::Approximate".into(),
        ));
    }
    reconstruct(a, f, config)
}

// ---------------------------------------------------------------------------
// Classical fixed-point baseline
// ---------------------------------------------------------------------------

/// Why a baseline run stopped before reaching its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownReason {
    /// The gradient floor was active on more than 1% of the nodes for three
    /// consecutive iterations; the update `sigma = a / |grad v|` is no
    /// longer meaningful.
    DegenerateGradient,
    /// The inner conductivity solve failed or stalled, typically because the
    /// iterated conductivity developed extreme contrast.
    InnerSolveFailed,
    /// Iterates left the range of finite floating point values.
    NonFinite,
}

impl std::fmt::Display for BreakdownReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BreakdownReason::DegenerateGradient => {
                write!(f, "gradient degenerate on more than 1% of nodes")
            }
            BreakdownReason::InnerSolveFailed => write!(f, "inner conductivity solve failed"),
            BreakdownReason::NonFinite => write!(f, "iterates became non-finite"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimpleTraceEntry {
    pub k: usize,
    /// Relative change of the conductivity iterate; absent on the first one.
    pub rel_change: Option<f64>,
    /// Fraction of data-active nodes (`a > 0`) whose voltage gradient fell
    /// below the recovery floor. Nodes with no measured current say nothing
    /// about the update being degenerate, so they are not counted.
    pub floored_fraction: f64,
    /// Fraction of data-active nodes whose voltage gradient sits below the
    /// much coarser breakdown threshold. This is the signal the breakdown
    /// detector watches: a growing near-critical set means the division is
    /// manufacturing conductivity from vanishing gradients.
    pub near_degenerate_fraction: f64,
    pub error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimpleResult {
    pub sigma: ScalarField,
    pub v: ScalarField,
    pub floor_mask: Vec<bool>,
    pub trace: Vec<SimpleTraceEntry>,
    pub converged: bool,
    pub breakdown: Option<BreakdownReason>,
    pub iterations: usize,
}

/// Relative gradient threshold for the breakdown detector. Deliberately much
/// coarser than the recovery floor: the recovery floor guards the division
/// against overflow, while this threshold watches for the voltage developing
/// interior critical points, which happens at a visible scale first.
const BREAKDOWN_GRADIENT_REL: f64 = 1e-3;
/// Consecutive sweeps with a non-empty near-degenerate set before declaring
/// breakdown. An interior critical point that survives this many conductivity
/// solves is structural (the boundary data is not two-to-one), not a
/// transient of the first few iterates.
const BREAKDOWN_PATIENCE: usize = 10;
/// Positivity clamp applied to the conductivity iterate so the inner solve
/// stays well-posed; the breakdown detector is the real safeguard.
const SIGMA_CLAMP: (f64, f64) = (1e-9, 1e9);

/// Replace masked values by the average of already-valid 4-neighbors,
/// sweeping inward until the whole mask is covered. Keeps the fill local, so
/// a masked boundary band borrows values from the rows next to it instead of
/// from the global statistics.
fn fill_masked_from_neighbors(field: &mut ScalarField, mask: &[bool], fallback: f64) {
    let grid = field.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut valid: Vec<bool> = mask.iter().map(|m| !m).collect();
    if valid.iter().all(|&ok| ok) {
        return;
    }
    if valid.iter().all(|&ok| !ok) {
        for s in field.values_mut() {
            *s = fallback;
        }
        return;
    }
    loop {
        let mut updates: Vec<(usize, f64)> = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = grid.idx(i, j);
                if valid[k] {
                    continue;
                }
                let mut acc = 0.0;
                let mut cnt = 0usize;
                let mut take = |ii: usize, jj: usize| {
                    let kk = grid.idx(ii, jj);
                    if valid[kk] {
                        acc += field.values()[kk];
                        cnt += 1;
                    }
                };
                if i > 0 {
                    take(i - 1, j);
                }
                if i + 1 < nx {
                    take(i + 1, j);
                }
                if j > 0 {
                    take(i, j - 1);
                }
                if j + 1 < ny {
                    take(i, j + 1);
                }
                if cnt > 0 {
                    updates.push((k, acc / cnt as f64));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (k, v) in updates {
            field.values_mut()[k] = v;
            valid[k] = true;
        }
        if valid.iter().all(|&ok| ok) {
            break;
        }
    }
}

/// The classical alternating scheme: solve the conductivity equation with
/// the current `sigma`, then update `sigma = a / |grad v|`. Works for
/// two-to-one boundary data; for boundary data whose harmonic extension has
/// critical points the division degenerates and the run ends with a
/// breakdown flag rather than an error.
pub fn simple_iterations(
    a: &ScalarField,
    f: &BoundaryData,
    config: ReconstructionConfig,
    truth: Option<&ScalarField>,
) -> Result<SimpleResult, SolverError> {
    config.validate()?;
    if a.grid().nx() != f.grid().nx() {
        return Err(FieldError::GridMismatch(a.grid().nx(), f.grid().nx()).into());
    }
    let (u_h, report) = harmonic_extension(f, config.sub_solver_tol);
    if !report.converged {
        return Err(SolverError::SubSolver {
            iteration: 0,
            detail: "harmonic extension did not converge".into(),
        });
    }
    let mut v = u_h;
    let mut sigma_prev: Option<ScalarField> = None;
    let mut mask = vec![false; a.grid().len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut breakdown = None;
    let mut consecutive_degenerate = 0usize;
    let mut iterations = 0usize;
    let mut sigma_out = ScalarField::zeros(a.grid());
    let active: Vec<bool> = a.values().iter().map(|&w| w > 0.0).collect();
    let active_count = active.iter().filter(|&&x| x).count().max(1);

    for k in 1..=config.max_iters {
        iterations = k;
        let gm = magnitude(&gradient(&v));
        let gmax = gm.max_value();
        let near_degenerate = gm
            .values()
            .iter()
            .zip(&active)
            .filter(|(g, act)| **act && **g < BREAKDOWN_GRADIENT_REL * gmax)
            .count();
        let near_degenerate_fraction = near_degenerate as f64 / active_count as f64;
        let recovery = recover_sigma(a, &v, config.gradient_floor_rel);
        let mut sigma = recovery.sigma;
        // Floored nodes get values extended from their neighbors so the next
        // solve stays well-conditioned; a near-zero conductivity row would
        // act like an insulating wall and distort the voltage around it.
        fill_masked_from_neighbors(&mut sigma, &recovery.mask, 1.0);
        for s in sigma.values_mut() {
            *s = s.clamp(SIGMA_CLAMP.0, SIGMA_CLAMP.1);
        }
        mask = recovery.mask;
        let floored = mask
            .iter()
            .zip(&active)
            .filter(|(m, act)| **m && **act)
            .count();
        let floored_fraction = floored as f64 / active_count as f64;
        let rel_change = sigma_prev
            .as_ref()
            .map(|prev| sigma.sub(prev).norm() / sigma.norm().max(f64::MIN_POSITIVE));
        let error = truth.map(|t| masked_relative_l2_error(&sigma, t, &mask));
        trace.push(SimpleTraceEntry {
            k,
            rel_change,
            floored_fraction,
            near_degenerate_fraction,
            error,
        });
        if !sigma.is_finite() {
            breakdown = Some(BreakdownReason::NonFinite);
            sigma_out = sigma;
            break;
        }
        if near_degenerate > 0 {
            consecutive_degenerate += 1;
        } else {
            consecutive_degenerate = 0;
        }
        if consecutive_degenerate >= BREAKDOWN_PATIENCE {
            breakdown = Some(BreakdownReason::DegenerateGradient);
            sigma_out = sigma;
            break;
        }
        if rel_change.map(|r| r <= config.tol).unwrap_or(false) {
            converged = true;
            sigma_out = sigma;
            break;
        }
        match conductivity_solve(&sigma, f, config.sub_solver_tol) {
            Ok((v_new, rep)) => {
                if !rep.converged || !v_new.is_finite() {
                    breakdown = Some(BreakdownReason::InnerSolveFailed);
                    sigma_out = sigma;
                    break;
                }
                v = v_new;
            }
            Err(_) => {
                breakdown = Some(BreakdownReason::InnerSolveFailed);
                sigma_out = sigma;
                break;
            }
        }
        sigma_out = sigma.clone();
        sigma_prev = Some(sigma);
    }

    Ok(SimpleResult {
        sigma: sigma_out,
        v,
        floor_mask: mask,
        trace,
        converged,
        breakdown,
        iterations,
    })
}
