//! Elliptic solvers on the unit square with Dirichlet boundary conditions:
//! the 5-point Poisson problem (a fast sine-transform direct path and a
//! conjugate-gradient path), discrete harmonic extension of boundary data,
//! and the variable-coefficient conductivity equation.
//!
//! All solvers share one residual-based contract: the returned report states
//! the relative residual of the discrete system actually solved, and callers
//! decide what to do with a non-converged flag. Conductivity edges use the
//! harmonic mean of the two adjacent node values, which keeps fluxes bounded
//! across large jumps.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::field::{BoundaryData, FieldError, Grid2D, ScalarField};

#[derive(Debug, Error)]
pub enum EllipticError {
    #[error("conductivity must be strictly positive, found {value} at node ({i}, {j})")]
    NonPositiveConductivity { i: usize, j: usize, value: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Outcome of one linear solve. `relative_residual` is measured on the
/// discrete system (Euclidean norm over interior nodes, relative to the
/// right-hand side).
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// 5-point stencil helpers
// ---------------------------------------------------------------------------

/// Apply the 5-point Laplacian to `u` at interior nodes (boundary rows of the
/// output are zero). Boundary values of `u` participate in the stencil.
pub fn apply_laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let n = grid.nx();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let v = u.values();
    let mut out = ScalarField::zeros(grid);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = j * n + i;
            out.values_mut()[k] =
                (v[k + 1] + v[k - 1] + v[k + n] + v[k - n] - 4.0 * v[k]) * inv_h2;
        }
    }
    out
}

fn interior_of(u: &ScalarField) -> Vec<f64> {
    let n = u.grid().nx();
    let m = n - 2;
    let v = u.values();
    let mut out = vec![0.0; m * m];
    for jj in 0..m {
        for ii in 0..m {
            out[jj * m + ii] = v[(jj + 1) * n + (ii + 1)];
        }
    }
    out
}

fn field_from_interior(grid: Grid2D, int: &[f64]) -> ScalarField {
    let n = grid.nx();
    let m = n - 2;
    let mut out = ScalarField::zeros(grid);
    for jj in 0..m {
        for ii in 0..m {
            out.values_mut()[(jj + 1) * n + (ii + 1)] = int[jj * m + ii];
        }
    }
    out
}

fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `-Laplacian` on interior-node vectors (zero Dirichlet), symmetric positive
/// definite.
fn apply_neg_laplacian(m: usize, inv_h2: f64, u: &[f64], out: &mut [f64]) {
    for jj in 0..m {
        for ii in 0..m {
            let k = jj * m + ii;
            let mut s = 4.0 * u[k];
            if ii + 1 < m {
                s -= u[k + 1];
            }
            if ii > 0 {
                s -= u[k - 1];
            }
            if jj + 1 < m {
                s -= u[k + m];
            }
            if jj > 0 {
                s -= u[k - m];
            }
            out[k] = s * inv_h2;
        }
    }
}

// ---------------------------------------------------------------------------
// Fast sine-transform direct solver
// ---------------------------------------------------------------------------

/// Direct solver for the zero-Dirichlet 5-point Poisson problem, built on the
/// diagonalization of the stencil in the type-I discrete sine basis. One
/// instance caches the FFT plan and eigenvalues for a grid and can be reused
/// across many solves.
pub struct DirichletPoisson {
    grid: Grid2D,
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    eig: Vec<f64>,
}

impl DirichletPoisson {
    pub fn new(grid: Grid2D) -> Self {
        let m = grid.interior();
        let fft_len = 2 * (m + 1);
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let h = grid.h();
        let eig = (1..=m)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * (m as f64 + 1.0))).sin();
                -4.0 * s * s / (h * h)
            })
            .collect();
        DirichletPoisson {
            grid,
            m,
            fft,
            fft_len,
            eig,
        }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Smallest eigenvalue of `-Laplacian` on this grid; relates gradient-norm
    /// error bounds to residual norms for inexact sub-solves.
    pub fn min_eigenvalue(&self) -> f64 {
        -2.0 * self.eig[0]
    }

    /// Unnormalized type-I sine transform of every row, then every column.
    fn dst2d(&self, w: &mut [f64]) {
        let m = self.m;
        let l = self.fft_len;
        let mut buf = vec![Complex::new(0.0, 0.0); l];
        let mut scratch =
            vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for row in 0..m {
            let base = row * m;
            for q in buf.iter_mut() {
                *q = Complex::new(0.0, 0.0);
            }
            for i in 0..m {
                let v = w[base + i];
                buf[i + 1].re = v;
                buf[l - 1 - i].re = -v;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for i in 0..m {
                w[base + i] = -0.5 * buf[i + 1].im;
            }
        }
        for col in 0..m {
            for q in buf.iter_mut() {
                *q = Complex::new(0.0, 0.0);
            }
            for j in 0..m {
                let v = w[j * m + col];
                buf[j + 1].re = v;
                buf[l - 1 - j].re = -v;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..m {
                w[j * m + col] = -0.5 * buf[j + 1].im;
            }
        }
    }

    /// Solve `Laplacian u = rhs` on interior nodes, `u = 0` on the boundary.
    /// Interior-vector form used by preconditioning.
    pub fn solve_interior(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.m;
        assert_eq!(rhs.len(), m * m, "interior vector length");
        let mut w = rhs.to_vec();
        self.dst2d(&mut w);
        for jj in 0..m {
            for ii in 0..m {
                w[jj * m + ii] /= self.eig[ii] + self.eig[jj];
            }
        }
        self.dst2d(&mut w);
        let scale = (2.0 / (m as f64 + 1.0)).powi(2);
        for v in w.iter_mut() {
            *v *= scale;
        }
        w
    }

    /// Solve `Laplacian u = rhs` with zero boundary values; `rhs` is read at
    /// interior nodes only.
    pub fn solve(&self, rhs: &ScalarField) -> ScalarField {
        let int = interior_of(rhs);
        let sol = self.solve_interior(&int);
        field_from_interior(self.grid, &sol)
    }

    /// Solve and report the achieved residual against `tol`.
    pub fn solve_reporting(&self, rhs: &ScalarField, tol: f64) -> (ScalarField, SolveReport) {
        let u = self.solve(rhs);
        let b = interior_of(rhs);
        let r = interior_of(&apply_laplacian(&u));
        let bn = euclid_norm(&b);
        let rel = if bn == 0.0 {
            0.0
        } else {
            let d: f64 = r
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d / bn
        };
        (
            u,
            SolveReport {
                iterations: 1,
                relative_residual: rel,
                converged: rel <= tol,
            },
        )
    }
}

/// Direct fast-transform path for `Laplacian u = rhs`, `u = 0` on the boundary.
pub fn poisson_dirichlet_zero(rhs: &ScalarField, tol: f64) -> (ScalarField, SolveReport) {
    DirichletPoisson::new(rhs.grid()).solve_reporting(rhs, tol)
}

// ---------------------------------------------------------------------------
// Conjugate gradients
// ---------------------------------------------------------------------------

struct PcgOutcome {
    x: Vec<f64>,
    iterations: usize,
    residual_norm: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator given as a closure. Stops when the Euclidean residual norm drops
/// to `target_abs`.
fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    b: &[f64],
    x0: Option<&[f64]>,
    target_abs: f64,
    max_iters: usize,
) -> PcgOutcome {
    let len = b.len();
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; len],
    };
    let mut ax = vec![0.0; len];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rnorm = euclid_norm(&r);
    if rnorm <= target_abs {
        return PcgOutcome {
            x,
            iterations: 0,
            residual_norm: rnorm,
        };
    }
    let mut z = match precond {
        Some(m) => m(&r),
        None => r.clone(),
    };
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; len];
    let mut iterations = 0;
    while iterations < max_iters {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for k in 0..len {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        iterations += 1;
        rnorm = euclid_norm(&r);
        if rnorm <= target_abs || !rnorm.is_finite() {
            break;
        }
        z = match precond {
            Some(m) => m(&r),
            None => r.clone(),
        };
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..len {
            p[k] = z[k] + beta * p[k];
        }
    }
    PcgOutcome {
        x,
        iterations,
        residual_norm: rnorm,
    }
}

/// Conjugate-direction path for `Laplacian u = rhs`, `u = 0` on the boundary.
/// Same contract as [`poisson_dirichlet_zero`]. An optional warm start and an
/// absolute residual target support inexact outer iterations.
pub fn poisson_dirichlet_cg(
    rhs: &ScalarField,
    tol: f64,
    max_iters: usize,
) -> (ScalarField, SolveReport) {
    poisson_dirichlet_cg_with(rhs, tol, max_iters, None, None)
}

/// CG Poisson solve with explicit control: `target_abs` overrides the
/// relative tolerance when given, `warm_start` supplies an initial guess
/// (read at interior nodes).
pub fn poisson_dirichlet_cg_with(
    rhs: &ScalarField,
    tol: f64,
    max_iters: usize,
    target_abs: Option<f64>,
    warm_start: Option<&ScalarField>,
) -> (ScalarField, SolveReport) {
    let grid = rhs.grid();
    let m = grid.interior();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let b: Vec<f64> = interior_of(rhs).iter().map(|v| -v).collect();
    let bn = euclid_norm(&b);
    if bn == 0.0 {
        return (
            ScalarField::zeros(grid),
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let target = target_abs.unwrap_or(tol * bn);
    let x0 = warm_start.map(interior_of);
    let out = pcg(
        |u, o| apply_neg_laplacian(m, inv_h2, u, o),
        None,
        &b,
        x0.as_deref(),
        target,
        max_iters,
    );
    let rel = out.residual_norm / bn;
    (
        field_from_interior(grid, &out.x),
        SolveReport {
            iterations: out.iterations,
            relative_residual: rel,
            converged: out.residual_norm <= target,
        },
    )
}

// ---------------------------------------------------------------------------
// Harmonic extension
// ---------------------------------------------------------------------------

/// Discrete harmonic extension: `Laplacian u = 0` at interior nodes,
/// `u = f` on the boundary. Solved exactly through the direct path by
/// splitting off the boundary data.
pub fn harmonic_extension(f: &BoundaryData, tol: f64) -> (ScalarField, SolveReport) {
    let g = f.to_field();
    let lap_g = apply_laplacian(&g);
    let rhs = lap_g.scale(-1.0);
    let dp = DirichletPoisson::new(f.grid());
    let z = dp.solve(&rhs);
    let u_h = g.add(&z);
    let resid = interior_of(&apply_laplacian(&u_h));
    let denom = euclid_norm(&interior_of(&lap_g));
    let rel = if denom == 0.0 {
        0.0
    } else {
        euclid_norm(&resid) / denom
    };
    (
        u_h,
        SolveReport {
            iterations: 1,
            relative_residual: rel,
            converged: rel <= tol,
        },
    )
}

// ---------------------------------------------------------------------------
// Conductivity equation
// ---------------------------------------------------------------------------

fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Edge conductivities: `ex[k]` lives on the edge from node `k` to its right
/// neighbor, `ey[k]` on the edge to the node above.
fn edge_conductivities(sigma: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let n = sigma.grid().nx();
    let v = sigma.values();
    let mut ex = vec![0.0; v.len()];
    let mut ey = vec![0.0; v.len()];
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            if i + 1 < n {
                ex[k] = harmonic_mean(v[k], v[k + 1]);
            }
            if j + 1 < n {
                ey[k] = harmonic_mean(v[k], v[k + n]);
            }
        }
    }
    (ex, ey)
}

/// Solve the conductivity equation `div(sigma grad v) = 0` with `v = f` on
/// the boundary, returned as `v = u_h + u` where `u_h` is the harmonic
/// extension of `f` and `u` solves the zero-boundary flux problem. The
/// symmetric positive definite interior system is solved by conjugate
/// gradients preconditioned with the fast Poisson solver, so the iteration
/// count scales with the conductivity contrast, not the grid.
pub fn conductivity_solve(
    sigma: &ScalarField,
    f: &BoundaryData,
    tol: f64,
) -> Result<(ScalarField, SolveReport), EllipticError> {
    let grid = sigma.grid();
    if grid.nx() != f.grid().nx() {
        return Err(FieldError::GridMismatch(grid.nx(), f.grid().nx()).into());
    }
    let n = grid.nx();
    for j in 0..n {
        for i in 0..n {
            let value = sigma.get(i, j);
            if value <= 0.0 {
                return Err(EllipticError::NonPositiveConductivity { i, j, value });
            }
        }
    }
    let m = grid.interior();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let (ex, ey) = edge_conductivities(sigma);
    let (u_h, _) = harmonic_extension(f, tol);

    // Right-hand side: flux divergence of the harmonic extension, evaluated
    // with the same edge coefficients as the operator.
    let uh = u_h.values();
    let mut b = vec![0.0; m * m];
    for jj in 0..m {
        for ii in 0..m {
            let k = (jj + 1) * n + (ii + 1);
            b[jj * m + ii] = inv_h2
                * (ex[k] * (uh[k + 1] - uh[k]) - ex[k - 1] * (uh[k] - uh[k - 1])
                    + ey[k] * (uh[k + n] - uh[k])
                    - ey[k - n] * (uh[k] - uh[k - n]));
        }
    }
    let bn = euclid_norm(&b);
    if bn == 0.0 {
        return Ok((
            u_h,
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }

    let apply = |u: &[f64], out: &mut [f64]| {
        for jj in 0..m {
            for ii in 0..m {
                let k = (jj + 1) * n + (ii + 1);
                let kk = jj * m + ii;
                let c = u[kk];
                let right = if ii + 1 < m { u[kk + 1] } else { 0.0 };
                let left = if ii > 0 { u[kk - 1] } else { 0.0 };
                let up = if jj + 1 < m { u[kk + m] } else { 0.0 };
                let down = if jj > 0 { u[kk - m] } else { 0.0 };
                out[kk] = inv_h2
                    * (ex[k] * (c - right)
                        + ex[k - 1] * (c - left)
                        + ey[k] * (c - up)
                        + ey[k - n] * (c - down));
            }
        }
    };
    let dp = DirichletPoisson::new(grid);
    let precond = |r: &[f64]| -> Vec<f64> {
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        dp.solve_interior(&neg)
    };
    let out = pcg(apply, Some(&precond), &b, None, tol * bn, 20_000);
    let rel = out.residual_norm / bn;
    let u = field_from_interior(grid, &out.x);
    let v = u_h.add(&u);
    Ok((
        v,
        SolveReport {
            iterations: out.iterations,
            relative_residual: rel,
            converged: out.residual_norm <= tol * bn,
        },
    ))
}
