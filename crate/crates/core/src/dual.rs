//! Dual-side diagnostics for the weighted least-gradient problem.
//!
//! The primal energy is `E(v) = sum a |grad v| h^2` over voltages with fixed
//! boundary values. Its dual maximizes `<grad u_f, b>` over vector fields
//! with `|b| <= a` pointwise and zero discrete divergence at interior nodes.
//! At the optimum the two values meet, the dual solution is the negative of
//! the true current, and the primal/dual pair aligns pointwise:
//! `b = a grad v / |grad v|` wherever the gradient does not vanish.
//!
//! These functions certify a computed pair: feasibility violations are
//! measured and clipped, the divergence defect is reported (never silently
//! projected away), and the duality gap bounds the primal suboptimality.

use crate::field::{divergence, gradient, magnitude, ScalarField, VectorField2};

/// Pointwise slack allowed on the magnitude constraint `|b| <= a`.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Weighted total-variation energy `sum a |grad v| h^2`.
pub fn primal_energy(v: &ScalarField, a: &ScalarField) -> f64 {
    assert_eq!(v.grid().nx(), a.grid().nx(), "grid mismatch");
    let gv = gradient(v);
    let mag = magnitude(&gv);
    let h2 = v.grid().h() * v.grid().h();
    let mut sum = 0.0;
    let mut c = 0.0;
    for (w, m) in a.values().iter().zip(mag.values()) {
        let x = w * m - c;
        let t = sum + x;
        c = (t - sum) - x;
        sum = t;
    }
    h2 * sum
}

/// Dual objective `<grad u_f, b>`; `u_f` is any voltage matching the
/// boundary data (the value only depends on its boundary trace for
/// divergence-free `b`).
pub fn dual_objective(b: &VectorField2, u_f: &ScalarField) -> f64 {
    gradient(u_f).inner(b).expect("grid mismatch")
}

/// Convex conjugate of the weighted gradient functional, evaluated at `b`:
/// `-<grad u_f, b>` when `|b| <= a` everywhere (within [`FEASIBILITY_TOL`]),
/// positive infinity otherwise.
pub fn conjugate_f(b: &VectorField2, a: &ScalarField, u_f: &ScalarField) -> f64 {
    let mag = magnitude(b);
    let feasible = mag
        .values()
        .iter()
        .zip(a.values())
        .all(|(m, w)| *m <= w + FEASIBILITY_TOL);
    if feasible {
        -dual_objective(b, u_f)
    } else {
        f64::INFINITY
    }
}

/// A dual candidate after magnitude clipping, with the defects that the
/// clipping did not touch.
#[derive(Debug, Clone)]
pub struct DualCandidate {
    pub b: VectorField2,
    /// Largest pointwise magnitude excess `|b| - a` before clipping.
    pub max_violation: f64,
    /// h-weighted norm of the discrete divergence over interior nodes. The
    /// divergence constraint is reported, not enforced.
    pub divergence_norm: f64,
}

/// Scale `b` down pointwise where `|b| > a`, preserving direction, and
/// report the pre-clip violation together with the divergence defect of the
/// clipped field.
pub fn project_feasible(b: &VectorField2, a: &ScalarField) -> DualCandidate {
    let grid = b.grid();
    assert_eq!(grid.nx(), a.grid().nx(), "grid mismatch");
    let mut out = b.clone();
    let mut max_violation: f64 = 0.0;
    for k in 0..grid.len() {
        let m = out.x()[k].hypot(out.y()[k]);
        let w = a.values()[k];
        max_violation = max_violation.max(m - w);
        if m > w {
            let s = if m > 0.0 { w / m } else { 0.0 };
            out.x_mut()[k] *= s;
            out.y_mut()[k] *= s;
        }
    }
    let div = divergence(&out);
    let h = grid.h();
    let mut s = 0.0;
    for j in 1..grid.ny() - 1 {
        for i in 1..grid.nx() - 1 {
            let v = div.get(i, j);
            s += v * v;
        }
    }
    DualCandidate {
        b: out,
        max_violation,
        divergence_norm: (h * h * s).sqrt(),
    }
}

/// Optimality certificate for a primal voltage and a dual candidate at the
/// physical (lambda-scaled) dual scale.
#[derive(Debug, Clone, Copy)]
pub struct CertificateReport {
    pub primal: f64,
    /// Dual objective of the clipped candidate.
    pub dual: f64,
    /// `primal - dual`; non-negative up to the reported divergence defect.
    pub gap: f64,
    /// Gap relative to the primal energy scale.
    pub relative_gap: f64,
    /// Pre-clip magnitude violation of the candidate.
    pub max_violation: f64,
    /// Interior divergence norm of the clipped candidate.
    pub divergence_defect: f64,
    /// Norm of `b - a grad v / |grad v|` over nodes where the gradient is
    /// informative (`|grad v| > eps`) and the weight is positive.
    pub alignment_defect: f64,
    /// Fraction of nodes with `|grad v| <= eps`.
    pub floored_fraction: f64,
    /// Fraction of nodes with zero weight `a`.
    pub zero_weight_fraction: f64,
}

/// Evaluate the duality gap and alignment diagnostics for voltage `v` and
/// dual candidate `b` (already at the physical scale). `floor_rel` sets the
/// gradient floor `eps = floor_rel * max |grad v|`.
pub fn duality_gap(
    v: &ScalarField,
    b: &VectorField2,
    a: &ScalarField,
    u_f: &ScalarField,
    floor_rel: f64,
) -> CertificateReport {
    let grid = v.grid();
    let candidate = project_feasible(b, a);
    let primal = primal_energy(v, a);
    let dual = dual_objective(&candidate.b, u_f);
    let gap = primal - dual;

    let gv = gradient(v);
    let mag = magnitude(&gv);
    let eps = floor_rel * mag.max_value();
    let h2 = grid.h() * grid.h();
    let mut align2 = 0.0;
    let mut floored = 0usize;
    let mut zero_weight = 0usize;
    for k in 0..grid.len() {
        let m = mag.values()[k];
        let w = a.values()[k];
        if w == 0.0 {
            zero_weight += 1;
        }
        if m <= eps {
            floored += 1;
            continue;
        }
        if w > 0.0 {
            let tx = w * gv.x()[k] / m;
            let ty = w * gv.y()[k] / m;
            let dx = candidate.b.x()[k] - tx;
            let dy = candidate.b.y()[k] - ty;
            align2 += dx * dx + dy * dy;
        }
    }
    CertificateReport {
        primal,
        dual,
        gap,
        relative_gap: gap / primal.abs().max(f64::MIN_POSITIVE),
        max_violation: candidate.max_violation,
        divergence_defect: candidate.divergence_norm,
        alignment_defect: (h2 * align2).sqrt(),
        floored_fraction: floored as f64 / grid.len() as f64,
        zero_weight_fraction: zero_weight as f64 / grid.len() as f64,
    }
}

/// Physical current recovered from the algorithm-scale dual variable:
/// `J = -lambda b`.
pub fn recover_current(b: &VectorField2, lambda: f64) -> VectorField2 {
    b.scale(-lambda)
}
