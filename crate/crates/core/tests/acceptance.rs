//! Acceptance gate for the reconstruction library. Each test checks one
//! criterion end to end with pinned tolerances and prints a single summary
//! line; run with `--nocapture` to see the measured numbers next to their
//! budgets. Expensive reconstructions are shared between criteria through
//! `OnceLock` so the gate stays inside its time budgets.

use std::sync::OnceLock;
use std::time::Instant;

use cdii_core::elliptic::{conductivity_solve, poisson_dirichlet_zero};
use cdii_core::field::{coarsen, divergence, gradient, Grid2D, ScalarField, VectorField2};
use cdii_core::phantom::{
    add_noise, boundary_voltage, layered_boundary_voltage, make_phantom, simulate, PhantomKind,
    VoltagePreset,
};
use cdii_core::solver::{
    masked_relative_l2_error, reconstruct, reconstruct_with, shrink, simple_iterations,
    BreakdownReason, ReconstructOptions, Reconstruction, ReconstructionConfig, SimpleResult,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn grid(n: usize) -> Grid2D {
    Grid2D::new(n).unwrap()
}

fn config(lambda: f64, tol: f64, max_iters: usize) -> ReconstructionConfig {
    ReconstructionConfig {
        lambda,
        tol,
        max_iters,
        ..ReconstructionConfig::default()
    }
}

// ---------------------------------------------------------------------------
// Shared runs
// ---------------------------------------------------------------------------

struct ConstantRun {
    rec: Reconstruction,
    truth: ScalarField,
}

/// Unit conductivity, vertical ramp voltage, 64 x 64, lambda = 1. The exact
/// solution is v = y, J = (0, -1).
fn constant_run() -> &'static ConstantRun {
    static RUN: OnceLock<ConstantRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let g = grid(64);
        let truth = make_phantom(&PhantomKind::Constant { value: 1.0 }, g).unwrap();
        let data = simulate(&truth, &boundary_voltage(VoltagePreset::Linear, g), 1e-12).unwrap();
        let rec = reconstruct(&data.a, &data.f, config(1.0, 1e-6, 500)).unwrap();
        ConstantRun { rec, truth }
    })
}

struct LayeredRun {
    rec: Reconstruction,
    truth: ScalarField,
}

const LAYERED_BASE: f64 = 1.0;
const LAYERED_SLOPE: f64 = 0.8;

/// Layered conductivity 1 + 0.8 y at 128 x 128 with the profile-matched
/// boundary ramp, so the continuum solution stays one-dimensional and has a
/// closed form to compare against.
fn layered_run() -> &'static LayeredRun {
    static RUN: OnceLock<LayeredRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let g = grid(128);
        let truth = make_phantom(
            &PhantomKind::Layered {
                base: LAYERED_BASE,
                slope: LAYERED_SLOPE,
            },
            g,
        )
        .unwrap();
        let f = layered_boundary_voltage(LAYERED_BASE, LAYERED_SLOPE, g).unwrap();
        let data = simulate(&truth, &f, 1e-12).unwrap();
        let rec = reconstruct(&data.a, &data.f, config(1.0, 1e-6, 2000)).unwrap();
        LayeredRun { rec, truth }
    })
}

struct Sine7Run {
    bregman: Reconstruction,
    simple: SimpleResult,
}

/// The stress case: bump phantom with the oscillatory boundary voltage
/// y + 2 sin(7 pi y), whose interior field has near-critical points. The
/// data is simulated on the (2n - 1) grid and restricted by injection, so
/// the inversion cannot ride on the exact discrete consistency it would get
/// from same-grid simulation.
fn sine7_run() -> &'static Sine7Run {
    static RUN: OnceLock<Sine7Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let n = 128;
        let g = grid(n);
        let gf = grid(2 * n - 1);
        let sigma_fine = make_phantom(&PhantomKind::GaussianBumps, gf).unwrap();
        let data = simulate(&sigma_fine, &boundary_voltage(VoltagePreset::Sine7, gf), 1e-10)
            .unwrap();
        let a = coarsen(&data.a).unwrap();
        let f = boundary_voltage(VoltagePreset::Sine7, g);
        let bregman = reconstruct(&a, &f, config(1.0, 1e-4, 500)).unwrap();
        let simple = simple_iterations(&a, &f, config(1.0, 1e-4, 500), None).unwrap();
        Sine7Run { bregman, simple }
    })
}

struct NoiseRun {
    delta: f64,
    error: f64,
    rec: Reconstruction,
}

const NOISE_SEED: u64 = 42;
const NOISE_LAMBDA: f64 = 5.0;
const NOISE_ITERS: usize = 20;

/// Bump phantom at 128 x 128 under three seeded noise levels, reconstructed
/// for a fixed number of sweeps at the noise-tuned penalty weight.
fn noise_runs() -> &'static Vec<NoiseRun> {
    static RUNS: OnceLock<Vec<NoiseRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let g = grid(128);
        let truth = make_phantom(&PhantomKind::GaussianBumps, g).unwrap();
        let data = simulate(&truth, &boundary_voltage(VoltagePreset::Linear, g), 1e-10).unwrap();
        [0.01, 0.035, 0.06]
            .iter()
            .map(|&delta| {
                let noisy = add_noise(&data.a, delta, NOISE_SEED);
                let rec = reconstruct(
                    &noisy.a,
                    &data.f,
                    config(NOISE_LAMBDA, 0.0, NOISE_ITERS),
                )
                .unwrap();
                let error =
                    masked_relative_l2_error(&rec.sigma, &truth, &rec.floor_mask);
                NoiseRun { delta, error, rec }
            })
            .collect()
    })
}

struct InitPair {
    zero: Reconstruction,
    random: Reconstruction,
}

/// The same layered problem at 64 x 64 solved from the default zero start
/// and from a seeded random start for the splitting variables. Both runs use
/// a much tighter stopping tolerance than the quantitative criteria: the two
/// iterates approach the common minimizer from different directions, so they
/// only agree once each has actually reached it.
fn init_pair() -> &'static InitPair {
    static RUN: OnceLock<InitPair> = OnceLock::new();
    RUN.get_or_init(|| {
        let g = grid(64);
        let truth = make_phantom(
            &PhantomKind::Layered {
                base: LAYERED_BASE,
                slope: LAYERED_SLOPE,
            },
            g,
        )
        .unwrap();
        let f = layered_boundary_voltage(LAYERED_BASE, LAYERED_SLOPE, g).unwrap();
        let data = simulate(&truth, &f, 1e-12).unwrap();
        let cfg = config(1.0, 1e-10, 20000);
        let zero = reconstruct(&data.a, &data.f, cfg.clone()).unwrap();

        let mut rng = StdRng::seed_from_u64(2024);
        let mut rand_vec = |g: Grid2D| {
            let mut v = VectorField2::zeros(g);
            for k in 0..g.len() {
                v.x_mut()[k] = rng.random_range(-0.5..0.5);
                v.y_mut()[k] = rng.random_range(-0.5..0.5);
            }
            v
        };
        let d0 = rand_vec(g);
        let b0 = rand_vec(g);
        let random = reconstruct_with(
            &data.a,
            &data.f,
            cfg,
            ReconstructOptions {
                init: Some((d0, b0)),
                ..ReconstructOptions::default()
            },
        )
        .unwrap();
        InitPair { zero, random }
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: the discrete gradient and divergence are exact adjoints
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_gradient_divergence_adjointness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for &n in &[9usize, 33, 65] {
        let g = grid(n);
        let mut rng = StdRng::seed_from_u64(n as u64);
        for _ in 0..1000 {
            let mut u = ScalarField::zeros(g);
            for j in 0..n {
                for i in 0..n {
                    if !g.is_boundary(i, j) {
                        u.values_mut()[g.idx(i, j)] = rng.random_range(-1.0..1.0);
                    }
                }
            }
            let mut p = VectorField2::zeros(g);
            for k in 0..g.len() {
                p.x_mut()[k] = rng.random_range(-1.0..1.0);
                p.y_mut()[k] = rng.random_range(-1.0..1.0);
            }
            let lhs = gradient(&u).inner(&p).unwrap();
            let rhs = -u.inner(&divergence(&p)).unwrap();
            let scale = gradient(&u).norm() * p.norm();
            let defect = (lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE);
            worst = worst.max(defect);
        }
    }
    println!(
        "criterion 01: adjointness defect {worst:.3e} over 3000 random pairs (budget 1e-12), {:.2?}",
        start.elapsed()
    );
    assert!(worst <= 1e-12, "adjointness defect {worst:.3e} > 1e-12");
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

// ---------------------------------------------------------------------------
// Criterion 2: elliptic solvers converge at second order with tight residuals
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_elliptic_solvers_second_order() {
    let start = Instant::now();
    let pi = std::f64::consts::PI;

    let mut poisson_errs = Vec::new();
    for &n in &[33usize, 65, 129] {
        let g = grid(n);
        let exact = ScalarField::from_fn(g, |x, y| (pi * x).sin() * (2.0 * pi * y).sin());
        let rhs = exact.scale(-5.0 * pi * pi);
        let (u, report) = poisson_dirichlet_zero(&rhs, 1e-12);
        assert!(report.relative_residual <= 1e-10);
        poisson_errs.push(u.sub(&exact).norm() / exact.norm());
    }
    let p1 = (poisson_errs[0] / poisson_errs[1]).log2();
    let p2 = (poisson_errs[1] / poisson_errs[2]).log2();

    let mut cond_errs = Vec::new();
    for &n in &[33usize, 65, 129] {
        let g = grid(n);
        let sigma = make_phantom(
            &PhantomKind::Layered {
                base: LAYERED_BASE,
                slope: LAYERED_SLOPE,
            },
            g,
        )
        .unwrap();
        let f = layered_boundary_voltage(LAYERED_BASE, LAYERED_SLOPE, g).unwrap();
        let (v, report) = conductivity_solve(&sigma, &f, 1e-12).unwrap();
        assert!(report.converged);
        assert!(report.relative_residual <= 1e-10);
        let r = LAYERED_SLOPE / LAYERED_BASE;
        let exact = ScalarField::from_fn(g, |_, y| (1.0 + r * y).ln() / (1.0 + r).ln());
        cond_errs.push(v.sub(&exact).norm() / exact.norm());
    }
    let q1 = (cond_errs[0] / cond_errs[1]).log2();
    let q2 = (cond_errs[1] / cond_errs[2]).log2();

    println!(
        "criterion 02: poisson orders {p1:.3}/{p2:.3}, conductivity orders {q1:.3}/{q2:.3} \
         (budget >= 1.9), residuals <= 1e-10, {:.2?}",
        start.elapsed()
    );
    for (label, order) in [("poisson", p1), ("poisson", p2), ("cond", q1), ("cond", q2)] {
        assert!(order >= 1.9, "{label} order {order:.3} < 1.9");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

// ---------------------------------------------------------------------------
// Criterion 3: the shrinkage step solves its pointwise minimization exactly
// ---------------------------------------------------------------------------

/// Minimize `a |d| + (lambda / 2) |q - d|^2` over d by brute-force search.
/// Replacing any candidate d with its projection onto the ray through q
/// shortens both |d| and |q - d|, so the minimizer lies on the segment from
/// the origin to q and the search is one-dimensional: d = t q / |q| with
/// t in [0, |q|]. Along that segment the objective has constant curvature
/// lambda, so each zoom round's sampled argmin sits within one cell of the
/// true argmin and shrinking the window to two cells around it is safe.
fn brute_force_shrink(qx: f64, qy: f64, a: f64, lambda: f64) -> (f64, f64) {
    let norm_q = qx.hypot(qy);
    if norm_q == 0.0 {
        return (0.0, 0.0);
    }
    let objective = |t: f64| a * t + 0.5 * lambda * (norm_q - t) * (norm_q - t);
    let m = 40usize;
    let mut lo = 0.0f64;
    let mut hi = norm_q;
    let mut best_t = 0.0;
    for _ in 0..8 {
        let cell = (hi - lo) / m as f64;
        let mut best = f64::INFINITY;
        for i in 0..=m {
            let t = lo + cell * i as f64;
            let g = objective(t);
            if g < best {
                best = g;
                best_t = t;
            }
        }
        lo = (best_t - 2.0 * cell).max(0.0);
        hi = (best_t + 2.0 * cell).min(norm_q);
    }
    (best_t * qx / norm_q, best_t * qy / norm_q)
}

#[test]
fn criterion_03_shrinkage_matches_brute_force() {
    let start = Instant::now();
    let g = grid(100);
    let lambda = 1.3;
    let mut rng = StdRng::seed_from_u64(3);
    let mut q = VectorField2::zeros(g);
    let mut a = ScalarField::zeros(g);
    for k in 0..g.len() {
        q.x_mut()[k] = rng.random_range(-3.0..3.0);
        q.y_mut()[k] = rng.random_range(-3.0..3.0);
        a.values_mut()[k] = if rng.random_range(0.0..1.0) < 0.1 {
            0.0
        } else {
            rng.random_range(0.0..2.0)
        };
    }
    let d = shrink(&q, &a, lambda);
    let mut worst = 0.0f64;
    for k in 0..g.len() {
        let (bx, by) = brute_force_shrink(q.x()[k], q.y()[k], a.values()[k], lambda);
        worst = worst.max((d.x()[k] - bx).hypot(d.y()[k] - by));
    }
    println!(
        "criterion 03: shrinkage vs brute force, worst gap {worst:.3e} over 10000 nodes \
         (budget 1e-6), {:.2?}",
        start.elapsed()
    );
    assert!(worst <= 1e-6, "shrinkage disagrees with brute force: {worst:.3e}");
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

// ---------------------------------------------------------------------------
// Criterion 4: exact recovery on the constant phantom
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_constant_phantom_recovery() {
    let start = Instant::now();
    let run = constant_run();
    assert!(run.rec.converged);
    let err = masked_relative_l2_error(&run.rec.sigma, &run.truth, &run.rec.floor_mask);

    let mut worst_current = 0.0f64;
    for k in 0..run.truth.grid().len() {
        if run.rec.floor_mask[k] {
            continue;
        }
        let dx = run.rec.current.x()[k];
        let dy = run.rec.current.y()[k] + 1.0;
        worst_current = worst_current.max(dx.hypot(dy));
    }
    println!(
        "criterion 04: constant phantom, sigma error {err:.3e} (budget 1e-3), current vs \
         (0, -1) worst {worst_current:.3e} (budget 1e-3), {:.2?}",
        start.elapsed()
    );
    assert!(err <= 1e-3, "sigma error {err:.3e} > 1e-3");
    assert!(worst_current <= 1e-3, "current error {worst_current:.3e} > 1e-3");
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

// ---------------------------------------------------------------------------
// Criterion 5: layered phantom against the one-dimensional closed form
// ---------------------------------------------------------------------------

/// Composite Simpson quadrature of `f` on [0, 1] with `2 m` panels.
fn simpson(f: impl Fn(f64) -> f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn criterion_05_layered_phantom_matches_quadrature() {
    let start = Instant::now();
    let r = LAYERED_SLOPE / LAYERED_BASE;
    let c = LAYERED_SLOPE / (1.0 + r).ln();

    // The layered current magnitude is the constant c = 1 / int_0^1 ds / sigma.
    let resistance = simpson(|y| 1.0 / (LAYERED_BASE + LAYERED_SLOPE * y), 512);
    let consistency = (resistance * c - 1.0).abs();
    assert!(consistency <= 1e-10, "quadrature consistency {consistency:.3e}");

    // The boundary ramp is the corresponding voltage profile c int_0^y ds / sigma.
    let g = grid(128);
    let f = layered_boundary_voltage(LAYERED_BASE, LAYERED_SLOPE, g).unwrap();
    let mut worst_trace = 0.0f64;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if !g.is_boundary(i, j) {
                continue;
            }
            let (_, y) = g.node_pos(i, j);
            let v = c * y * simpson(|s| 1.0 / (LAYERED_BASE + LAYERED_SLOPE * s * y), 256);
            worst_trace = worst_trace.max((f.get(i, j) - v).abs());
        }
    }
    assert!(worst_trace <= 1e-10, "boundary ramp vs quadrature {worst_trace:.3e}");

    let run = layered_run();
    assert!(run.rec.converged);
    let err = masked_relative_l2_error(&run.rec.sigma, &run.truth, &run.rec.floor_mask);
    println!(
        "criterion 05: layered phantom error {err:.3e} (budget 1e-2), quadrature checks \
         {consistency:.1e}/{worst_trace:.1e}, {:.2?}",
        start.elapsed()
    );
    assert!(err <= 1e-2, "layered error {err:.3e} > 1e-2");
    assert!(start.elapsed().as_secs_f64() < 120.0);
}

// ---------------------------------------------------------------------------
// Criterion 6: iteration invariants hold on every run
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_iteration_invariants() {
    let start = Instant::now();
    let mut runs: Vec<(&str, &Reconstruction)> = vec![
        ("constant", &constant_run().rec),
        ("layered", &layered_run().rec),
        ("sine7", &sine7_run().bregman),
        ("init-zero", &init_pair().zero),
        ("init-random", &init_pair().random),
    ];
    for run in noise_runs() {
        runs.push(("noisy", &run.rec));
    }

    let step_slack = 10.0 * ReconstructionConfig::default().sub_solver_tol;
    let mut worst_violation = 0.0f64;
    let mut worst_step_increase = 0.0f64;
    let mut worst_drop = f64::INFINITY;
    for (label, rec) in runs {
        for entry in &rec.trace.entries {
            worst_violation = worst_violation.max(entry.dual_violation);
        }
        for pair in rec.trace.entries.windows(2) {
            worst_step_increase = worst_step_increase.max(pair[1].step_size - pair[0].step_size);
        }
        if rec.converged {
            let r1 = rec.trace.entries.first().unwrap().residual;
            let rk = rec.trace.last().unwrap().residual;
            if rk > 0.0 {
                worst_drop = worst_drop.min(r1 / rk);
            }
            assert!(
                rk <= r1 / 100.0,
                "{label}: residual only dropped {r1:.3e} -> {rk:.3e}"
            );
        }
    }
    println!(
        "criterion 06: dual violation {worst_violation:.3e} (budget 1e-12), step increase \
         {worst_step_increase:.3e} (budget {step_slack:.0e}), residual drop >= {worst_drop:.1e}x \
         on converged runs (budget 100x), {:.2?}",
        start.elapsed()
    );
    assert!(worst_violation <= 1e-12);
    assert!(worst_step_increase <= step_slack);
    assert!(start.elapsed().as_secs_f64() < 300.0);
}

// ---------------------------------------------------------------------------
// Criterion 7: the duality gap closes
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_duality_gap_closes() {
    let start = Instant::now();
    let constant = constant_run().rec.trace.last().unwrap();
    let layered = layered_run().rec.trace.last().unwrap();
    let const_rel = constant.gap.abs() / constant.energy;
    let layered_rel = layered.gap.abs() / layered.energy;
    println!(
        "criterion 07: relative duality gap {const_rel:.3e} constant (budget 1e-6), \
         {layered_rel:.3e} layered (budget 1e-3), {:.2?}",
        start.elapsed()
    );
    assert!(const_rel <= 1e-6, "constant gap {const_rel:.3e} > 1e-6");
    assert!(layered_rel <= 1e-3, "layered gap {layered_rel:.3e} > 1e-3");
    assert!(start.elapsed().as_secs_f64() < 120.0);
}

// ---------------------------------------------------------------------------
// Criterion 8: the splitting survives data where plain iteration breaks down
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_oscillatory_data_robustness() {
    let start = Instant::now();
    let run = sine7_run();
    assert!(
        run.bregman.converged,
        "splitting did not converge in {} iterations",
        run.bregman.iterations
    );
    assert!(run.bregman.iterations <= 500);
    assert!(
        matches!(run.simple.breakdown, Some(BreakdownReason::DegenerateGradient)),
        "plain iteration did not flag degenerate gradients: {:?}",
        run.simple.breakdown
    );
    assert!(!run.simple.converged);
    println!(
        "criterion 08: splitting converged in {} iterations, plain iteration broke down \
         after {} ({:?}), {:.2?}",
        run.bregman.iterations,
        run.simple.iterations,
        run.simple.breakdown.as_ref().unwrap(),
        start.elapsed()
    );
    assert!(start.elapsed().as_secs_f64() < 300.0);
}

// ---------------------------------------------------------------------------
// Criterion 9: reconstruction error degrades gracefully with noise
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_noise_error_curve() {
    let start = Instant::now();
    let runs = noise_runs();
    let expected = [0.026, 0.080, 0.152];
    for (run, &e) in runs.iter().zip(&expected) {
        assert!(
            run.error >= 0.5 * e && run.error <= 2.0 * e,
            "delta {}: error {:.4} outside [{:.4}, {:.4}]",
            run.delta,
            run.error,
            0.5 * e,
            2.0 * e
        );
    }
    assert!(
        runs[0].error < runs[1].error && runs[1].error < runs[2].error,
        "errors not monotone: {:.4} / {:.4} / {:.4}",
        runs[0].error,
        runs[1].error,
        runs[2].error
    );
    println!(
        "criterion 09: noise errors {:.4} / {:.4} / {:.4} at delta 0.01 / 0.035 / 0.06 \
         (bands [{:.3}, {:.3}] / [{:.3}, {:.3}] / [{:.3}, {:.3}]), {:.2?}",
        runs[0].error,
        runs[1].error,
        runs[2].error,
        0.5 * expected[0],
        2.0 * expected[0],
        0.5 * expected[1],
        2.0 * expected[1],
        0.5 * expected[2],
        2.0 * expected[2],
        start.elapsed()
    );
    assert!(start.elapsed().as_secs_f64() < 300.0);
}

// ---------------------------------------------------------------------------
// Criterion 10: the minimizer does not depend on the starting point
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_initialization_independence() {
    let start = Instant::now();
    let pair = init_pair();
    assert!(pair.zero.converged);
    assert!(pair.random.converged);
    let union: Vec<bool> = pair
        .zero
        .floor_mask
        .iter()
        .zip(&pair.random.floor_mask)
        .map(|(a, b)| *a || *b)
        .collect();
    let diff = masked_relative_l2_error(&pair.random.sigma, &pair.zero.sigma, &union);
    println!(
        "criterion 10: zero vs random start disagree by {diff:.3e} outside the floor mask \
         (budget 1e-4), {:.2?}",
        start.elapsed()
    );
    assert!(diff <= 1e-4, "starts disagree by {diff:.3e} > 1e-4");
    assert!(start.elapsed().as_secs_f64() < 120.0);
}
