//! Ground-truth conductivity phantoms, forward simulation of the interior
//! current density magnitude, and the noise model used in the experiments.
//!
//! Simulation solves the conductivity equation for the true voltage `v`,
//! sets `J = -sigma grad v` with the collocated forward-difference gradient,
//! and takes `a = |J|` as the data handed to the reconstruction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::elliptic::{conductivity_solve, EllipticError, SolveReport};
use crate::field::{gradient, magnitude, BoundaryData, Grid2D, ScalarField, VectorField2};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("phantom parameter out of range: {0}")]
    InvalidParameter(String),
}

// ---------------------------------------------------------------------------
// Conductivity phantoms
// ---------------------------------------------------------------------------

/// Ground-truth conductivity presets. Values are in S/m.
#[derive(Debug, Clone, PartialEq)]
pub enum PhantomKind {
    /// Homogeneous `sigma = value`.
    Constant { value: f64 },
    /// Depth profile `sigma(y) = base + slope * y`.
    Layered { base: f64, slope: f64 },
    /// Smooth heterogeneous tissue-like map with values inside [1, 1.8].
    GaussianBumps,
    /// Background with one highly conducting and one highly insulating disk.
    Inclusion {
        background: f64,
        conducting: f64,
        insulating: f64,
    },
}

impl PhantomKind {
    /// The layered profile used throughout the tests: `1 + 0.8 y`.
    pub fn layered_default() -> Self {
        PhantomKind::Layered {
            base: 1.0,
            slope: 0.8,
        }
    }

    /// Extreme-contrast inclusion preset.
    pub fn inclusion_default() -> Self {
        PhantomKind::Inclusion {
            background: 1.0,
            conducting: 1e3,
            insulating: 1e-3,
        }
    }
}

const BUMPS: [(f64, f64, f64, f64); 5] = [
    // (center x, center y, width, amplitude)
    (0.30, 0.40, 0.23, 0.38),
    (0.68, 0.62, 0.21, 0.63),
    (0.52, 0.22, 0.17, 0.34),
    (0.25, 0.76, 0.19, 0.42),
    (0.78, 0.25, 0.15, 0.30),
];

fn gaussian_bumps(x: f64, y: f64) -> f64 {
    let mut s = 1.0;
    for &(cx, cy, w, amp) in BUMPS.iter() {
        let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        s += amp * (-d2 / (2.0 * w * w)).exp();
    }
    s
}

/// Sample a phantom on the grid. Fails if the preset would produce a
/// non-positive conductivity anywhere.
pub fn make_phantom(kind: &PhantomKind, grid: Grid2D) -> Result<ScalarField, PhantomError> {
    let field = match kind {
        PhantomKind::Constant { value } => {
            if *value <= 0.0 {
                return Err(PhantomError::InvalidParameter(format!(
                    "constant value {value} must be positive"
                )));
            }
            ScalarField::from_fn(grid, |_, _| *value)
        }
        PhantomKind::Layered { base, slope } => {
            if *base <= 0.0 || base + slope <= 0.0 {
                return Err(PhantomError::InvalidParameter(format!(
                    "layered profile {base} + {slope} y must stay positive on [0, 1]"
                )));
            }
            ScalarField::from_fn(grid, |_, y| base + slope * y)
        }
        PhantomKind::GaussianBumps => ScalarField::from_fn(grid, gaussian_bumps),
        PhantomKind::Inclusion {
            background,
            conducting,
            insulating,
        } => {
            if *background <= 0.0 || *conducting <= 0.0 || *insulating <= 0.0 {
                return Err(PhantomError::InvalidParameter(
                    "inclusion values must be positive".into(),
                ));
            }
            ScalarField::from_fn(grid, |x, y| {
                let d_cond = ((x - 0.32) * (x - 0.32) + (y - 0.60) * (y - 0.60)).sqrt();
                let d_ins = ((x - 0.70) * (x - 0.70) + (y - 0.33) * (y - 0.33)).sqrt();
                if d_cond < 0.14 {
                    *conducting
                } else if d_ins < 0.14 {
                    *insulating
                } else {
                    *background
                }
            })
        }
    };
    Ok(field)
}

// ---------------------------------------------------------------------------
// Boundary voltage presets
// ---------------------------------------------------------------------------

/// Boundary voltage presets used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoltagePreset {
    /// `f = y`: two-to-one boundary data, the benign case.
    Linear,
    /// `f = y + 2 sin(7 pi y)`: not two-to-one; the interior gradient of the
    /// voltage vanishes along curves and `|J|` touches zero.
    Sine7,
}

pub fn boundary_voltage(preset: VoltagePreset, grid: Grid2D) -> BoundaryData {
    match preset {
        VoltagePreset::Linear => BoundaryData::from_fn(grid, |_, y| y),
        VoltagePreset::Sine7 => BoundaryData::from_fn(grid, |_, y| {
            y + 2.0 * (7.0 * std::f64::consts::PI * y).sin()
        }),
    }
}

/// Vertical ramp matched to the layered profile `sigma = base + slope y`:
/// the trace of `V(y) = ln(1 + (slope/base) y) / ln(1 + slope/base)`, the
/// voltage of the equivalent 1-D conductor. With this boundary data the
/// solution depends on y only and the current magnitude is the constant
/// `C = 1 / integral_0^1 ds/sigma(s)`; a plain linear trace would pull the
/// field into two dimensions near the lateral sides and lose the 1-D
/// structure. For `slope = 0` the ramp degenerates to `f = y`.
pub fn layered_boundary_voltage(
    base: f64,
    slope: f64,
    grid: Grid2D,
) -> Result<BoundaryData, PhantomError> {
    if base <= 0.0 || base + slope <= 0.0 {
        return Err(PhantomError::InvalidParameter(format!(
            "layered profile {base} + {slope} y must stay positive on [0, 1]"
        )));
    }
    let r = slope / base;
    if r.abs() <= 1e-12 {
        return Ok(BoundaryData::from_fn(grid, |_, y| y));
    }
    let denom = (1.0 + r).ln();
    Ok(BoundaryData::from_fn(grid, move |_, y| {
        (1.0 + r * y).ln() / denom
    }))
}

// ---------------------------------------------------------------------------
// Forward simulation
// ---------------------------------------------------------------------------

/// Everything the forward model produces: the data `a = |J|` and `f` handed
/// to the reconstruction, plus ground truth for error reporting.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub a: ScalarField,
    pub f: BoundaryData,
    pub sigma: ScalarField,
    pub voltage: ScalarField,
    pub current: VectorField2,
    pub forward_report: SolveReport,
}

/// Run the forward model: solve for the true voltage, form the current
/// `J = -sigma grad v` and its magnitude.
pub fn simulate(
    sigma: &ScalarField,
    f: &BoundaryData,
    tol: f64,
) -> Result<SimulatedData, EllipticError> {
    let (v, report) = conductivity_solve(sigma, f, tol)?;
    let gv = gradient(&v);
    let grid = sigma.grid();
    let mut current = VectorField2::zeros(grid);
    for k in 0..grid.len() {
        current.x_mut()[k] = -sigma.values()[k] * gv.x()[k];
        current.y_mut()[k] = -sigma.values()[k] * gv.y()[k];
    }
    let a = magnitude(&current);
    Ok(SimulatedData {
        a,
        f: f.clone(),
        sigma: sigma.clone(),
        voltage: v,
        current,
        forward_report: report,
    })
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// Data with additive Gaussian noise scaled to a relative level.
#[derive(Debug, Clone)]
pub struct NoisyField {
    pub a: ScalarField,
    /// The additive scale `gamma = delta * |a| / |R|`.
    pub gamma: f64,
    /// Fraction of nodes clamped to zero to keep the magnitude non-negative.
    pub clamped_fraction: f64,
}

/// Add seeded i.i.d. Gaussian noise at relative level `delta`:
/// `a_noisy = a + gamma R` with `gamma = delta * |a| / |R|` in plain node
/// norms, then clamp negative values to zero. `delta = 0` returns the input
/// unchanged.
pub fn add_noise(a: &ScalarField, delta: f64, seed: u64) -> NoisyField {
    if delta == 0.0 {
        return NoisyField {
            a: a.clone(),
            gamma: 0.0,
            clamped_fraction: 0.0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = a.values().len();
    let noise: Vec<f64> = (0..len)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let norm_a = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_r = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gamma = if norm_r == 0.0 {
        0.0
    } else {
        delta * norm_a / norm_r
    };
    let mut clamped = 0usize;
    let values: Vec<f64> = a
        .values()
        .iter()
        .zip(&noise)
        .map(|(v, r)| {
            let w = v + gamma * r;
            if w < 0.0 {
                clamped += 1;
                0.0
            } else {
                w
            }
        })
        .collect();
    NoisyField {
        a: ScalarField::from_values(a.grid(), values).expect("noisy field is finite"),
        gamma,
        clamped_fraction: clamped as f64 / len as f64,
    }
}
