//! Reconstruction of an isotropic conductivity on the unit square from the
//! magnitude of one interior current density field and boundary voltage data.
//!
//! The reconstruction minimizes the weighted gradient functional
//! `E(v) = sum a |grad v| h^2` over voltages `v` matching the boundary data,
//! where the weight `a = |J|` is the measured current density magnitude.
//! An alternating split Bregman iteration solves the minimization; the
//! conductivity is then `sigma = a / |grad v|`.
//!
//! Modules:
//! - [`field`]: collocated grid fields and the discrete gradient/divergence pair
//! - [`elliptic`]: Poisson and variable-coefficient Dirichlet solvers
//! - [`phantom`]: ground-truth conductivities, forward data simulation, noise
//! - [`solver`]: the split Bregman iteration and the classical fixed-point baseline
//! - [`dual`]: duality-gap certificates and current recovery from the dual variable

pub mod dual;
pub mod elliptic;
pub mod field;
pub mod phantom;
pub mod solver;

pub use field::{BoundaryData, FieldError, Grid2D, ScalarField, VectorField2};
