//! Scalar and vector fields on a uniform collocated grid over the unit square,
//! together with the discrete first-order calculus used by every solver in
//! this crate: forward-difference gradient, its exact negative adjoint as the
//! divergence, and h^2-weighted inner products.
//!
//! The adjoint pairing `<grad u, p> = -<u, div p>` holds to rounding for all
//! fields, which is what makes the discrete primal/dual energies in the
//! reconstruction an exact finite-dimensional convex pair.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid must have at least 3 nodes per side, got {0}")]
    GridTooSmall(usize),
    #[error("fields live on different grids ({0}x{0} vs {1}x{1})")]
    GridMismatch(usize, usize),
    #[error("expected {expected} values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("coarsening needs an odd grid with at least 5 nodes per side, got {0}")]
    CannotCoarsen(usize),
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform square grid: `n x n` nodes, node `(i, j)` at `(i*h, j*h)` with
/// `h = 1/(n-1)`. Values are stored row-major, `index = j*n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    n: usize,
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self, FieldError> {
        if n < 3 {
            return Err(FieldError::GridTooSmall(n));
        }
        Ok(Grid2D { n })
    }

    pub fn nx(&self) -> usize {
        self.n
    }

    pub fn ny(&self) -> usize {
        self.n
    }

    /// Mesh width `1/(n-1)`.
    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 - 1.0)
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        j * self.n + i
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1
    }

    /// Coordinates of node `(i, j)`.
    pub fn node_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h(), j as f64 * self.h())
    }

    /// Number of interior nodes per side.
    pub fn interior(&self) -> usize {
        self.n - 2
    }
}

fn check_same_grid(a: Grid2D, b: Grid2D) -> Result<(), FieldError> {
    if a.n != b.n {
        return Err(FieldError::GridMismatch(a.n, b.n));
    }
    Ok(())
}

/// Compensated (Kahan) summation; keeps inner products accurate to a few ulp
/// even on fine grids, which the adjointness contract depends on.
fn kahan_sum(it: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in it {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

// ---------------------------------------------------------------------------
// Scalar fields
// ---------------------------------------------------------------------------

/// One `f64` per grid node, row-major. All entries are finite.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.node_pos(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::WrongLength {
                expected: grid.len(),
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(FieldError::NonFinite { index, value });
            }
        }
        Ok(ScalarField { grid, values })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    /// h^2-weighted inner product `h^2 sum u w`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64, FieldError> {
        check_same_grid(self.grid, other.grid)?;
        let h2 = self.grid.h() * self.grid.h();
        Ok(h2 * kahan_sum(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b),
        ))
    }

    /// h-weighted L2 norm.
    pub fn norm(&self) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        (h2 * kahan_sum(self.values.iter().map(|v| v * v))).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.grid.n, other.grid.n, "grid mismatch");
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        assert_eq!(self.grid.n, other.grid.n, "grid mismatch");
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Vector fields
// ---------------------------------------------------------------------------

/// Two components per node, collocated on the same grid as scalar fields.
#[derive(Debug, Clone)]
pub struct VectorField2 {
    grid: Grid2D,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField2 {
    pub fn zeros(grid: Grid2D) -> Self {
        VectorField2 {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn from_fns(
        grid: Grid2D,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut x = Vec::with_capacity(grid.len());
        let mut y = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (px, py) = grid.node_pos(i, j);
                x.push(fx(px, py));
                y.push(fy(px, py));
            }
        }
        VectorField2 { grid, x, y }
    }

    pub fn from_components(
        grid: Grid2D,
        x: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self, FieldError> {
        if x.len() != grid.len() || y.len() != grid.len() {
            return Err(FieldError::WrongLength {
                expected: grid.len(),
                got: x.len().max(y.len()),
            });
        }
        for (index, &value) in x.iter().chain(y.iter()).enumerate() {
            if !value.is_finite() {
                return Err(FieldError::NonFinite { index, value });
            }
        }
        Ok(VectorField2 { grid, x, y })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.grid.idx(i, j);
        (self.x[k], self.y[k])
    }

    /// h^2-weighted inner product `h^2 sum (px qx + py qy)`.
    pub fn inner(&self, other: &VectorField2) -> Result<f64, FieldError> {
        check_same_grid(self.grid, other.grid)?;
        let h2 = self.grid.h() * self.grid.h();
        let sx = kahan_sum(self.x.iter().zip(&other.x).map(|(a, b)| a * b));
        let sy = kahan_sum(self.y.iter().zip(&other.y).map(|(a, b)| a * b));
        Ok(h2 * (sx + sy))
    }

    pub fn norm(&self) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        let s = kahan_sum(self.x.iter().map(|v| v * v))
            + kahan_sum(self.y.iter().map(|v| v * v));
        (h2 * s).sqrt()
    }

    pub fn scale(&self, s: f64) -> VectorField2 {
        VectorField2 {
            grid: self.grid,
            x: self.x.iter().map(|v| v * s).collect(),
            y: self.y.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &VectorField2) -> VectorField2 {
        assert_eq!(self.grid.n, other.grid.n, "grid mismatch");
        VectorField2 {
            grid: self.grid,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a + b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &VectorField2) -> VectorField2 {
        assert_eq!(self.grid.n, other.grid.n, "grid mismatch");
        VectorField2 {
            grid: self.grid,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Discrete calculus
// ---------------------------------------------------------------------------

/// Forward-difference gradient. The x-component is zero on the last column
/// and the y-component is zero on the last row, so that `gradient` and
/// `divergence` form an exact adjoint pair.
pub fn gradient(u: &ScalarField) -> VectorField2 {
    let grid = u.grid;
    let n = grid.nx();
    let inv_h = 1.0 / grid.h();
    let v = &u.values;
    let mut out = VectorField2::zeros(grid);
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            if i + 1 < n {
                out.x[k] = (v[k + 1] - v[k]) * inv_h;
            }
            if j + 1 < n {
                out.y[k] = (v[k + n] - v[k]) * inv_h;
            }
        }
    }
    out
}

/// Negative adjoint of [`gradient`]: backward differences in the interior
/// with the boundary rows fixed by the adjoint identity
/// `<grad u, p> = -<u, div p>` (exact for all `u`, `p`).
pub fn divergence(p: &VectorField2) -> ScalarField {
    let grid = p.grid;
    let n = grid.nx();
    let inv_h = 1.0 / grid.h();
    let mut out = ScalarField::zeros(grid);
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let mut s = 0.0;
            if i + 1 < n {
                s += p.x[k];
            }
            if i >= 1 {
                s -= p.x[k - 1];
            }
            if j + 1 < n {
                s += p.y[k];
            }
            if j >= 1 {
                s -= p.y[k - n];
            }
            out.values[k] = s * inv_h;
        }
    }
    out
}

/// Pointwise Euclidean magnitude `sqrt(px^2 + py^2)`.
pub fn magnitude(p: &VectorField2) -> ScalarField {
    let mut out = ScalarField::zeros(p.grid);
    for (o, (x, y)) in out.values.iter_mut().zip(p.x.iter().zip(&p.y)) {
        *o = x.hypot(*y);
    }
    out
}

/// Restrict a field on a `(2n-1) x (2n-1)` grid to the `n x n` grid covering
/// the same square, by taking every other node. The coarse nodes coincide
/// with the even fine nodes exactly, so this is plain injection with no
/// interpolation error. Useful for generating data on a finer grid than the
/// one it is inverted on.
pub fn coarsen(fine: &ScalarField) -> Result<ScalarField, FieldError> {
    let nf = fine.grid.nx();
    if nf < 5 || nf % 2 == 0 {
        return Err(FieldError::CannotCoarsen(nf));
    }
    let n = (nf + 1) / 2;
    let grid = Grid2D::new(n)?;
    let mut values = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            values.push(fine.values[2 * j * nf + 2 * i]);
        }
    }
    ScalarField::from_values(grid, values)
}

// ---------------------------------------------------------------------------
// Boundary data
// ---------------------------------------------------------------------------

/// Values on the boundary node set only, stored in row-major scan order of
/// the boundary nodes (bottom row, then the two side nodes of each middle
/// row, then the top row).
#[derive(Debug, Clone)]
pub struct BoundaryData {
    grid: Grid2D,
    values: Vec<f64>,
}

impl BoundaryData {
    /// Number of boundary nodes, `4n - 4`.
    pub fn node_count(grid: Grid2D) -> usize {
        4 * grid.nx() - 4
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.nx();
        let mut values = Vec::with_capacity(Self::node_count(grid));
        for j in 0..n {
            for i in 0..n {
                if grid.is_boundary(i, j) {
                    let (x, y) = grid.node_pos(i, j);
                    values.push(f(x, y));
                }
            }
        }
        BoundaryData { grid, values }
    }

    /// Extract the boundary values of a full field.
    pub fn from_field(u: &ScalarField) -> Self {
        let grid = u.grid();
        let n = grid.nx();
        let mut values = Vec::with_capacity(Self::node_count(grid));
        for j in 0..n {
            for i in 0..n {
                if grid.is_boundary(i, j) {
                    values.push(u.get(i, j));
                }
            }
        }
        BoundaryData { grid, values }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.grid.nx();
        if !self.grid.is_boundary(i, j) {
            return None;
        }
        Some(if j == 0 {
            i
        } else if j == n - 1 {
            n + 2 * (n - 2) + i
        } else {
            n + 2 * (j - 1) + if i == n - 1 { 1 } else { 0 }
        })
    }

    /// Value at boundary node `(i, j)`. Panics on interior nodes.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let slot = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) is not a boundary node"));
        self.values[slot]
    }

    /// Full field with these boundary values and zeros in the interior.
    pub fn to_field(&self) -> ScalarField {
        let n = self.grid.nx();
        let mut out = ScalarField::zeros(self.grid);
        let mut slot = 0;
        for j in 0..n {
            for i in 0..n {
                if self.grid.is_boundary(i, j) {
                    out.values[j * n + i] = self.values[slot];
                    slot += 1;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n).unwrap()
    }

    fn random_scalar(g: Grid2D, rng: &mut StdRng, zero_boundary: bool) -> ScalarField {
        let mut u = ScalarField::zeros(g);
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if zero_boundary && g.is_boundary(i, j) {
                    continue;
                }
                u.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        u
    }

    fn random_vector(g: Grid2D, rng: &mut StdRng) -> VectorField2 {
        let mut p = VectorField2::zeros(g);
        for k in 0..g.len() {
            p.x_mut()[k] = rng.random_range(-1.0..1.0);
            p.y_mut()[k] = rng.random_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let u = ScalarField::from_fn(grid(9), |_, _| 3.7);
        let g = gradient(&u);
        assert!(g.x().iter().chain(g.y()).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_frozen_values_3x3() {
        // u(i, j) = i + 3j on the 3x3 grid (h = 1/2): forward differences are
        // 2 in x (except the last column) and 6 in y (except the last row).
        let g = grid(3);
        let u = ScalarField::from_values(g, (0..9).map(|k| k as f64).collect()).unwrap();
        let gu = gradient(&u);
        assert_eq!(gu.x(), &[2., 2., 0., 2., 2., 0., 2., 2., 0.]);
        assert_eq!(gu.y(), &[6., 6., 6., 6., 6., 6., 0., 0., 0.]);
    }

    #[test]
    fn divergence_frozen_values_3x3() {
        // px(i, j) = i + 3j, py(i, j) = 10 + i + 3j, hand-evaluated against
        // the adjoint-determined backward-difference formula.
        let g = grid(3);
        let px: Vec<f64> = (0..9).map(|k| k as f64).collect();
        let py: Vec<f64> = (0..9).map(|k| 10.0 + k as f64).collect();
        let p = VectorField2::from_components(g, px, py).unwrap();
        let div = divergence(&p);
        assert_eq!(
            div.values(),
            &[20., 24., 22., 12., 8., -2., -14., -26., -44.]
        );
    }

    #[test]
    fn divergence_of_constant_vanishes_in_interior() {
        let g = grid(17);
        let p = VectorField2::from_fns(g, |_, _| 1.25, |_, _| -0.5);
        let div = divergence(&p);
        for j in 1..g.ny() - 1 {
            for i in 1..g.nx() - 1 {
                assert_eq!(div.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn adjointness_random_pairs() {
        let mut rng = StdRng::seed_from_u64(11);
        for &n in &[3, 5, 9, 17, 33] {
            let g = grid(n);
            for _ in 0..50 {
                let u = random_scalar(g, &mut rng, false);
                let p = random_vector(g, &mut rng);
                let lhs = gradient(&u).inner(&p).unwrap();
                let rhs = -u.inner(&divergence(&p)).unwrap();
                let scale = gradient(&u).norm() * p.norm()
                    + u.norm() * divergence(&p).norm()
                    + 1e-300;
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * scale,
                    "adjoint defect {} at n={}",
                    (lhs - rhs).abs() / scale,
                    n
                );
            }
        }
    }

    #[test]
    fn inner_of_ones_approaches_one() {
        // h^2 * n^2 = (n/(n-1))^2; within O(h) of the unit square's area.
        let g = grid(101);
        let ones = ScalarField::from_fn(g, |_, _| 1.0);
        let v = ones.inner(&ones).unwrap();
        assert!((v - 1.0).abs() <= 3.0 * g.h(), "got {v}");
    }

    #[test]
    fn magnitude_is_pointwise_euclidean() {
        let g = grid(3);
        let p = VectorField2::from_components(g, vec![3.0; 9], vec![4.0; 9]).unwrap();
        assert!(magnitude(&p).values().iter().all(|&v| v == 5.0));
        let z = VectorField2::zeros(g);
        assert!(magnitude(&z).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_y_matches_forward_convention() {
        let g = grid(33);
        let u = ScalarField::from_fn(g, |_, y| y);
        let gu = gradient(&u);
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let (gx, gy) = gu.get(i, j);
                assert!(gx.abs() < 1e-13);
                let want = if j + 1 < g.ny() { 1.0 } else { 0.0 };
                assert!((gy - want).abs() < 1e-12, "gy={gy} at ({i},{j})");
            }
        }
    }

    #[test]
    fn from_values_rejects_non_finite() {
        let g = grid(3);
        let mut vals = vec![0.0; 9];
        vals[4] = f64::NAN;
        assert!(ScalarField::from_values(g, vals).is_err());
    }

    #[test]
    fn grid_rejects_too_small() {
        assert!(Grid2D::new(2).is_err());
        assert!(Grid2D::new(3).is_ok());
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let a = ScalarField::zeros(grid(5));
        let b = ScalarField::zeros(grid(7));
        assert!(a.inner(&b).is_err());
    }

    #[test]
    fn coarsen_injects_coincident_nodes() {
        let fine = ScalarField::from_fn(grid(9), |x, y| x + 3.0 * y * y);
        let coarse = coarsen(&fine).unwrap();
        assert_eq!(coarse.grid().nx(), 5);
        for j in 0..5 {
            for i in 0..5 {
                let (x, y) = coarse.grid().node_pos(i, j);
                assert_eq!(coarse.get(i, j), x + 3.0 * y * y);
            }
        }
    }

    #[test]
    fn coarsen_rejects_even_or_tiny_grids() {
        assert!(coarsen(&ScalarField::zeros(grid(8))).is_err());
        assert!(coarsen(&ScalarField::zeros(grid(3))).is_err());
        assert!(coarsen(&ScalarField::zeros(grid(5))).is_ok());
    }

    #[test]
    fn boundary_data_roundtrip() {
        let g = grid(7);
        let f = BoundaryData::from_fn(g, |x, y| x + 10.0 * y);
        assert_eq!(f.values().len(), BoundaryData::node_count(g));
        let full = f.to_field();
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let (x, y) = g.node_pos(i, j);
                if g.is_boundary(i, j) {
                    assert_eq!(f.get(i, j), x + 10.0 * y);
                    assert_eq!(full.get(i, j), x + 10.0 * y);
                } else {
                    assert_eq!(full.get(i, j), 0.0);
                }
            }
        }
        let back = BoundaryData::from_field(&full);
        assert_eq!(back.values(), f.values());
    }

    proptest! {
        #[test]
        fn gradient_is_linear(seed in 0u64..1000) {
            let g = grid(9);
            let mut rng = StdRng::seed_from_u64(seed);
            let u = random_scalar(g, &mut rng, false);
            let w = random_scalar(g, &mut rng, false);
            let alpha = rng.random_range(-2.0..2.0);
            let lhs = gradient(&u.add(&w.scale(alpha)));
            let rhs = gradient(&u).add(&gradient(&w).scale(alpha));
            let diff = lhs.sub(&rhs).norm();
            prop_assert!(diff <= 1e-12 * (lhs.norm() + rhs.norm() + 1.0));
        }

        #[test]
        fn cauchy_schwarz(seed in 0u64..1000) {
            let g = grid(7);
            let mut rng = StdRng::seed_from_u64(seed);
            let u = random_scalar(g, &mut rng, false);
            let w = random_scalar(g, &mut rng, false);
            let lhs = u.inner(&w).unwrap().abs();
            let rhs = u.norm() * w.norm();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn adjointness_zero_boundary(seed in 0u64..1000) {
            let g = grid(9);
            let mut rng = StdRng::seed_from_u64(seed);
            let u = random_scalar(g, &mut rng, true);
            let p = random_vector(g, &mut rng);
            let lhs = gradient(&u).inner(&p).unwrap();
            let rhs = -u.inner(&divergence(&p)).unwrap();
            let scale = gradient(&u).norm() * p.norm() + 1e-300;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
