//! On-disk formats: the `gridfield2` binary container for scalar and vector
//! fields, a 16-bit PGM export for quick visual inspection, and content
//! hashing for manifests.
//!
//! A `gridfield2` file is one ASCII header line, `gridfield2 <nx> <ny>
//! <ncomponents>` with the sizes right-aligned in five columns, followed by
//! little-endian 8-byte IEEE floats in row-major node order, components
//! interleaved per node. The fixed-width header makes the byte layout a pure
//! function of the grid, so equal fields produce equal files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cdii_core::field::{Grid2D, ScalarField, VectorField2};
use sha2::{Digest, Sha256};

const MAGIC: &str = "gridfield2";

fn header(nx: usize, ny: usize, ncomp: usize) -> String {
    format!("{MAGIC} {nx:>5} {ny:>5} {ncomp}\n")
}

fn encode(nx: usize, ny: usize, components: &[&[f64]]) -> Result<Vec<u8>> {
    let nodes = nx * ny;
    let mut bytes = header(nx, ny, components.len()).into_bytes();
    bytes.reserve(nodes * components.len() * 8);
    for k in 0..nodes {
        for comp in components {
            let v = comp[k];
            if !v.is_finite() {
                bail!("refusing to write non-finite value {v} at node {k}");
            }
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn write_scalar(path: &Path, field: &ScalarField) -> Result<()> {
    let g = field.grid();
    let bytes = encode(g.nx(), g.ny(), &[field.values()])?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_vector(path: &Path, field: &VectorField2) -> Result<()> {
    let g = field.grid();
    let bytes = encode(g.nx(), g.ny(), &[field.x(), field.y()])?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn decode(bytes: &[u8], path: &Path) -> Result<(Grid2D, usize, Vec<Vec<f64>>)> {
    let line_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .with_context(|| format!("{}: missing header line", path.display()))?;
    let head = std::str::from_utf8(&bytes[..line_end])
        .with_context(|| format!("{}: header is not ASCII", path.display()))?;
    let mut parts = head.split_whitespace();
    if parts.next() != Some(MAGIC) {
        bail!("{}: not a {MAGIC} file", path.display());
    }
    let mut dim = |name: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|t| t.parse().ok())
            .with_context(|| format!("{}: bad {name} in header", path.display()))
    };
    let nx = dim("nx")?;
    let ny = dim("ny")?;
    let ncomp = dim("component count")?;
    if nx != ny {
        bail!("{}: only square grids are supported, got {nx}x{ny}", path.display());
    }
    if ncomp == 0 || ncomp > 2 {
        bail!("{}: unsupported component count {ncomp}", path.display());
    }
    let grid = Grid2D::new(nx).with_context(|| format!("{}: bad grid size", path.display()))?;
    let payload = &bytes[line_end + 1..];
    let expected = nx * ny * ncomp * 8;
    if payload.len() != expected {
        bail!(
            "{}: expected {expected} payload bytes, found {}",
            path.display(),
            payload.len()
        );
    }
    let mut components = vec![Vec::with_capacity(nx * ny); ncomp];
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        components[k % ncomp].push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok((grid, ncomp, components))
}

pub fn read_scalar(path: &Path) -> Result<ScalarField> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (grid, ncomp, mut components) = decode(&bytes, path)?;
    if ncomp != 1 {
        bail!("{}: expected a scalar field, found {ncomp} components", path.display());
    }
    ScalarField::from_values(grid, components.pop().unwrap())
        .with_context(|| format!("{}: invalid field data", path.display()))
}

pub fn read_vector(path: &Path) -> Result<VectorField2> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (grid, ncomp, mut components) = decode(&bytes, path)?;
    if ncomp != 2 {
        bail!("{}: expected a vector field, found {ncomp} components", path.display());
    }
    let y = components.pop().unwrap();
    let x = components.pop().unwrap();
    VectorField2::from_components(grid, x, y)
        .with_context(|| format!("{}: invalid field data", path.display()))
}

/// Export a scalar field as a 16-bit binary PGM, linearly rescaled so the
/// minimum maps to black and the maximum to white. A constant field maps to
/// mid-gray. Rows are written top-down, so y increases upward in the image.
pub fn write_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    let g = field.grid();
    let lo = field.min_value();
    let hi = field.max_value();
    let mut bytes = format!("P5\n{} {}\n65535\n", g.nx(), g.ny()).into_bytes();
    for j in (0..g.ny()).rev() {
        for i in 0..g.nx() {
            let t = if hi > lo {
                (field.get(i, j) - lo) / (hi - lo)
            } else {
                0.5
            };
            let pix = (t * 65535.0).round() as u16;
            bytes.extend_from_slice(&pix.to_be_bytes());
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
