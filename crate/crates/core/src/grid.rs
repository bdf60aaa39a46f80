//! Structured 3D grid storage, boundary resolution and block decomposition.
//!
//! Fields are stored z-fastest, then y, then x, so a single x index selects a
//! contiguous `y * z` slice. Blocks split the y range; each block is walked
//! slice by slice along x.

use std::io::{Read, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default number of y columns per block, giving 64 x 64 slices for z = 64.
pub const DEFAULT_BLOCK_Y: usize = 64;
/// Default on-chip slice capacity in cells.
pub const DEFAULT_SLICE_CAPACITY: usize = 64 * 64;

/// Cell counts along each axis (z is vertical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl GridDims {
    pub fn new(x: usize, y: usize, z: usize) -> Result<Self> {
        let dims = GridDims { x, y, z };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x < 3 || self.y < 3 || self.z < 3 {
            return Err(Error::Domain(format!(
                "grid {}x{}x{} needs at least 3 cells per axis",
                self.x, self.y, self.z
            )));
        }
        self.x
            .checked_mul(self.y)
            .and_then(|xy| xy.checked_mul(self.z))
            .ok_or_else(|| Error::Domain("grid cell count overflows usize".into()))?;
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.x * self.y * self.z
    }

    /// Cells in one x slice.
    pub fn slice_len(&self) -> usize {
        self.y * self.z
    }

    /// Offset of cell `(i, j, k)`; unchecked.
    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i * self.y * self.z + j * self.z + k
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// Checked linear offset of `(i, j, k)` in the slice-contiguous layout.
pub fn linear_index(dims: GridDims, i: usize, j: usize, k: usize) -> Result<usize> {
    if i >= dims.x || j >= dims.y || k >= dims.z {
        return Err(Error::Domain(format!(
            "index ({i},{j},{k}) outside grid {dims}"
        )));
    }
    Ok(dims.offset(i, j, k))
}

/// How neighbors outside the domain are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// x and y wrap around; the bottom level (k = 0) produces zero source
    /// terms and the top level reuses itself as its upper neighbor.
    #[default]
    PeriodicXyZeroFloor,
    /// Every axis clamps to the nearest in-range index; all levels compute.
    Clamp,
}

impl BoundaryRule {
    /// Resolves `idx + delta` (delta in -1..=1) along a lateral axis of length `n`.
    #[inline]
    pub fn lateral(self, idx: usize, delta: isize, n: usize) -> usize {
        match self {
            BoundaryRule::PeriodicXyZeroFloor => {
                (idx as isize + delta).rem_euclid(n as isize) as usize
            }
            BoundaryRule::Clamp => clamp_step(idx, delta, n),
        }
    }

    /// Resolves `k + delta` along z. Both rules clamp vertically.
    #[inline]
    pub fn vertical(self, k: usize, delta: isize, n: usize) -> usize {
        clamp_step(k, delta, n)
    }

    /// Whether level `k` is forced to zero output.
    #[inline]
    pub fn zero_level(self, k: usize) -> bool {
        matches!(self, BoundaryRule::PeriodicXyZeroFloor) && k == 0
    }
}

#[inline]
fn clamp_step(idx: usize, delta: isize, n: usize) -> usize {
    (idx as isize + delta).clamp(0, n as isize - 1) as usize
}

/// One scalar field on a structured grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3<T> {
    dims: GridDims,
    data: Vec<T>,
}

impl<T: Scalar> Field3<T> {
    pub fn zeros(dims: GridDims) -> Self {
        Field3 {
            dims,
            data: vec![T::zero(); dims.cells()],
        }
    }

    pub fn filled(dims: GridDims, value: T) -> Self {
        Field3 {
            dims,
            data: vec![value; dims.cells()],
        }
    }

    pub fn from_vec(dims: GridDims, data: Vec<T>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.cells() {
            return Err(Error::Domain(format!(
                "field data has {} values, grid {dims} needs {}",
                data.len(),
                dims.cells()
            )));
        }
        Ok(Field3 { dims, data })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.dims.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) {
        let at = self.dims.offset(i, j, k);
        self.data[at] = value;
    }

    /// The contiguous z-by-y slice at `i`.
    pub fn slice(&self, i: usize) -> &[T] {
        let len = self.dims.slice_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Bitwise equality including dims.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.data.iter().zip(&other.data).all(|(a, b)| a.bit_eq(*b))
    }

    /// First offset where the two fields differ bitwise.
    pub fn first_mismatch(&self, other: &Self) -> Option<usize> {
        self.data
            .iter()
            .zip(&other.data)
            .position(|(a, b)| !a.bit_eq(*b))
    }
}

/// Three deterministic input fields (U, V, W) with values uniform in [-1, 1].
pub fn generate_fields(dims: GridDims, seed: u64) -> [Field3<f64>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = || {
        let data = (0..dims.cells())
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        Field3 { dims, data }
    };
    let u = make();
    let v = make();
    let w = make();
    [u, v, w]
}

/// A y range of the grid walked slice by slice along x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub y_start: usize,
    pub y_extent: usize,
    pub x_start: usize,
    pub x_extent: usize,
    pub slice_z: usize,
    pub slice_y: usize,
}

impl BlockSpec {
    pub fn slice_cells(&self) -> usize {
        self.slice_z * self.slice_y
    }

    pub fn y_range(&self) -> Range<usize> {
        self.y_start..self.y_start + self.y_extent
    }
}

/// Splits the whole y range into blocks of `block_y` columns.
pub fn decompose_blocks(
    dims: GridDims,
    block_y: usize,
    slice_capacity: usize,
) -> Result<Vec<BlockSpec>> {
    decompose_range(dims, 0..dims.y, block_y, slice_capacity)
}

/// Splits `y_range` into blocks of at most `block_y` columns, ascending in y.
pub fn decompose_range(
    dims: GridDims,
    y_range: Range<usize>,
    block_y: usize,
    slice_capacity: usize,
) -> Result<Vec<BlockSpec>> {
    dims.validate()?;
    if block_y == 0 {
        return Err(Error::Config("block_y must be at least 1".into()));
    }
    if slice_capacity < dims.z {
        return Err(Error::Config(format!(
            "slice capacity {slice_capacity} cannot hold a z column of {}",
            dims.z
        )));
    }
    if y_range.start >= y_range.end || y_range.end > dims.y {
        return Err(Error::Config(format!(
            "y range {y_range:?} is empty or outside grid {dims}"
        )));
    }
    let y_extent = block_y.min(y_range.end - y_range.start);
    if y_extent * dims.z > slice_capacity {
        return Err(Error::Config(format!(
            "slice of {} x {} cells exceeds capacity {slice_capacity}",
            dims.z, y_extent
        )));
    }
    let mut blocks = Vec::new();
    let mut y = y_range.start;
    while y < y_range.end {
        let extent = block_y.min(y_range.end - y);
        blocks.push(BlockSpec {
            y_start: y,
            y_extent: extent,
            x_start: 0,
            x_extent: dims.x,
            slice_z: dims.z,
            slice_y: extent,
        });
        y += extent;
    }
    Ok(blocks)
}

/// Splits `0..y` into `parts` near-equal contiguous ranges (earlier ranges take the remainder).
pub fn partition_y(dims: GridDims, parts: usize) -> Result<Vec<Range<usize>>> {
    if parts == 0 || parts > dims.y {
        return Err(Error::Config(format!(
            "cannot split {} y columns across {parts} kernels",
            dims.y
        )));
    }
    let base = dims.y / parts;
    let extra = dims.y % parts;
    let mut start = 0;
    Ok((0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

const HEADER_BYTES: usize = 24;

/// Writes a field as a 24-byte header (x, y, z as little-endian u64) followed
/// by little-endian f64 values in storage order.
pub fn write_field<W: Write>(field: &Field3<f64>, mut out: W) -> Result<()> {
    let d = field.dims();
    for n in [d.x, d.y, d.z] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a field written by [`write_field`].
pub fn read_field<R: Read>(mut input: R) -> Result<Field3<f64>> {
    let mut header = [0u8; HEADER_BYTES];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Parse(format!("field header: {e}")))?;
    let dim = |n: usize| -> Result<usize> {
        let raw = u64::from_le_bytes(header[n * 8..n * 8 + 8].try_into().unwrap());
        usize::try_from(raw).map_err(|_| Error::Parse(format!("dimension {raw} too large")))
    };
    let dims = GridDims::new(dim(0)?, dim(1)?, dim(2)?)?;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != dims.cells() * 8 {
        return Err(Error::Parse(format!(
            "field body has {} bytes, expected {}",
            body.len(),
            dims.cells() * 8
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Field3::from_vec(dims, data)
}
