//! Computational grid, real-valued image fields and binary phase partitions.
//!
//! All fields are stored row-major: the value at column `x`, row `y` lives at
//! index `y * nx + x`. Vector-valued images interleave channels per pixel.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform periodic grid over a rectangular domain.
///
/// The physical extent defaults to `2π` along the x axis and is scaled on the
/// y axis so that pixels are square (`hx == hy`). Keeping the width fixed at
/// `2π` makes diffusion times comparable across image resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid needs at least 2 samples per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "domain extents must be positive and finite, got {lx}x{ly}"
            )));
        }
        Ok(Grid { nx, ny, lx, ly })
    }

    /// Grid for an image of `nx` by `ny` pixels on `[0, 2π] x [0, 2π·ny/nx]`.
    pub fn for_image(nx: usize, ny: usize) -> Result<Self> {
        Grid::new(nx, ny, 2.0 * PI, 2.0 * PI * ny as f64 / nx as f64)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measure of the whole domain, `|Ω|`.
    pub fn area(&self) -> f64 {
        self.cell_area() * self.len() as f64
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

/// One real value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "scalar field has {} values for a {}x{} grid",
                values.len(),
                grid.nx(),
                grid.ny()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "scalar field value at index {bad}"
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Wraps values produced internally; callers guarantee finiteness.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.grid.nx() + x]
    }
}

/// Midpoint quadrature of a field over the domain: `hx·hy·Σ value`.
pub fn integrate(field: &ScalarField) -> f64 {
    integrate_values(field.grid(), field.values())
}

pub(crate) fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    grid.cell_area() * values.iter().sum::<f64>()
}

/// Vector-valued image `f` with `d` channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    grid: Grid,
    channels: usize,
    values: Vec<f64>,
}

impl ImageField {
    pub fn new(grid: Grid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument(
                "image needs at least one channel".into(),
            ));
        }
        if values.len() != grid.len() * channels {
            return Err(Error::ShapeMismatch(format!(
                "image has {} values, expected {}x{}x{}",
                values.len(),
                grid.nx(),
                grid.ny(),
                channels
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image value at index {bad}")));
        }
        Ok(ImageField {
            grid,
            channels,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Channel vector at pixel index `p`.
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.values[p * self.channels..(p + 1) * self.channels]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.channels)
    }
}

/// Binary partition of the grid into `n` phases.
///
/// Stored as one label per pixel, so every indicator `u_i` is exactly 0 or 1
/// and `Σ_i u_i = 1` holds at every pixel by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    grid: Grid,
    n: usize,
    labels: Vec<u16>,
}

// Grid holds f64 extents, which are always finite and positive.
impl Eq for Grid {}

pub const MAX_PHASES: usize = u16::MAX as usize;

impl Partition {
    /// `u_i(x) = 1` iff `labels[x] == i`.
    pub fn from_labels(grid: Grid, labels: Vec<u16>, n: usize) -> Result<Self> {
        if !(1..=MAX_PHASES).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "phase count {n} out of range"
            )));
        }
        if labels.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {}x{} grid",
                labels.len(),
                grid.nx(),
                grid.ny()
            )));
        }
        if let Some((p, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= n) {
            return Err(Error::LabelOutOfRange {
                pixel: p,
                label: l as usize,
                phases: n,
            });
        }
        Ok(Partition { grid, n, labels })
    }

    pub(crate) fn from_raw(grid: Grid, labels: Vec<u16>, n: usize) -> Self {
        debug_assert!(labels.iter().all(|&l| (l as usize) < n));
        Partition { grid, n, labels }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phases(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u16> {
        self.labels
    }

    pub fn label(&self, p: usize) -> usize {
        self.labels[p] as usize
    }

    /// Indicator field `u_i` as 0.0/1.0 values.
    pub fn indicator(&self, i: usize) -> ScalarField {
        let values = self.indicator_values(i);
        ScalarField::from_raw(self.grid, values)
    }

    pub(crate) fn indicator_values(&self, i: usize) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l as usize == i { 1.0 } else { 0.0 })
            .collect()
    }

    /// Pixel count per phase.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Area `∫ u_i dΩ` per phase.
    pub fn areas(&self) -> Vec<f64> {
        let cell = self.grid.cell_area();
        self.counts().into_iter().map(|c| c as f64 * cell).collect()
    }

    /// Materializes every indicator and checks the extreme-point property of
    /// the relaxed set: each `u_i(x)` is exactly 0 or 1 and they sum to exactly
    /// 1 at every pixel.
    pub fn is_binary_partition_of_unity(&self) -> bool {
        let indicators: Vec<Vec<f64>> = (0..self.n).map(|i| self.indicator_values(i)).collect();
        (0..self.grid.len()).all(|p| {
            let mut sum = 0.0;
            for u in &indicators {
                if u[p] != 0.0 && u[p] != 1.0 {
                    return false;
                }
                sum += u[p];
            }
            sum == 1.0
        })
    }

    /// Number of pixels whose label differs between `self` and `other`.
    pub fn changed_pixels(&self, other: &Partition) -> Result<usize> {
        check_compatible(self, other)?;
        Ok(self
            .labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count())
    }
}

pub fn partition_from_labels(grid: Grid, labels: Vec<u16>, n: usize) -> Result<Partition> {
    Partition::from_labels(grid, labels, n)
}

fn check_compatible(a: &Partition, b: &Partition) -> Result<()> {
    if !a.grid.same_shape(&b.grid) {
        return Err(Error::ShapeMismatch(format!(
            "partitions on {}x{} and {}x{} grids",
            a.grid.nx(),
            a.grid.ny(),
            b.grid.nx(),
            b.grid.ny()
        )));
    }
    if a.n != b.n {
        return Err(Error::ShapeMismatch(format!(
            "partitions with {} and {} phases",
            a.n, b.n
        )));
    }
    Ok(())
}

/// `(1/|Ω|) ∫ Σ_i |a_i − b_i|² dΩ`, the normalized L² change between two
/// partitions. For binary partitions each relabeled pixel contributes 2, so
/// the result lies in `[0, 2]`.
pub fn symmetric_difference_measure(a: &Partition, b: &Partition) -> Result<f64> {
    let changed = a.changed_pixels(b)?;
    let grid = a.grid();
    Ok(2.0 * changed as f64 * grid.cell_area() / grid.area())
}
