#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use threshseg::{Grid, ImageField, Partition, ScalarField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid(nx: usize, ny: usize) -> Grid {
    Grid::for_image(nx, ny).unwrap()
}

pub fn random_scalar(grid: Grid, seed: u64, lo: f64, hi: f64) -> ScalarField {
    let mut r = rng(seed);
    ScalarField::new(grid, (0..grid.len()).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

pub fn random_image(grid: Grid, channels: usize, seed: u64) -> ImageField {
    let mut r = rng(seed);
    let values = (0..grid.len() * channels).map(|_| r.gen::<f64>()).collect();
    ImageField::new(grid, channels, values).unwrap()
}

pub fn random_partition(grid: Grid, n: usize, seed: u64) -> Partition {
    let mut r = rng(seed);
    let labels = (0..grid.len()).map(|_| r.gen_range(0..n) as u16).collect();
    Partition::from_labels(grid, labels, n).unwrap()
}

/// Blocky random partition: labels constant on `block x block` tiles.
pub fn blocky_partition(grid: Grid, n: usize, block: usize, seed: u64) -> Partition {
    let mut r = rng(seed);
    let bx = grid.nx().div_ceil(block);
    let by = grid.ny().div_ceil(block);
    let tiles: Vec<u16> = (0..bx * by).map(|_| r.gen_range(0..n) as u16).collect();
    let labels = (0..grid.len())
        .map(|p| {
            let (x, y) = (p % grid.nx(), p / grid.nx());
            tiles[(y / block) * bx + x / block]
        })
        .collect();
    Partition::from_labels(grid, labels, n).unwrap()
}

pub fn inner(a: &ScalarField, b: &ScalarField) -> f64 {
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    s * a.grid().cell_area()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
