//! Initial partitions.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::squared_distance;
use crate::error::{Error, Result};
use crate::field::{ImageField, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// `n` horizontal bands of equal height.
    Stripes,
    /// `n − 1` disjoint disks on a background phase.
    Circles,
    /// Seeded uniform random labels.
    Random,
    /// Seeded k-means clustering of pixel values.
    Kmeans,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 4] = [
        InitStrategy::Stripes,
        InitStrategy::Circles,
        InitStrategy::Random,
        InitStrategy::Kmeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Stripes => "stripes",
            InitStrategy::Circles => "circles",
            InitStrategy::Random => "random",
            InitStrategy::Kmeans => "kmeans",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitStrategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "init strategy",
                value: s.to_string(),
            })
    }
}

pub fn initialize(
    f: &ImageField,
    n: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<Partition> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 phases, got {n}"
        )));
    }
    let grid = *f.grid();
    let labels = match strategy {
        InitStrategy::Stripes => stripes(grid.nx(), grid.ny(), n),
        InitStrategy::Circles => circles(grid.nx(), grid.ny(), n),
        InitStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..grid.len())
                .map(|_| rng.gen_range(0..n) as u16)
                .collect()
        }
        InitStrategy::Kmeans => kmeans(f, n, seed),
    };
    Partition::from_labels(grid, labels, n)
}

fn stripes(nx: usize, ny: usize, n: usize) -> Vec<u16> {
    (0..ny)
        .flat_map(|y| std::iter::repeat_n((y * n / ny) as u16, nx))
        .collect()
}

/// Disks `1..n` sit on the main diagonal at fractions `j/n` of the image,
/// each with radius `0.6·min(w, h)/n` so neighbours never touch; phase 0 is
/// the background.
fn circles(nx: usize, ny: usize, n: usize) -> Vec<u16> {
    let r = 0.6 * nx.min(ny) as f64 / n as f64;
    let centres: Vec<(f64, f64)> = (1..n)
        .map(|j| {
            let t = j as f64 / n as f64;
            (t * nx as f64, t * ny as f64)
        })
        .collect();
    let mut labels = vec![0u16; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if let Some(j) = centres
                .iter()
                .position(|&(cx, cy)| (px - cx).powi(2) + (py - cy).powi(2) <= r * r)
            {
                labels[y * nx + x] = (j + 1) as u16;
            }
        }
    }
    labels
}

const KMEANS_MAX_ITER: usize = 100;

/// k-means on pixel vectors: k-means++ seeding, then Lloyd iterations until
/// the assignment is stable.
fn kmeans(f: &ImageField, n: usize, seed: u64) -> Vec<u16> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = f.channels();
    let npix = f.grid().len();

    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(n);
    centres.push(f.pixel(rng.gen_range(0..npix)).to_vec());
    let mut dist: Vec<f64> = f
        .pixels()
        .map(|p| squared_distance(&centres[0], p))
        .collect();
    while centres.len() < n {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = npix - 1;
            for (p, &w) in dist.iter().enumerate() {
                if target < w {
                    pick = p;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // fewer distinct values than clusters
            sample(&mut rng, npix, 1).index(0)
        };
        let c = f.pixel(next).to_vec();
        for (dp, px) in dist.iter_mut().zip(f.pixels()) {
            *dp = dp.min(squared_distance(&c, px));
        }
        centres.push(c);
    }

    let mut labels = vec![0u16; npix];
    for iter in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (l, px) in labels.iter_mut().zip(f.pixels()) {
            let best = nearest(&centres, px);
            if best != *l {
                changed = true;
                *l = best;
            }
        }
        if iter > 0 && !changed {
            break;
        }
        let mut sums = vec![0.0; n * d];
        let mut counts = vec![0usize; n];
        for (&l, px) in labels.iter().zip(f.pixels()) {
            counts[l as usize] += 1;
            for (s, v) in sums[l as usize * d..(l as usize + 1) * d]
                .iter_mut()
                .zip(px)
            {
                *s += v;
            }
        }
        for (i, c) in centres.iter_mut().enumerate() {
            if counts[i] > 0 {
                for (ch, s) in c.iter_mut().zip(&sums[i * d..(i + 1) * d]) {
                    *ch = s / counts[i] as f64;
                }
            }
        }
    }
    labels
}

fn nearest(centres: &[Vec<f64>], px: &[f64]) -> u16 {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centres.iter().enumerate() {
        let d = squared_distance(c, px);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best as u16
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn blank(nx: usize, ny: usize) -> ImageField {
        ImageField::new(Grid::for_image(nx, ny).unwrap(), 1, vec![0.0; nx * ny]).unwrap()
    }

    #[test]
    fn stripes_two_phases() {
        let u = initialize(&blank(4, 4), 2, InitStrategy::Stripes, 0).unwrap();
        assert_eq!(
            u.labels(),
            &[0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1]
        );
    }

    #[test]
    fn random_is_deterministic() {
        let f = blank(16, 16);
        let a = initialize(&f, 3, InitStrategy::Random, 9).unwrap();
        let b = initialize(&f, 3, InitStrategy::Random, 9).unwrap();
        let c = initialize(&f, 3, InitStrategy::Random, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_circle() {
        let u = initialize(&blank(20, 20), 2, InitStrategy::Circles, 0).unwrap();
        assert_eq!(u.label(10 * 20 + 10), 1);
        assert_eq!(u.label(0), 0);
        let inside = u.counts()[1] as f64;
        // radius 6 disk
        assert!((inside - std::f64::consts::PI * 36.0).abs() < 15.0);
    }

    #[test]
    fn circles_use_every_phase() {
        let u = initialize(&blank(40, 40), 4, InitStrategy::Circles, 0).unwrap();
        assert!(u.counts().iter().all(|&c| c > 0));
    }

    #[test]
    fn kmeans_separates_levels() {
        let g = Grid::for_image(8, 8).unwrap();
        let values = (0..64).map(|p| if p < 32 { 0.1 } else { 0.9 }).collect();
        let f = ImageField::new(g, 1, values).unwrap();
        let u = initialize(&f, 2, InitStrategy::Kmeans, 1).unwrap();
        let top = u.label(0);
        assert!((0..32).all(|p| u.label(p) == top));
        assert!((32..64).all(|p| u.label(p) != top));
    }

    #[test]
    fn parse_strategy() {
        assert_eq!(
            "kmeans".parse::<InitStrategy>().unwrap(),
            InitStrategy::Kmeans
        );
        assert!(matches!(
            "spiral".parse::<InitStrategy>(),
            Err(Error::UnknownKind { .. })
        ));
    }
}
