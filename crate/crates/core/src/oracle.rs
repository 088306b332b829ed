//! Brute-force references and synthetic test images.
//!
//! Nothing here sits on the solver's hot path. The energy reference evaluates
//! the double sum over ordered phase pairs literally with direct-summation
//! convolutions, so it shares no code with the FFT route it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::{Grid, ImageField, Partition, ScalarField};
use crate::image_io::LabelMap;
use crate::spectral::{convolve_direct, DIRECT_LIMIT};

/// Reference value of the approximate energy, computed from scratch:
/// means by direct averaging, fidelity by direct loops, and the perimeter
/// term as `λ√(π/δt) Σ_i Σ_{j≠i} ∫ u_i (G * u_j)` with direct convolutions.
#[allow(clippy::needless_range_loop)]
pub fn brute_energy(f: &ImageField, u: &Partition, dt: f64, lambda: f64) -> Result<f64> {
    let grid = *u.grid();
    if grid.len() > DIRECT_LIMIT {
        return Err(Error::GridTooLarge {
            pixels: grid.len(),
            limit: DIRECT_LIMIT,
        });
    }
    if !f.grid().same_shape(&grid) {
        return Err(Error::ShapeMismatch("image and partition differ".into()));
    }
    let n = u.phases();
    let d = f.channels();
    let cell = grid.cell_area();

    let mut fidelity = 0.0;
    for i in 0..n {
        let members: Vec<usize> = (0..grid.len()).filter(|&p| u.label(p) == i).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for &p in &members {
            for c in 0..d {
                mean[c] += f.values()[p * d + c];
            }
        }
        for m in &mut mean {
            *m /= members.len() as f64;
        }
        for &p in &members {
            let mut sq = 0.0;
            for c in 0..d {
                let diff = f.values()[p * d + c] - mean[c];
                sq += diff * diff;
            }
            fidelity += sq * cell;
        }
    }

    let diffused: Vec<ScalarField> = (0..n)
        .map(|j| convolve_direct(&grid, dt, &u.indicator(j)))
        .collect::<Result<_>>()?;
    let mut pair_sum = 0.0;
    for i in 0..n {
        for (j, gj) in diffused.iter().enumerate() {
            if j == i {
                continue;
            }
            for p in 0..grid.len() {
                if u.label(p) == i {
                    pair_sum += gj.values()[p] * cell;
                }
            }
        }
    }
    Ok(fidelity + lambda * (std::f64::consts::PI / dt).sqrt() * pair_sum)
}

/// Nearest-mean assignment, ties to the lowest index. `None` entries are
/// skipped.
pub fn lloyd_assign(f: &ImageField, means: &[Option<Vec<f64>>]) -> Result<LabelMap> {
    if means.iter().all(Option::is_none) {
        return Err(Error::InvalidArgument("no means given".into()));
    }
    let d = f.channels();
    let labels = (0..f.grid().len())
        .map(|p| {
            let px = &f.values()[p * d..(p + 1) * d];
            let mut best = usize::MAX;
            let mut best_dist = f64::INFINITY;
            for (i, m) in means.iter().enumerate() {
                let Some(m) = m else { continue };
                let mut dist = 0.0;
                for c in 0..d {
                    dist += (m[c] - px[c]) * (m[c] - px[c]);
                }
                if best == usize::MAX || dist < best_dist {
                    best = i;
                    best_dist = dist;
                }
            }
            best as u16
        })
        .collect();
    LabelMap::new(f.grid().nx(), f.grid().ny(), means.len(), labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Gray, two levels: a disk and a square at 1 on a 0 background.
    TwoLevel,
    /// RGB, four quadrants in red, green, blue and white.
    FourQuadrant,
    /// Gray, three disks at levels 1/3, 2/3 and 1 on a 0 background.
    Disks,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::TwoLevel => "two-level",
            PhantomKind::FourQuadrant => "four-quadrant",
            PhantomKind::Disks => "disks",
        }
    }

    pub fn phases(self) -> usize {
        match self {
            PhantomKind::TwoLevel => 2,
            PhantomKind::FourQuadrant | PhantomKind::Disks => 4,
        }
    }
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PhantomKind::TwoLevel,
            PhantomKind::FourQuadrant,
            PhantomKind::Disks,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::UnknownKind {
            what: "phantom kind",
            value: s.to_string(),
        })
    }
}

/// Synthetic image with known ground truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: ImageField,
    pub truth: LabelMap,
    pub noise_sigma: f64,
    pub description: String,
}

fn in_disk(x: usize, y: usize, cx: f64, cy: f64, r: f64) -> bool {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    (px - cx).powi(2) + (py - cy).powi(2) <= r * r
}

fn truth_label(kind: PhantomKind, x: usize, y: usize, size: usize) -> u16 {
    let s = size as f64;
    match kind {
        PhantomKind::TwoLevel => {
            let disk = in_disk(x, y, 0.6 * s, 0.6 * s, 0.25 * s);
            let (fx, fy) = (x as f64 / s, y as f64 / s);
            let square = (0.1..0.35).contains(&fx) && (0.1..0.35).contains(&fy);
            u16::from(disk || square)
        }
        PhantomKind::FourQuadrant => {
            let right = 2 * x >= size;
            let bottom = 2 * y >= size;
            u16::from(right) + 2 * u16::from(bottom)
        }
        PhantomKind::Disks => {
            if in_disk(x, y, 0.3 * s, 0.3 * s, 0.18 * s) {
                1
            } else if in_disk(x, y, 0.7 * s, 0.35 * s, 0.2 * s) {
                2
            } else if in_disk(x, y, 0.45 * s, 0.72 * s, 0.2 * s) {
                3
            } else {
                0
            }
        }
    }
}

fn level(kind: PhantomKind, label: u16) -> &'static [f64] {
    const RGB: [[f64; 3]; 4] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
    ];
    const GRAY4: [[f64; 1]; 4] = [[0.0], [1.0 / 3.0], [2.0 / 3.0], [1.0]];
    const GRAY2: [[f64; 1]; 2] = [[0.0], [1.0]];
    match kind {
        PhantomKind::TwoLevel => &GRAY2[label as usize],
        PhantomKind::FourQuadrant => &RGB[label as usize],
        PhantomKind::Disks => &GRAY4[label as usize],
    }
}

/// Deterministic phantom of `size x size` pixels with i.i.d. Gaussian noise of
/// standard deviation `noise_sigma` added to every channel.
pub fn make_phantom(
    kind: PhantomKind,
    size: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Phantom> {
    if size < 16 {
        return Err(Error::InvalidArgument(format!(
            "phantom size must be >= 16, got {size}"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let grid = Grid::for_image(size, size)?;
    let labels: Vec<u16> = (0..size * size)
        .map(|p| truth_label(kind, p % size, p / size, size))
        .collect();
    let mut values: Vec<f64> = labels
        .iter()
        .flat_map(|&l| level(kind, l).iter().copied())
        .collect();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    let channels = level(kind, 0).len();
    Ok(Phantom {
        image: ImageField::new(grid, channels, values)?,
        truth: LabelMap::new(size, size, kind.phases(), labels)?,
        noise_sigma,
        description: format!(
            "{} {size}x{size} sigma={noise_sigma} seed={seed}",
            kind.name()
        ),
    })
}

/// Overwrites a `fraction` of pixels with salt-and-pepper speckle (every
/// channel set to 0 or 1). The ground truth is left untouched.
pub fn add_speckle(phantom: &Phantom, fraction: f64, seed: u64) -> Result<Phantom> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "speckle fraction {fraction} not in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = phantom.image.channels();
    let mut values = phantom.image.values().to_vec();
    for px in values.chunks_exact_mut(d) {
        if rng.gen::<f64>() < fraction {
            let v = if rng.gen::<bool>() { 1.0 } else { 0.0 };
            px.iter_mut().for_each(|c| *c = v);
        }
    }
    Ok(Phantom {
        image: ImageField::new(*phantom.image.grid(), d, values)?,
        truth: phantom.truth.clone(),
        noise_sigma: phantom.noise_sigma,
        description: format!("{} speckle={fraction}", phantom.description),
    })
}

/// Largest phase count accepted by [`misclassification_rate`].
pub const MAX_MATCH_PHASES: usize = 8;

/// Fraction of mismatched pixels, minimized over all relabelings of `result`.
pub fn misclassification_rate(result: &LabelMap, truth: &LabelMap) -> Result<f64> {
    if result.width != truth.width || result.height != truth.height {
        return Err(Error::ShapeMismatch(format!(
            "result is {}x{}, truth is {}x{}",
            result.width, result.height, truth.width, truth.height
        )));
    }
    let n = result.phases.max(truth.phases);
    if n > MAX_MATCH_PHASES {
        return Err(Error::InvalidArgument(format!(
            "{n} phases exceeds the permutation search limit of {MAX_MATCH_PHASES}"
        )));
    }
    let mut confusion = vec![0usize; n * n];
    for (&r, &t) in result.labels.iter().zip(&truth.labels) {
        confusion[r as usize * n + t as usize] += 1;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = 0usize;
    permutations(&mut perm, 0, &mut |p| {
        let agree: usize = p
            .iter()
            .enumerate()
            .map(|(r, &t)| confusion[r * n + t])
            .sum();
        best = best.max(agree);
    });
    let total = result.labels.len();
    if total == 0 {
        return Ok(0.0);
    }
    Ok((total - best) as f64 / total as f64)
}

fn permutations(perm: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permutations(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(labels: Vec<u16>, phases: usize) -> LabelMap {
        LabelMap::new(10, 10, phases, labels).unwrap()
    }

    #[test]
    fn misclassification_cases() {
        let truth = map((0..100).map(|p| (p % 2) as u16).collect(), 2);
        assert_eq!(misclassification_rate(&truth, &truth).unwrap(), 0.0);

        let swapped = map(truth.labels.iter().map(|l| 1 - l).collect(), 2);
        assert_eq!(misclassification_rate(&swapped, &truth).unwrap(), 0.0);

        let mut one_off = truth.clone();
        one_off.labels[17] = 1 - one_off.labels[17];
        assert!((misclassification_rate(&one_off, &truth).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn misclassification_guards() {
        let a = map(vec![0; 100], 9);
        assert!(misclassification_rate(&a, &a).is_err());
        let b = LabelMap::new(5, 20, 1, vec![0; 100]).unwrap();
        assert!(misclassification_rate(&map(vec![0; 100], 1), &b).is_err());
    }

    #[test]
    fn lloyd_cases() {
        let g = Grid::for_image(2, 2).unwrap();
        let f = ImageField::new(g, 1, vec![0.4, 0.5, 0.6, 0.0]).unwrap();
        let means = vec![Some(vec![0.0]), Some(vec![1.0])];
        let l = lloyd_assign(&f, &means).unwrap();
        // 0.5 is equidistant and goes to the lower index
        assert_eq!(l.labels, vec![0, 0, 1, 0]);
    }

    #[test]
    fn noiseless_phantom_equals_truth() {
        let p = make_phantom(PhantomKind::TwoLevel, 32, 0.0, 1).unwrap();
        for (v, &l) in p.image.values().iter().zip(&p.truth.labels) {
            assert_eq!(*v, l as f64);
        }
    }

    #[test]
    fn four_quadrant_phantom() {
        let p = make_phantom(PhantomKind::FourQuadrant, 128, 0.2, 3).unwrap();
        assert_eq!(p.image.channels(), 3);
        let counts = p.truth.labels.iter().fold([0usize; 4], |mut c, &l| {
            c[l as usize] += 1;
            c
        });
        assert_eq!(counts, [4096; 4]);
        // per-channel noise: sample variance near 0.04 around the clean levels
        let clean = make_phantom(PhantomKind::FourQuadrant, 128, 0.0, 3).unwrap();
        let n = p.image.values().len() as f64;
        let var: f64 = p
            .image
            .values()
            .iter()
            .zip(clean.image.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n;
        assert!((var - 0.04).abs() < 0.002, "{var}");
    }

    #[test]
    fn phantom_is_deterministic() {
        let a = make_phantom(PhantomKind::Disks, 64, 0.1, 42).unwrap();
        let b = make_phantom(PhantomKind::Disks, 64, 0.1, 42).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.truth, b.truth);
        assert!(make_phantom(PhantomKind::Disks, 8, 0.1, 42).is_err());
        assert!("bogus".parse::<PhantomKind>().is_err());
    }

    #[test]
    fn brute_energy_zero_for_constant_single_phase() {
        let g = Grid::for_image(8, 8).unwrap();
        let f = ImageField::new(g, 1, vec![0.7; 64]).unwrap();
        let u = Partition::from_labels(g, vec![1; 64], 2).unwrap();
        assert!(brute_energy(&f, &u, 0.03, 1.0).unwrap().abs() < 1e-12);
    }
}
