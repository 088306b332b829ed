//! Phase means, fidelity fields, the heat-kernel perimeter estimate and the
//! total approximate energy
//!
//! ```text
//! E = Σ_i ∫ u_i g_i  +  λ √(π/δt) Σ_i Σ_{j≠i} ∫ u_i (G_δt * u_j)
//! ```
//!
//! with `g_i = ‖C_i − f‖²` and `C_i` the mean of `f` over phase `i`.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ImageField, Partition, ScalarField};
use crate::spectral::{ConvolutionPlan, KernelSpec};

/// Fidelity value assigned everywhere to a phase with zero area. It is far
/// above any `‖C − f‖²` reachable on normalized images, so an empty phase
/// never wins a pixel back and drops out of the segmentation.
pub const EMPTY_PHASE_FIDELITY: f64 = 1e30;

/// Per-phase means and areas for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStats {
    means: Vec<Option<Vec<f64>>>,
    areas: Vec<f64>,
}

impl PhaseStats {
    /// Builds stats from explicit means. `None` marks an empty phase.
    pub fn new(means: Vec<Option<Vec<f64>>>, areas: Vec<f64>) -> Result<Self> {
        if means.len() != areas.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} means for {} areas",
                means.len(),
                areas.len()
            )));
        }
        Ok(PhaseStats { means, areas })
    }

    pub fn phases(&self) -> usize {
        self.means.len()
    }

    /// `C_i`, or `None` when phase `i` is empty.
    pub fn mean(&self, i: usize) -> Option<&[f64]> {
        self.means[i].as_deref()
    }

    pub fn means(&self) -> &[Option<Vec<f64>>] {
        &self.means
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn is_empty_phase(&self, i: usize) -> bool {
        self.means[i].is_none()
    }

    pub fn empty_flags(&self) -> Vec<bool> {
        self.means.iter().map(Option::is_none).collect()
    }
}

fn check_shapes(f: &ImageField, u: &Partition) -> Result<()> {
    if !f.grid().same_shape(u.grid()) {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{}, partition is {}x{}",
            f.grid().nx(),
            f.grid().ny(),
            u.grid().nx(),
            u.grid().ny()
        )));
    }
    Ok(())
}

/// Area-weighted phase means `C_i = ∫u_i f / ∫u_i`.
///
/// Sums run over pixels in index order, so the result is bit-reproducible.
pub fn phase_stats(f: &ImageField, u: &Partition) -> Result<PhaseStats> {
    check_shapes(f, u)?;
    let n = u.phases();
    let d = f.channels();
    let mut sums = vec![0.0; n * d];
    let mut counts = vec![0usize; n];
    for (pixel, &label) in f.pixels().zip(u.labels()) {
        let i = label as usize;
        counts[i] += 1;
        for (acc, v) in sums[i * d..(i + 1) * d].iter_mut().zip(pixel) {
            *acc += v;
        }
    }
    let cell = u.grid().cell_area();
    let means = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c == 0 {
                None
            } else {
                // cell areas cancel in the ratio
                Some(
                    sums[i * d..(i + 1) * d]
                        .iter()
                        .map(|s| s / c as f64)
                        .collect(),
                )
            }
        })
        .collect();
    let areas = counts.iter().map(|&c| c as f64 * cell).collect();
    Ok(PhaseStats { means, areas })
}

/// Per-phase fidelity fields `g_i(x) = ‖C_i − f(x)‖²`.
#[derive(Debug, Clone)]
pub struct FidelityField {
    fields: Vec<ScalarField>,
}

impl FidelityField {
    pub fn phases(&self) -> usize {
        self.fields.len()
    }

    pub fn phase(&self, i: usize) -> &ScalarField {
        &self.fields[i]
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }
}

pub(crate) fn squared_distance(mean: &[f64], pixel: &[f64]) -> f64 {
    mean.iter().zip(pixel).map(|(c, v)| (c - v) * (c - v)).sum()
}

pub fn fidelity(f: &ImageField, stats: &PhaseStats) -> Result<FidelityField> {
    let d = f.channels();
    for (i, m) in stats.means().iter().enumerate() {
        if let Some(m) = m {
            if m.len() != d {
                return Err(Error::ShapeMismatch(format!(
                    "mean of phase {i} has {} channels, image has {d}",
                    m.len()
                )));
            }
        }
    }
    let fields = stats
        .means()
        .par_iter()
        .map(|mean| {
            let values = match mean {
                Some(mean) => f.pixels().map(|px| squared_distance(mean, px)).collect(),
                None => vec![EMPTY_PHASE_FIDELITY; f.grid().len()],
            };
            ScalarField::from_raw(*f.grid(), values)
        })
        .collect();
    Ok(FidelityField { fields })
}

/// `G_δt * u_i` for every phase, computed in parallel.
pub(crate) fn diffuse_phases(u: &Partition, plan: &ConvolutionPlan) -> Vec<Vec<f64>> {
    (0..u.phases())
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; u.grid().len()];
            plan.convolve_into(&u.indicator_values(i), &mut out);
            out
        })
        .collect()
}

/// `√(π/δt) ∫ u_i (1 − G*u_i)` per phase, from precomputed diffusions.
pub(crate) fn perimeter_from_diffused(
    u: &Partition,
    diffused: &[Vec<f64>],
    kernel: &KernelSpec,
) -> Vec<f64> {
    let mut sums = vec![0.0; u.phases()];
    for (p, &label) in u.labels().iter().enumerate() {
        let i = label as usize;
        sums[i] += 1.0 - diffused[i][p];
    }
    let scale = kernel.perimeter_scale() * u.grid().cell_area();
    // Only rounding can push the sum below zero: ∫u G*u ≤ ∫u for a symbol ≤ 1.
    sums.into_iter().map(|s| (scale * s).max(0.0)).collect()
}

pub(crate) fn fidelity_integral(u: &Partition, g: &FidelityField) -> f64 {
    let mut sums = vec![0.0; u.phases()];
    for (p, &label) in u.labels().iter().enumerate() {
        let i = label as usize;
        sums[i] += g.fields[i].values()[p];
    }
    u.grid().cell_area() * sums.iter().sum::<f64>()
}

/// Heat-kernel estimate of each phase's boundary length,
/// `|∂Ω_i| ≈ √(π/δt) ∫ u_i G_δt*(1 − u_i)`.
pub fn perimeter_estimate(u: &Partition, plan: &ConvolutionPlan) -> Result<Vec<f64>> {
    if !u.grid().same_shape(plan.grid()) {
        return Err(Error::ShapeMismatch(
            "partition does not match plan grid".into(),
        ));
    }
    let diffused = diffuse_phases(u, plan);
    Ok(perimeter_from_diffused(u, &diffused, plan.kernel()))
}

/// Components of the approximate energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub fidelity_total: f64,
    /// Sum of per-phase boundary estimates; every interface is counted once
    /// from each side.
    pub perimeter_total: f64,
    pub total: f64,
    pub per_phase_perimeter: Vec<f64>,
}

impl EnergyBreakdown {
    pub fn new(fidelity_total: f64, per_phase_perimeter: Vec<f64>, lambda: f64) -> Self {
        let perimeter_total: f64 = per_phase_perimeter.iter().sum();
        let total = fidelity_total + lambda * perimeter_total;
        debug_assert!(fidelity_total >= 0.0 && perimeter_total >= 0.0);
        debug_assert!(total.is_finite());
        EnergyBreakdown {
            fidelity_total,
            perimeter_total,
            total,
            per_phase_perimeter,
        }
    }
}

pub(crate) fn energy_from_parts(
    u: &Partition,
    g: &FidelityField,
    diffused: &[Vec<f64>],
    kernel: &KernelSpec,
    lambda: f64,
) -> EnergyBreakdown {
    let fid = fidelity_integral(u, g);
    let per_phase = perimeter_from_diffused(u, diffused, kernel);
    EnergyBreakdown::new(fid, per_phase, lambda)
}

/// Total approximate energy of partition `u` with phase means from `stats`.
pub fn total_energy(
    f: &ImageField,
    u: &Partition,
    stats: &PhaseStats,
    plan: &ConvolutionPlan,
    lambda: f64,
) -> Result<EnergyBreakdown> {
    check_shapes(f, u)?;
    if !u.grid().same_shape(plan.grid()) {
        return Err(Error::ShapeMismatch(
            "partition does not match plan grid".into(),
        ));
    }
    if stats.phases() != u.phases() {
        return Err(Error::ShapeMismatch(format!(
            "stats for {} phases, partition has {}",
            stats.phases(),
            u.phases()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let g = fidelity(f, stats)?;
    let diffused = diffuse_phases(u, plan);
    Ok(energy_from_parts(u, &g, &diffused, plan.kernel(), lambda))
}

pub(crate) fn warn_empty_phases(stats: &PhaseStats, iteration: usize) {
    for (i, empty) in stats.empty_flags().into_iter().enumerate() {
        if empty {
            warn!("phase {i} is empty at iteration {iteration}; it stays out of the segmentation");
        }
    }
}
