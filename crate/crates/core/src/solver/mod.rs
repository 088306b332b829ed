//! The linearize-and-threshold iteration.
//!
//! Each iteration recomputes the phase means `C_i^k`, diffuses every phase
//! indicator with the heat kernel, forms the scores
//!
//! ```text
//! φ_i^k = g_i^k + (2λ√π/√δt)(1 − G_δt * u_i^k)
//! ```
//!
//! and assigns every pixel to its lowest-score phase. The approximate energy
//! never increases along the iteration, which the solver can verify as it
//! runs.

mod init;

use std::f64::consts::PI;
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use init::{initialize, InitStrategy};

use crate::energy::{self, EnergyBreakdown, FidelityField, PhaseStats, EMPTY_PHASE_FIDELITY};
use crate::error::{Error, Result};
use crate::field::{Grid, ImageField, Partition, ScalarField};
use crate::spectral::ConvolutionPlan;

/// Relative slack on the per-iteration decay check. Covers floating-point
/// summation only.
pub const DECAY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub phases: usize,
    pub dt: f64,
    pub lambda: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub init: InitStrategy,
    pub seed: u64,
    pub assert_decay: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            phases: 2,
            dt: 0.01,
            lambda: 0.003,
            tau: 0.0,
            max_iter: 500,
            init: InitStrategy::Circles,
            seed: 0,
            assert_decay: cfg!(debug_assertions),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phases < 2 || self.phases > crate::field::MAX_PHASES {
            return Err(Error::InvalidArgument(format!(
                "phase count must be in [2, {}], got {}",
                crate::field::MAX_PHASES,
                self.phases
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    /// `2λ√π/√δt`, the weight of the diffused indicator in the scores.
    pub fn score_coupling(&self) -> f64 {
        2.0 * self.lambda * PI.sqrt() / self.dt.sqrt()
    }
}

/// Per-phase threshold scores `φ_i`.
#[derive(Debug, Clone)]
pub struct ScoreField {
    grid: Grid,
    fields: Vec<ScalarField>,
}

impl ScoreField {
    pub fn new(fields: Vec<ScalarField>) -> Result<Self> {
        let grid = *fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("score field needs at least one phase".into()))?
            .grid();
        if fields.iter().any(|f| !f.grid().same_shape(&grid)) {
            return Err(Error::ShapeMismatch(
                "score fields on different grids".into(),
            ));
        }
        Ok(ScoreField { grid, fields })
    }

    pub fn phases(&self) -> usize {
        self.fields.len()
    }

    pub fn phase(&self, i: usize) -> &ScalarField {
        &self.fields[i]
    }
}

fn scores_from_parts(g: &FidelityField, diffused: &[Vec<f64>], coupling: f64) -> ScoreField {
    let fields: Vec<ScalarField> = g
        .fields()
        .par_iter()
        .zip(diffused.par_iter())
        .map(|(gi, conv)| {
            let values = gi
                .values()
                .iter()
                .zip(conv)
                .map(|(&gv, &cv)| gv + coupling * (1.0 - cv))
                .collect();
            ScalarField::from_raw(*gi.grid(), values)
        })
        .collect();
    ScoreField {
        grid: *fields[0].grid(),
        fields,
    }
}

/// Scores `φ_i^k` for partition `u` with stats `stats`, using one convolution
/// per phase.
pub fn compute_scores(
    f: &ImageField,
    u: &Partition,
    stats: &PhaseStats,
    plan: &ConvolutionPlan,
    config: &SolverConfig,
) -> Result<ScoreField> {
    if !f.grid().same_shape(u.grid()) || !u.grid().same_shape(plan.grid()) {
        return Err(Error::ShapeMismatch(
            "image, partition and plan grids differ".into(),
        ));
    }
    if stats.phases() != u.phases() {
        return Err(Error::ShapeMismatch(
            "stats and partition phase counts differ".into(),
        ));
    }
    let g = energy::fidelity(f, stats)?;
    let diffused = energy::diffuse_phases(u, plan);
    Ok(scores_from_parts(&g, &diffused, config.score_coupling()))
}

/// Assigns each pixel to `argmin_i φ_i`, ties going to the lowest index.
pub fn threshold(scores: &ScoreField) -> Partition {
    let n = scores.phases();
    let len = scores.grid.len();
    let mut labels = vec![0u16; len];
    const CHUNK: usize = 4096;
    labels
        .par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (off, label) in chunk.iter_mut().enumerate() {
                let p = base + off;
                let mut best = 0;
                let mut best_score = scores.fields[0].values()[p];
                for i in 1..n {
                    let s = scores.fields[i].values()[p];
                    if s < best_score {
                        best = i;
                        best_score = s;
                    }
                }
                *label = best as u16;
            }
        });
    Partition::from_raw(scores.grid, labels, n)
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub k: usize,
    /// Energy of `u^k` with means `C^k`.
    pub energy: EnergyBreakdown,
    /// Normalized change between `u^k` and `u^{k+1}`.
    pub e_k: f64,
    pub means: Vec<Option<Vec<f64>>>,
    pub changed_pixels: usize,
    /// Seconds spent on this iteration.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ToleranceMet,
    MaxIter,
    DecayViolationAbort,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub final_partition: Partition,
    pub reports: Vec<IterationReport>,
    /// Energy of `final_partition` with its own means.
    pub final_energy: EnergyBreakdown,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.reports.len()
    }
}

/// Diagnostic for an energy increase between two iterates.
#[derive(Debug, Clone)]
pub struct DecayViolation {
    pub iteration: usize,
    pub previous_energy: f64,
    pub current_energy: f64,
    pub previous: Partition,
    pub current: Partition,
    /// Everything recorded up to the abort.
    pub partial: SolveResult,
}

impl std::fmt::Display for DecayViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "energy increased at iteration {}: {} -> {} (+{:e})",
            self.iteration,
            self.previous_energy,
            self.current_energy,
            self.current_energy - self.previous_energy
        )
    }
}

/// Result of evaluating one iterate.
struct Evaluation {
    stats: PhaseStats,
    energy: EnergyBreakdown,
    next: Partition,
    next_stats: PhaseStats,
    changed: usize,
}

/// Per-chunk accumulators of the fused pixel pass.
struct Partial {
    fidelity: Vec<f64>,
    perimeter: Vec<f64>,
    next_sums: Vec<f64>,
    next_counts: Vec<usize>,
    changed: usize,
}

impl Partial {
    fn new(n: usize, d: usize) -> Self {
        Partial {
            fidelity: vec![0.0; n],
            perimeter: vec![0.0; n],
            next_sums: vec![0.0; n * d],
            next_counts: vec![0; n],
            changed: 0,
        }
    }

    fn absorb(&mut self, other: &Partial) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.fidelity, &other.fidelity);
        add(&mut self.perimeter, &other.perimeter);
        add(&mut self.next_sums, &other.next_sums);
        for (x, y) in self.next_counts.iter_mut().zip(&other.next_counts) {
            *x += y;
        }
        self.changed += other.changed;
    }
}

const PASS_CHUNK: usize = 4096;

fn stats_from_sums(sums: &[f64], counts: &[usize], d: usize, cell: f64) -> PhaseStats {
    let means = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            (c > 0).then(|| {
                sums[i * d..(i + 1) * d]
                    .iter()
                    .map(|s| s / c as f64)
                    .collect()
            })
        })
        .collect();
    let areas = counts.iter().map(|&c| c as f64 * cell).collect();
    PhaseStats::new(means, areas).expect("lengths agree")
}

/// Stateful driver for the iteration; owns the convolution plan and the
/// diffusion buffers so repeated steps reuse them.
pub struct Solver<'a> {
    f: &'a ImageField,
    config: SolverConfig,
    plan: ConvolutionPlan,
    current: Partition,
    stats: Option<PhaseStats>,
    diffused: Vec<Vec<f64>>,
}

impl<'a> Solver<'a> {
    pub fn new(f: &'a ImageField, config: SolverConfig, initial: Partition) -> Result<Self> {
        config.validate()?;
        if !f.grid().same_shape(initial.grid()) {
            return Err(Error::ShapeMismatch(
                "initial partition does not match image".into(),
            ));
        }
        if initial.phases() != config.phases {
            return Err(Error::ShapeMismatch(format!(
                "initial partition has {} phases, config asks for {}",
                initial.phases(),
                config.phases
            )));
        }
        let plan = ConvolutionPlan::for_grid(f.grid(), config.dt)?;
        let diffused = vec![vec![0.0; f.grid().len()]; config.phases];
        Ok(Solver {
            f,
            config,
            plan,
            current: initial,
            stats: None,
            diffused,
        })
    }

    pub fn current(&self) -> &Partition {
        &self.current
    }

    pub fn plan(&self) -> &ConvolutionPlan {
        &self.plan
    }

    /// Diffuses the current phases, then makes one pass over the pixels that
    /// accumulates the energy, picks the next labels and gathers the sums for
    /// the next means. Chunks are reduced in index order, so results do not
    /// depend on the thread count.
    fn evaluate(&mut self) -> Result<Evaluation> {
        let stats = match self.stats.take() {
            Some(s) => s,
            None => energy::phase_stats(self.f, &self.current)?,
        };
        let n = self.config.phases;
        let d = self.f.channels();
        let labels = self.current.labels();
        let plan = &self.plan;
        self.diffused
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, out)| plan.convolve_indicator_into(labels, i as u16, out));

        let mut means = vec![0.0; n * d];
        let mut empty = vec![false; n];
        for i in 0..n {
            match stats.mean(i) {
                Some(m) => means[i * d..(i + 1) * d].copy_from_slice(m),
                None => empty[i] = true,
            }
        }
        let coupling = self.config.score_coupling();
        let diffused = &self.diffused;
        let f = self.f;

        let mut next = vec![0u16; labels.len()];
        let partials: Vec<Partial> = next
            .par_chunks_mut(PASS_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut acc = Partial::new(n, d);
                let mut g = vec![0.0; n];
                let base = c * PASS_CHUNK;
                for (off, slot) in chunk.iter_mut().enumerate() {
                    let p = base + off;
                    let px = f.pixel(p);
                    for i in 0..n {
                        g[i] = if empty[i] {
                            EMPTY_PHASE_FIDELITY
                        } else {
                            energy::squared_distance(&means[i * d..(i + 1) * d], px)
                        };
                    }
                    let l = labels[p] as usize;
                    acc.fidelity[l] += g[l];
                    acc.perimeter[l] += 1.0 - diffused[l][p];

                    let mut best = 0;
                    let mut best_score = g[0] + coupling * (1.0 - diffused[0][p]);
                    for i in 1..n {
                        let s = g[i] + coupling * (1.0 - diffused[i][p]);
                        if s < best_score {
                            best = i;
                            best_score = s;
                        }
                    }
                    *slot = best as u16;
                    acc.changed += usize::from(best != l);
                    acc.next_counts[best] += 1;
                    for (s, v) in acc.next_sums[best * d..(best + 1) * d].iter_mut().zip(px) {
                        *s += v;
                    }
                }
                acc
            })
            .collect();

        let mut total = Partial::new(n, d);
        for part in &partials {
            total.absorb(part);
        }
        let grid = *self.f.grid();
        let cell = grid.cell_area();
        let scale = self.plan.kernel().perimeter_scale() * cell;
        let per_phase = total
            .perimeter
            .iter()
            .map(|&s| (scale * s).max(0.0))
            .collect();
        let energy = EnergyBreakdown::new(
            cell * total.fidelity.iter().sum::<f64>(),
            per_phase,
            self.config.lambda,
        );
        Ok(Evaluation {
            stats,
            energy,
            next: Partition::from_raw(grid, next, n),
            next_stats: stats_from_sums(&total.next_sums, &total.next_counts, d, cell),
            changed: total.changed,
        })
    }

    /// Energy of the current iterate with its own means.
    pub fn current_energy(&self) -> Result<EnergyBreakdown> {
        let stats = energy::phase_stats(self.f, &self.current)?;
        energy::total_energy(
            self.f,
            &self.current,
            &stats,
            &self.plan,
            self.config.lambda,
        )
    }

    /// One full iteration: stats, scores, threshold. Returns the report and
    /// advances the current partition.
    pub fn step(&mut self, k: usize) -> Result<IterationReport> {
        let start = Instant::now();
        let eval = self.evaluate()?;
        energy::warn_empty_phases(&eval.stats, k);
        let e_k = 2.0 * eval.changed as f64 / self.current.grid().len() as f64;
        self.current = eval.next;
        self.stats = Some(eval.next_stats);
        Ok(IterationReport {
            k,
            energy: eval.energy,
            e_k,
            means: eval.stats.means().to_vec(),
            changed_pixels: eval.changed,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }

    fn live_phases(&self) -> usize {
        match &self.stats {
            Some(s) => s.areas().iter().filter(|&&a| a > 0.0).count(),
            None => self.current.counts().iter().filter(|&&c| c > 0).count(),
        }
    }

    /// Runs the iteration to completion, handing each report to `sink`.
    pub fn run(mut self, sink: &mut dyn FnMut(&IterationReport)) -> Result<SolveResult> {
        let mut reports: Vec<IterationReport> = Vec::new();
        let mut previous: Option<Partition> = None;
        let mut stop_reason = StopReason::MaxIter;
        let mut live = self.live_phases();

        for k in 0..self.config.max_iter {
            let before = self.current.clone();
            let report = self.step(k)?;

            if let (Some(prev_report), Some(prev)) = (reports.last(), previous.as_ref()) {
                if let Some(v) =
                    self.check_decay(k, &prev_report.energy, &report.energy, prev, &before)
                {
                    return Err(self.abort(v, reports, report));
                }
            }

            let now_live = self.live_phases();
            if now_live < live {
                warn!("iteration {k}: {} phase(s) vanished", live - now_live);
                live = now_live;
            }
            debug!(
                "iteration {k}: E = {:.12e}, e = {:.3e}, changed = {}",
                report.energy.total, report.e_k, report.changed_pixels
            );

            sink(&report);
            let done = report.e_k <= self.config.tau;
            reports.push(report);
            previous = Some(before);
            if done {
                stop_reason = StopReason::ToleranceMet;
                break;
            }
        }

        let last = reports.last().expect("max_iter >= 1");
        let final_energy = if last.changed_pixels == 0 {
            last.energy.clone()
        } else {
            let e = self.current_energy()?;
            if let Some(v) = self.check_decay(
                reports.len(),
                &last.energy,
                &e,
                previous.as_ref().expect("at least one step"),
                &self.current,
            ) {
                return Err(self.abort_final(v, reports, e));
            }
            e
        };

        Ok(SolveResult {
            final_partition: self.current,
            reports,
            final_energy,
            converged: stop_reason == StopReason::ToleranceMet,
            stop_reason,
        })
    }

    fn check_decay(
        &self,
        k: usize,
        prev: &EnergyBreakdown,
        cur: &EnergyBreakdown,
        prev_u: &Partition,
        cur_u: &Partition,
    ) -> Option<(usize, f64, f64, Partition, Partition)> {
        if !self.config.assert_decay {
            return None;
        }
        let bound = prev.total + DECAY_SLACK * (1.0 + prev.total.abs());
        if cur.total > bound {
            Some((k, prev.total, cur.total, prev_u.clone(), cur_u.clone()))
        } else {
            None
        }
    }

    fn abort(
        self,
        v: (usize, f64, f64, Partition, Partition),
        mut reports: Vec<IterationReport>,
        report: IterationReport,
    ) -> Error {
        let energy = report.energy.clone();
        reports.push(report);
        self.abort_final(v, reports, energy)
    }

    fn abort_final(
        &self,
        v: (usize, f64, f64, Partition, Partition),
        reports: Vec<IterationReport>,
        final_energy: EnergyBreakdown,
    ) -> Error {
        let (iteration, previous_energy, current_energy, previous, current) = v;
        let partial = SolveResult {
            final_partition: current.clone(),
            reports,
            final_energy,
            converged: false,
            stop_reason: StopReason::DecayViolationAbort,
        };
        Error::DecayViolation(Box::new(DecayViolation {
            iteration,
            previous_energy,
            current_energy,
            previous,
            current,
            partial,
        }))
    }
}

/// Runs the full iteration from the configured initial partition.
pub fn solve(f: &ImageField, config: &SolverConfig) -> Result<SolveResult> {
    solve_with_sink(f, config, &mut |_| {})
}

pub fn solve_with_sink(
    f: &ImageField,
    config: &SolverConfig,
    sink: &mut dyn FnMut(&IterationReport),
) -> Result<SolveResult> {
    config.validate()?;
    let initial = initialize(f, config.phases, config.init, config.seed)?;
    Solver::new(f, config.clone(), initial)?.run(sink)
}

/// Runs the full iteration from an explicit initial partition.
pub fn solve_from(
    f: &ImageField,
    config: &SolverConfig,
    initial: Partition,
) -> Result<SolveResult> {
    Solver::new(f, config.clone(), initial)?.run(&mut |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::phase_stats;

    fn grid(n: usize) -> Grid {
        Grid::for_image(n, n).unwrap()
    }

    fn scores(grid: Grid, per_phase: &[f64]) -> ScoreField {
        ScoreField::new(
            per_phase
                .iter()
                .map(|&v| ScalarField::constant(grid, v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn threshold_strict_argmin() {
        let u = threshold(&scores(grid(2), &[0.2, 0.1, 0.5]));
        assert!(u.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn threshold_tie_goes_low() {
        let u = threshold(&scores(grid(2), &[0.3, 0.3]));
        assert!(u.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn threshold_sentinels() {
        let big = energy::EMPTY_PHASE_FIDELITY;
        let u = threshold(&scores(grid(3), &[big, big, 0.7, big]));
        assert!(u.labels().iter().all(|&l| l == 2));
    }

    #[test]
    fn zero_lambda_scores_are_fidelity() {
        let g = grid(8);
        let f = ImageField::new(g, 1, (0..64).map(|p| p as f64 / 64.0).collect()).unwrap();
        let u = initialize(&f, 2, InitStrategy::Stripes, 0).unwrap();
        let s = phase_stats(&f, &u).unwrap();
        let plan = ConvolutionPlan::for_grid(&g, 0.03).unwrap();
        let cfg = SolverConfig {
            lambda: 0.0,
            ..SolverConfig::default()
        };
        let phi = compute_scores(&f, &u, &s, &plan, &cfg).unwrap();
        let fid = energy::fidelity(&f, &s).unwrap();
        for i in 0..2 {
            assert_eq!(phi.phase(i).values(), fid.phase(i).values());
        }
    }

    #[test]
    fn full_phase_scores_equal_fidelity() {
        let g = grid(16);
        let f = ImageField::new(g, 1, vec![0.25; 256]).unwrap();
        let u = Partition::from_labels(g, vec![0; 256], 2).unwrap();
        let s = phase_stats(&f, &u).unwrap();
        let plan = ConvolutionPlan::for_grid(&g, 0.03).unwrap();
        let cfg = SolverConfig {
            lambda: 0.01,
            dt: 0.03,
            ..SolverConfig::default()
        };
        let phi = compute_scores(&f, &u, &s, &plan, &cfg).unwrap();
        let fid = energy::fidelity(&f, &s).unwrap();
        for (a, b) in phi.phase(0).values().iter().zip(fid.phase(0).values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_two_level_is_fixed_point() {
        let g = grid(16);
        let f = ImageField::new(
            g,
            1,
            (0..256).map(|p| if p < 128 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let cfg = SolverConfig {
            phases: 2,
            lambda: 0.0,
            dt: 0.03,
            init: InitStrategy::Stripes,
            ..SolverConfig::default()
        };
        let r = solve(&f, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations(), 1);
        assert_eq!(r.reports[0].e_k, 0.0);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig {
                phases: 1,
                ..SolverConfig::default()
            },
            SolverConfig {
                dt: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                lambda: -1.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                tau: -0.1,
                ..SolverConfig::default()
            },
            SolverConfig {
                max_iter: 0,
                ..SolverConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn max_iter_stop() {
        let g = grid(32);
        let f = ImageField::new(
            g,
            1,
            (0..1024).map(|p| ((p * 7919) % 97) as f64 / 97.0).collect(),
        )
        .unwrap();
        let cfg = SolverConfig {
            phases: 3,
            max_iter: 1,
            init: InitStrategy::Random,
            assert_decay: true,
            ..SolverConfig::default()
        };
        let r = solve(&f, &cfg).unwrap();
        assert_eq!(r.stop_reason, StopReason::MaxIter);
        assert!(!r.converged);
        assert!(r.final_energy.total <= r.reports[0].energy.total * (1.0 + 1e-9) + 1e-9);
    }
}
