//! Periodic heat-kernel convolution.
//!
//! The kernel is applied in Fourier space through its exact symbol
//! `exp(−|ξ|² δt)`, so the discrete operator conserves mass, is symmetric
//! positive definite and forms a semigroup in `δt`. A slow direct-summation
//! path (`convolve_direct`) exists for cross-checking on small grids.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};

/// Largest grid accepted by [`convolve_direct`].
pub const DIRECT_LIMIT: usize = 4096;

/// Angular frequency of DFT bin `k` on an axis with `n` samples and extent `l`.
pub(crate) fn angular_frequency(k: usize, n: usize, l: f64) -> f64 {
    let signed = if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * PI * signed / l
}

fn axis_symbol(n: usize, l: f64, dt: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let xi = angular_frequency(k, n, l);
            (-xi * xi * dt).exp()
        })
        .collect()
}

/// Heat kernel `G_δt` on a grid, represented by its Fourier symbol.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    grid: Grid,
    dt: f64,
    // The symbol factorizes as sx(kx)·sy(ky).
    sx: Vec<f64>,
    sy: Vec<f64>,
}

impl KernelSpec {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Symbol at DFT bin `(kx, ky)`, with `kx < nx`, `ky < ny`.
    pub fn symbol(&self, kx: usize, ky: usize) -> f64 {
        self.sx[kx] * self.sy[ky]
    }

    /// `√(π/δt)`, the scale turning `∫ u G*(1−u)` into a length.
    pub fn perimeter_scale(&self) -> f64 {
        (PI / self.dt).sqrt()
    }
}

pub fn make_kernel(grid: &Grid, dt: f64) -> Result<KernelSpec> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "diffusion time must be positive and finite, got {dt}"
        )));
    }
    Ok(KernelSpec {
        grid: *grid,
        dt,
        sx: axis_symbol(grid.nx(), grid.lx(), dt),
        sy: axis_symbol(grid.ny(), grid.ly(), dt),
    })
}

struct Workspace {
    row_in: Vec<f64>,
    row_out: Vec<f64>,
    rows: Vec<Complex<f64>>,
    cols: Vec<Complex<f64>>,
    real_scratch: Vec<Complex<f64>>,
    col_scratch: Vec<Complex<f64>>,
}

/// Columns of the half spectrum gathered per batch for the column pass.
const COLUMN_BATCH: usize = 16;

/// Cached FFT plans and workspaces for convolving fields of one grid shape.
///
/// `convolve` takes `&self` and may be called concurrently; each call checks a
/// workspace out of an internal pool.
pub struct ConvolutionPlan {
    kernel: KernelSpec,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    // symbol / (nx·ny) in column-major half-spectrum layout: [kx * ny + ky]
    multiplier: Vec<f64>,
    pool: Mutex<Vec<Workspace>>,
}

impl std::fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("nx", &self.kernel.grid.nx())
            .field("ny", &self.kernel.grid.ny())
            .field("dt", &self.kernel.dt)
            .finish()
    }
}

impl ConvolutionPlan {
    pub fn new(kernel: KernelSpec) -> Self {
        let nx = kernel.grid.nx();
        let ny = kernel.grid.ny();
        let half = nx / 2 + 1;

        let mut real_planner = RealFftPlanner::<f64>::new();
        let r2c = real_planner.plan_fft_forward(nx);
        let c2r = real_planner.plan_fft_inverse(nx);
        let mut planner = FftPlanner::<f64>::new();
        let col_fwd = planner.plan_fft_forward(ny);
        let col_inv = planner.plan_fft_inverse(ny);

        let norm = 1.0 / (nx * ny) as f64;
        let mut multiplier = Vec::with_capacity(half * ny);
        for kx in 0..half {
            for ky in 0..ny {
                multiplier.push(kernel.symbol(kx, ky) * norm);
            }
        }

        ConvolutionPlan {
            kernel,
            r2c,
            c2r,
            col_fwd,
            col_inv,
            multiplier,
            pool: Mutex::new(Vec::new()),
        }
    }

    pub fn for_grid(grid: &Grid, dt: f64) -> Result<Self> {
        Ok(ConvolutionPlan::new(make_kernel(grid, dt)?))
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid {
        &self.kernel.grid
    }

    fn workspace(&self) -> Workspace {
        if let Some(ws) = self.pool.lock().unwrap_or_else(|e| e.into_inner()).pop() {
            return ws;
        }
        let nx = self.kernel.grid.nx();
        let ny = self.kernel.grid.ny();
        let half = nx / 2 + 1;
        let zero = Complex::new(0.0, 0.0);
        let real_scratch = self.r2c.get_scratch_len().max(self.c2r.get_scratch_len());
        let col_scratch = self
            .col_fwd
            .get_inplace_scratch_len()
            .max(self.col_inv.get_inplace_scratch_len());
        Workspace {
            row_in: vec![0.0; nx],
            row_out: vec![0.0; nx],
            rows: vec![zero; ny * half],
            cols: vec![zero; ny * COLUMN_BATCH.min(half)],
            real_scratch: vec![zero; real_scratch],
            col_scratch: vec![zero; col_scratch],
        }
    }

    fn release(&self, ws: Workspace) {
        self.pool.lock().unwrap_or_else(|e| e.into_inner()).push(ws);
    }

    pub fn convolve(&self, u: &ScalarField) -> Result<ScalarField> {
        if !u.grid().same_shape(self.grid()) {
            return Err(Error::ShapeMismatch(format!(
                "field on {}x{} grid, plan for {}x{}",
                u.grid().nx(),
                u.grid().ny(),
                self.grid().nx(),
                self.grid().ny()
            )));
        }
        let mut out = vec![0.0; u.values().len()];
        self.convolve_into(u.values(), &mut out);
        Ok(ScalarField::from_raw(*self.grid(), out))
    }

    /// Writes `G_δt * input` into `out`. Both slices hold `nx·ny` values.
    pub fn convolve_into(&self, input: &[f64], out: &mut [f64]) {
        let nx = self.kernel.grid.nx();
        assert_eq!(
            input.len(),
            self.kernel.grid.len(),
            "input length does not match plan grid"
        );
        self.run(out, |y, row| {
            row.copy_from_slice(&input[y * nx..(y + 1) * nx])
        });
    }

    /// Writes `G_δt * u_phase` into `out`, where `u_phase` is the indicator of
    /// `labels == phase`. Avoids materializing the indicator field.
    pub fn convolve_indicator_into(&self, labels: &[u16], phase: u16, out: &mut [f64]) {
        let nx = self.kernel.grid.nx();
        assert_eq!(
            labels.len(),
            self.kernel.grid.len(),
            "label count does not match plan grid"
        );
        self.run(out, |y, row| {
            for (r, &l) in row.iter_mut().zip(&labels[y * nx..(y + 1) * nx]) {
                *r = if l == phase { 1.0 } else { 0.0 };
            }
        });
    }

    fn run(&self, out: &mut [f64], mut fill_row: impl FnMut(usize, &mut [f64])) {
        let nx = self.kernel.grid.nx();
        let ny = self.kernel.grid.ny();
        let half = nx / 2 + 1;
        assert_eq!(out.len(), nx * ny, "output length does not match plan grid");

        let mut ws = self.workspace();
        let Workspace {
            row_in,
            row_out,
            rows,
            cols,
            real_scratch,
            col_scratch,
        } = &mut ws;

        for (y, dst) in rows.chunks_exact_mut(half).enumerate() {
            fill_row(y, row_in);
            self.r2c
                .process_with_scratch(row_in, dst, real_scratch)
                .expect("forward row transform buffers sized by plan");
        }

        // Column pass in batches: gather a few spectrum columns into
        // contiguous memory, transform, apply the symbol, transform back.
        for start in (0..half).step_by(COLUMN_BATCH) {
            let width = COLUMN_BATCH.min(half - start);
            let batch = &mut cols[..width * ny];
            for y in 0..ny {
                let src = &rows[y * half + start..y * half + start + width];
                for (c, v) in src.iter().enumerate() {
                    batch[c * ny + y] = *v;
                }
            }
            self.col_fwd.process_with_scratch(batch, col_scratch);
            for (v, &m) in batch
                .iter_mut()
                .zip(&self.multiplier[start * ny..(start + width) * ny])
            {
                *v *= m;
            }
            self.col_inv.process_with_scratch(batch, col_scratch);
            for y in 0..ny {
                let dst = &mut rows[y * half + start..y * half + start + width];
                for (c, v) in dst.iter_mut().enumerate() {
                    *v = batch[c * ny + y];
                }
            }
        }

        for (src, dst) in rows.chunks_exact_mut(half).zip(out.chunks_exact_mut(nx)) {
            // The DC bin (and Nyquist bin for even widths) of a real signal is
            // real; clear the rounding residue the inverse transform rejects.
            src[0].im = 0.0;
            if nx.is_multiple_of(2) {
                src[half - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(src, row_out, real_scratch)
                .expect("inverse row transform buffers sized by plan");
            dst.copy_from_slice(row_out);
        }

        self.release(ws);
    }
}

/// One-shot convenience: `G_δt * u` with a throwaway plan.
pub fn convolve(grid: &Grid, dt: f64, u: &ScalarField) -> Result<ScalarField> {
    ConvolutionPlan::for_grid(grid, dt)?.convolve(u)
}

/// Periodic spatial kernel on the grid whose DFT is exactly the heat symbol,
/// built by direct cosine sums. Separable: `k(mx, my) = kx(mx)·ky(my)`.
fn direct_axis_kernel(n: usize, l: f64, dt: f64) -> Vec<f64> {
    let symbol = axis_symbol(n, l, dt);
    (0..n)
        .map(|m| {
            symbol
                .iter()
                .enumerate()
                .map(|(k, s)| s * (2.0 * PI * (k * m % n) as f64 / n as f64).cos())
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Reference convolution by explicit O(N²) periodic summation.
pub fn convolve_direct(grid: &Grid, dt: f64, u: &ScalarField) -> Result<ScalarField> {
    if grid.len() > DIRECT_LIMIT {
        return Err(Error::GridTooLarge {
            pixels: grid.len(),
            limit: DIRECT_LIMIT,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "diffusion time must be positive and finite, got {dt}"
        )));
    }
    if !u.grid().same_shape(grid) {
        return Err(Error::ShapeMismatch("field does not match grid".into()));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let kx = direct_axis_kernel(nx, grid.lx(), dt);
    let ky = direct_axis_kernel(ny, grid.ly(), dt);
    let values = u.values();
    let mut out = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0;
            for qy in 0..ny {
                let wy = ky[(y + ny - qy) % ny];
                for qx in 0..nx {
                    acc += wy * kx[(x + nx - qx) % nx] * values[qy * nx + qx];
                }
            }
            out[y * nx + x] = acc;
        }
    }
    Ok(ScalarField::from_raw(*grid, out))
}
