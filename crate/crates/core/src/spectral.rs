//! Fast solver for `(−Δ_h + c) z = f` on the Dirichlet box.
//!
//! The discrete Laplacian with zero extension is diagonalised by the type-I
//! sine transform along every axis. The transform is computed with a complex
//! FFT of the odd extension of length `2(M+1)`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Field, Grid};

/// Precomputed plan for the shifted Laplacian on one grid.
#[derive(Clone)]
pub struct HelmholtzSolver {
    grid: Grid,
    shift: f64,
    eigen: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for HelmholtzSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HelmholtzSolver")
            .field("grid", &self.grid)
            .field("shift", &self.shift)
            .finish()
    }
}

impl HelmholtzSolver {
    pub fn new(grid: Grid, shift: f64) -> Result<Self> {
        if !(shift > 0.0) {
            return Err(Error::Domain(format!("shift {shift} must be positive")));
        }
        let m = grid.points();
        let h = grid.spacing();
        let eigen = (1..=m)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * (m + 1) as f64)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        Ok(Self { grid, shift, eigen, fft })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Unnormalised DST-I of every line along every axis, in place.
    fn transform(&self, data: &mut [f64]) {
        let g = self.grid;
        let m = g.points();
        let n = 2 * (m + 1);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for axis in 0..g.dim() {
            let s = g.stride(axis);
            g.for_each_line(axis, |start| {
                buf[0] = Complex::new(0.0, 0.0);
                buf[m + 1] = Complex::new(0.0, 0.0);
                for j in 0..m {
                    let v = data[start + j * s];
                    buf[j + 1] = Complex::new(v, 0.0);
                    buf[n - 1 - j] = Complex::new(-v, 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for j in 0..m {
                    data[start + j * s] = -0.5 * buf[j + 1].im;
                }
            });
        }
    }

    /// Solves `(−Δ_h + shift) z = f`.
    pub fn solve(&self, f: &Field) -> Result<Field> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let g = self.grid;
        let m = g.points();
        let mut data = f.values().to_vec();
        self.transform(&mut data);
        let norm = (2.0 / (m + 1) as f64).powi(g.dim() as i32);
        for (i, v) in data.iter_mut().enumerate() {
            let idx = g.multi_index(i);
            let lambda: f64 = (0..g.dim()).map(|a| self.eigen[idx[a]]).sum::<f64>() + self.shift;
            *v *= norm / lambda;
        }
        self.transform(&mut data);
        Field::from_values(g, data)
    }

    /// Riesz representative in the `∫(Du·Dv + shift·uv)` product of a weak
    /// gradient given as node pairings `G_i = E′(u)[e_i]`.
    pub fn riesz(&self, weak: &Field) -> Result<Field> {
        let scaled = weak.scaled(1.0 / self.grid.cell_volume());
        self.solve(&scaled)
    }
}
