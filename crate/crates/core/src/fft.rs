//! FFT plumbing for periodic grids: cached plans, unnormalized forward /
//! normalized inverse transforms along each axis, and frequency tables
//! xi_k = 2 pi s(k) / L with s(k) the signed mode number.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

#[derive(Clone)]
pub struct FftContext {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Signed frequency per index along one axis (all axes share P).
    freqs: Vec<f64>,
}

impl std::fmt::Debug for FftContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftContext")
            .field("grid", &self.grid)
            .finish()
    }
}

impl FftContext {
    pub fn new(grid: Grid) -> Self {
        let p = grid.points_per_axis();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(p);
        let inverse = planner.plan_fft_inverse(p);
        let freqs = (0..p)
            .map(|i| {
                let signed = if i < p / 2 {
                    i as i64
                } else {
                    i as i64 - p as i64
                };
                2.0 * std::f64::consts::PI * signed as f64 / grid.box_length()
            })
            .collect();
        FftContext {
            grid,
            forward,
            inverse,
            freqs,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Signed frequency along an axis for flat index component `k`.
    pub fn freq(&self, k: usize) -> f64 {
        self.freqs[k]
    }

    /// Frequency vector (length n) for a flat grid index.
    pub fn freq_vec(&self, flat: usize) -> [f64; 2] {
        let p = self.grid.points_per_axis();
        match self.grid.dim() {
            1 => [self.freqs[flat], 0.0],
            _ => [self.freqs[flat / p], self.freqs[flat % p]],
        }
    }

    /// |xi|^2 for a flat grid index.
    pub fn freq_norm_sqr(&self, flat: usize) -> f64 {
        let v = self.freq_vec(flat);
        v[0] * v[0] + v[1] * v[1]
    }

    /// In-place unnormalized forward transform of one component
    /// (length P^n, row-major).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// In-place inverse transform, normalized so that inverse(forward(x)) = x.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, false);
        let scale = 1.0 / self.grid.total_points() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], fwd: bool) {
        let p = self.grid.points_per_axis();
        let plan = if fwd { &self.forward } else { &self.inverse };
        match self.grid.dim() {
            1 => plan.process(data),
            2 => {
                // rows
                for row in data.chunks_exact_mut(p) {
                    plan.process(row);
                }
                // columns via transpose
                let mut col = vec![Complex64::new(0.0, 0.0); p];
                for j in 0..p {
                    for i in 0..p {
                        col[i] = data[i * p + j];
                    }
                    plan.process(&mut col);
                    for i in 0..p {
                        data[i * p + j] = col[i];
                    }
                }
            }
            _ => unreachable!("grid dimension is validated at construction"),
        }
    }
}
