//! Constant-coefficient semigroups as Fourier multipliers.
//!
//! For an autonomous constant-in-space coefficient field the solution
//! operator is exact up to FFT round-off: each grid frequency carries the
//! N x N contracted symbol sigma(xi), and applying the semigroup
//! multiplies the transformed components by exp(-t sigma(xi)). The
//! Hermitian part of sigma is positive semidefinite, so the discrete
//! operator is an L^2 contraction.

use num_complex::Complex64;

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::fft::FftContext;
use crate::grid::{pairwise_sum, Field};
use crate::linalg::{hermitian_eigenvalues, matrix_exp, CMatrix};

pub struct Semigroup {
    coeffs: CoefficientField,
    ctx: FftContext,
    /// N x N symbol per grid frequency.
    symbols: Vec<CMatrix>,
}

impl Semigroup {
    pub fn new(coeffs: CoefficientField) -> Result<Self> {
        if !(coeffs.autonomous && coeffs.constant_in_space) {
            return Err(Error::InvalidArgument(
                "semigroup requires autonomous constant-in-space coefficients".into(),
            ));
        }
        let grid = coeffs.grid();
        let ctx = FftContext::new(grid);
        let m = coeffs.order();
        let lambda = coeffs.lambda;
        let mut symbols = Vec::with_capacity(grid.total_points());
        for flat in 0..grid.total_points() {
            let xi = ctx.freq_vec(flat);
            let sig = coeffs.symbol(&xi)?;
            let xi2m = (xi[0] * xi[0] + xi[1] * xi[1]).powi(m as i32);
            if flat == 0 {
                if sig.max_entry_modulus() > 1e-12 {
                    return Err(Error::InvalidArgument(
                        "symbol must vanish at xi = 0".into(),
                    ));
                }
            } else {
                let min_re = hermitian_eigenvalues(&sig.hermitian_part())[0];
                if min_re < lambda * xi2m - 1e-9 * xi2m.max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "symbol coercivity violated at frequency {flat}: {min_re} < {}",
                        lambda * xi2m
                    )));
                }
            }
            symbols.push(sig);
        }
        Ok(Semigroup {
            coeffs,
            ctx,
            symbols,
        })
    }

    pub fn coeffs(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn grid(&self) -> crate::grid::Grid {
        self.coeffs.grid()
    }

    pub fn order(&self) -> usize {
        self.coeffs.order()
    }

    /// Per-frequency multiplier table exp(-t sigma(xi)).
    pub fn multiplier(&self, t: f64) -> Result<Vec<CMatrix>> {
        self.symbols
            .iter()
            .map(|s| matrix_exp(&s.scale(Complex64::new(-t, 0.0))))
            .collect()
    }

    /// u(t) = IFFT(exp(-t sigma) FFT(f)); t = 0 returns f unchanged.
    pub fn apply(&self, t: f64, f: &Field) -> Result<Field> {
        if t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "semigroup time {t} must be >= 0"
            )));
        }
        if f.grid() != self.grid() || f.components() != self.coeffs.components() {
            return Err(Error::InvalidArgument(
                "field does not match semigroup grid/components".into(),
            ));
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        let ncomp = f.components();
        let np = self.grid().total_points();
        let mut hats: Vec<Vec<Complex64>> = (0..ncomp).map(|c| f.component(c).to_vec()).collect();
        for hat in hats.iter_mut() {
            self.ctx.forward(hat);
        }
        if ncomp == 1 {
            for (k, hat) in hats[0].iter_mut().enumerate() {
                let z = -t * self.symbols[k][(0, 0)];
                *hat *= z.exp();
            }
        } else {
            let mut vin = vec![Complex64::new(0.0, 0.0); ncomp];
            let mut vout = vec![Complex64::new(0.0, 0.0); ncomp];
            for k in 0..np {
                let e = matrix_exp(&self.symbols[k].scale(Complex64::new(-t, 0.0)))?;
                for c in 0..ncomp {
                    vin[c] = hats[c][k];
                }
                e.mul_vec(&vin, &mut vout);
                for c in 0..ncomp {
                    hats[c][k] = vout[c];
                }
            }
        }
        let mut out = Field::zeros(self.grid(), ncomp);
        for (c, mut hat) in hats.into_iter().enumerate() {
            self.ctx.inverse(&mut hat);
            out.component_mut(c).copy_from_slice(&hat);
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("semigroup apply".into()));
        }
        Ok(out)
    }

    /// Schwartz-kernel sample: the semigroup applied to the discrete delta
    /// (value 1/h^n at the box center). Requires t^{1/2m} >= 4h.
    pub fn kernel(&self, t: f64) -> Result<Field> {
        let grid = self.grid();
        let h = grid.spacing();
        let scale = t.powf(1.0 / (2.0 * self.order() as f64));
        if !(t > 0.0) || scale < 4.0 * h {
            return Err(Error::KernelUnresolved {
                scale,
                required: 4.0 * h,
            });
        }
        let mut delta = Field::zeros(grid, self.coeffs.components());
        let center = grid.total_points() / 2
            + if grid.dim() == 2 {
                grid.points_per_axis() / 2
            } else {
                0
            };
        let amp = Complex64::new(1.0 / grid.cell_volume(), 0.0);
        for c in 0..self.coeffs.components() {
            delta.component_mut(c)[center] = amp;
        }
        self.apply(t, &delta)
    }

    /// Flat index of the kernel source point.
    pub fn kernel_center(&self) -> usize {
        let grid = self.grid();
        grid.total_points() / 2
            + if grid.dim() == 2 {
                grid.points_per_axis() / 2
            } else {
                0
            }
    }
}

#[derive(Debug, Clone)]
pub struct KernelFit {
    /// Amplitude c1 of c1 t^{-n/2m} exp(-c2 (|x|^{2m}/t)^{1/(2m-1)}).
    pub c1: f64,
    /// Fitted decay constant c2 (positive for parabolic kernels).
    pub c2: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares fit of log |k(t,x)| + (n/2m) log t against
/// -(|x|^{2m}/t)^{1/(2m-1)} over the interior window, pooling all listed
/// times. Points where the kernel falls below 1e-12 of its maximum are
/// excluded (polyharmonic kernels oscillate through zero).
pub fn kernel_bound_fit(sg: &Semigroup, times: &[f64]) -> Result<KernelFit> {
    let grid = sg.grid();
    let m = sg.order() as f64;
    let n = grid.dim() as f64;
    let center = sg.kernel_center();
    let ccoord = grid.coords(center);
    let window = grid.interior_window();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &t in times {
        let k = sg.kernel(t)?;
        let peak = (0..grid.total_points())
            .map(|i| k.modulus_at(i))
            .fold(0.0, f64::max);
        for &i in &window {
            let v = k.modulus_at(i);
            if v < 1e-12 * peak {
                continue;
            }
            let x = grid.coords(i);
            let d = grid.periodic_distance(&x[..grid.dim()], &ccoord[..grid.dim()]);
            if d == 0.0 {
                continue;
            }
            let arg = (d.powf(2.0 * m) / t).powf(1.0 / (2.0 * m - 1.0));
            xs.push(-arg);
            ys.push(v.ln() + (n / (2.0 * m)) * t.ln());
        }
    }
    if xs.len() < 8 {
        return Err(Error::UnresolvedConfig(
            "kernel fit has too few usable samples".into(),
        ));
    }
    let nn = xs.len() as f64;
    let sx = pairwise_sum(&xs);
    let sy = pairwise_sum(&ys);
    let sxx = pairwise_sum(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
    let sxy = pairwise_sum(&xs.iter().zip(&ys).map(|(x, y)| x * y).collect::<Vec<_>>());
    let slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    let intercept = (sy - slope * sx) / nn;
    let res: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .collect();
    Ok(KernelFit {
        c1: intercept.exp(),
        c2: slope,
        residual: (pairwise_sum(&res) / nn).sqrt(),
        samples: xs.len(),
    })
}
