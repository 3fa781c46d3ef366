//! Spatial derivative operators on periodic fields.
//!
//! The spectral scheme differentiates the trigonometric interpolant
//! exactly (multiplication by (i xi)^alpha in frequency space); the fd
//! schemes apply centered first-derivative stencils of order 2 or 4 with
//! periodic wrap, once per unit of each multi-index entry.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftContext;
use crate::grid::{binomial, multi_indices, Field, Grid, MultiIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Spectral,
    Fd2,
    Fd4,
}

/// (i xi)^alpha for one frequency vector.
fn spectral_multiplier(alpha: &MultiIndex, xi: &[f64; 2]) -> Complex64 {
    let mut m = Complex64::new(1.0, 0.0);
    for (ax, &k) in alpha.entries().iter().enumerate() {
        let iw = Complex64::new(0.0, xi[ax]);
        for _ in 0..k {
            m *= iw;
        }
    }
    m
}

/// Table of (i xi)^alpha over all grid frequencies.
pub fn multiplier_table(ctx: &FftContext, alpha: &MultiIndex) -> Vec<Complex64> {
    (0..ctx.grid().total_points())
        .map(|i| spectral_multiplier(alpha, &ctx.freq_vec(i)))
        .collect()
}

fn fd_first_derivative(
    grid: &Grid,
    data: &[Complex64],
    axis: usize,
    order4: bool,
) -> Vec<Complex64> {
    let h = grid.spacing();
    let np = grid.total_points();
    let mut out = vec![Complex64::new(0.0, 0.0); np];
    let step = |flat: usize, k: i64| -> usize {
        let mut off = [0i64; 2];
        off[axis] = k;
        grid.shift(flat, &off)
    };
    if order4 {
        let c1 = 8.0 / (12.0 * h);
        let c2 = 1.0 / (12.0 * h);
        for i in 0..np {
            out[i] = c1 * (data[step(i, 1)] - data[step(i, -1)])
                - c2 * (data[step(i, 2)] - data[step(i, -2)]);
        }
    } else {
        let c1 = 1.0 / (2.0 * h);
        for i in 0..np {
            out[i] = c1 * (data[step(i, 1)] - data[step(i, -1)]);
        }
    }
    out
}

/// Partial derivative d^alpha f under the given scheme.
pub fn derivative(f: &Field, alpha: &MultiIndex, scheme: Scheme) -> Result<Field> {
    let grid = f.grid();
    if alpha.dim() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "multi-index dimension {} != grid dimension {}",
            alpha.dim(),
            grid.dim()
        )));
    }
    let mut out = f.clone();
    match scheme {
        Scheme::Spectral => {
            let ctx = FftContext::new(grid);
            let table = multiplier_table(&ctx, alpha);
            for c in 0..f.components() {
                let comp = out.component_mut(c);
                ctx.forward(comp);
                for (z, m) in comp.iter_mut().zip(&table) {
                    *z *= m;
                }
                ctx.inverse(comp);
            }
        }
        Scheme::Fd2 | Scheme::Fd4 => {
            let order4 = scheme == Scheme::Fd4;
            for c in 0..f.components() {
                let mut data = out.component(c).to_vec();
                for (axis, &k) in alpha.entries().iter().enumerate() {
                    for _ in 0..k {
                        data = fd_first_derivative(&grid, &data, axis, order4);
                    }
                }
                out.component_mut(c).copy_from_slice(&data);
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("derivative".into()));
    }
    Ok(out)
}

/// All derivatives of order m, in the project-wide multi-index order.
/// List length is binomial(n + m - 1, m).
pub fn grad_m(f: &Field, m: usize, scheme: Scheme) -> Result<Vec<Field>> {
    let n = f.grid().dim();
    let alphas = multi_indices(n, m);
    debug_assert_eq!(alphas.len(), binomial(n + m - 1, m));
    alphas.iter().map(|a| derivative(f, a, scheme)).collect()
}

/// Gradient trajectory: per time slice, the M*N-component field whose
/// blocks are the order-m derivatives of each component of u. Block order
/// is (alpha, component) with alpha major, matching the coefficient
/// matrix layout.
pub fn grad_m_trajectory(
    u: &crate::grid::SpaceTimeField,
    m: usize,
    scheme: Scheme,
) -> Result<crate::grid::SpaceTimeField> {
    let grid = u.grid();
    let ncomp = u.components();
    let alphas = multi_indices(grid.dim(), m);
    let np = grid.total_points();
    let mut slices = Vec::with_capacity(u.len());
    for s in u.slices() {
        let mut values = Vec::with_capacity(alphas.len() * ncomp * np);
        for a in &alphas {
            let d = derivative(s, a, scheme)?;
            values.extend_from_slice(d.values());
        }
        slices.push(Field::from_values(grid, alphas.len() * ncomp, values)?);
    }
    crate::grid::SpaceTimeField::new(u.times().to_vec(), slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, make_grid};

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn spectral_derivative_of_sine_exact() {
        let l = 8.0;
        let g = make_grid(1, 128, l).unwrap();
        let f = Field::from_fn(g, |x| Complex64::new((TAU * x[0] / l).sin(), 0.0));
        let d = derivative(&f, &MultiIndex::new(vec![1]), Scheme::Spectral).unwrap();
        let k = TAU / l;
        for i in 0..g.total_points() {
            let x = g.coords(i)[0];
            let expect = k * (TAU * x / l).cos();
            assert!((d.at(0, i).re - expect).abs() < 1e-12);
            assert!(d.at(0, i).im.abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_derivative_eigenfunction_relative_error() {
        // d^alpha e^{2 pi i k x / L} = (2 pi i k / L)^alpha e^{...}, |k| <= P/4.
        let l = 4.0;
        let g = make_grid(1, 64, l).unwrap();
        for k in [1i64, 5, 16, -7, -16] {
            let f = Field::from_fn(g, |x| Complex64::new(0.0, TAU * k as f64 * x[0] / l).exp());
            let d = derivative(&f, &MultiIndex::new(vec![2]), Scheme::Spectral).unwrap();
            let factor = Complex64::new(0.0, TAU * k as f64 / l).powi(2);
            for i in 0..g.total_points() {
                let expect = factor * f.at(0, i);
                let denom = factor.norm().max(1e-300);
                assert!((d.at(0, i) - expect).norm() / denom < 1e-12, "k={k}");
            }
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = make_grid(2, 16, 4.0).unwrap();
        let f = Field::constant(g, 1, Complex64::new(2.5, -1.0));
        for scheme in [Scheme::Spectral, Scheme::Fd2, Scheme::Fd4] {
            let d = derivative(&f, &MultiIndex::new(vec![1, 0]), scheme).unwrap();
            assert!(lp_norm(&d, f64::INFINITY) < 1e-13, "{scheme:?}");
        }
    }

    #[test]
    fn fd2_converges_at_order_two() {
        // Richardson study against the spectral derivative of a Gaussian bump.
        let l = 16.0;
        let bump = |x: &[f64]| Complex64::new((-(x[0] - 8.0).powi(2)).exp(), 0.0);
        let mut errs = Vec::new();
        for p in [64usize, 128, 256] {
            let g = make_grid(1, p, l).unwrap();
            let f = Field::from_fn(g, bump);
            let exact = derivative(&f, &MultiIndex::new(vec![1]), Scheme::Spectral).unwrap();
            let approx = derivative(&f, &MultiIndex::new(vec![1]), Scheme::Fd2).unwrap();
            errs.push(lp_norm(&exact.sub(&approx), f64::INFINITY));
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!((order1 - 2.0).abs() < 0.2, "observed order {order1}");
        assert!((order2 - 2.0).abs() < 0.2, "observed order {order2}");
    }

    #[test]
    fn fd4_converges_at_order_four() {
        let l = 16.0;
        let bump = |x: &[f64]| Complex64::new((-(x[0] - 8.0).powi(2)).exp(), 0.0);
        let mut errs = Vec::new();
        for p in [64usize, 128, 256] {
            let g = make_grid(1, p, l).unwrap();
            let f = Field::from_fn(g, bump);
            let exact = derivative(&f, &MultiIndex::new(vec![1]), Scheme::Spectral).unwrap();
            let approx = derivative(&f, &MultiIndex::new(vec![1]), Scheme::Fd4).unwrap();
            errs.push(lp_norm(&exact.sub(&approx), f64::INFINITY));
        }
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 4.0).abs() < 0.4, "observed order {order}");
    }

    #[test]
    fn grad_m_shapes() {
        let g1 = make_grid(1, 32, 4.0).unwrap();
        let f1 = Field::from_fn(g1, |x| Complex64::new((x[0] * 1.1).sin(), 0.0));
        assert_eq!(grad_m(&f1, 2, Scheme::Spectral).unwrap().len(), 1);
        let g2 = make_grid(2, 16, 4.0).unwrap();
        let f2 = Field::from_fn(g2, |x| Complex64::new((x[0] + 0.5 * x[1]).sin(), 0.0));
        assert_eq!(grad_m(&f2, 1, Scheme::Spectral).unwrap().len(), 2);
        assert_eq!(grad_m(&f2, 2, Scheme::Spectral).unwrap().len(), 3);
    }

    #[test]
    fn parseval_identity() {
        let g = make_grid(1, 128, 8.0).unwrap();
        let f = Field::from_fn(g, |x| {
            Complex64::new((x[0] * 0.9).sin(), (x[0] * 0.4).cos())
        });
        let ctx = FftContext::new(g);
        let mut hat = f.component(0).to_vec();
        ctx.forward(&mut hat);
        let freq_side: f64 = hat.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.cell_volume()
            / g.total_points() as f64;
        let phys = lp_norm(&f, 2.0);
        assert!((phys * phys - freq_side).abs() / freq_side < 1e-12);
    }
}
