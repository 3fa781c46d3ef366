//! Least-squares polynomial projections on balls.
//!
//! The projection onto polynomials of degree < m minimizes the weighted
//! mean square oscillation on a ball; it is computed in the scaled
//! monomial basis ((x - x0)/r)^alpha for conditioning, via the normal
//! equations with a Cholesky-factored Gram matrix. On a fixed grid the
//! Gram matrix depends only on the radius and weight, never on the
//! center, so scans over many centers reuse one factorization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{multi_indices_upto, pairwise_sum, Ball, Field, Grid, MultiIndex};
use crate::linalg::{cholesky_real, cholesky_solve, hermitian_eigenvalues, CMatrix};

/// Weight for the projection inner product on the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Flat,
    /// c (1 - |y|^2)^4 on the unit ball: non-negative, bounded, radial,
    /// bounded away from zero on the half ball.
    Smooth,
}

impl Weight {
    fn eval(&self, y_norm_sqr: f64) -> f64 {
        match self {
            Weight::Flat => 1.0,
            Weight::Smooth => {
                let t = 1.0 - y_norm_sqr;
                if t <= 0.0 {
                    0.0
                } else {
                    t * t * t * t
                }
            }
        }
    }
}

/// Fitted projection P(x) = sum_alpha c_alpha ((x - x0)/r)^alpha.
#[derive(Debug, Clone)]
pub struct PolyProjection {
    pub ball: Ball,
    pub degree: usize,
    pub basis: Vec<MultiIndex>,
    pub coeffs: Vec<Complex64>,
    pub weight: Weight,
    /// sup_B |P| / mean_B |f|, the recorded stability constant of the
    /// minimizing polynomial.
    pub sup_ratio: f64,
}

impl PolyProjection {
    pub fn eval_at(&self, grid: &Grid, x: &[f64]) -> Complex64 {
        let r = self.ball.radius;
        let mut acc = Complex64::new(0.0, 0.0);
        for (alpha, &c) in self.basis.iter().zip(&self.coeffs) {
            let mut term = 1.0;
            for (ax, &k) in alpha.entries().iter().enumerate() {
                let d = grid.periodic_delta(x[ax], self.ball.center[ax]) / r;
                for _ in 0..k {
                    term *= d;
                }
            }
            acc += c * term;
        }
        acc
    }

    /// Evaluate on every grid point. Coordinates are taken relative to the
    /// ball center through the periodic delta, so the polynomial is
    /// meaningful on the ball and its surroundings.
    pub fn eval_field(&self, grid: &Grid) -> Field {
        let n = grid.dim();
        Field::from_fn(*grid, |x| self.eval_at(grid, &x[..n]))
    }

    /// Exact derivative field d^gamma P (periodic-delta coordinates).
    pub fn derivative_field(&self, grid: &Grid, gamma: &MultiIndex) -> Field {
        let r = self.ball.radius;
        let n = grid.dim();
        Field::from_fn(*grid, |x| {
            let mut acc = Complex64::new(0.0, 0.0);
            'basis: for (alpha, &c) in self.basis.iter().zip(&self.coeffs) {
                let mut factor = 1.0;
                let mut term = 1.0;
                for ax in 0..n {
                    let a = alpha.entries()[ax];
                    let g = gamma.entries()[ax];
                    if g > a {
                        continue 'basis;
                    }
                    // d^g (y^a) = a!/(a-g)! y^{a-g}, y = delta / r
                    let mut fall = 1.0;
                    for j in 0..g {
                        fall *= (a - j) as f64;
                    }
                    factor *= fall / r.powi(g as i32);
                    let d = grid.periodic_delta(x[ax], self.ball.center[ax]) / r;
                    for _ in 0..(a - g) {
                        term *= d;
                    }
                }
                acc += c * factor * term;
            }
            acc
        })
    }
}

/// Reusable projection context for one (grid, radius, degree, weight).
pub struct ProjectionStencil {
    grid: Grid,
    pub radius: f64,
    pub basis: Vec<MultiIndex>,
    pub weight: Weight,
    offsets: Vec<[i64; 2]>,
    /// Per offset: weight value and basis monomials evaluated at the
    /// scaled offset.
    weights: Vec<f64>,
    monomials: Vec<f64>, // [offset][basis] flattened
    chol: Vec<f64>,
    pub condition: f64,
    weight_total: f64,
}

impl ProjectionStencil {
    pub fn new(grid: Grid, radius: f64, degree_bound_m: usize, weight: Weight) -> Result<Self> {
        if degree_bound_m == 0 {
            return Err(Error::InvalidArgument("projection needs m >= 1".into()));
        }
        let basis = multi_indices_upto(grid.dim(), degree_bound_m - 1);
        if radius < grid.spacing() {
            return Err(Error::BallUnresolved {
                radius,
                spacing: grid.spacing(),
            });
        }
        let offsets = grid.ball_offsets(radius);
        if offsets.len() < 4 * basis.len() {
            return Err(Error::UnresolvedConfig(format!(
                "ball with {} points cannot support a {}-dimensional projection (need 4x)",
                offsets.len(),
                basis.len()
            )));
        }
        let h = grid.spacing();
        let nb = basis.len();
        let mut weights = Vec::with_capacity(offsets.len());
        let mut monomials = Vec::with_capacity(offsets.len() * nb);
        for off in &offsets {
            let y = [off[0] as f64 * h / radius, off[1] as f64 * h / radius];
            let y2 = y[0] * y[0] + y[1] * y[1];
            weights.push(weight.eval(y2));
            for alpha in &basis {
                let mut t = 1.0;
                for (ax, &k) in alpha.entries().iter().enumerate() {
                    for _ in 0..k {
                        t *= y[ax];
                    }
                }
                monomials.push(t);
            }
        }
        let weight_total = pairwise_sum(&weights);
        if weight_total <= 0.0 {
            return Err(Error::UnresolvedConfig(
                "projection weight vanishes on the ball".into(),
            ));
        }
        // Gram matrix over the weighted discrete inner product.
        let mut gram = vec![0.0f64; nb * nb];
        for a in 0..nb {
            for b in a..nb {
                let terms: Vec<f64> = (0..offsets.len())
                    .map(|o| weights[o] * monomials[o * nb + a] * monomials[o * nb + b])
                    .collect();
                let v = pairwise_sum(&terms) / weight_total;
                gram[a * nb + b] = v;
                gram[b * nb + a] = v;
            }
        }
        // Condition guard via the eigenvalues of the (real symmetric) Gram.
        let mut gm = CMatrix::zeros(nb);
        for i in 0..nb {
            for j in 0..nb {
                gm[(i, j)] = Complex64::new(gram[i * nb + j], 0.0);
            }
        }
        let eig = hermitian_eigenvalues(&gm);
        let condition = if eig[0] <= 0.0 {
            f64::INFINITY
        } else {
            eig[nb - 1] / eig[0]
        };
        if !(condition < 1e10) {
            return Err(Error::IllConditioned { cond: condition });
        }
        let chol = cholesky_real(&gram, nb)?;
        Ok(ProjectionStencil {
            grid,
            radius,
            basis,
            weight,
            offsets,
            weights,
            monomials,
            chol,
            condition,
            weight_total,
        })
    }

    pub fn offsets(&self) -> &[[i64; 2]] {
        &self.offsets
    }

    /// Projection coefficients for the ball centered at flat index.
    pub fn project_at(&self, f: &Field, center_flat: usize) -> Vec<Complex64> {
        let nb = self.basis.len();
        let data = f.component(0);
        let mut rhs = vec![Complex64::new(0.0, 0.0); nb];
        let mut re = vec![0.0f64; self.offsets.len()];
        let mut im = vec![0.0f64; self.offsets.len()];
        for b in 0..nb {
            for (o, off) in self.offsets.iter().enumerate() {
                let v = data[self.grid.shift(center_flat, off)];
                let w = self.weights[o] * self.monomials[o * nb + b];
                re[o] = w * v.re;
                im[o] = w * v.im;
            }
            rhs[b] = Complex64::new(pairwise_sum(&re), pairwise_sum(&im)) / self.weight_total;
        }
        cholesky_solve(&self.chol, nb, &rhs)
    }

    /// Weighted mean-square oscillation (f - P) on the ball, returning
    /// (residual_rms, coeffs).
    pub fn oscillation_at(&self, f: &Field, center_flat: usize) -> (f64, Vec<Complex64>) {
        let coeffs = self.project_at(f, center_flat);
        let nb = self.basis.len();
        let data = f.component(0);
        let terms: Vec<f64> = self
            .offsets
            .iter()
            .enumerate()
            .map(|(o, off)| {
                let v = data[self.grid.shift(center_flat, off)];
                let mut p = Complex64::new(0.0, 0.0);
                for b in 0..nb {
                    p += coeffs[b] * self.monomials[o * nb + b];
                }
                self.weights[o] * (v - p).norm_sqr()
            })
            .collect();
        (
            (pairwise_sum(&terms) / self.weight_total).max(0.0).sqrt(),
            coeffs,
        )
    }
}

/// Weighted least-squares projection of a scalar field onto polynomials
/// of degree <= m-1 on a ball.
pub fn poly_project(f: &Field, ball: &Ball, m: usize, weight: Weight) -> Result<PolyProjection> {
    if f.components() != 1 {
        return Err(Error::InvalidArgument(
            "poly_project expects a scalar field".into(),
        ));
    }
    let grid = f.grid();
    let stencil = ProjectionStencil::new(grid, ball.radius, m, weight)?;
    let center = ball.center_index(&grid);
    let coeffs = stencil.project_at(f, center);
    // Recorded stability constant: sup_B |P| vs mean_B |f|.
    let nb = stencil.basis.len();
    let mut sup_p: f64 = 0.0;
    let mut mean_f = 0.0;
    for (o, off) in stencil.offsets.iter().enumerate() {
        let mut p = Complex64::new(0.0, 0.0);
        for b in 0..nb {
            p += coeffs[b] * stencil.monomials[o * nb + b];
        }
        sup_p = sup_p.max(p.norm());
        mean_f += f.component(0)[grid.shift(center, off)].norm();
    }
    mean_f /= stencil.offsets.len() as f64;
    let sup_ratio = if mean_f > 0.0 { sup_p / mean_f } else { 0.0 };
    Ok(PolyProjection {
        ball: ball.clone(),
        degree: m - 1,
        basis: stencil.basis.clone(),
        coeffs,
        weight,
        sup_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn projection_reproduces_polynomials() {
        let g = make_grid(1, 256, 8.0).unwrap();
        // f(x) = 2 - 0.5 (x-4): degree 1, project with m = 2.
        let f = Field::from_fn(g, |x| c(2.0 - 0.5 * (x[0] - 4.0)));
        let ball = Ball::new(&g, vec![4.0], 1.0).unwrap();
        let proj = poly_project(&f, &ball, 2, Weight::Flat).unwrap();
        // In the scaled basis ((x-4)/1)^k: coeffs (2, -0.5).
        assert!((proj.coeffs[0] - c(2.0)).norm() < 1e-10);
        assert!((proj.coeffs[1] - c(-0.5)).norm() < 1e-10);
        // Idempotence: projecting the projection is unchanged.
        let pf = proj.eval_field(&g);
        let proj2 = poly_project(&pf, &ball, 2, Weight::Flat).unwrap();
        for (a, b) in proj.coeffs.iter().zip(&proj2.coeffs) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn degree_zero_projection_is_ball_mean() {
        let g = make_grid(1, 128, 8.0).unwrap();
        let f = Field::from_fn(g, |x| c((x[0] * 1.3).sin()));
        let ball = Ball::new(&g, vec![4.0], 0.75).unwrap();
        let proj = poly_project(&f, &ball, 1, Weight::Flat).unwrap();
        let offsets = g.ball_offsets(0.75);
        let ci = ball.center_index(&g);
        let mean: Complex64 = offsets
            .iter()
            .map(|o| f.component(0)[g.shift(ci, o)])
            .sum::<Complex64>()
            / offsets.len() as f64;
        assert!((proj.coeffs[0] - mean).norm() < 1e-12);
    }

    #[test]
    fn quadratic_projects_to_one_third_with_residual_orthogonal() {
        // f(x) = x^2 on B(0,1), project onto degree <= 1: P = 1/3 + 0 x.
        let g = make_grid(1, 512, 8.0).unwrap();
        let f = Field::from_fn(g, |x| c((x[0] - 4.0).powi(2)));
        let ball = Ball::new(&g, vec![4.0], 1.0).unwrap();
        let proj = poly_project(&f, &ball, 2, Weight::Flat).unwrap();
        assert!(
            (proj.coeffs[0].re - 1.0 / 3.0).abs() < 2.0 * g.spacing(),
            "{}",
            proj.coeffs[0]
        );
        assert!(proj.coeffs[1].norm() < 1e-10);
        // Residual orthogonality against both basis monomials.
        let stencil = ProjectionStencil::new(g, 1.0, 2, Weight::Flat).unwrap();
        let ci = ball.center_index(&g);
        let coeffs = stencil.project_at(&f, ci);
        let nb = stencil.basis.len();
        for b in 0..nb {
            let mut acc = Complex64::new(0.0, 0.0);
            for (o, off) in stencil.offsets().iter().enumerate() {
                let v = f.component(0)[g.shift(ci, off)];
                let mut p = Complex64::new(0.0, 0.0);
                for bb in 0..nb {
                    p += coeffs[bb] * stencil.monomials[o * nb + bb];
                }
                acc += (v - p) * stencil.monomials[o * nb + b] * stencil.weights[o];
            }
            assert!(acc.norm() / stencil.weight_total < 1e-8, "basis {b}");
        }
    }

    #[test]
    fn smooth_weight_projection_reproduces_polynomials() {
        let g = make_grid(2, 64, 8.0).unwrap();
        let f = Field::from_fn(g, |x| c(1.0 + 0.3 * (x[0] - 4.0) - 0.7 * (x[1] - 4.0)));
        let ball = Ball::new(&g, vec![4.0, 4.0], 1.5).unwrap();
        let proj = poly_project(&f, &ball, 2, Weight::Smooth).unwrap();
        let pf = proj.eval_field(&g);
        // The reproduction holds on the ball.
        for off in g.ball_offsets(1.5) {
            let i = g.shift(ball.center_index(&g), &off);
            assert!((pf.values()[i] - f.values()[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn too_small_ball_is_rejected() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let f = Field::zeros(g, 1);
        let ball = Ball {
            center: vec![4.0],
            radius: 0.3,
        };
        // radius 0.3 > h = 0.25 so resolved, but only 3 points < 4 * basis(2)
        assert!(poly_project(&f, &ball, 2, Weight::Flat).is_err());
    }
}
