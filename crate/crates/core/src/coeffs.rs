//! Coefficient matrices A(t,x) and their ellipticity diagnostics.
//!
//! A coefficient field stores one NM x NM complex matrix per (time piece,
//! grid cell), indexed by (alpha, i), (beta, j) pairs with alpha major in
//! the project-wide multi-index order. Time dependence is piecewise
//! constant on recorded break points; an empty break list means the
//! operator is autonomous.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{binomial, multi_indices, Grid};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::prng::Prng;

#[derive(Debug, Clone)]
enum CoeffBlock {
    Uniform(CMatrix),
    PerCell(Vec<CMatrix>),
}

impl CoeffBlock {
    fn at(&self, cell: usize) -> &CMatrix {
        match self {
            CoeffBlock::Uniform(m) => m,
            CoeffBlock::PerCell(v) => &v[cell],
        }
    }
}

/// Time structure for generated coefficient families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStructure {
    Autonomous,
    /// Independent draws on `pieces` equal pieces of [0, horizon).
    PiecewiseConstant {
        pieces: usize,
        horizon: f64,
    },
    /// Piecewise-constant path between two elliptic endpoints with total
    /// sup-norm variation at most `total_variation`.
    BoundedVariation {
        total_variation: f64,
        pieces: usize,
        horizon: f64,
    },
}

#[derive(Debug, Clone)]
pub struct CoefficientField {
    grid: Grid,
    order: usize,
    components: usize,
    dim: usize,
    time_breaks: Vec<f64>,
    blocks: Vec<CoeffBlock>,
    pub lambda: f64,
    pub upper: f64,
    pub autonomous: bool,
    pub pointwise_elliptic: bool,
    pub constant_in_space: bool,
}

impl CoefficientField {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// NM: number of top-order multi-indices times system size.
    pub fn matrix_dim(&self) -> usize {
        self.dim
    }

    pub fn time_breaks(&self) -> &[f64] {
        &self.time_breaks
    }

    pub fn pieces(&self) -> usize {
        self.blocks.len()
    }

    fn piece_for(&self, t: f64) -> usize {
        if self.time_breaks.is_empty() {
            return 0;
        }
        // breaks[j] <= t < breaks[j+1]; the last piece extends to infinity.
        match self
            .time_breaks
            .binary_search_by(|b| b.partial_cmp(&t).unwrap())
        {
            Ok(j) => j,
            Err(0) => 0,
            Err(j) => j - 1,
        }
    }

    pub fn matrix_at(&self, t: f64, cell: usize) -> &CMatrix {
        self.blocks[self.piece_for(t)].at(cell)
    }

    pub fn matrix_at_piece(&self, piece: usize, cell: usize) -> &CMatrix {
        self.blocks[piece].at(cell)
    }

    /// Single matrix of an autonomous constant-in-space field.
    pub fn uniform_matrix(&self) -> Result<&CMatrix> {
        if !self.constant_in_space || !self.autonomous {
            return Err(Error::InvalidArgument(
                "uniform_matrix requires an autonomous constant-in-space field".into(),
            ));
        }
        Ok(self.blocks[0].at(0))
    }

    /// N x N symbol contraction sigma(xi)_{ij} = sum a^{ij}_{alpha beta}
    /// xi^{alpha+beta} of an autonomous constant-in-space field.
    pub fn symbol(&self, xi: &[f64; 2]) -> Result<CMatrix> {
        let a = self.uniform_matrix()?;
        let n = self.grid.dim();
        let alphas = multi_indices(n, self.order);
        let mm = alphas.len();
        let ncomp = self.components;
        let xi_pow = |alpha: &crate::grid::MultiIndex| -> f64 {
            let mut t = 1.0;
            for (ax, &k) in alpha.entries().iter().enumerate() {
                for _ in 0..k {
                    t *= xi[ax];
                }
            }
            t
        };
        let pow: Vec<f64> = alphas.iter().map(xi_pow).collect();
        let mut sig = CMatrix::zeros(ncomp);
        for ai in 0..mm {
            for bi in 0..mm {
                let w = pow[ai] * pow[bi];
                if w == 0.0 {
                    continue;
                }
                for i in 0..ncomp {
                    for j in 0..ncomp {
                        let e = a[(ai * ncomp + i, bi * ncomp + j)];
                        sig[(i, j)] += w * e;
                    }
                }
            }
        }
        Ok(sig)
    }
}

/// Autonomous constant-in-space field from an explicit NM x NM matrix.
pub fn make_constant(
    a0: CMatrix,
    grid: Grid,
    m: usize,
    components: usize,
) -> Result<CoefficientField> {
    let mm = binomial(grid.dim() + m - 1, m);
    let dim = mm * components;
    if a0.dim != dim {
        return Err(Error::InvalidArgument(format!(
            "matrix dimension {} != N*M = {}",
            a0.dim, dim
        )));
    }
    if !a0.is_finite() {
        return Err(Error::NonFinite("make_constant".into()));
    }
    let upper = a0.max_entry_modulus();
    let lambda_pointwise = hermitian_eigenvalues(&a0.hermitian_part())[0];
    let field = CoefficientField {
        grid,
        order: m,
        components,
        dim,
        time_breaks: Vec::new(),
        blocks: vec![CoeffBlock::Uniform(a0)],
        lambda: lambda_pointwise,
        upper,
        autonomous: true,
        pointwise_elliptic: lambda_pointwise > 0.0,
        constant_in_space: true,
    };
    // For constant coefficients the honest Garding constant is the Fourier
    // one, which can exceed the pointwise bound.
    let report = ellipticity_report(&field);
    let mut field = field;
    field.lambda = report.lambda_est;
    Ok(field)
}

/// The preset making the symbol |xi|^{2m}: diagonal with multinomial
/// weights a_{alpha alpha} = m! / alpha! on each component.
pub fn polyharmonic(grid: Grid, m: usize, components: usize) -> Result<CoefficientField> {
    let alphas = multi_indices(grid.dim(), m);
    let dim = alphas.len() * components;
    let mut a0 = CMatrix::zeros(dim);
    for (ai, alpha) in alphas.iter().enumerate() {
        let mut w = 1.0;
        // multinomial m! / (alpha_1! ... alpha_n!)
        let mut rem = m;
        for &k in alpha.entries() {
            w *= binomial(rem, k) as f64;
            rem -= k;
        }
        for c in 0..components {
            a0[(ai * components + c, ai * components + c)] = Complex64::new(w, 0.0);
        }
    }
    make_constant(a0, grid, m, components)
}

/// One random cell matrix: Hermitian part with eigenvalues in [1, kappa],
/// plus a skew-Hermitian part scaled to keep every entry modulus <= kappa.
fn random_cell_matrix(rng: &mut Prng, dim: usize, kappa: f64) -> CMatrix {
    let herm_eigs: Vec<f64> = (0..dim)
        .map(|_| rng.uniform_in(1.0, kappa.max(1.0)))
        .collect();
    let max_eig = herm_eigs.iter().cloned().fold(1.0, f64::max);
    let rotate = dim > 1 && rng.uniform() < 0.5;
    let mut h = CMatrix::zeros(dim);
    if rotate {
        // Random unitary from QR of a complex Gaussian (Gram-Schmidt).
        let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut v: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.normal(), rng.normal()))
                .collect();
            for prev in &q {
                let proj: Complex64 = v.iter().zip(prev.iter()).map(|(a, b)| a * b.conj()).sum();
                for (x, p) in v.iter_mut().zip(prev.iter()) {
                    *x -= proj * p;
                }
            }
            let norm = v
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt()
                .max(1e-12);
            for x in v.iter_mut() {
                *x /= norm;
            }
            q.push(v);
        }
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &e) in herm_eigs.iter().enumerate() {
                    acc += q[k][i] * e * q[k][j].conj();
                }
                h[(i, j)] = acc;
            }
        }
        // Symmetrize round-off.
        h = h.hermitian_part();
    } else {
        for (i, &e) in herm_eigs.iter().enumerate() {
            h[(i, i)] = Complex64::new(e, 0.0);
        }
    }
    // Skew part i*s*T with T Hermitian, ||T||_2 <= 1; s = kappa - max_eig
    // keeps |entry| <= ||H||_2 + s <= kappa.
    let s = (kappa - max_eig).max(0.0);
    if s > 0.0 && kappa > 1.0 {
        let mut t = CMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                if i == j {
                    t[(i, i)] = Complex64::new(rng.uniform_in(-1.0, 1.0), 0.0);
                } else {
                    let z = Complex64::new(rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0));
                    t[(i, j)] = z;
                    t[(j, i)] = z.conj();
                }
            }
        }
        let spec = hermitian_eigenvalues(&t)
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(1e-12);
        let scale = Complex64::new(0.0, s / spec);
        for i in 0..dim {
            for j in 0..dim {
                h[(i, j)] += scale * t[(i, j)];
            }
        }
    }
    h
}

fn per_cell_block(rng_seed: u64, stream: u64, grid: &Grid, dim: usize, kappa: f64) -> CoeffBlock {
    let mut cells = Vec::with_capacity(grid.total_points());
    for cell in 0..grid.total_points() {
        let mut rng = Prng::new(
            rng_seed,
            stream.wrapping_mul(0x10001).wrapping_add(cell as u64),
        );
        cells.push(random_cell_matrix(&mut rng, dim, kappa));
    }
    CoeffBlock::PerCell(cells)
}

fn sup_distance(a: &CoeffBlock, b: &CoeffBlock, cells: usize) -> f64 {
    (0..cells)
        .map(|c| {
            a.at(c)
                .data
                .iter()
                .zip(&b.at(c).data)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Pointwise-elliptic rough family with lambda = 1, Lambda = kappa:
/// matrices drawn per grid cell, piecewise constant on cells.
pub fn make_rough(
    seed: u64,
    kappa: f64,
    grid: Grid,
    m: usize,
    components: usize,
    time_structure: TimeStructure,
) -> Result<CoefficientField> {
    if kappa < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "contrast kappa = {kappa} must be >= 1"
        )));
    }
    let mm = binomial(grid.dim() + m - 1, m);
    let dim = mm * components;
    if kappa == 1.0 {
        // The family degenerates to the identity (polyharmonic-like bound).
        let a0 = CMatrix::identity(dim);
        let mut f = make_constant(a0, grid, m, components)?;
        f.pointwise_elliptic = true;
        return Ok(f);
    }
    let cells = grid.total_points();
    let (time_breaks, blocks) = match time_structure {
        TimeStructure::Autonomous => (Vec::new(), vec![per_cell_block(seed, 0, &grid, dim, kappa)]),
        TimeStructure::PiecewiseConstant { pieces, horizon } => {
            if pieces == 0 || !(horizon > 0.0) {
                return Err(Error::InvalidArgument(
                    "piecewise structure needs pieces >= 1, horizon > 0".into(),
                ));
            }
            let breaks = (0..pieces)
                .map(|j| horizon * j as f64 / pieces as f64)
                .collect();
            let blocks = (0..pieces)
                .map(|j| per_cell_block(seed, 1 + j as u64, &grid, dim, kappa))
                .collect();
            (breaks, blocks)
        }
        TimeStructure::BoundedVariation {
            total_variation,
            pieces,
            horizon,
        } => {
            if total_variation < 0.0 || pieces == 0 || !(horizon > 0.0) {
                return Err(Error::InvalidArgument(
                    "bv structure needs V >= 0, pieces >= 1".into(),
                ));
            }
            let end0 = per_cell_block(seed, 0, &grid, dim, kappa);
            if total_variation == 0.0 || pieces == 1 {
                return finish_rough(grid, m, components, dim, Vec::new(), vec![end0], kappa);
            }
            let end1 = per_cell_block(seed, 1, &grid, dim, kappa);
            let dist = sup_distance(&end0, &end1, cells).max(1e-12);
            // Convex-combination path theta_j in [0,1]; scale raw seeded
            // increments so the matrix path has total variation <= V.
            let mut rng = Prng::new(seed, 2);
            let raw: Vec<f64> = (0..pieces - 1).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let raw_tv: f64 = raw.iter().map(|d| d.abs()).sum::<f64>().max(1e-12);
            let budget = (total_variation / dist).min(1.0);
            let mut theta = vec![0.0f64; pieces];
            for j in 1..pieces {
                theta[j] = (theta[j - 1] + raw[j - 1] * budget / raw_tv).clamp(0.0, 1.0);
            }
            let blocks: Vec<CoeffBlock> = theta
                .iter()
                .map(|&th| {
                    let cells_vec: Vec<CMatrix> = (0..cells)
                        .map(|ci| {
                            let a = end0.at(ci);
                            let b = end1.at(ci);
                            let mut out = a.scale(Complex64::new(1.0 - th, 0.0));
                            let bs = b.scale(Complex64::new(th, 0.0));
                            out = out.add(&bs);
                            out
                        })
                        .collect();
                    CoeffBlock::PerCell(cells_vec)
                })
                .collect();
            let breaks = (0..pieces)
                .map(|j| horizon * j as f64 / pieces as f64)
                .collect();
            (breaks, blocks)
        }
    };
    finish_rough(grid, m, components, dim, time_breaks, blocks, kappa)
}

fn finish_rough(
    grid: Grid,
    m: usize,
    components: usize,
    dim: usize,
    time_breaks: Vec<f64>,
    blocks: Vec<CoeffBlock>,
    kappa: f64,
) -> Result<CoefficientField> {
    let autonomous = time_breaks.is_empty();
    let constant_in_space = blocks.iter().all(|b| matches!(b, CoeffBlock::Uniform(_)));
    Ok(CoefficientField {
        grid,
        order: m,
        components,
        dim,
        time_breaks,
        blocks,
        lambda: 1.0,
        upper: kappa,
        autonomous,
        pointwise_elliptic: true,
        constant_in_space,
    })
}

/// A(t,x) = base(x) + eps * B(t,x) with ||B||_inf <= 1 entrywise and
/// Hermitian-part spectrum in [-1, 1]. B is piecewise constant on eight
/// pieces of [0, 1), held constant afterwards.
pub fn make_perturbation(base: &CoefficientField, eps: f64, seed: u64) -> Result<CoefficientField> {
    if !base.autonomous {
        return Err(Error::InvalidArgument(
            "perturbation base must be autonomous".into(),
        ));
    }
    if eps < 0.0 {
        return Err(Error::InvalidArgument(
            "perturbation size must be >= 0".into(),
        ));
    }
    if eps >= base.lambda {
        return Err(Error::EllipticityLost {
            eps,
            lambda: base.lambda,
        });
    }
    if eps == 0.0 {
        return Ok(base.clone());
    }
    let pieces = 8usize;
    let dim = base.dim;
    let cells = base.grid.total_points();
    let entry_bound = 1.0 / dim as f64; // keeps both ||B||_entry <= 1 and ||Herm B||_2 <= 1
    let mut blocks = Vec::with_capacity(pieces);
    for piece in 0..pieces {
        let cells_vec: Vec<CMatrix> = (0..cells)
            .map(|cell| {
                let mut rng = Prng::new(seed, (piece as u64) << 32 | cell as u64);
                let mut b = CMatrix::zeros(dim);
                for i in 0..dim {
                    for j in i..dim {
                        if i == j {
                            b[(i, i)] =
                                Complex64::new(rng.uniform_in(-entry_bound, entry_bound), 0.0);
                        } else {
                            let herm = Complex64::new(
                                rng.uniform_in(-entry_bound, entry_bound) * 0.5,
                                rng.uniform_in(-entry_bound, entry_bound) * 0.5,
                            );
                            let skew = Complex64::new(
                                -rng.uniform_in(-entry_bound, entry_bound) * 0.5,
                                rng.uniform_in(-entry_bound, entry_bound) * 0.5,
                            );
                            b[(i, j)] = herm + skew;
                            b[(j, i)] = herm.conj() - skew.conj();
                        }
                    }
                }
                let a = base.matrix_at(0.0, cell);
                let mut out = a.clone();
                for (o, bv) in out.data.iter_mut().zip(&b.data) {
                    *o += eps * bv;
                }
                out
            })
            .collect();
        blocks.push(CoeffBlock::PerCell(cells_vec));
    }
    let time_breaks = (0..pieces).map(|j| j as f64 / pieces as f64).collect();
    Ok(CoefficientField {
        grid: base.grid,
        order: base.order,
        components: base.components,
        dim,
        time_breaks,
        blocks,
        lambda: base.lambda - eps,
        upper: base.upper + eps,
        autonomous: false,
        pointwise_elliptic: base.pointwise_elliptic,
        constant_in_space: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum EllipticityMethod {
    PointwiseEig,
    FourierSymbol,
}

#[derive(Debug, Clone)]
pub enum WorstSite {
    SpaceTime { piece: usize, cell: usize },
    Frequency { mode: [i64; 2] },
}

#[derive(Debug, Clone)]
pub struct EllipticityReport {
    pub lambda_est: f64,
    pub upper_est: f64,
    pub method: EllipticityMethod,
    pub worst_site: WorstSite,
}

/// Numerical ellipticity constants. Constant-in-space autonomous fields
/// use the Fourier-symbol Garding check (minimum of Re sigma / |xi|^{2m}
/// over nonzero grid frequencies, with Re meaning the smallest eigenvalue
/// of the Hermitian part for systems); everything else is a pointwise
/// eigenvalue scan.
pub fn ellipticity_report(a: &CoefficientField) -> EllipticityReport {
    if a.constant_in_space && a.autonomous {
        let grid = a.grid;
        let p = grid.points_per_axis();
        let ctx = crate::fft::FftContext::new(grid);
        let mut lambda = f64::INFINITY;
        let mut worst = [0i64; 2];
        for flat in 1..grid.total_points() {
            let xi = ctx.freq_vec(flat);
            let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
            if xi2 == 0.0 {
                continue;
            }
            let sig = a.symbol(&xi).expect("constant-in-space field has a symbol");
            let min_re = hermitian_eigenvalues(&sig.hermitian_part())[0];
            let ratio = min_re / xi2.powi(a.order as i32);
            if ratio < lambda {
                lambda = ratio;
                let signed = |i: usize| {
                    if i < p / 2 {
                        i as i64
                    } else {
                        i as i64 - p as i64
                    }
                };
                worst = match grid.dim() {
                    1 => [signed(flat), 0],
                    _ => [signed(flat / p), signed(flat % p)],
                };
            }
        }
        let upper = a.blocks[0].at(0).max_entry_modulus();
        return EllipticityReport {
            lambda_est: lambda,
            upper_est: upper,
            method: EllipticityMethod::FourierSymbol,
            worst_site: WorstSite::Frequency { mode: worst },
        };
    }
    let mut lambda = f64::INFINITY;
    let mut upper: f64 = 0.0;
    let mut worst = (0usize, 0usize);
    for piece in 0..a.blocks.len() {
        for cell in 0..a.grid.total_points() {
            let m = a.blocks[piece].at(cell);
            let min_eig = hermitian_eigenvalues(&m.hermitian_part())[0];
            if min_eig < lambda {
                lambda = min_eig;
                worst = (piece, cell);
            }
            upper = upper.max(m.max_entry_modulus());
            if matches!(a.blocks[piece], CoeffBlock::Uniform(_)) {
                break;
            }
        }
    }
    EllipticityReport {
        lambda_est: lambda,
        upper_est: upper,
        method: EllipticityMethod::PointwiseEig,
        worst_site: WorstSite::SpaceTime {
            piece: worst.0,
            cell: worst.1,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn polyharmonic_presets_and_symbols() {
        // n=1, m=1: scalar 1, symbol xi^2
        let g = make_grid(1, 32, 8.0).unwrap();
        let a = polyharmonic(g, 1, 1).unwrap();
        let s = a.symbol(&[2.0, 0.0]).unwrap();
        assert!((s[(0, 0)].re - 4.0).abs() < 1e-14);
        // n=2, m=1: identity over gradient components, symbol |xi|^2
        let g2 = make_grid(2, 16, 8.0).unwrap();
        let a2 = polyharmonic(g2, 1, 1).unwrap();
        let s2 = a2.symbol(&[1.0, 2.0]).unwrap();
        assert!((s2[(0, 0)].re - 5.0).abs() < 1e-14);
        // n=1, m=2: symbol xi^4
        let a4 = polyharmonic(g, 2, 1).unwrap();
        let s4 = a4.symbol(&[2.0, 0.0]).unwrap();
        assert!((s4[(0, 0)].re - 16.0).abs() < 1e-14);
        // n=2, m=2: |xi|^4 including the mixed term
        let a22 = polyharmonic(g2, 2, 1).unwrap();
        let s22 = a22.symbol(&[1.0, 2.0]).unwrap();
        assert!((s22[(0, 0)].re - 25.0).abs() < 1e-12);
    }

    #[test]
    fn fourier_garding_constant_is_one_for_polyharmonic() {
        for (n, p, m) in [
            (1usize, 64usize, 1usize),
            (1, 64, 2),
            (2, 16, 1),
            (2, 16, 2),
        ] {
            let g = make_grid(n, p, 8.0).unwrap();
            let a = polyharmonic(g, m, 1).unwrap();
            let rep = ellipticity_report(&a);
            assert_eq!(rep.method, EllipticityMethod::FourierSymbol);
            assert!(
                (rep.lambda_est - 1.0).abs() < 1e-12,
                "n={n} m={m}: {}",
                rep.lambda_est
            );
        }
    }

    #[test]
    fn diag_constant_report() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let a0 = CMatrix::scaled_identity(1, Complex64::new(2.0, 0.0));
        let a = make_constant(a0, g, 1, 1).unwrap();
        let rep = ellipticity_report(&a);
        assert!((rep.lambda_est - 2.0).abs() < 1e-12);
        assert!((rep.upper_est - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fourier_garding_invariant_under_refinement() {
        // Anisotropic diagonal symbol 2 xi_1^2 + xi_2^2: min ratio 1 on the
        // xi_2 axis at any resolution.
        let mut vals = Vec::new();
        for p in [16usize, 32] {
            let g = make_grid(2, p, 8.0).unwrap();
            let mut a0 = CMatrix::identity(2);
            a0[(0, 0)] = Complex64::new(2.0, 0.0);
            let a = make_constant(a0, g, 1, 1).unwrap();
            vals.push(ellipticity_report(&a).lambda_est);
        }
        assert!((vals[0] - vals[1]).abs() < 1e-10 * vals[0].abs().max(1.0));
        assert!((vals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rough_is_deterministic_and_within_bands() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let a = make_rough(7, 10.0, g, 1, 1, TimeStructure::Autonomous).unwrap();
        let b = make_rough(7, 10.0, g, 1, 1, TimeStructure::Autonomous).unwrap();
        for cell in 0..g.total_points() {
            assert_eq!(a.matrix_at(0.0, cell).data, b.matrix_at(0.0, cell).data);
        }
        let rep = ellipticity_report(&a);
        assert!(
            rep.lambda_est >= 0.9 && rep.lambda_est <= 1.1,
            "{}",
            rep.lambda_est
        );
        assert!(
            rep.upper_est >= 9.0 && rep.upper_est <= 11.0,
            "{}",
            rep.upper_est
        );
    }

    #[test]
    fn rough_kappa_four_report() {
        let g = make_grid(1, 128, 8.0).unwrap();
        let a = make_rough(3, 4.0, g, 1, 1, TimeStructure::Autonomous).unwrap();
        let rep = ellipticity_report(&a);
        assert!((rep.lambda_est - 1.0).abs() < 0.1, "{}", rep.lambda_est);
        assert!((rep.upper_est - 4.0).abs() < 0.4, "{}", rep.upper_est);
    }

    #[test]
    fn rough_kappa_one_degenerates_to_identity() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let a = make_rough(1, 1.0, g, 2, 1, TimeStructure::Autonomous).unwrap();
        assert!(a.constant_in_space && a.autonomous);
        assert_eq!(a.uniform_matrix().unwrap().data, CMatrix::identity(1).data);
    }

    #[test]
    fn bv_zero_variation_is_autonomous() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let a = make_rough(
            5,
            3.0,
            g,
            1,
            1,
            TimeStructure::BoundedVariation {
                total_variation: 0.0,
                pieces: 6,
                horizon: 1.0,
            },
        )
        .unwrap();
        assert!(a.autonomous);
    }

    #[test]
    fn bv_variation_is_bounded() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let v = 0.5;
        let a = make_rough(
            5,
            3.0,
            g,
            1,
            1,
            TimeStructure::BoundedVariation {
                total_variation: v,
                pieces: 8,
                horizon: 1.0,
            },
        )
        .unwrap();
        let mut tv = 0.0f64;
        for j in 1..a.pieces() {
            let mut d: f64 = 0.0;
            for cell in 0..g.total_points() {
                let x = a.matrix_at_piece(j, cell);
                let y = a.matrix_at_piece(j - 1, cell);
                d = d.max(
                    x.data
                        .iter()
                        .zip(&y.data)
                        .map(|(p, q)| (p - q).norm())
                        .fold(0.0, f64::max),
                );
            }
            tv += d;
        }
        assert!(tv <= v + 1e-10, "total variation {tv} > {v}");
        let rep = ellipticity_report(&a);
        assert!(
            rep.lambda_est >= 0.99,
            "convex combinations stay elliptic: {}",
            rep.lambda_est
        );
    }

    #[test]
    fn perturbation_contract() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let base = polyharmonic(g, 1, 1).unwrap();
        // eps = 0 returns base exactly
        let same = make_perturbation(&base, 0.0, 1).unwrap();
        assert_eq!(
            same.uniform_matrix().unwrap().data,
            base.uniform_matrix().unwrap().data
        );
        // eps = 0.1: lambda_est >= 0.9, sup distance <= eps
        let p = make_perturbation(&base, 0.1, 1).unwrap();
        let rep = ellipticity_report(&p);
        assert!(rep.lambda_est >= 0.9 - 1e-12, "{}", rep.lambda_est);
        let mut dist = 0.0f64;
        for piece in 0..p.pieces() {
            for cell in 0..g.total_points() {
                let m = p.matrix_at_piece(piece, cell);
                let b = base.matrix_at(0.0, cell);
                dist = dist.max(
                    m.data
                        .iter()
                        .zip(&b.data)
                        .map(|(x, y)| (x - y).norm())
                        .fold(0.0, f64::max),
                );
            }
        }
        assert!(dist <= 0.1 + 1e-12, "{dist}");
        // eps >= lambda errors
        assert!(matches!(
            make_perturbation(&base, 1.5, 1),
            Err(Error::EllipticityLost { .. })
        ));
    }

    #[test]
    fn perturbation_lambda_lower_bound_property() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let base = make_rough(11, 2.0, g, 1, 1, TimeStructure::Autonomous).unwrap();
        let base_rep = ellipticity_report(&base);
        let eps = 0.3;
        let p = make_perturbation(&base, eps, 9).unwrap();
        let rep = ellipticity_report(&p);
        assert!(rep.lambda_est >= base_rep.lambda_est - eps - 1e-12);
    }
}
