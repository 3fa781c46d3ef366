//! Periodic spatial grids and sampled fields.
//!
//! The continuum R^n is truncated to a periodic box [0, L)^n with P points
//! per axis. Periodicity makes spectral derivatives exact on band-limited
//! data; all local functionals are evaluated with periodic distances, and
//! experiments confine their reads to the interior window (points within
//! L/4 of the box center) so that wrap-around acts only as a truncation
//! error controlled by enlarging the box.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A spatial multi-index alpha in N^n with |alpha| = sum of entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex { entries }
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn order(&self) -> usize {
        self.entries.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }
}

/// All multi-indices of length `n` with |alpha| = m, in the project-wide
/// order: first entry descending, then recursively. For n = 2, m = 2 this
/// yields (2,0), (1,1), (0,2).
pub fn multi_indices(n: usize, m: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut current = vec![0usize; n];
    fn rec(axis: usize, remaining: usize, current: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if axis + 1 == current.len() {
            current[axis] = remaining;
            out.push(MultiIndex::new(current.clone()));
            return;
        }
        for v in (0..=remaining).rev() {
            current[axis] = v;
            rec(axis + 1, remaining - v, current, out);
        }
    }
    rec(0, m, &mut current, &mut out);
    out
}

/// All multi-indices with |alpha| <= deg, ordered by total degree and then
/// as in `multi_indices`. This is the polynomial basis order.
pub fn multi_indices_upto(n: usize, deg: usize) -> Vec<MultiIndex> {
    (0..=deg).flat_map(|k| multi_indices(n, k)).collect()
}

/// Binomial coefficient, exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Periodic grid on [0, L)^n with P points per axis, spacing h = L / P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    points_per_axis: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(n: usize, points_per_axis: usize, box_length: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("dimension {n} not in {{1,2}}")));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis {points_per_axis} must be a power of two >= 8"
            )));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "box_length {box_length} must be positive"
            )));
        }
        Ok(Grid {
            n,
            points_per_axis,
            box_length,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_axis as f64
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    /// Cell volume h^n.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// Coordinates of a flat row-major index.
    pub fn coords(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.n {
            1 => [flat as f64 * h, 0.0],
            _ => {
                let p = self.points_per_axis;
                [(flat / p) as f64 * h, (flat % p) as f64 * h]
            }
        }
    }

    /// Signed periodic displacement a - b reduced to (-L/2, L/2].
    pub fn periodic_delta(&self, a: f64, b: f64) -> f64 {
        let l = self.box_length;
        let mut d = (a - b) % l;
        if d > l / 2.0 {
            d -= l;
        } else if d <= -l / 2.0 {
            d += l;
        }
        d
    }

    /// Periodic Euclidean distance between two coordinate vectors.
    pub fn periodic_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ax in 0..self.n {
            let d = self.periodic_delta(a[ax], b[ax]);
            s += d * d;
        }
        s.sqrt()
    }

    /// Flat index shifted by integer offsets with periodic wrap.
    pub fn shift(&self, flat: usize, offsets: &[i64; 2]) -> usize {
        let p = self.points_per_axis as i64;
        match self.n {
            1 => {
                let i = (flat as i64 + offsets[0]).rem_euclid(p);
                i as usize
            }
            _ => {
                let pp = self.points_per_axis;
                let i = ((flat / pp) as i64 + offsets[0]).rem_euclid(p) as usize;
                let j = ((flat % pp) as i64 + offsets[1]).rem_euclid(p) as usize;
                i * pp + j
            }
        }
    }

    /// Box center coordinates (L/2 per axis).
    pub fn center(&self) -> [f64; 2] {
        let c = self.box_length / 2.0;
        if self.n == 1 {
            [c, 0.0]
        } else {
            [c, c]
        }
    }

    /// Flat indices with periodic distance <= L/4 from the box center: the
    /// interior window on which experiments evaluate local functionals.
    pub fn interior_window(&self) -> Vec<usize> {
        let c = self.center();
        let r = self.box_length / 4.0;
        (0..self.total_points())
            .filter(|&i| {
                let x = self.coords(i);
                self.periodic_distance(&x[..self.n], &c[..self.n]) <= r + 1e-12 * self.box_length
            })
            .collect()
    }

    /// Integer offsets (per axis) of grid points with periodic distance
    /// strictly below `radius` from a center point. Shared by every ball
    /// scan so that membership is decided in exactly one place.
    pub fn ball_offsets(&self, radius: f64) -> Vec<[i64; 2]> {
        let h = self.spacing();
        let reach = (radius / h).ceil() as i64;
        let half = (self.points_per_axis / 2) as i64;
        let reach = reach.min(half);
        let mut out = Vec::new();
        match self.n {
            1 => {
                for di in -reach..=reach {
                    if (di as f64 * h).abs() < radius {
                        out.push([di, 0]);
                    }
                }
            }
            _ => {
                for di in -reach..=reach {
                    for dj in -reach..=reach {
                        let d2 = (di as f64 * h).powi(2) + (dj as f64 * h).powi(2);
                        if d2 < radius * radius {
                            out.push([di, dj]);
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn make_grid(n: usize, points_per_axis: usize, box_length: f64) -> Result<Grid> {
    Grid::new(n, points_per_axis, box_length)
}

/// Sampled complex N-component function on a grid. Values are stored
/// component-major, each component row-major over grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    components: usize,
    values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        Field {
            grid,
            components,
            values: vec![Complex64::new(0.0, 0.0); components * grid.total_points()],
        }
    }

    pub fn constant(grid: Grid, components: usize, value: Complex64) -> Self {
        Field {
            grid,
            components,
            values: vec![value; components * grid.total_points()],
        }
    }

    /// Scalar field from a coordinate closure.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let n = grid.dim();
        let values = (0..grid.total_points())
            .map(|i| {
                let x = grid.coords(i);
                f(&x[..n])
            })
            .collect();
        Field {
            grid,
            components: 1,
            values,
        }
    }

    pub fn from_values(grid: Grid, components: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != components * grid.total_points() {
            return Err(Error::InvalidArgument(format!(
                "value count {} != components {} * points {}",
                values.len(),
                components,
                grid.total_points()
            )));
        }
        Ok(Field {
            grid,
            components,
            values,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let np = self.grid.total_points();
        &self.values[c * np..(c + 1) * np]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let np = self.grid.total_points();
        &mut self.values[c * np..(c + 1) * np]
    }

    pub fn at(&self, c: usize, flat: usize) -> Complex64 {
        self.values[c * self.grid.total_points() + flat]
    }

    /// Pointwise Euclidean modulus across components.
    pub fn modulus_at(&self, flat: usize) -> f64 {
        let np = self.grid.total_points();
        if self.components == 1 {
            return self.values[flat].norm();
        }
        let mut s = 0.0;
        for c in 0..self.components {
            s += self.values[c * np + flat].norm_sqr();
        }
        s.sqrt()
    }

    /// Squared modulus summed over components.
    pub fn modulus_sqr_at(&self, flat: usize) -> f64 {
        let np = self.grid.total_points();
        let mut s = 0.0;
        for c in 0..self.components {
            s += self.values[c * np + flat].norm_sqr();
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, c: Complex64) {
        for z in self.values.iter_mut() {
            *z *= c;
        }
    }

    pub fn axpy(&mut self, a: Complex64, other: &Field) {
        for (z, w) in self.values.iter_mut().zip(&other.values) {
            *z += a * w;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        for (z, w) in out.values.iter_mut().zip(&other.values) {
            *z -= w;
        }
        out
    }
}

/// One trajectory {u(t_k, .)} on a strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    times: Vec<f64>,
    slices: Vec<Field>,
}

impl SpaceTimeField {
    pub fn new(times: Vec<f64>, slices: Vec<Field>) -> Result<Self> {
        if times.len() != slices.len() || times.is_empty() {
            return Err(Error::InvalidArgument(
                "times and slices must be non-empty and equal length".into(),
            ));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "times must be strictly increasing".into(),
            ));
        }
        let g = slices[0].grid();
        let nc = slices[0].components();
        if !slices.iter().all(|s| s.grid() == g && s.components() == nc) {
            return Err(Error::InvalidArgument(
                "all slices must share grid and component count".into(),
            ));
        }
        Ok(SpaceTimeField { times, slices })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &Field {
        &self.slices[k]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> Grid {
        self.slices[0].grid()
    }

    pub fn components(&self) -> usize {
        self.slices[0].components()
    }

    pub fn final_slice(&self) -> &Field {
        self.slices.last().unwrap()
    }

    /// Left-endpoint interval weights dt_k = t_{k+1} - t_k; the final slice
    /// carries no weight. All space-time integrals use these weights.
    pub fn left_weights(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.times.windows(2).map(|t| t[1] - t[0]).collect();
        w.push(0.0);
        w
    }
}

/// Ball with a physical radius; centers are coordinates of grid points.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(grid: &Grid, center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || radius > grid.box_length() / 4.0 {
            return Err(Error::InvalidArgument(format!(
                "ball radius {radius} must lie in (0, L/4] = (0, {}]",
                grid.box_length() / 4.0
            )));
        }
        if center.len() != grid.dim() {
            return Err(Error::InvalidArgument(
                "ball center dimension mismatch".into(),
            ));
        }
        Ok(Ball { center, radius })
    }

    /// Nearest flat grid index to the center.
    pub fn center_index(&self, grid: &Grid) -> usize {
        let p = grid.points_per_axis();
        let h = grid.spacing();
        let snap = |x: f64| -> usize {
            let i = (x / h).round() as i64;
            i.rem_euclid(p as i64) as usize
        };
        match grid.dim() {
            1 => snap(self.center[0]),
            _ => snap(self.center[0]) * p + snap(self.center[1]),
        }
    }
}

/// Deterministic pairwise summation: accuracy close to compensated sums
/// and a result independent of chunking or thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// x^p with an exact path for small integer p (keeps positive homogeneity
/// of the norms bit-exact under scaling by powers of two).
pub fn pow_weight(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x
    } else if p.fract() == 0.0 && p.abs() <= 16.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// Discrete L^p norm with volume weight h^{n/p}; p = infinity gives the
/// max modulus. Multi-component fields use the pointwise Euclidean
/// modulus across components.
pub fn lp_norm(f: &Field, p: f64) -> f64 {
    lp_norm_on(f, p, None)
}

/// Same as `lp_norm` but restricted to a subset of flat indices.
pub fn lp_norm_on(f: &Field, p: f64, subset: Option<&[usize]>) -> f64 {
    assert!(
        p >= 1.0 || p.is_infinite(),
        "lp_norm requires p >= 1 or p = inf"
    );
    let grid = f.grid();
    let eval = |i: usize| f.modulus_at(i);
    if p.is_infinite() {
        return match subset {
            Some(idx) => idx.iter().map(|&i| eval(i)).fold(0.0, f64::max),
            None => (0..grid.total_points()).map(eval).fold(0.0, f64::max),
        };
    }
    let terms: Vec<f64> = match subset {
        Some(idx) => idx.iter().map(|&i| pow_weight(eval(i), p)).collect(),
        None => (0..grid.total_points())
            .map(|i| pow_weight(eval(i), p))
            .collect(),
    };
    (pairwise_sum(&terms) * grid.cell_volume()).powf(1.0 / p)
}

/// (mean over grid points of B of |f|^2)^{1/2}. Plain average over the
/// points with periodic distance < r, no partial-cell weighting.
pub fn ball_mean_sq(f: &Field, ball: &Ball) -> Result<f64> {
    let grid = f.grid();
    if ball.radius < grid.spacing() {
        return Err(Error::BallUnresolved {
            radius: ball.radius,
            spacing: grid.spacing(),
        });
    }
    let offsets = grid.ball_offsets(ball.radius);
    if offsets.is_empty() {
        return Err(Error::BallUnresolved {
            radius: ball.radius,
            spacing: grid.spacing(),
        });
    }
    let c = ball.center_index(&grid);
    let terms: Vec<f64> = offsets
        .iter()
        .map(|off| f.modulus_sqr_at(grid.shift(c, off)))
        .collect();
    Ok((pairwise_sum(&terms) / terms.len() as f64).sqrt())
}

/// Discrete L^2(B) norm (h^n-weighted) over the points of a ball.
pub fn l2_norm_on_ball(f: &Field, ball: &Ball) -> Result<f64> {
    let grid = f.grid();
    if ball.radius < grid.spacing() {
        return Err(Error::BallUnresolved {
            radius: ball.radius,
            spacing: grid.spacing(),
        });
    }
    let offsets = grid.ball_offsets(ball.radius);
    let c = ball.center_index(&grid);
    let terms: Vec<f64> = offsets
        .iter()
        .map(|off| f.modulus_sqr_at(grid.shift(c, off)))
        .collect();
    Ok((pairwise_sum(&terms) * grid.cell_volume()).sqrt())
}

/// Space-time L^2 norm of a trajectory with the left-endpoint weights:
/// (sum_k dt_k ||F(t_k)||_2^2)^{1/2}. This is the direct side of the
/// T^{2,2} = L^2(L^2) identity.
pub fn spacetime_l2(f: &SpaceTimeField) -> f64 {
    let w = f.left_weights();
    let terms: Vec<f64> = f
        .slices()
        .iter()
        .zip(&w)
        .map(|(s, &dt)| {
            let n2 = lp_norm(s, 2.0);
            dt * n2 * n2
        })
        .collect();
    pairwise_sum(&terms).sqrt()
}
