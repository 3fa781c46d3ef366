//! The harmonic-analysis norm layer: parabolic tent norms, Kenig-Pipher
//! non-tangential maximal norms, Carleson measure norms, sharp functions
//! and the polynomial BMO / L^p scales.
//!
//! Discretization conventions, fixed project-wide:
//! - ball averages are plain means over grid points at periodic distance
//!   < r, through one shared offset table per radius;
//! - time integrals are left-endpoint Riemann sums on the trajectory's
//!   own grid, with the last interval clipped at the integration bound;
//! - suprema over balls run over the dyadic family r_j = 2^j h,
//!   j = 2..=log2(P/8), centered at window points;
//! - the L^p integral in x runs over the full torus for the p < infinity
//!   tent norm (this makes T^{2,2} = L^2(L^2) an identity of sums) and
//!   over the interior window for the maximal-function norms.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::deriv::{grad_m_trajectory, Scheme};
use crate::error::{Error, Result};
use crate::grid::{lp_norm_on, pairwise_sum, pow_weight, Ball, Field, Grid, SpaceTimeField};
pub use crate::poly::{poly_project, PolyProjection, ProjectionStencil, Weight};

/// Dyadic radii shared by every ball supremum on a grid.
#[derive(Debug, Clone)]
pub struct DyadicBallFamily {
    pub radii: Vec<f64>,
}

impl DyadicBallFamily {
    pub fn new(grid: &Grid) -> Self {
        let h = grid.spacing();
        let p = grid.points_per_axis();
        let jmax = (p / 8).ilog2() as usize;
        let radii = (2..=jmax.max(2)).map(|j| (1u64 << j) as f64 * h).collect();
        DyadicBallFamily { radii }
    }
}

/// Truncation metadata recorded with every norm value.
#[derive(Debug, Clone, Serialize)]
pub struct Truncation {
    pub rmin: f64,
    pub rmax: f64,
    pub window: String,
    /// Number of time slices whose parabolic ball was below resolution
    /// (evaluated as a point value) or above the L/4 cap (skipped).
    pub truncated_scales: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub name: String,
    pub value: f64,
    /// None encodes p = infinity.
    pub p: Option<f64>,
    pub m: usize,
    pub grid_n: usize,
    pub grid_points: usize,
    pub grid_box: f64,
    pub truncation: Truncation,
}

fn finite_p(p: f64) -> Option<f64> {
    if p.is_infinite() {
        None
    } else {
        Some(p)
    }
}

/// Mean over the ball offsets of the squared modulus, one center.
fn ball_mean_sqr_with(grid: &Grid, sq_field: &[f64], offsets: &[[i64; 2]], center: usize) -> f64 {
    let terms: Vec<f64> = offsets
        .iter()
        .map(|off| sq_field[grid.shift(center, off)])
        .collect();
    pairwise_sum(&terms) / offsets.len() as f64
}

/// Squared modulus of each slice, flattened over components.
fn squared_slices(f: &SpaceTimeField) -> Vec<Vec<f64>> {
    f.slices()
        .iter()
        .map(|s| {
            (0..s.grid().total_points())
                .map(|i| s.modulus_sqr_at(i))
                .collect()
        })
        .collect()
}

/// Parabolic tent norm of a trajectory F (usually the order-m gradient of
/// a solution): for finite p the L^p norm over the torus of
/// A(x) = (sum_k dt_k mean_{B(x, t_k^{1/2m})} |F(t_k,.)|^2)^{1/2}; for
/// p = infinity the supremum over the dyadic family of
/// (int_0^{r^{2m}} mean_B |F|^2)^{1/2} with centers in the window.
pub fn tent_norm(f: &SpaceTimeField, p: f64, m: usize) -> Result<NormReport> {
    let grid = f.grid();
    if f.len() < 2 {
        return Err(Error::UnresolvedConfig(
            "tent norm needs at least two time slices".into(),
        ));
    }
    if f.times()[0] > 4.0 * (f.times()[1] - f.times()[0]) {
        return Err(Error::UnresolvedConfig(format!(
            "trajectory must start near zero: t0 = {} > 4 dt",
            f.times()[0]
        )));
    }
    let sq = squared_slices(f);
    let weights = f.left_weights();
    let h = grid.spacing();
    let rcap = grid.box_length() / 4.0;
    let exponent = 1.0 / (2.0 * m as f64);

    if p.is_infinite() {
        let (value, trunc) = tent_sup_over_balls(f, &sq, m)?;
        return Ok(NormReport {
            name: "tent".into(),
            value,
            p: None,
            m,
            grid_n: grid.dim(),
            grid_points: grid.points_per_axis(),
            grid_box: grid.box_length(),
            truncation: trunc,
        });
    }

    let mut truncated = 0usize;
    let mut rmin = f64::INFINITY;
    let mut rmax: f64 = 0.0;
    // Per-slice offset tables.
    let mut per_slice: Vec<Option<Vec<[i64; 2]>>> = Vec::with_capacity(f.len());
    for (k, &t) in f.times().iter().enumerate() {
        if weights[k] == 0.0 {
            per_slice.push(None);
            continue;
        }
        let r = t.powf(exponent);
        if r > rcap {
            truncated += 1;
            per_slice.push(None);
            continue;
        }
        if r < h {
            truncated += 1;
            per_slice.push(Some(vec![[0, 0]])); // point evaluation below resolution
            rmin = rmin.min(h);
        } else {
            per_slice.push(Some(grid.ball_offsets(r)));
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
    }
    if per_slice.iter().all(|o| o.is_none()) {
        return Err(Error::UnresolvedConfig(format!(
            "tent norm: all {truncated} time scales fell outside the resolvable radius range \
             [h, L/4] = [{h}, {rcap}]"
        )));
    }
    let np = grid.total_points();
    let a_sq: Vec<f64> = (0..np)
        .into_par_iter()
        .map(|x| {
            let mut acc = Vec::with_capacity(f.len());
            for k in 0..f.len() {
                if let Some(offsets) = &per_slice[k] {
                    acc.push(weights[k] * ball_mean_sqr_with(&grid, &sq[k], offsets, x));
                }
            }
            pairwise_sum(&acc)
        })
        .collect();
    let terms: Vec<f64> = a_sq
        .iter()
        .map(|&v| pow_weight(v.max(0.0).sqrt(), p))
        .collect();
    let value = (pairwise_sum(&terms) * grid.cell_volume()).powf(1.0 / p);
    Ok(NormReport {
        name: "tent".into(),
        value,
        p: finite_p(p),
        m,
        grid_n: grid.dim(),
        grid_points: grid.points_per_axis(),
        grid_box: grid.box_length(),
        truncation: Truncation {
            rmin: if rmin.is_finite() { rmin } else { 0.0 },
            rmax,
            window: "full torus".into(),
            truncated_scales: truncated,
        },
    })
}

/// sup over dyadic balls (centers in window) of int_0^{r^{2m}} mean_B |F|^2,
/// reported as (value, truncation); the square root is the tent-infinity
/// norm and the Carleson norm divides by 2m and multiplies by |B(0,1)|.
fn tent_sup_sq(f: &SpaceTimeField, sq: &[Vec<f64>], m: usize) -> Result<(f64, Truncation)> {
    let grid = f.grid();
    let family = DyadicBallFamily::new(&grid);
    let window = grid.interior_window();
    let weights = f.left_weights();
    let mut best: f64 = 0.0;
    let mut rmax: f64 = 0.0;
    for &r in &family.radii {
        let offsets = grid.ball_offsets(r);
        if offsets.is_empty() {
            continue;
        }
        let t_top = r.powi(2 * m as i32);
        // Clipped left-endpoint weights on [0, t_top].
        let mut wk = Vec::with_capacity(f.len());
        for (k, &t) in f.times().iter().enumerate() {
            if t >= t_top {
                wk.push(0.0);
            } else {
                let dt = weights[k].min(t_top - t);
                wk.push(dt);
            }
        }
        let vals: Vec<f64> = window
            .par_iter()
            .map(|&x| {
                let mut acc = Vec::with_capacity(f.len());
                for k in 0..f.len() {
                    if wk[k] > 0.0 {
                        acc.push(wk[k] * ball_mean_sqr_with(&grid, &sq[k], &offsets, x));
                    }
                }
                pairwise_sum(&acc)
            })
            .collect();
        let sup_here = vals.into_iter().fold(0.0, f64::max);
        if sup_here > best {
            best = sup_here;
        }
        rmax = rmax.max(r);
    }
    Ok((
        best,
        Truncation {
            rmin: DyadicBallFamily::new(&grid).radii[0],
            rmax,
            window: "interior window".into(),
            truncated_scales: 0,
        },
    ))
}

fn tent_sup_over_balls(f: &SpaceTimeField, sq: &[Vec<f64>], m: usize) -> Result<(f64, Truncation)> {
    let (sup_sq, trunc) = tent_sup_sq(f, sq, m)?;
    Ok((sup_sq.sqrt(), trunc))
}

/// Kenig-Pipher non-tangential maximal norm: for each window point the
/// max over dyadic scales delta of the Whitney average
/// (mean_{delta/2}^{delta} mean_{B(x, delta^{1/2m})} |u|^2)^{1/2}, then
/// the L^p norm over the window.
pub fn nontangential_norm(u: &SpaceTimeField, p: f64, m: usize) -> Result<NormReport> {
    let grid = u.grid();
    if u.len() < 2 {
        return Err(Error::UnresolvedConfig(
            "non-tangential norm needs at least two slices".into(),
        ));
    }
    let sq = squared_slices(u);
    let weights = u.left_weights();
    let t_end = *u.times().last().unwrap();
    let rcap = grid.box_length() / 4.0;
    let exponent = 1.0 / (2.0 * m as f64);
    // Dyadic scales delta = t_end / 2^l down to ball resolution. The
    // Whitney interval [delta/2, delta] always overlaps the covered time
    // range because the slice at t_0 carries the first left-endpoint
    // interval, so the descent is stopped by the spatial resolution.
    let mut deltas = Vec::new();
    let mut delta = t_end;
    let mut truncated = 0usize;
    loop {
        let r = delta.powf(exponent);
        if r < grid.spacing() {
            truncated += 1;
            break;
        }
        if r <= rcap {
            deltas.push(delta);
        } else {
            truncated += 1;
        }
        delta /= 2.0;
        if deltas.len() + truncated > 200 {
            break;
        }
    }
    if deltas.is_empty() {
        return Err(Error::UnresolvedConfig(
            "no resolvable non-tangential scales".into(),
        ));
    }
    // Precompute per delta: slice weights on [delta/2, delta] and offsets.
    struct Scale {
        offsets: Vec<[i64; 2]>,
        wk: Vec<f64>,
        total_w: f64,
    }
    let mut scales = Vec::with_capacity(deltas.len());
    let mut rmin = f64::INFINITY;
    let mut rmax: f64 = 0.0;
    for &d in &deltas {
        let r = d.powf(exponent);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        let offsets = grid.ball_offsets(r);
        let lo = d / 2.0;
        let hi = d;
        let mut wk = vec![0.0; u.len()];
        let mut total = 0.0;
        for (k, &t) in u.times().iter().enumerate() {
            if weights[k] == 0.0 {
                continue;
            }
            let seg_lo = t.max(lo);
            let seg_hi = (t + weights[k]).min(hi);
            if seg_hi > seg_lo {
                wk[k] = seg_hi - seg_lo;
                total += wk[k];
            }
        }
        if total > 0.0 {
            scales.push(Scale {
                offsets,
                wk,
                total_w: total,
            });
        }
    }
    let window = grid.interior_window();
    let maximal: Vec<f64> = window
        .par_iter()
        .map(|&x| {
            let mut best: f64 = 0.0;
            for sc in &scales {
                let mut acc = Vec::new();
                for k in 0..u.len() {
                    if sc.wk[k] > 0.0 {
                        acc.push(sc.wk[k] * ball_mean_sqr_with(&grid, &sq[k], &sc.offsets, x));
                    }
                }
                let avg = pairwise_sum(&acc) / sc.total_w;
                if avg > best {
                    best = avg;
                }
            }
            best.sqrt()
        })
        .collect();
    let value = if p.is_infinite() {
        maximal.iter().cloned().fold(0.0, f64::max)
    } else {
        let terms: Vec<f64> = maximal.iter().map(|&v| pow_weight(v, p)).collect();
        (pairwise_sum(&terms) * grid.cell_volume()).powf(1.0 / p)
    };
    Ok(NormReport {
        name: "nontangential".into(),
        value,
        p: finite_p(p),
        m,
        grid_n: grid.dim(),
        grid_points: grid.points_per_axis(),
        grid_box: grid.box_length(),
        truncation: Truncation {
            rmin,
            rmax,
            window: "interior window".into(),
            truncated_scales: truncated,
        },
    })
}

/// Unit ball volume per dimension.
fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        _ => std::f64::consts::PI,
    }
}

/// Carleson norm of the measure |t^m grad^m u(t^{2m}, x)|^2 dx dt / t:
/// after the s = t^{2m} substitution, sup over dyadic balls of
/// (|B(0,1)| / 2m) int_0^{r^{2m}} mean_B |grad^m u(s, .)|^2 dy ds.
/// Differentiation is spectral, per slice.
pub fn carleson_norm(u: &SpaceTimeField, m: usize) -> Result<NormReport> {
    let grid = u.grid();
    let gm = grad_m_trajectory(u, m, Scheme::Spectral)?;
    let sq = squared_slices(&gm);
    let (sup_sq, trunc) = tent_sup_sq(&gm, &sq, m)?;
    let value = unit_ball_volume(grid.dim()) / (2.0 * m as f64) * sup_sq;
    Ok(NormReport {
        name: "carleson".into(),
        value,
        p: None,
        m,
        grid_n: grid.dim(),
        grid_points: grid.points_per_axis(),
        grid_box: grid.box_length(),
        truncation: trunc,
    })
}

/// Per-center oscillation fields mu_r(y) for each dyadic radius, then the
/// sharp function as a max-dilation: f^{#,m}(x) = max over balls B(y, r)
/// containing x of the residual RMS on B(y, r).
pub fn sharp_m(f: &Field, m: usize) -> Result<Field> {
    if f.components() != 1 {
        return Err(Error::InvalidArgument(
            "sharp_m expects a scalar field".into(),
        ));
    }
    let grid = f.grid();
    let family = DyadicBallFamily::new(&grid);
    let np = grid.total_points();
    let mut sharp = vec![0.0f64; np];
    let mut usable = 0usize;
    for &r in &family.radii {
        // Radii too small to support the degree-(m-1) basis are below the
        // resolvable scale for this projection and drop out of the family.
        let stencil = match ProjectionStencil::new(grid, r, m, Weight::Flat) {
            Ok(s) => s,
            Err(Error::UnresolvedConfig(_)) | Err(Error::BallUnresolved { .. }) => continue,
            Err(e) => return Err(e),
        };
        usable += 1;
        let mu: Vec<f64> = (0..np)
            .into_par_iter()
            .map(|y| stencil.oscillation_at(f, y).0)
            .collect();
        let offsets = grid.ball_offsets(r);
        let dilated: Vec<f64> = (0..np)
            .into_par_iter()
            .map(|x| {
                let mut best: f64 = 0.0;
                for off in &offsets {
                    let v = mu[grid.shift(x, off)];
                    if v > best {
                        best = v;
                    }
                }
                best
            })
            .collect();
        for i in 0..np {
            sharp[i] = sharp[i].max(dilated[i]);
        }
    }
    if usable == 0 {
        return Err(Error::UnresolvedConfig(
            "no dyadic radius can support the polynomial projection on this grid".into(),
        ));
    }
    Field::from_values(
        grid,
        1,
        sharp.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
    )
}

fn norm_report_from_sharp(f: &Field, m: usize, p: f64, name: &str) -> Result<NormReport> {
    let grid = f.grid();
    let sharp = sharp_m(f, m)?;
    let window = grid.interior_window();
    let value = lp_norm_on(&sharp, p, Some(&window));
    let family = DyadicBallFamily::new(&grid);
    Ok(NormReport {
        name: name.into(),
        value,
        p: finite_p(p),
        m,
        grid_n: grid.dim(),
        grid_points: grid.points_per_axis(),
        grid_box: grid.box_length(),
        truncation: Truncation {
            rmin: family.radii[0],
            rmax: *family.radii.last().unwrap(),
            window: "interior window".into(),
            truncated_scales: 0,
        },
    })
}

/// Polynomial BMO norm: sup over the window of the order-m sharp function.
pub fn bmo_m_norm(f: &Field, m: usize) -> Result<NormReport> {
    norm_report_from_sharp(f, m, f64::INFINITY, "bmo_m")
}

/// Polynomial L^p norm: L^p over the window of the order-m sharp function.
pub fn lp_m_norm(f: &Field, m: usize, p: f64) -> Result<NormReport> {
    norm_report_from_sharp(f, m, p, "lp_m")
}

/// Classical BMO seminorm (oscillation against constants, L^2 means).
pub fn bmo_norm(f: &Field) -> Result<NormReport> {
    norm_report_from_sharp(f, 1, f64::INFINITY, "bmo")
}

/// Fit the best polynomial of degree < m on the largest interior ball and
/// return it with the residual field f - P.
pub fn filter_polynomial(f: &Field, m: usize) -> Result<(PolyProjection, Field)> {
    let grid = f.grid();
    let c = grid.center();
    let ball = Ball::new(&grid, c[..grid.dim()].to_vec(), grid.box_length() / 4.0)?;
    let proj = poly_project(f, &ball, m, Weight::Flat)?;
    let pf = proj.eval_field(&grid);
    Ok((proj, f.sub(&pf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, spacetime_l2};
    use crate::prng::Prng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_trajectory(
        grid: Grid,
        components: usize,
        slices: usize,
        seed: u64,
    ) -> SpaceTimeField {
        let mut rng = Prng::new(seed, 0);
        let mut times = vec![0.0];
        for _ in 1..slices {
            times.push(times.last().unwrap() + 0.01 + 0.05 * rng.uniform());
        }
        let fields = (0..slices)
            .map(|_| {
                let mut f = Field::zeros(grid, components);
                for z in f.values_mut() {
                    *z = Complex64::new(rng.normal(), rng.normal());
                }
                f
            })
            .collect();
        SpaceTimeField::new(times, fields).unwrap()
    }

    #[test]
    fn tent_p2_is_spacetime_l2() {
        let grid = make_grid(1, 64, 16.0).unwrap();
        for seed in 0..5u64 {
            for m in [1usize, 2] {
                let f = random_trajectory(grid, 2, 12, seed);
                let tent = tent_norm(&f, 2.0, m).unwrap().value;
                let direct = spacetime_l2(&f);
                assert!(
                    (tent - direct).abs() <= 1e-10 * direct.max(1e-300),
                    "seed {seed} m {m}: {tent} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn tent_of_zero_is_zero() {
        let grid = make_grid(1, 64, 16.0).unwrap();
        let slices = (0..4).map(|_| Field::zeros(grid, 1)).collect();
        let f = SpaceTimeField::new(vec![0.0, 0.1, 0.2, 0.3], slices).unwrap();
        assert_eq!(tent_norm(&f, 2.0, 1).unwrap().value, 0.0);
        assert_eq!(tent_norm(&f, f64::INFINITY, 1).unwrap().value, 0.0);
    }

    #[test]
    fn tent_time_slab_closed_form() {
        // F = 1 on [t1, t2] x torus: T^{2,2} norm = sqrt((t2 - t1) L).
        let grid = make_grid(1, 64, 16.0).unwrap();
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.025).collect();
        let slices: Vec<Field> = times
            .iter()
            .map(|&t| {
                if (0.25..0.75).contains(&t) {
                    Field::constant(grid, 1, c(1.0))
                } else {
                    Field::zeros(grid, 1)
                }
            })
            .collect();
        let f = SpaceTimeField::new(times, slices).unwrap();
        let tent = tent_norm(&f, 2.0, 1).unwrap().value;
        let expect = (0.5f64 * 16.0).sqrt();
        assert!((tent - expect).abs() < 0.05 * expect, "{tent} vs {expect}");
    }

    #[test]
    fn nontangential_constant_closed_form() {
        let grid = make_grid(1, 128, 16.0).unwrap();
        let times: Vec<f64> = (0..=32).map(|k| k as f64 * 0.05).collect();
        let slices: Vec<Field> = times
            .iter()
            .map(|_| Field::constant(grid, 1, c(3.0)))
            .collect();
        let u = SpaceTimeField::new(times, slices).unwrap();
        for p in [2.0, 4.0] {
            let v = nontangential_norm(&u, p, 1).unwrap().value;
            let window_measure = (grid.interior_window().len() as f64) * grid.cell_volume();
            let expect = 3.0 * window_measure.powf(1.0 / p);
            assert!(
                (v - expect).abs() < 1e-12 * expect,
                "p={p}: {v} vs {expect}"
            );
        }
        let z = SpaceTimeField::new(
            vec![0.0, 0.1],
            vec![Field::zeros(grid, 1), Field::zeros(grid, 1)],
        )
        .unwrap();
        assert_eq!(nontangential_norm(&z, 2.0, 1).unwrap().value, 0.0);
    }

    #[test]
    fn nontangential_monotone_under_domination() {
        let grid = make_grid(1, 64, 16.0).unwrap();
        let u = random_trajectory(grid, 1, 10, 3);
        // v = 2|u| dominates u pointwise.
        let slices: Vec<Field> = u
            .slices()
            .iter()
            .map(|s| {
                let vals = s.values().iter().map(|z| c(2.0 * z.norm())).collect();
                Field::from_values(grid, 1, vals).unwrap()
            })
            .collect();
        let v = SpaceTimeField::new(u.times().to_vec(), slices).unwrap();
        let nu = nontangential_norm(&u, 2.0, 1).unwrap().value;
        let nv = nontangential_norm(&v, 2.0, 1).unwrap().value;
        assert!(nv >= nu, "{nv} < {nu}");
    }

    #[test]
    fn carleson_vanishes_for_spatially_constant_u() {
        let grid = make_grid(1, 64, 16.0).unwrap();
        let times: Vec<f64> = (0..=16).map(|k| k as f64 * 0.05).collect();
        let slices: Vec<Field> = times
            .iter()
            .map(|&t| Field::constant(grid, 1, c(1.0 + t)))
            .collect();
        let u = SpaceTimeField::new(times, slices).unwrap();
        let v = carleson_norm(&u, 1).unwrap().value;
        assert!(v < 1e-20, "{v}");
    }

    #[test]
    fn carleson_is_ball_volume_times_tent_inf_squared() {
        let grid = make_grid(1, 64, 16.0).unwrap();
        let u = random_trajectory(grid, 1, 24, 9);
        let m = 1usize;
        let car = carleson_norm(&u, m).unwrap().value;
        let gm = grad_m_trajectory(&u, m, Scheme::Spectral).unwrap();
        let tent_inf = tent_norm(&gm, f64::INFINITY, m).unwrap().value;
        let expect = unit_ball_volume(1) / (2.0 * m as f64) * tent_inf * tent_inf;
        assert!(
            (car - expect).abs() <= 1e-8 * expect.max(1e-300),
            "{car} vs {expect}"
        );
    }

    #[test]
    fn sharp_vanishes_exactly_on_low_degree_polynomials() {
        let grid = make_grid(1, 128, 16.0).unwrap();
        let f = Field::from_fn(grid, |x| c(1.0 - 0.3 * (x[0] - 8.0)));
        let s = sharp_m(&f, 2).unwrap();
        let window = grid.interior_window();
        let sup = lp_norm_on(&s, f64::INFINITY, Some(&window));
        assert!(
            sup < 1e-10,
            "affine data has zero order-2 sharp function: {sup}"
        );
    }

    #[test]
    fn sharp_invariant_under_polynomial_shift() {
        let grid = make_grid(1, 128, 16.0).unwrap();
        let f = Field::from_fn(grid, |x| c(((x[0] - 8.0) * 1.1).sin()));
        let g = Field::from_fn(grid, |x| {
            c(((x[0] - 8.0) * 1.1).sin() + 0.5 - 0.25 * (x[0] - 8.0))
        });
        let sf = sharp_m(&f, 2).unwrap();
        let sg = sharp_m(&g, 2).unwrap();
        // The shift is a polynomial of the periodic delta, so it wraps
        // discontinuously at the seam opposite the box center; exact
        // cancellation holds on the interior window, whose balls and
        // dilations stay clear of the seam.
        let scale = lp_norm_on(&sf, f64::INFINITY, None).max(1e-300);
        for &i in &grid.interior_window() {
            let (a, b) = (sf.values()[i], sg.values()[i]);
            assert!((a - b).norm() <= 1e-10 * scale, "site {i}: {a} vs {b}");
        }
    }

    #[test]
    fn bmo_hierarchy_and_constants() {
        let grid = make_grid(1, 128, 16.0).unwrap();
        let constant = Field::constant(grid, 1, c(4.2));
        assert!(bmo_norm(&constant).unwrap().value < 1e-12);
        assert!(bmo_m_norm(&constant, 2).unwrap().value < 1e-12);
        assert!(lp_m_norm(&constant, 2, 4.0).unwrap().value < 1e-10);
        // Richer projection class shrinks the sharp function pointwise.
        let f = Field::from_fn(grid, |x| c(((x[0] - 8.0) * 0.9).sin() + 0.4 * (x[0] - 8.0)));
        let s1 = sharp_m(&f, 1).unwrap();
        let s2 = sharp_m(&f, 2).unwrap();
        for (a, b) in s2.values().iter().zip(s1.values()) {
            assert!(a.re <= b.re + 1e-12);
        }
        assert!(bmo_m_norm(&f, 2).unwrap().value <= bmo_norm(&f).unwrap().value + 1e-12);
    }

    #[test]
    fn windowed_log_is_bmo_and_dilation_stable() {
        // bmo norm of log|x| is finite and stable under x -> 2x.
        let grid = make_grid(1, 256, 16.0).unwrap();
        let f1 = Field::from_fn(grid, |x| {
            c((x[0] - 8.0).abs().max(grid.spacing() / 2.0).ln())
        });
        let f2 = Field::from_fn(grid, |x| {
            c((2.0 * (x[0] - 8.0)).abs().max(grid.spacing() / 2.0).ln())
        });
        let b1 = bmo_norm(&f1).unwrap().value;
        let b2 = bmo_norm(&f2).unwrap().value;
        assert!(b1.is_finite() && b1 > 0.0);
        assert!((b1 - b2).abs() / b1 < 0.15, "{b1} vs {b2}");
    }

    #[test]
    fn norm_homogeneity() {
        let grid = make_grid(1, 64, 16.0).unwrap();
        let u = random_trajectory(grid, 1, 10, 11);
        let scaled_slices: Vec<Field> = u
            .slices()
            .iter()
            .map(|s| {
                let mut f = s.clone();
                f.scale(c(4.0));
                f
            })
            .collect();
        let v = SpaceTimeField::new(u.times().to_vec(), scaled_slices).unwrap();
        // degree-1 norms, exact on the integer-power paths
        for p in [2.0, f64::INFINITY] {
            assert_eq!(
                tent_norm(&v, p, 1).unwrap().value,
                4.0 * tent_norm(&u, p, 1).unwrap().value,
                "tent p={p}"
            );
            assert_eq!(
                nontangential_norm(&v, p, 1).unwrap().value,
                4.0 * nontangential_norm(&u, p, 1).unwrap().value
            );
        }
        // fractional and quasi-norm exponents within round-off
        for p in [2.5, 0.5] {
            let tu = tent_norm(&u, p, 1).unwrap().value;
            let tv = tent_norm(&v, p, 1).unwrap().value;
            assert!(
                (tv - 4.0 * tu).abs() <= 1e-12 * tv.abs().max(1e-300),
                "p={p}"
            );
        }
        // carleson is 2-homogeneous
        assert_eq!(
            carleson_norm(&v, 1).unwrap().value,
            16.0 * carleson_norm(&u, 1).unwrap().value
        );
    }

    #[test]
    fn filter_polynomial_recovers_planted_polynomial() {
        let grid = make_grid(1, 256, 16.0).unwrap();
        // g compactly supported bump + planted Q(x) = 2 + 0.5 (x - 8)
        let f = Field::from_fn(grid, |x| {
            let d: f64 = x[0] - 8.0;
            let bump = if d.abs() < 1.0 {
                (1.0 - d * d).powi(2)
            } else {
                0.0
            };
            c(bump + 2.0 + 0.5 * d)
        });
        let (proj, residual) = filter_polynomial(&f, 2).unwrap();
        // Coefficients in the scaled basis: c0 ~ 2 + bump-mean, c1 = 0.5 r.
        let r = grid.box_length() / 4.0;
        assert!(
            (proj.coeffs[1].re - 0.5 * r).abs() < 0.02 * r,
            "{:?}",
            proj.coeffs
        );
        // Residual is bounded (the planted polynomial is gone).
        let window = grid.interior_window();
        let sup = lp_norm_on(&residual, f64::INFINITY, Some(&window));
        assert!(sup < 1.2, "residual sup {sup}");
        // Polynomial input maps to residual ~ 0.
        let poly_only = Field::from_fn(grid, |x| c(2.0 + 0.5 * (x[0] - 8.0)));
        let (_, res0) = filter_polynomial(&poly_only, 2).unwrap();
        assert!(lp_norm_on(&res0, f64::INFINITY, Some(&window)) < 1e-9);
    }

    #[test]
    fn dyadic_family_radii() {
        let grid = make_grid(1, 256, 16.0).unwrap();
        let fam = DyadicBallFamily::new(&grid);
        let h = grid.spacing();
        assert_eq!(fam.radii, vec![4.0 * h, 8.0 * h, 16.0 * h, 32.0 * h]);
        assert!(fam.radii.iter().all(|&r| r <= grid.box_length() / 4.0));
    }
}
