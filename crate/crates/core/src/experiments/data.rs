//! Deterministic data generators for the experiments. Everything is a
//! pure function of (grid, seed); windows confine the data to the
//! interior so that wrap-around acts only as a controlled truncation.

use num_complex::Complex64;

use crate::fft::FftContext;
use crate::grid::{pairwise_sum, Field, Grid};
use crate::prng::Prng;

/// Smooth cutoff: 1 on distance <= r_plateau from the box center, 0 from
/// r_zero on, with a C^infinity ramp in between.
pub fn window_profile(grid: &Grid, r_plateau: f64, r_zero: f64) -> Vec<f64> {
    let c = grid.center();
    let ramp = |u: f64| -> f64 {
        // smooth partition function: 0 at u<=0, 1 at u>=1
        let phi = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
        let a = phi(u);
        let b = phi(1.0 - u);
        a / (a + b)
    };
    (0..grid.total_points())
        .map(|i| {
            let x = grid.coords(i);
            let d = grid.periodic_distance(&x[..grid.dim()], &c[..grid.dim()]);
            if d <= r_plateau {
                1.0
            } else if d >= r_zero {
                0.0
            } else {
                ramp((r_zero - d) / (r_zero - r_plateau))
            }
        })
        .collect()
}

/// Standard window: plateau to L/4, zero from 0.45 L.
pub fn standard_window(grid: &Grid) -> Vec<f64> {
    window_profile(grid, grid.box_length() / 4.0, 0.45 * grid.box_length())
}

pub fn apply_window(f: &mut Field, w: &[f64]) {
    let np = f.grid().total_points();
    for c in 0..f.components() {
        let comp = f.component_mut(c);
        for i in 0..np {
            comp[i] *= w[i];
        }
    }
}

/// Remove the box mean of every component.
pub fn remove_mean(f: &mut Field) {
    let np = f.grid().total_points();
    for c in 0..f.components() {
        let comp = f.component_mut(c);
        let re: Vec<f64> = comp.iter().map(|z| z.re).collect();
        let im: Vec<f64> = comp.iter().map(|z| z.im).collect();
        let mean = Complex64::new(pairwise_sum(&re), pairwise_sum(&im)) / np as f64;
        for z in comp.iter_mut() {
            *z -= mean;
        }
    }
}

/// Gaussian bump of the given width, optionally dilated by lambda
/// (f(lambda (x - c))) around the box center.
pub fn gaussian(grid: &Grid, width: f64, lambda: f64) -> Field {
    let c = grid.center();
    let n = grid.dim();
    Field::from_fn(*grid, |x| {
        let mut d2 = 0.0;
        for ax in 0..n {
            let d = lambda * grid.periodic_delta(x[ax], c[ax]);
            d2 += d * d;
        }
        Complex64::new((-d2 / (2.0 * width * width)).exp(), 0.0)
    })
}

/// Windowed step: sign of the first coordinate offset, smoothly cut off.
/// The window is evaluated at the dilated argument, so the whole datum is
/// f(lambda x) of the lambda = 1 case (the sign alone is dilation-fixed).
pub fn windowed_step(grid: &Grid, lambda: f64) -> Field {
    let c = grid.center();
    let n = grid.dim();
    let l = grid.box_length();
    let (r_plateau, r_zero) = (l / 4.0, 0.45 * l);
    let ramp = |u: f64| -> f64 {
        let phi = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
        let a = phi(u);
        a / (a + phi(1.0 - u))
    };
    Field::from_fn(*grid, |x| {
        let mut d2 = 0.0;
        for ax in 0..n {
            let d = lambda * grid.periodic_delta(x[ax], c[ax]);
            d2 += d * d;
        }
        let dist = d2.sqrt();
        let w = if dist <= r_plateau {
            1.0
        } else if dist >= r_zero {
            0.0
        } else {
            ramp((r_zero - dist) / (r_zero - r_plateau))
        };
        let sign = if grid.periodic_delta(x[0], c[0]) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        Complex64::new(sign * w, 0.0)
    })
}

/// Windowed log datum: (1/2) log(|y|^2 + d0^2) w(|y|) evaluated at
/// y = lambda (x - c - shift), with the core scale d0 = L/64 fixed in the
/// dilated coordinate. Dilating the argument of the whole object keeps
/// the continuum datum exactly scale-covariant, so ratio stability under
/// one dilation step probes only truncation and resolution; the smooth
/// core keeps the spectral gradient free of singular overshoot.
pub fn windowed_log(grid: &Grid, lambda: f64, shift: f64) -> Field {
    let c = grid.center();
    let n = grid.dim();
    let l = grid.box_length();
    let core = l / 64.0;
    let (r_plateau, r_zero) = (l / 4.0, 0.45 * l);
    let ramp = |u: f64| -> f64 {
        let phi = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
        let a = phi(u);
        let b = phi(1.0 - u);
        a / (a + b)
    };
    Field::from_fn(*grid, |x| {
        let mut d2 = 0.0;
        for ax in 0..n {
            let off = if ax == 0 { shift } else { 0.0 };
            let d = lambda * (grid.periodic_delta(x[ax], c[ax]) - off);
            d2 += d * d;
        }
        let dist = d2.sqrt();
        let w = if dist <= r_plateau {
            1.0
        } else if dist >= r_zero {
            0.0
        } else {
            ramp((r_zero - dist) / (r_zero - r_plateau))
        };
        Complex64::new(0.5 * (d2 + core * core).ln() * w, 0.0)
    })
}

/// Windowed linear datum w(x) (x - c)_1: the degree-one polynomial of the
/// conservation experiment.
pub fn windowed_linear(grid: &Grid) -> Field {
    let c = grid.center();
    let w = standard_window(grid);
    let mut f = Field::from_fn(*grid, |x| {
        Complex64::new(grid.periodic_delta(x[0], c[0]), 0.0)
    });
    apply_window(&mut f, &w);
    f
}

/// Random band-limited complex field with modes |k| <= kmax per axis.
pub fn band_limited(grid: &Grid, seed: u64, kmax: usize) -> Field {
    let ctx = FftContext::new(*grid);
    let mut rng = Prng::new(seed, 0xbad5eed);
    let p = grid.points_per_axis();
    let signed = |i: usize| {
        if i < p / 2 {
            i as i64
        } else {
            i as i64 - p as i64
        }
    };
    let mut hat = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    for (k, h) in hat.iter_mut().enumerate() {
        let within = match grid.dim() {
            1 => signed(k).unsigned_abs() as usize <= kmax,
            _ => {
                signed(k / p).unsigned_abs() as usize <= kmax
                    && signed(k % p).unsigned_abs() as usize <= kmax
            }
        };
        if within {
            *h = Complex64::new(rng.normal(), rng.normal());
        }
    }
    ctx.inverse(&mut hat);
    Field::from_values(*grid, 1, hat).expect("band_limited shape")
}

/// Band-limited field dilated by an integer factor: coefficients are
/// drawn per base mode k (tied to k, not to the grid layout) and placed
/// at mode lambda * k, so the sample is exactly f(lambda x) of the
/// lambda = 1 field.
pub fn band_limited_dilated(grid: &Grid, seed: u64, kmax: usize, lambda: usize) -> Field {
    let ctx = FftContext::new(*grid);
    let p = grid.points_per_axis() as i64;
    let half = grid.points_per_axis() / 2;
    let mut hat = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    let k_range = -(kmax as i64)..=kmax as i64;
    assert!(
        kmax * lambda < half,
        "dilated modes must stay below Nyquist"
    );
    match grid.dim() {
        1 => {
            for k in k_range {
                let mut rng = Prng::new(seed, (k + (1 << 20)) as u64);
                let c = Complex64::new(rng.normal(), rng.normal());
                let idx = (lambda as i64 * k).rem_euclid(p) as usize;
                hat[idx] += c;
            }
        }
        _ => {
            for k1 in k_range.clone() {
                for k2 in -(kmax as i64)..=kmax as i64 {
                    let mut rng = Prng::new(
                        seed,
                        ((k1 + (1 << 20)) as u64) << 24 | (k2 + (1 << 20)) as u64,
                    );
                    let c = Complex64::new(rng.normal(), rng.normal());
                    let i = (lambda as i64 * k1).rem_euclid(p) as usize;
                    let j = (lambda as i64 * k2).rem_euclid(p) as usize;
                    hat[i * grid.points_per_axis() + j] += c;
                }
            }
        }
    }
    ctx.inverse(&mut hat);
    Field::from_values(*grid, 1, hat).expect("band_limited_dilated shape")
}

/// Windowed localized bump at an offset from the center (for probe data).
pub fn windowed_bump(grid: &Grid, width: f64, offset: f64) -> Field {
    let c = grid.center();
    let n = grid.dim();
    let w = standard_window(grid);
    let mut f = Field::from_fn(*grid, |x| {
        let mut d2 = 0.0;
        for ax in 0..n {
            let shift = if ax == 0 { offset } else { 0.0 };
            let d = grid.periodic_delta(x[ax], c[ax]) - shift;
            d2 += d * d;
        }
        Complex64::new((-d2 / (2.0 * width * width)).exp(), 0.0)
    });
    apply_window(&mut f, &w);
    f
}
