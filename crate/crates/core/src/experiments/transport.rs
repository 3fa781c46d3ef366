//! Propagator transport experiments: off-diagonal decay fits, the
//! conservation property for polynomials, the Duhamel cross-check and the
//! uniform L^p boundedness probe.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{lp_norm, make_grid, Field};
use crate::propagator::{duhamel_picard, off_diagonal_norm, GridBox, Propagator};
use crate::semigroup::Semigroup;

use super::{data, CoeffSpec, Criterion, ExperimentConfig, ExperimentResult};

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Off-diagonal decay of ||1_E Gamma(t,s) 1_F||: the heat fit checks the
/// Gaussian slope -1/4 against d^2/t, the m = 2 fit checks the
/// d-exponent 2m/(2m-1) = 4/3 of the stretched-exponential decay.
pub fn run_offdiag_fit(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new(cfg);
    let coeffs = cfg.build_coeffs()?;
    let m = cfg.m;
    let prop = Propagator::new(coeffs, cfg.solver)?;
    let grid = prop.grid();
    let tau = cfg.t_final;
    let half_w = 0.5;
    let center = grid.box_length() / 2.0;
    let f_box = GridBox {
        center: vec![center - 2.0],
        half_widths: vec![half_w],
    };

    // Value at zero separation: E = F with t - s -> 0 (a few steps).
    let same = off_diagonal_norm(&prop, &f_box, &f_box, 0.0, 8.0 * cfg.solver.dt, 2, None)?;
    result.metric("value_zero_separation", same.value);
    result.criterion(Criterion::ge("zero_separation_near_one", same.value, 0.9));
    result.criterion(Criterion::le(
        "zero_separation_bounded",
        same.value,
        1.0 + 1e-9,
    ));

    // Sweep the edge-to-edge distance with the parabolic scale fixed. The
    // heat kernel is positive, so the Gaussian regime starts around
    // d ~ 2 sqrt(t); polyharmonic kernels oscillate, and the
    // stretched-exponential envelope only dominates the lobe structure
    // from roughly (d^{2m}/t)^{1/(2m-1)} ~ 7 on, so the m > 1 window sits
    // further out.
    let scale = tau.powf(1.0 / (2.0 * m as f64));
    let dscale: Vec<f64> = match m {
        1 => vec![2.0, 2.8, 3.6, 4.4, 5.2, 6.0],
        _ => vec![4.5, 5.5, 6.5, 7.5, 8.5, 9.5],
    };
    let mut xs = Vec::new();
    let mut ln_norms = Vec::new();
    let mut ds = Vec::new();
    let mut prev = f64::INFINITY;
    let mut monotone_defect: f64 = 0.0;
    for &c in &dscale {
        let d = c * scale;
        let e_center = center - 2.0 + 2.0 * half_w + d + half_w;
        let e_box = GridBox {
            center: vec![e_center],
            half_widths: vec![half_w],
        };
        let actual_d = e_box.distance(&grid, &f_box);
        let est = off_diagonal_norm(&prop, &e_box, &f_box, 0.0, tau, 2, None)?;
        if est.value <= 0.0 {
            continue;
        }
        monotone_defect = monotone_defect.max(est.value / prev - 1.0);
        prev = est.value;
        // Abscissa: d^2/t for the heat fit, (d^{2m}/t)^{1/(2m-1)} otherwise.
        let x = if m == 1 {
            actual_d * actual_d / tau
        } else {
            (actual_d.powi(2 * m as i32) / tau).powf(1.0 / (2.0 * m as f64 - 1.0))
        };
        xs.push(x);
        ds.push(actual_d);
        ln_norms.push(est.value.ln());
        result.curve(actual_d, "offdiag_norm", est.value);
    }
    if xs.len() < 4 {
        return Err(Error::UnresolvedConfig(
            "off-diagonal sweep collected too few points".into(),
        ));
    }
    result.criterion(Criterion::le(
        "monotone_decay_defect",
        monotone_defect,
        0.05,
    ));

    let (slope, intercept) = linear_fit(&xs, &ln_norms);
    result.metric("fitted_slope", slope);
    result.metric("fitted_intercept", intercept);
    if m == 1 {
        // Gaussian: log norm ~ -d^2/(4t).
        let rel = (slope + 0.25).abs() / 0.25;
        result.metric("heat_slope_rel_err", rel);
        result.criterion(Criterion::le(
            "heat_slope_rel_err",
            rel,
            cfg.tolerance("slope", 0.15),
        ));
    } else {
        result.criterion(Criterion::le("stretched_slope_negative", slope, -1e-6));
        // d-exponent: regress ln(-ln N - b) on ln d, expected 2m/(2m-1).
        let ls: Vec<f64> = ln_norms
            .iter()
            .map(|&ln_n| (-(ln_n - intercept.min(0.0))).max(1e-12))
            .collect();
        let lx: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = ls.iter().map(|l| l.ln()).collect();
        let (expo, _) = linear_fit(&lx, &ly);
        let expect = 2.0 * m as f64 / (2.0 * m as f64 - 1.0);
        let rel = (expo - expect).abs() / expect;
        result.metric("fitted_d_exponent", expo);
        result.metric("d_exponent_rel_err", rel);
        result.criterion(Criterion::le(
            "d_exponent_rel_err",
            rel,
            cfg.tolerance("exponent", 0.15),
        ));
    }
    Ok(result)
}

/// Conservation of polynomials of degree < m: constants must be bitwise
/// fixed points; the windowed coordinate function under m = 2 rough
/// coefficients must be conserved on the interior up to a truncation
/// error that at least halves per box doubling.
pub fn run_conservation(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new(cfg);
    let spec = CoeffSpec::parse(&cfg.coeffs)?;
    let t_final = cfg.t_final;

    // Constants under the configured coefficients on the base grid.
    {
        let grid = cfg.build_grid()?;
        let coeffs = spec.build(grid, cfg.m, cfg.components, t_final)?;
        let prop = Propagator::new(coeffs, cfg.solver)?;
        let ones = Field::constant(grid, cfg.components, Complex64::new(1.0, 0.0));
        let traj = prop.propagate(0.0, t_final, &ones)?;
        let mut max_dev: f64 = 0.0;
        for s in traj.slices() {
            for z in s.values() {
                max_dev = max_dev.max((z - Complex64::new(1.0, 0.0)).norm());
            }
        }
        result.metric("constant_max_deviation", max_dev);
        result.criterion(Criterion::le("constants_exact", max_dev, 0.0));
    }

    if cfg.m >= 2 {
        // Windowed P(x) = x - c under rough coefficients across box doublings.
        let mut errors = Vec::new();
        for j in 0..3usize {
            let points = cfg.grid.points << j;
            let length = cfg.grid.box_length * (1u64 << j) as f64;
            let grid = make_grid(cfg.grid.n, points, length)?;
            let coeffs = spec.build(grid, cfg.m, cfg.components, t_final)?;
            let prop = Propagator::new(coeffs, cfg.solver)?;
            let f = data::windowed_linear(&grid);
            let u = prop.propagate_final(0.0, t_final, &f)?;
            // interior sup-error on |x - c| <= L/8
            let c = grid.center();
            let mut sup: f64 = 0.0;
            for i in 0..grid.total_points() {
                let x = grid.coords(i);
                let d = grid.periodic_delta(x[0], c[0]);
                let within = match grid.dim() {
                    1 => d.abs() <= length / 8.0,
                    _ => grid.periodic_distance(&x[..grid.dim()], &c[..grid.dim()]) <= length / 8.0,
                };
                if within {
                    sup = sup.max((u.at(0, i) - Complex64::new(d, 0.0)).norm());
                }
            }
            errors.push(sup);
            result.curve(length, "interior_sup_error", sup);
            result.metric(&format!("interior_error_L{j}"), sup);
        }
        result.criterion(Criterion::le(
            "interior_error_largest_box",
            *errors.last().unwrap(),
            cfg.tolerance("interior_error", 1e-3),
        ));
        for j in 1..errors.len() {
            result.criterion(Criterion::le(
                &format!("error_halving_{j}"),
                errors[j] / errors[j - 1].max(1e-300),
                0.5,
            ));
        }
    } else {
        // Contrast run (recorded, not asserted): x is not in P_{m-1} for
        // m = 1, so rough coefficients drift it.
        let grid = cfg.build_grid()?;
        let coeffs = spec.build(grid, cfg.m, cfg.components, t_final)?;
        let prop = Propagator::new(coeffs, cfg.solver)?;
        let f = data::windowed_linear(&grid);
        let u = prop.propagate_final(0.0, t_final, &f)?;
        let c = grid.center();
        let mut sup: f64 = 0.0;
        for i in 0..grid.total_points() {
            let x = grid.coords(i);
            let d = grid.periodic_delta(x[0], c[0]);
            if d.abs() <= grid.box_length() / 8.0 {
                sup = sup.max((u.at(0, i) - Complex64::new(d, 0.0)).norm());
            }
        }
        result.metric("linear_drift_m1", sup);
    }
    Ok(result)
}

/// Duhamel representation against the time stepper.
pub fn run_duhamel_crosscheck(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new(cfg);
    let grid = cfg.build_grid()?;
    let base = crate::coeffs::polyharmonic(grid, cfg.m, cfg.components)?;
    let lambda = base.lambda;
    let sg = Semigroup::new(base.clone())?;
    let t = cfg.t_final;
    let f = data::band_limited(&grid, cfg.seed, grid.points_per_axis() / 16);

    // eps = 0: the Picard series collapses to the semigroup.
    {
        let prop = Propagator::new(base.clone(), cfg.solver)?;
        let res = duhamel_picard(&sg, &prop, &f, t, 4)?;
        let exact = sg.apply(t, &f)?;
        let rel = lp_norm(&res.value.sub(&exact), 2.0) / lp_norm(&exact, 2.0).max(1e-300);
        result.metric("eps0_rel_diff_vs_semigroup", rel);
        result.criterion(Criterion::le(
            "eps0_rel_diff_vs_semigroup",
            rel,
            10.0 * cfg.solver.tol_lin,
        ));
        // Stepper distance at eps = 0 is the time-discretization error.
        let stepped = prop.propagate_final(0.0, t, &f)?;
        result.metric(
            "eps0_stepper_rel_diff",
            lp_norm(&res.value.sub(&stepped), 2.0) / lp_norm(&stepped, 2.0).max(1e-300),
        );
    }

    // eps = 0.1 lambda: J = 8 Picard iterations against the stepper.
    {
        let eps = 0.1 * lambda;
        let pert = crate::coeffs::make_perturbation(&base, eps, cfg.seed)?;
        let prop = Propagator::new(pert, cfg.solver)?;
        let res = duhamel_picard(&sg, &prop, &f, t, 8)?;
        let stepped = prop.propagate_final(0.0, t, &f)?;
        let rel = lp_norm(&res.value.sub(&stepped), 2.0) / lp_norm(&stepped, 2.0).max(1e-300);
        result.metric("eps01_rel_diff_vs_stepper", rel);
        result.criterion(Criterion::le(
            "eps01_rel_diff_vs_stepper",
            rel,
            cfg.tolerance("duhamel", 1e-3),
        ));
        for (j, fac) in res.contraction_factors.iter().enumerate() {
            result.curve(j as f64, "contraction_factor", *fac);
        }
        if let Some(last) = res.contraction_factors.last() {
            result.metric("eps01_last_contraction_factor", *last);
            result.criterion(Criterion::le("eps01_contraction_below_one", *last, 1.0));
        }
    }

    // eps = 0.5 lambda: slower contraction, convergent or flagged.
    {
        let eps = 0.5 * lambda;
        let pert = crate::coeffs::make_perturbation(&base, eps, cfg.seed)?;
        let prop = Propagator::new(pert, cfg.solver)?;
        // Recorded, not asserted: the guarded iteration either makes
        // progress or raises the divergence flag.
        match duhamel_picard(&sg, &prop, &f, t, 8) {
            Ok(res) => {
                let last = res.contraction_factors.last().copied().unwrap_or(0.0);
                result.metric("eps05_last_contraction_factor", last);
                result.metric("eps05_flagged_divergent", 0.0);
            }
            Err(Error::PicardDivergence { factor }) => {
                result.metric("eps05_flagged_divergent", 1.0);
                result.metric("eps05_last_contraction_factor", factor);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(result)
}

/// Lower-bound probe of sup ||Gamma(t,s)||_{L^p -> L^p} over sampled time
/// pairs via random data maximization. For p = 2 this must stay below
/// 1 + solver tolerance (contraction); for the heat preset below
/// 1 + quadrature tolerance for every p (positive unit-mass kernel).
pub fn run_ubc_probe(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new(cfg);
    let coeffs = cfg.build_coeffs()?;
    let heat_like = coeffs.constant_in_space && coeffs.autonomous;
    let prop = Propagator::new(coeffs, cfg.solver)?;
    let grid = prop.grid();
    let t = cfg.t_final;
    let pairs = [
        (0.0, t / 8.0),
        (0.0, t / 2.0),
        (t / 4.0, t / 4.0 + t / 8.0),
        (t / 4.0, t / 4.0 + t / 2.0),
    ];
    let nprobe = cfg.samples.max(2);

    for &p in &cfg.p_list {
        let mut max_ratio: f64 = 0.0;
        let mut per_pair = Vec::new();
        for (idx, &(s, tt)) in pairs.iter().enumerate() {
            let mut pair_max: f64 = 0.0;
            for probe in 0..nprobe {
                let f = if probe % 2 == 0 {
                    data::band_limited(
                        &grid,
                        cfg.seed.wrapping_add(probe as u64),
                        grid.points_per_axis() / 8,
                    )
                } else {
                    data::windowed_bump(
                        &grid,
                        0.4 + 0.2 * (probe % 3) as f64,
                        (probe as f64) * 0.7 - 1.4,
                    )
                };
                let denom = lp_norm(&f, p);
                if denom == 0.0 {
                    continue;
                }
                let u = prop.propagate_final(s, tt, &f)?;
                let ratio = lp_norm(&u, p) / denom;
                pair_max = pair_max.max(ratio);
            }
            per_pair.push(pair_max);
            result.curve(idx as f64, &format!("op_norm_probe_p{p}"), pair_max);
            max_ratio = max_ratio.max(pair_max);
        }
        result.metric(&format!("max_ratio_p{p}"), max_ratio);
        let spread = per_pair.iter().cloned().fold(0.0f64, f64::max)
            / per_pair
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
                .max(1e-300);
        result.metric(&format!("time_spread_p{p}"), spread);
        if (p - 2.0).abs() < 1e-12 {
            result.criterion(Criterion::le(
                &format!("contraction_p{p}"),
                max_ratio,
                1.0 + 10.0 * cfg.solver.tol_lin,
            ));
        } else if heat_like {
            result.criterion(Criterion::le(
                &format!("heat_young_p{p}"),
                max_ratio,
                1.0 + cfg.tolerance("quadrature", 1e-6),
            ));
        } else {
            // Lower-bound estimator: only finiteness is asserted.
            result.criterion(Criterion::le(&format!("finite_p{p}"), max_ratio, 1e6));
        }
    }
    Ok(result)
}
