//! Global energy identity and the discrete energy chain.
//!
//! For the theta = 1 step the identity
//!   ||u_k||^2 - ||u_{k+1}||^2 = ||u_{k+1} - u_k||^2
//!                               + 2 dt Re <A(t_{k+1}) grad^m u_{k+1}, grad^m u_{k+1}>
//! holds exactly up to the linear-solve residual, and the two-sided
//! ellipticity bound on the quadratic form turns it into the discrete
//! analogue of the chain
//!   ||u_0|| = ||u||_{L^inf(L^2)} <= sqrt(2 Lambda) ||grad^m u||_{L^2(L^2)}
//!           <= sqrt(Lambda/lambda) ||u_0||,
//! which is asserted at every solver step with no tolerance beyond the
//! solver's. The heat preset (lambda = Lambda = 1) additionally checks
//! the equality form within 2%.

use crate::error::Result;
use crate::grid::lp_norm;
use crate::linalg::hermitian_eigenvalues;
use crate::propagator::Propagator;

use super::{data, Criterion, ExperimentConfig, ExperimentResult};

/// Sharp two-sided bounds on the quadratic form: extreme eigenvalues of
/// the Hermitian parts over all (piece, cell).
fn form_bounds(coeffs: &crate::coeffs::CoefficientField) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for piece in 0..coeffs.pieces() {
        for cell in 0..coeffs.grid().total_points() {
            let eig = hermitian_eigenvalues(&coeffs.matrix_at_piece(piece, cell).hermitian_part());
            lo = lo.min(eig[0]);
            hi = hi.max(eig[eig.len() - 1]);
            if coeffs.constant_in_space {
                break;
            }
        }
    }
    (lo, hi)
}

pub fn run_energy_identity(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new(cfg);
    let grid = cfg.build_grid()?;
    let coeffs = cfg.build_coeffs()?;
    let is_heat_like = coeffs.constant_in_space && (coeffs.upper - coeffs.lambda).abs() < 1e-12;
    let (lambda_form, upper_form) = form_bounds(&coeffs);
    let prop = Propagator::new(coeffs, cfg.solver)?;
    let dt = cfg.solver.dt;
    let steps = (cfg.t_final / dt).round() as usize;
    let slack = 10.0 * cfg.solver.tol_lin;

    let mut f = data::gaussian(&grid, 1.0, 1.0);
    data::remove_mean(&mut f);
    let n0 = lp_norm(&f, 2.0);
    let n0_sq = n0 * n0;
    result.metric("initial_l2", n0);

    let mut u = f;
    let mut prev_norm = n0;
    let mut dissipated_form = 0.0; // sum 2 dt Re<A grad u, grad u>
    let mut grad_mass = 0.0; // sum dt ||grad^m u||^2
    let mut jump_mass = 0.0; // sum ||u_{k+1} - u_k||^2
    let mut worst_monotone: f64 = 0.0;
    let mut worst_upper: f64 = f64::NEG_INFINITY;
    let mut worst_lower: f64 = f64::NEG_INFINITY;

    for k in 0..steps {
        let t = k as f64 * dt;
        let next = prop.step(&u, t)?;
        let n_next = lp_norm(&next, 2.0);
        let (form, gsq) = prop.energy_form(t + dt, &next)?;
        let jump = lp_norm(&next.sub(&u), 2.0).powi(2);
        dissipated_form += 2.0 * dt * form;
        grad_mass += dt * gsq;
        jump_mass += jump;
        // (a) monotone L^2 norm
        worst_monotone = worst_monotone.max(n_next / prev_norm - 1.0);
        // (b) ||u_0||^2 <= 2 Lambda_form sum dt ||grad u||^2 + jumps + ||u_k||^2
        let upper_defect =
            (n0_sq - 2.0 * upper_form * grad_mass - jump_mass - n_next * n_next) / n0_sq;
        worst_upper = worst_upper.max(upper_defect);
        // (c) 2 lambda_form sum dt ||grad u||^2 <= ||u_0||^2 - ||u_k||^2
        let lower_defect = (2.0 * lambda_form * grad_mass - (n0_sq - n_next * n_next)) / n0_sq;
        worst_lower = worst_lower.max(lower_defect);
        if k % 50 == 0 || k + 1 == steps {
            result.curve(t + dt, "l2_norm", n_next);
            result.curve(t + dt, "grad_mass", grad_mass);
        }
        prev_norm = n_next;
        u = next;
    }
    let n_final = prev_norm;
    result.metric("final_l2", n_final);
    result.metric("grad_l2l2_sq", grad_mass);
    result.metric("jump_mass", jump_mass);
    result.metric("dissipated_form", dissipated_form);
    result.metric("lambda_form", lambda_form);
    result.metric("upper_form", upper_form);

    // Continuum-style chain ratios, reported.
    let chain_mid = (2.0 * upper_form * grad_mass).sqrt();
    result.metric("chain_ratio_mid_over_initial", chain_mid / n0);
    result.metric(
        "chain_ratio_final_bound",
        (upper_form / lambda_form).sqrt() * n0 / chain_mid.max(1e-300),
    );

    result.criterion(Criterion::le("monotone_l2_defect", worst_monotone, slack));
    result.criterion(Criterion::le("chain_upper_defect", worst_upper, slack));
    result.criterion(Criterion::le("chain_lower_defect", worst_lower, slack));

    if is_heat_like {
        // ||u_0||^2 - ||u_T||^2 = 2 ||grad u||^2_{L^2(L^2)} within 2%.
        let lhs = n0_sq - n_final * n_final;
        let rel = (lhs - 2.0 * grad_mass).abs() / lhs.max(1e-300);
        result.metric("energy_identity_rel_err", rel);
        result.criterion(Criterion::le(
            "energy_identity_rel_err",
            rel,
            cfg.tolerance("energy_identity", 0.02),
        ));
    }
    Ok(result)
}
