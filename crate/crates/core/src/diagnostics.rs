//! Post-hoc verification of the conservation identities, L1 stability
//! bounds, the disturbance aggregate Gamma and the regulation-error bound.
//!
//! Everything here is a pure function of logged histories; nothing feeds
//! back into the control loop.

use alloc::vec::Vec;

use libm::exp;

use crate::control::error_bound;
use crate::fpe::{denormalize, DistributionField, StepBudget};
use crate::population::Deadband;

/// Running account of the boundary and in-domain switching mass, kept in the
/// exact per-step quantities the solver applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationLedger {
    pub initial_on: f64,
    pub initial_off: f64,
    /// Accumulated in-domain exchange, loads (signed).
    pub cum_delta: f64,
    /// Accumulated boundary fluxes, loads (signed).
    pub cum_sigma_upper: f64,
    pub cum_sigma_lower: f64,
    /// Accumulated absolute values; valid envelopes for the stability bound.
    pub cum_abs_delta: f64,
    pub cum_abs_sigma_upper: f64,
    pub cum_abs_sigma_lower: f64,
}

impl ConservationLedger {
    pub fn new(initial: &DistributionField) -> Self {
        Self {
            initial_on: initial.on_mass(),
            initial_off: initial.off_mass(),
            cum_delta: 0.0,
            cum_sigma_upper: 0.0,
            cum_sigma_lower: 0.0,
            cum_abs_delta: 0.0,
            cum_abs_sigma_upper: 0.0,
            cum_abs_sigma_lower: 0.0,
        }
    }

    pub fn record(&mut self, budget: &StepBudget) {
        self.cum_delta += budget.dt * budget.delta_mass_rate;
        self.cum_sigma_upper += budget.dt * budget.sigma_upper;
        self.cum_sigma_lower += budget.dt * budget.sigma_lower;
        self.cum_abs_delta += budget.dt * budget.delta_mass_rate.abs();
        self.cum_abs_sigma_upper += budget.dt * budget.sigma_upper.abs();
        self.cum_abs_sigma_lower += budget.dt * budget.sigma_lower.abs();
    }

    pub fn initial_total(&self) -> f64 {
        self.initial_on + self.initial_off
    }
}

/// Residuals of the species and total mass balances, relative to the initial
/// population size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    pub on_residual: f64,
    pub off_residual: f64,
    pub total_residual: f64,
}

/// Compare the field's masses against the ledger's bookkeeping:
///
///   on mass  = initial + cum_delta + (cum_sigma_upper - cum_sigma_lower)
///   off mass = initial - cum_delta - (cum_sigma_upper - cum_sigma_lower)
pub fn check_conservation(
    ledger: &ConservationLedger,
    field: &DistributionField,
) -> ConservationReport {
    let scale = ledger.initial_total().abs().max(1.0);
    let boundary = ledger.cum_sigma_upper - ledger.cum_sigma_lower;
    let expected_on = ledger.initial_on + ledger.cum_delta + boundary;
    let expected_off = ledger.initial_off - ledger.cum_delta - boundary;
    ConservationReport {
        on_residual: (field.on_mass() - expected_on) / scale,
        off_residual: (field.off_mass() - expected_off) / scale,
        total_residual: (field.total_mass() - ledger.initial_total()) / scale,
    }
}

/// One logged L1 sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Sample {
    pub t: f64,
    pub w_norm: f64,
    pub v_norm: f64,
}

/// Outcome of the L1 stability check against the disturbance envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Report {
    /// Largest amount by which a sample exceeded its bound (<= 0 means pass).
    pub max_excess_w: f64,
    pub max_excess_v: f64,
    pub pass: bool,
}

/// Verify ||w(.,t)||_1 <= ||w0||_1 + 2M + 2M' pointwise over the history,
/// where M bounds the in-domain exchange mass over any subset and M' the
/// boundary flux mass over any interval.
pub fn l1_bounds(
    history: &[L1Sample],
    initial_w_norm: f64,
    initial_v_norm: f64,
    m_bound: f64,
    m_prime_bound: f64,
) -> L1Report {
    let slack = 2.0 * m_bound + 2.0 * m_prime_bound;
    let scale = (initial_w_norm + initial_v_norm).abs().max(1.0);
    let tol = 1e-10 * scale;
    let mut max_w = f64::MIN;
    let mut max_v = f64::MIN;
    for s in history {
        max_w = max_w.max(s.w_norm - (initial_w_norm + slack));
        max_v = max_v.max(s.v_norm - (initial_v_norm + slack));
    }
    L1Report {
        max_excess_w: max_w,
        max_excess_v: max_v,
        pass: max_w <= tol && max_v <= tol,
    }
}

/// Disturbance aggregate entering the error dynamics:
///
///   Gamma = (P/eta) [ (a x_upper + b) sigma_upper - (a x_lower + b) sigma_lower
///                     + integral (a x + b) delta dx ]
///
/// with `delta` the per-cell exchange source on the field grid.
#[allow(clippy::too_many_arguments)]
pub fn compute_gamma(
    field: &DistributionField,
    band: &Deadband,
    a: f64,
    b: f64,
    p_over_eta: f64,
    delta: &[f64],
    sigma_upper: f64,
    sigma_lower: f64,
) -> f64 {
    let mut interior = 0.0;
    if !delta.is_empty() {
        debug_assert_eq!(delta.len(), field.n_cells());
        for (i, &d) in delta.iter().enumerate() {
            let x = denormalize(field.cell_center(i), band);
            interior += (a * x + b) * d;
        }
        interior *= field.dz();
    }
    p_over_eta
        * ((a * band.upper + b) * sigma_upper - (a * band.lower + b) * sigma_lower + interior)
}

/// Outcome of the regulation-error bound verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundReport {
    pub gamma_inf: f64,
    /// Largest pointwise excess of |e| over the decay envelope (<= 0 passes).
    pub max_bound_excess: f64,
    /// Largest relative deviation between the logged error and the
    /// convolution closed form.
    pub max_convolution_rel_err: f64,
    pub pass: bool,
}

/// Check the logged error history against the decay envelope: pointwise
/// |e(t)| <= |e(0)| exp(-k0 t) + (Gamma_inf / k0)(1 - exp(-k0 t)) + quad_tol,
/// and cross-check e(t) against the convolution closed form evaluated by
/// trapezoid quadrature on the logged Gamma samples.
pub fn verify_error_bound(
    times: &[f64],
    errors: &[f64],
    gammas: &[f64],
    k0: f64,
    quad_tol: f64,
) -> ErrorBoundReport {
    debug_assert_eq!(times.len(), errors.len());
    debug_assert_eq!(times.len(), gammas.len());
    if times.is_empty() {
        return ErrorBoundReport {
            gamma_inf: 0.0,
            max_bound_excess: 0.0,
            max_convolution_rel_err: 0.0,
            pass: true,
        };
    }
    let e0 = errors[0];
    let t0 = times[0];
    let gamma_inf = gammas.iter().fold(0.0f64, |m, g| m.max(g.abs()));

    let mut max_excess = f64::MIN;
    // trapezoid accumulation of I(t) = integral exp(k0 s) Gamma(s) ds, so
    // e_cf(t) = exp(-k0 (t - t0)) (e0 + I(t))
    let mut integral = 0.0;
    let mut max_rel = 0.0f64;
    let e_scale = errors.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(1e-300);
    for i in 0..times.len() {
        let t = times[i] - t0;
        let envelope = error_bound(e0.abs(), k0, gamma_inf, t) + quad_tol;
        max_excess = max_excess.max(errors[i].abs() - envelope);
        if i > 0 {
            let dt = times[i] - times[i - 1];
            integral += 0.5
                * dt
                * (exp(k0 * (times[i - 1] - t0)) * gammas[i - 1] + exp(k0 * t) * gammas[i]);
        }
        let e_cf = exp(-k0 * t) * (e0 + integral);
        max_rel = max_rel.max((errors[i] - e_cf).abs() / e_scale);
    }
    ErrorBoundReport {
        gamma_inf,
        max_bound_excess: max_excess,
        max_convolution_rel_err: max_rel,
        pass: max_excess <= 0.0 && max_rel <= 0.01,
    }
}

/// RK4 integration of de/dt = -k0 e + Gamma(t); reference path for the
/// closed-form cross-checks.
pub fn integrate_error_ode<F: Fn(f64) -> f64>(
    e0: f64,
    k0: f64,
    gamma: F,
    t_end: f64,
    n_steps: usize,
) -> Vec<(f64, f64)> {
    let h = t_end / n_steps as f64;
    let f = |t: f64, e: f64| -k0 * e + gamma(t);
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut e = e0;
    out.push((0.0, e));
    for k in 0..n_steps {
        let t = k as f64 * h;
        let k1 = f(t, e);
        let k2 = f(t + h / 2.0, e + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, e + h / 2.0 * k2);
        let k4 = f(t + h, e + h * k3);
        e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(((k + 1) as f64 * h, e));
    }
    out
}
