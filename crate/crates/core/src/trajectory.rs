//! Smooth set-point reference trajectories.
//!
//! Step changes are joined by the 9th-order smoothstep
//! q(tau) = tau^5 * (a0 + a1 tau + a2 tau^2 + a3 tau^3 + a4 tau^4), whose
//! first three derivatives vanish at both ends, so the assembled reference
//! is C2 (in fact C3) across every junction.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Coefficients of the minimum-degree polynomial joining two levels with
/// three vanishing derivatives at each end.
pub const SMOOTHSTEP_COEFFS: [f64; 5] = [126.0, -420.0, 540.0, -315.0, 70.0];

/// One smooth transition between two held levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t_start: f64,
    pub t_end: f64,
    pub from: f64,
    pub to: f64,
}

/// Time-ordered schedule of holds and smooth transitions over [0, horizon].
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointSchedule {
    transitions: Vec<Transition>,
    initial: f64,
    horizon: f64,
    coeffs: [f64; 5],
}

/// Value of the reference and its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetpointSample {
    pub value: f64,
    pub rate: f64,
    pub accel: f64,
}

fn shape(coeffs: &[f64; 5], tau: f64) -> (f64, f64, f64) {
    // q, q', q'' in tau; Horner over the l+5 power structure
    let mut q = 0.0;
    let mut dq = 0.0;
    let mut ddq = 0.0;
    for (l, &a) in coeffs.iter().enumerate().rev() {
        let k = (l + 5) as f64;
        q = q * tau + a;
        dq = dq * tau + a * k;
        ddq = ddq * tau + a * k * (k - 1.0);
    }
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    (q * t4 * tau, dq * t4, ddq * t3)
}

fn shape_third_derivative(coeffs: &[f64; 5], tau: f64) -> f64 {
    let mut d3 = 0.0;
    for (l, &a) in coeffs.iter().enumerate().rev() {
        let k = (l + 5) as f64;
        d3 = d3 * tau + a * k * (k - 1.0) * (k - 2.0);
    }
    d3 * tau * tau
}

impl SetpointSchedule {
    /// Build from the initial level and (t_start, t_end, target) moves.
    /// Moves must be time-ordered, non-overlapping and of positive duration.
    pub fn new(initial: f64, horizon: f64, moves: &[(f64, f64, f64)]) -> Result<Self> {
        Self::with_coeffs(initial, horizon, moves, SMOOTHSTEP_COEFFS)
    }

    /// Same, with explicit shape coefficients.
    pub fn with_coeffs(
        initial: f64,
        horizon: f64,
        moves: &[(f64, f64, f64)],
        coeffs: [f64; 5],
    ) -> Result<Self> {
        let mut transitions = Vec::with_capacity(moves.len());
        let mut level = initial;
        let mut cursor = 0.0;
        for (i, &(t_start, t_end, target)) in moves.iter().enumerate() {
            if t_end <= t_start {
                return Err(Error::InvalidSchedule {
                    segment: i,
                    reason: "transition must have positive duration",
                });
            }
            if t_start < cursor {
                return Err(Error::InvalidSchedule {
                    segment: i,
                    reason: "transitions overlap or are out of order",
                });
            }
            if t_end > horizon {
                return Err(Error::InvalidSchedule {
                    segment: i,
                    reason: "transition ends beyond the horizon",
                });
            }
            transitions.push(Transition {
                t_start,
                t_end,
                from: level,
                to: target,
            });
            level = target;
            cursor = t_end;
        }
        Ok(Self {
            transitions,
            initial,
            horizon,
            coeffs,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Reference value, rate and acceleration at time `t`.
    pub fn eval(&self, t: f64) -> Result<SetpointSample> {
        if t < 0.0 || t > self.horizon {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        let mut level = self.initial;
        for seg in &self.transitions {
            if t < seg.t_start {
                break;
            }
            if t >= seg.t_end {
                level = seg.to;
                continue;
            }
            let duration = seg.t_end - seg.t_start;
            let tau = (t - seg.t_start) / duration;
            let (q, dq, ddq) = shape(&self.coeffs, tau);
            let amp = seg.to - seg.from;
            return Ok(SetpointSample {
                value: seg.from + amp * q,
                rate: amp * dq / duration,
                accel: amp * ddq / (duration * duration),
            });
        }
        Ok(SetpointSample {
            value: level,
            rate: 0.0,
            accel: 0.0,
        })
    }

    /// Check that every segment's shape meets the endpoint conditions: value
    /// reaching exactly 0 and 1, and the first three derivatives vanishing at
    /// both ends, all to 1e-10 in the amplitude-normalized shape.
    pub fn verify_endpoint_conditions(&self) -> Result<()> {
        const TOL: f64 = 1e-10;
        for (i, seg) in self.transitions.iter().enumerate() {
            if seg.to == seg.from {
                continue;
            }
            let (q0, dq0, ddq0) = shape(&self.coeffs, 0.0);
            let (q1, dq1, ddq1) = shape(&self.coeffs, 1.0);
            let d3_0 = shape_third_derivative(&self.coeffs, 0.0);
            let d3_1 = shape_third_derivative(&self.coeffs, 1.0);
            let checks = [
                q0.abs(),
                (q1 - 1.0).abs(),
                dq0.abs(),
                dq1.abs(),
                ddq0.abs(),
                ddq1.abs(),
                d3_0.abs(),
                d3_1.abs(),
            ];
            if checks.iter().any(|&c| c > TOL) {
                return Err(Error::InvalidSchedule {
                    segment: i,
                    reason: "endpoint conditions violated",
                });
            }
        }
        Ok(())
    }
}
