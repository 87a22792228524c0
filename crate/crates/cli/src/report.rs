//! Post-hoc invariant checks over an emitted run CSV, rendered as a
//! machine-readable `name = pass|fail|skipped` report.

use std::collections::HashMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};

use tclsim_core::diagnostics::{l1_bounds, verify_error_bound, L1Sample};

use crate::runner::RunResult;
use crate::scenario::Scenario;

/// Parsed numeric columns of a run CSV.
pub struct ParsedLog {
    pub columns: HashMap<String, Vec<f64>>,
    pub n_rows: usize,
}

impl ParsedLog {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| anyhow!("column '{name}' missing from the log"))
    }
}

/// Parse the CSV emitted by this tool (plain numeric fields, no quoting).
pub fn parse_csv(text: &str) -> Result<ParsedLog> {
    let mut lines = text.lines();
    let header = lines.next().context("empty log file")?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns: HashMap<String, Vec<f64>> =
        names.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut n_rows = 0;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            bail!(
                "row {} has {} fields, header has {}",
                lineno + 2,
                fields.len(),
                names.len()
            );
        }
        for (name, field) in names.iter().zip(fields) {
            let value: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("row {}, column {name}", lineno + 2))?;
            columns.get_mut(name).unwrap().push(value);
        }
        n_rows += 1;
    }
    Ok(ParsedLog { columns, n_rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The invariant's premise does not apply to this run.
    Skipped,
}

/// One named report line.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    fn passed(name: &'static str, pass: bool, detail: String) -> Self {
        Self {
            name,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail,
        }
    }
}

/// Run the log-level invariant checks. The scenario supplies the controller
/// gain and disturbance envelopes.
pub fn check_log(log: &ParsedLog, scenario: &Scenario) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let t = log.column("t_h")?;

    let monotone = t.windows(2).all(|w| w[1] > w[0]);
    checks.push(Check::passed(
        "time_monotone",
        monotone,
        format!("{} rows", log.n_rows),
    ));

    let all_finite = log
        .columns
        .values()
        .all(|col| col.iter().all(|x| x.is_finite()));
    checks.push(Check::passed("rows_finite", all_finite, String::new()));

    let n_agg = log.column("n_agg_loads")?;
    let n0 = n_agg.first().copied().unwrap_or(0.0);
    let max_rel = n_agg
        .iter()
        .map(|&n| (n - n0).abs() / n0.abs().max(1.0))
        .fold(0.0f64, f64::max);
    checks.push(Check::passed(
        "population_conserved",
        max_rel <= 1e-10,
        format!("max relative drift {max_rel:.3e}"),
    ));

    // the regulation-error envelope describes the raw law; it is checkable
    // only when neither the set-point servo nor the slew limits intervened
    let u_raw = log.column("u_raw_C_per_h")?;
    let raw_law = scenario.controller.anchor_gain == 0.0
        && u_raw
            .iter()
            .all(|&u| u >= scenario.controller.u_min && u <= scenario.controller.u_max);
    if raw_law {
        let e = log.column("e_kWC")?;
        let gamma = log.column("gamma_kWC_per_h")?;
        let e_scale = e.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        // envelope allowance: the discrete loop reproduces the error
        // dynamics to about 1% (grid and hold effects)
        let report = verify_error_bound(t, e, gamma, scenario.controller.k0, 0.01 * e_scale);
        checks.push(Check::passed(
            "error_within_bound",
            report.max_bound_excess <= 0.0,
            format!(
                "gamma_inf {:.4e}, max excess {:.4e} (1% fidelity allowance)",
                report.gamma_inf, report.max_bound_excess
            ),
        ));
    } else {
        checks.push(Check {
            name: "error_within_bound",
            verdict: Verdict::Skipped,
            detail: "set-point servo or slew limit active".into(),
        });
    }

    let l1w = log.column("l1_w_loads")?;
    let l1v = log.column("l1_v_loads")?;
    let history: Vec<L1Sample> = t
        .iter()
        .zip(l1w.iter().zip(l1v.iter()))
        .map(|(&t, (&w, &v))| L1Sample {
            t,
            w_norm: w,
            v_norm: v,
        })
        .collect();
    let (m, m_prime) = scenario.disturbance_envelopes();
    let l1 = l1_bounds(
        &history,
        l1w.first().copied().unwrap_or(0.0),
        l1v.first().copied().unwrap_or(0.0),
        m,
        m_prime,
    );
    checks.push(Check::passed(
        "l1_within_bound",
        l1.pass,
        format!(
            "max excess w {:.3e}, v {:.3e}",
            l1.max_excess_w, l1.max_excess_v
        ),
    ));

    Ok(checks)
}

/// Checks derived from a fresh in-process run.
pub fn run_checks(result: &RunResult) -> Vec<Check> {
    let mut checks = Vec::new();
    if let Some(report) = &result.conservation {
        let worst = report
            .on_residual
            .abs()
            .max(report.off_residual.abs())
            .max(report.total_residual.abs());
        checks.push(Check::passed(
            "mass_conservation",
            worst <= 1e-10,
            format!("worst residual {worst:.3e}"),
        ));
    }
    checks.push(Check::passed(
        "l1_within_bound",
        result.l1.pass,
        format!(
            "max excess w {:.3e}, v {:.3e} (M {:.3e}, M' {:.3e})",
            result.l1.max_excess_w, result.l1.max_excess_v, result.m_bound, result.m_prime_bound
        ),
    ));
    if let Some(excess) = result.containment_excess {
        checks.push(Check::passed(
            "deadband_containment",
            excess <= 0.0,
            format!("max excess {excess:.3e} degC"),
        ));
    }
    checks
}

/// Render the checks as `name = pass|fail|skipped` lines.
pub fn render_report(checks: &[Check]) -> String {
    let mut out = String::new();
    for check in checks {
        let verdict = match check.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
        };
        if check.detail.is_empty() {
            writeln!(out, "{} = {}", check.name, verdict).unwrap();
        } else {
            writeln!(out, "{} = {}  # {}", check.name, verdict, check.detail).unwrap();
        }
    }
    out
}

/// First failing check, if any.
pub fn first_failure(checks: &[Check]) -> Option<&Check> {
    checks.iter().find(|c| c.verdict == Verdict::Fail)
}
