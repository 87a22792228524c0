//! File emission: the run log as CSV and the per-figure plot data files.
//!
//! Floats are written in Rust's shortest round-trip form, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use crate::runner::RunLog;

const BASE_HEADER: &str = "t_h,x_e_C,u_raw_C_per_h,u_applied_C_per_h,x_ref_C,x_p_C,\
y_kWC,y_d_kWC,e_kWC,power_norm,power_ref_norm,n_agg_loads,l1_w_loads,l1_v_loads,gamma_kWC_per_h";

fn push_float(buf: &mut String, x: f64) {
    // shortest round-trip decimal form
    write!(buf, "{x:?}").expect("formatting into a String cannot fail");
}

/// Render the log as an RFC-4180-style CSV (header plus one row per sample).
pub fn render_csv(log: &RunLog) -> String {
    let mut out = String::new();
    out.push_str(BASE_HEADER);
    if log.has_model_power() {
        out.push_str(",power_model_norm");
    }
    out.push_str("\r\n");
    for row in &log.rows {
        let fields = [
            row.t,
            row.x_e,
            row.u_raw,
            row.u_applied,
            row.x_ref,
            row.x_p,
            row.y,
            row.y_d,
            row.e,
            row.power,
            row.power_ref,
            row.n_agg,
            row.l1_w,
            row.l1_v,
            row.gamma,
        ];
        for (i, &x) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_float(&mut out, x);
        }
        if log.has_model_power() {
            out.push(',');
            push_float(&mut out, row.power_model);
        }
        out.push_str("\r\n");
    }
    out
}

/// Write the CSV to `path`.
pub fn emit_csv(log: &RunLog, path: &Path) -> Result<()> {
    fs::write(path, render_csv(log)).with_context(|| format!("writing {}", path.display()))
}

fn write_columns(path: &Path, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(header);
    out.push('\n');
    for cols in rows {
        for (i, &x) in cols.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            push_float(&mut out, x);
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Emit the columnar data files behind the standard run figures plus a
/// gnuplot script referencing them: ambient temperature, set-point vs
/// reconstructed reference, sampled load temperatures (population modes
/// only) and aggregate power.
pub fn emit_plotdata(log: &RunLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    write_columns(
        &dir.join("ambient.dat"),
        "t_h x_e_C",
        log.rows.iter().map(|r| vec![r.t, r.x_e]),
    )?;
    write_columns(
        &dir.join("references.dat"),
        "t_h x_p_C x_ref_C",
        log.rows.iter().map(|r| vec![r.t, r.x_p, r.x_ref]),
    )?;
    let power_header = if log.has_model_power() {
        "t_h power_norm power_ref_norm power_model_norm"
    } else {
        "t_h power_norm power_ref_norm"
    };
    write_columns(
        &dir.join("power.dat"),
        power_header,
        log.rows.iter().map(|r| {
            if log.has_model_power() {
                vec![r.t, r.power, r.power_ref, r.power_model]
            } else {
                vec![r.t, r.power, r.power_ref]
            }
        }),
    )?;
    if log.has_temperature_samples() {
        write_columns(
            &dir.join("temperatures.dat"),
            "t_h followed by one column per sampled load",
            log.rows.iter().zip(log.temperature_samples.iter()).map(
                |(r, temps)| {
                    let mut cols = Vec::with_capacity(temps.len() + 1);
                    cols.push(r.t);
                    cols.extend_from_slice(temps);
                    cols
                },
            ),
        )?;
    }

    let mut script = String::new();
    script.push_str("# gnuplot script for the emitted run data\n");
    script.push_str("set xlabel 'time [h]'\n\n");
    script.push_str("set terminal pngcairo size 900,540\n\n");
    script.push_str("set output 'ambient.png'\n");
    script.push_str("plot 'ambient.dat' using 1:2 with lines title 'ambient [C]'\n\n");
    script.push_str("set output 'references.png'\n");
    script.push_str(
        "plot 'references.dat' using 1:2 with lines title 'set-point x_p', \\\n     '' using 1:3 with lines title 'reconstructed x_ref'\n\n",
    );
    script.push_str("set output 'power.png'\n");
    if log.has_model_power() {
        script.push_str(
            "plot 'power.dat' using 1:2 with lines title 'population power', \\\n     '' using 1:3 with lines title 'reference', \\\n     '' using 1:4 with lines title 'field model'\n\n",
        );
    } else {
        script.push_str(
            "plot 'power.dat' using 1:2 with lines title 'aggregate power', \\\n     '' using 1:3 with lines title 'reference'\n\n",
        );
    }
    if log.has_temperature_samples() {
        script.push_str("set output 'temperatures.png'\n");
        script.push_str(&format!(
            "plot for [k=2:{}] 'temperatures.dat' using 1:k with lines notitle\n",
            log.sample_ids.len() + 1
        ));
    } else {
        script.push_str("# field-only run: no sampled load temperatures were recorded\n");
    }
    fs::write(dir.join("plot.gp"), script).context("writing plot.gp")?;
    Ok(())
}
