//! CSV and JSON artifacts of a run.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::sim::{ConditionReport, Metrics, Record, SimLog};

/// Version of the CSV column layout and of the summary document.
pub const OUTPUT_SCHEMA: u32 = 1;

const GLOBAL_COLUMNS: [&str; 18] = [
    "t",
    "theta",
    "theta_dot",
    "s_dot",
    "gamma_p",
    "kappa",
    "x_pb",
    "y_pb",
    "chi_bd",
    "guidance_speed",
    "delta",
    "ca_sigma",
    "ca_active",
    "sigma_f_err_x",
    "sigma_f_err_y",
    "lyapunov_v",
    "g1",
    "theta_clamped",
];

const VESSEL_COLUMNS: [&str; 19] = [
    "x",
    "y",
    "psi",
    "u",
    "v",
    "r",
    "u_d",
    "u_d_dot",
    "psi_d",
    "r_d",
    "r_d_truth",
    "psi_d_ddot",
    "tau_u",
    "tau_r",
    "chi",
    "u_d_total",
    "sliding",
    "theta_hat_u_norm",
    "theta_hat_r_norm",
];

/// Column names in output order; vessel columns carry a `_1` / `_2` suffix.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = GLOBAL_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 1..=2 {
        h.extend(VESSEL_COLUMNS.iter().map(|c| format!("{c}_{i}")));
    }
    h
}

fn row_values(r: &Record) -> Vec<f64> {
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    let mut v = vec![
        r.t,
        r.theta,
        r.theta_dot,
        r.s_dot,
        r.gamma_p,
        r.kappa,
        r.x_pb,
        r.y_pb,
        r.chi_bd,
        r.guidance_speed,
        r.delta,
        r.ca_sigma,
        b(r.ca_active),
        r.sigma_f_err_x,
        r.sigma_f_err_y,
        r.lyapunov_v,
        r.g1,
        b(r.theta_clamped),
    ];
    for vr in &r.vessels {
        let (s, d) = (&vr.state, &vr.diag);
        v.extend([
            s.x,
            s.y,
            s.psi,
            s.u,
            s.v,
            s.r,
            d.u_d,
            d.u_d_dot,
            d.psi_d,
            d.r_d,
            d.r_d_truth,
            d.psi_d_ddot,
            d.tau_u,
            d.tau_r,
            d.chi,
            d.u_d_total,
            d.sliding,
            vr.theta_hat_u_norm,
            vr.theta_hat_r_norm,
        ]);
    }
    v
}

/// Nine significant digits, scientific notation.
pub fn format_value(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_csv<W: Write>(log: &SimLog, mut w: W) -> Result<()> {
    writeln!(w, "{}", csv_header().join(","))?;
    for r in &log.records {
        let line: Vec<String> = row_values(r).into_iter().map(format_value).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub schema: u32,
    pub scenario: &'a str,
    pub mode: &'a str,
    pub vdot: &'a str,
    pub steps: usize,
    pub completed: bool,
    pub failure: Option<String>,
    pub conditions: &'a ConditionReport,
    pub metrics: Option<&'a Metrics>,
    /// Limits from the scenario's `expected` block that the run exceeded.
    pub expected_violations: Vec<String>,
}

pub fn write_summary<W: Write>(summary: &Summary<'_>, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    Ok(())
}
