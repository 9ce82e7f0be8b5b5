//! Flat run records with CSV and JSON round-trip support.
//!
//! CSV prints floats with 17 significant digits so that parsing recovers the
//! exact binary64 value; JSON goes through serde_json, whose shortest
//! round-trip float encoding is exact as well.

use std::io::Write;

use serde::{Deserialize, Serialize};

use logcap::capacity::SolveReport;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub schema_version: String,
    pub family: String,
    pub q: f64,
    pub k: u32,
    pub m: usize,
    pub radius_factor: f64,
    pub backend: String,
    pub preconditioner_j: Option<usize>,
    pub tol: f64,
    pub c: f64,
    pub capacity: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub true_relative_residual: f64,
    pub converged: bool,
    pub wall_time_s: f64,
    pub m_hat: Option<f64>,
    pub error_bound: Option<f64>,
}

impl RunRecord {
    pub fn from_report(report: &SolveReport, tol: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            family: report.params.family.as_str().to_string(),
            q: report.params.q,
            k: report.params.k,
            m: report.m,
            radius_factor: report.params.radius_factor,
            backend: report.backend.as_str().to_string(),
            preconditioner_j: report.preconditioner_exponent,
            tol,
            c: report.c,
            capacity: report.capacity,
            iterations: report.iterations,
            relative_residual: report.relative_residual,
            true_relative_residual: report.true_relative_residual,
            converged: report.converged,
            wall_time_s: report.wall_time_s,
            m_hat: None,
            error_bound: None,
        }
    }
}

pub const CSV_HEADER: &str = "schema_version,family,q,k,m,radius_factor,backend,preconditioner_j,tol,c,capacity,iterations,relative_residual,true_relative_residual,converged,wall_time_s,m_hat,error_bound";

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: &mut W, records: &[RunRecord]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.schema_version,
            r.family,
            fmt_f64(r.q),
            r.k,
            r.m,
            fmt_f64(r.radius_factor),
            r.backend,
            r.preconditioner_j
                .map(|j| j.to_string())
                .unwrap_or_default(),
            fmt_f64(r.tol),
            fmt_f64(r.c),
            fmt_f64(r.capacity),
            r.iterations,
            fmt_f64(r.relative_residual),
            fmt_f64(r.true_relative_residual),
            r.converged,
            fmt_f64(r.wall_time_s),
            fmt_opt_f64(r.m_hat),
            fmt_opt_f64(r.error_bound),
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write>(out: &mut W, records: &[RunRecord]) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, records)?;
    writeln!(out)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty input")?;
    if header.trim() != CSV_HEADER {
        return Err(format!("unexpected CSV header: {header}"));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 18 {
            return Err(format!(
                "line {}: expected 18 fields, got {}",
                lineno + 2,
                fields.len()
            ));
        }
        let f = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("line {}: field {}: {e}", lineno + 2, i + 1))
        };
        let opt_f = |i: usize| -> Result<Option<f64>, String> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        records.push(RunRecord {
            schema_version: fields[0].to_string(),
            family: fields[1].to_string(),
            q: f(2)?,
            k: fields[3].parse().map_err(|e| format!("k: {e}"))?,
            m: fields[4].parse().map_err(|e| format!("m: {e}"))?,
            radius_factor: f(5)?,
            backend: fields[6].to_string(),
            preconditioner_j: if fields[7].is_empty() {
                None
            } else {
                Some(fields[7].parse().map_err(|e| format!("j: {e}"))?)
            },
            tol: f(8)?,
            c: f(9)?,
            capacity: f(10)?,
            iterations: fields[11].parse().map_err(|e| format!("iterations: {e}"))?,
            relative_residual: f(12)?,
            true_relative_residual: f(13)?,
            converged: fields[14].parse().map_err(|e| format!("converged: {e}"))?,
            wall_time_s: f(15)?,
            m_hat: opt_f(16)?,
            error_bound: opt_f(17)?,
        });
    }
    Ok(records)
}

pub fn parse_records(text: &str) -> Result<Vec<RunRecord>, String> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') || trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| format!("JSON parse error: {e}"))
    } else {
        parse_csv(text)
    }
}

/// Result record of an extrapolation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitRecord {
    pub schema_version: String,
    pub family: String,
    pub q: f64,
    pub k_first: u32,
    pub k_last: u32,
    pub fit_first: u32,
    pub fit_last: u32,
    pub p1: f64,
    pub p2: f64,
    pub direction: String,
    pub cutoff_k: u32,
    pub max_log_residual: f64,
    pub limit: f64,
}

pub fn write_limit<W: Write>(out: &mut W, rec: &LimitRecord, json: bool) -> std::io::Result<()> {
    if json {
        serde_json::to_writer_pretty(&mut *out, rec)?;
        writeln!(out)?;
    } else {
        writeln!(
            out,
            "schema_version,family,q,k_first,k_last,fit_first,fit_last,p1,p2,direction,cutoff_k,max_log_residual,limit"
        )?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            rec.schema_version,
            rec.family,
            fmt_f64(rec.q),
            rec.k_first,
            rec.k_last,
            rec.fit_first,
            rec.fit_last,
            fmt_f64(rec.p1),
            fmt_f64(rec.p2),
            rec.direction,
            rec.cutoff_k,
            fmt_f64(rec.max_log_residual),
            fmt_f64(rec.limit),
        )?;
    }
    Ok(())
}
