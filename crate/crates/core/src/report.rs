//! Run artifacts: fixed-schema CSV tables, flat key-value metadata, and the
//! machine-readable verdict summary. Column orders are part of the contract;
//! downstream plotting needs no schema inference.

use crate::error::Result;
use crate::grid::GridFunction;
use crate::harness::{BoundCheckRecord, KsRow, RateReport, StoppingStatsRow};
use std::io::Write;

/// Space-time snapshot dump shared by scheme records and oracle runs:
/// one (t, x, value) row per kept time and node.
pub fn write_snapshot_csv<W: Write>(
    times: &[f64],
    snapshots: &[GridFunction],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "t,x,value")?;
    for (t, snap) in times.iter().zip(snapshots) {
        let grid = snap.grid();
        for (i, v) in snap.values().iter().enumerate() {
            writeln!(out, "{},{},{}", t, grid.node(i), v)?;
        }
    }
    Ok(())
}

pub fn write_rate_csv<W: Write>(report: &RateReport, out: &mut W) -> Result<()> {
    writeln!(out, "study,h,rho,seed,error,corrected_error")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            report.study, row.h, row.rho, row.seed, row.sup_error, row.corrected
        )?;
    }
    Ok(())
}

pub fn write_ks_csv<W: Write>(study: &str, rows: &[KsRow], out: &mut W) -> Result<()> {
    writeln!(out, "study,h,n_samples,ks,noise_band")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            study, row.h, row.n_samples, row.ks, row.noise_band
        )?;
    }
    Ok(())
}

pub fn write_bound_csv<W: Write>(records: &[BoundCheckRecord], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "path,epsilon,sum_dt_squared,intervals,h,penalization,rhs,measured,pass"
    )?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.path_index,
            r.epsilon,
            r.sum_dt_squared,
            r.intervals,
            r.h,
            r.penalization,
            r.rhs,
            r.measured,
            if r.pass { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

pub fn write_stopping_csv<W: Write>(rows: &[StoppingStatsRow], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "h,eta,seeds,mean_k_eta2,median_k_eta2,q90_k_eta2,bound_k,mean_sum_dt2_norm,q90_sum_dt2_norm,bound_sum"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.h,
            r.eta,
            r.seeds,
            r.mean_k_eta2,
            r.median_k_eta2,
            r.q90_k_eta2,
            r.bound_k,
            r.mean_sum_dt2_norm,
            r.q90_sum_dt2_norm,
            r.bound_sum
        )?;
    }
    Ok(())
}

/// Ordered key = value metadata. The timestamp lives in exactly one field
/// named `timestamp` so determinism checks can exclude it by name.
#[derive(Debug, Default, Clone)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Metadata::default()
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        assert!(
            key != "timestamp",
            "use stamp_now for the timestamp field"
        );
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn stamp_now(&mut self) {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.entries.push(("timestamp".into(), now.to_string()));
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Named pass/fail verdicts; the overall line is derived, and exit status is
/// a pure function of the written file.
#[derive(Debug, Default, Clone)]
pub struct VerdictSummary {
    verdicts: Vec<(String, bool)>,
}

impl VerdictSummary {
    pub fn new() -> Self {
        VerdictSummary::default()
    }

    pub fn record(&mut self, name: &str, pass: bool) {
        self.verdicts.push((name.to_string(), pass));
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|(_, p)| *p)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        for (name, pass) in &self.verdicts {
            writeln!(out, "{name} = {}", if *pass { "pass" } else { "fail" })?;
        }
        writeln!(
            out,
            "overall = {}",
            if self.all_pass() { "pass" } else { "fail" }
        )?;
        Ok(())
    }

    /// Parse a verdict file; true iff every named verdict passes.
    pub fn file_passes(text: &str) -> bool {
        let mut any = false;
        for line in text.lines() {
            let Some((name, value)) = line.split_once('=') else {
                continue;
            };
            let name = name.trim();
            let value = value.trim();
            if name == "overall" {
                continue;
            }
            any = true;
            if value != "pass" {
                return false;
            }
        }
        any
    }
}
