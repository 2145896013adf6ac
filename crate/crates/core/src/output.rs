//! CSV and JSON writers for sweep results. Every CSV starts with a
//! `# config_hash=<sha256> seed=<u64>` comment line so a file can be traced
//! back to the configuration that produced it.

use std::io::Write;

use serde::Serialize;

use crate::config::ParsedConfig;
use crate::error::Result;
use crate::experiments::{Estimate, RawRecord, SweepResult, SweepRow};

pub const COLUMNS: [&str; 11] = [
    "n",
    "alpha",
    "seed",
    "pc_star",
    "platform_utility",
    "mean_worker_utility",
    "employed",
    "med_utility",
    "opt_utility",
    "rel_diff",
    "prop2_slack",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean(e: Option<Estimate>) -> String {
    opt(e.filter(|e| e.count > 0).map(|e| e.mean))
}

fn header<W: Write>(out: &mut W, cfg: &ParsedConfig) -> Result<()> {
    writeln!(out, "# config_hash={} seed={}", cfg.hash(), cfg.seed())?;
    Ok(())
}

/// One line per replication.
pub fn write_raw_csv<W: Write>(
    mut out: W,
    cfg: &ParsedConfig,
    records: &[RawRecord],
) -> Result<()> {
    header(&mut out, cfg)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.alpha.to_string(),
            r.seed.to_string(),
            r.pc_star.to_string(),
            r.platform_utility.to_string(),
            r.mean_worker_utility.to_string(),
            r.employed.to_string(),
            opt(r.med_utility),
            opt(r.opt_utility),
            opt(r.rel_diff),
            opt(r.prop2_slack),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line per `(n, α)` cell holding replication means; `seed` is the
/// master seed.
pub fn write_aggregate_csv<W: Write>(
    mut out: W,
    cfg: &ParsedConfig,
    rows: &[SweepRow],
) -> Result<()> {
    header(&mut out, cfg)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.alpha.to_string(),
            cfg.seed().to_string(),
            r.pc_star.mean.to_string(),
            r.platform_utility.mean.to_string(),
            r.worker_utility.mean.to_string(),
            r.employed_count.mean.to_string(),
            mean(r.med_utility),
            mean(r.opt_utility),
            mean(r.relative_difference),
            mean(r.prop2_slack),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config_hash: String,
    pub config: &'a ParsedConfig,
    pub replications: usize,
    pub skipped: usize,
    pub prop2_violations: usize,
    pub rows: &'a [SweepRow],
}

impl<'a> Summary<'a> {
    pub fn new(cfg: &'a ParsedConfig, result: &'a SweepResult) -> Self {
        Self {
            config_hash: cfg.hash(),
            config: cfg,
            replications: result.records.len(),
            skipped: result.skipped(),
            prop2_violations: result.prop2_violations(),
            rows: &result.rows,
        }
    }
}

pub fn write_summary_json<W: Write>(
    mut out: W,
    cfg: &ParsedConfig,
    result: &SweepResult,
) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &Summary::new(cfg, result))?;
    writeln!(out)?;
    Ok(())
}
