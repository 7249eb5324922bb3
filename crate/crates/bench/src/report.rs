//! CSV output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::run::RunResult;

/// One CSV row. Field order defines the header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub lps: u32,
    pub cores: usize,
    pub entities: u32,
    pub density: f64,
    pub workload: u64,
    pub end_time: f64,
    pub seed: u64,
    pub reps: u32,
    pub mean_wct_ms: f64,
    pub sd_wct_ms: f64,
    pub speedup: Option<f64>,
    pub rollbacks: u64,
    pub anti_messages: u64,
    pub gvt_rounds: u64,
    pub digest: String,
}

pub const HEADER: &str = "lps,cores,entities,density,workload,end_time,seed,reps,mean_wct_ms,sd_wct_ms,speedup,rollbacks,anti_messages,gvt_rounds,digest";

impl From<&RunResult> for CsvRow {
    fn from(r: &RunResult) -> Self {
        let c = &r.spec.cfg;
        CsvRow {
            lps: c.num_lps,
            cores: r.spec.core_cap,
            entities: c.num_entities,
            density: c.event_density,
            workload: c.workload_fpops,
            end_time: c.end_time,
            seed: c.seed,
            reps: r.spec.repetitions,
            mean_wct_ms: r.mean_wct_ms,
            sd_wct_ms: r.sd_wct_ms,
            speedup: r.speedup,
            rollbacks: r.rollbacks,
            anti_messages: r.anti_messages,
            gvt_rounds: r.gvt_rounds,
            digest: format!("{:016x}", r.digests.committed_digest),
        }
    }
}

pub fn write_csv<W: Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(CsvRow::from(r))?;
    }
    if results.is_empty() {
        w.write_record(HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(path: &Path, results: &[RunResult]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    write_csv(file, results)
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header.join(",") == HEADER, "unexpected header {header:?}");
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn load_csv(path: &Path) -> Result<Vec<CsvRow>> {
    read_csv(File::open(path).with_context(|| format!("cannot read {}", path.display()))?)
}
