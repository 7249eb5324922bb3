//! Executes runs and derives the summary statistics.

use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use statrs::statistics::Statistics;
use timewarp::engine::{run_phold, EngineOptions};
use timewarp::gvt::is_monotone;
use timewarp::oracle::run_sequential;
use timewarp::transport::DelayInjection;
use timewarp::Digests;

use crate::plan::{host_cores, Mode, RunSpec};

/// Correctness counters summed over the repetitions of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Audit {
    pub gvt_monotone: bool,
    pub gvt_violations: u64,
    pub fossil_violations: u64,
    pub population_checks: u64,
    pub population_violations: u64,
    /// Every repetition ended with GVT past the end time.
    pub terminated: bool,
    /// Every repetition produced the same digests.
    pub reproducible: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub spec: RunSpec,
    pub wall_ms: Vec<f64>,
    pub mean_wct_ms: f64,
    pub sd_wct_ms: f64,
    pub digests: Digests,
    pub rollbacks: u64,
    pub anti_messages: u64,
    pub gvt_rounds: u64,
    /// `mean_wct(1 LP) / mean_wct(this)` for the same model; `None` without
    /// a 1-LP row in the matrix.
    pub speedup: Option<f64>,
    /// Slower than one LP, or slower than a smaller LP count of the same model.
    pub communication_bound: bool,
    /// Differences against the oracle, one entry per failing repetition.
    pub mismatches: Vec<String>,
    pub audit: Audit,
}

impl RunResult {
    pub fn verified_ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Mean and sample standard deviation; the deviation of one sample is 0.
pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let mean = samples.mean();
    let sd = if samples.len() > 1 {
        samples.std_dev()
    } else {
        0.0
    };
    (mean, sd)
}

fn engine_options(spec: &RunSpec, watchdog: Duration) -> EngineOptions {
    EngineOptions {
        core_cap: spec.core_cap,
        delay: spec.delay,
        watchdog,
        ..EngineOptions::default()
    }
}

pub fn execute(spec: &RunSpec) -> Result<RunResult> {
    execute_with(spec, EngineOptions::default().watchdog)
}

/// Runs all repetitions of `spec`.
pub fn execute_with(spec: &RunSpec, watchdog: Duration) -> Result<RunResult> {
    spec.validate()?;
    if spec.core_cap > host_cores() {
        log::warn!(
            "{} cores requested but the host has {}; LPs will share processors",
            spec.core_cap,
            host_cores()
        );
    }
    let oracle = match spec.mode {
        Mode::Verify => Some(run_sequential(&spec.cfg)?),
        _ => None,
    };
    let opts = engine_options(spec, watchdog);

    let mut wall_ms = Vec::with_capacity(spec.repetitions as usize);
    let mut digests: Option<Digests> = None;
    let mut mismatches = Vec::new();
    let (mut rollbacks, mut anti_messages, mut gvt_rounds) = (0, 0, 0);
    let mut audit = Audit {
        gvt_monotone: true,
        terminated: true,
        reproducible: true,
        ..Audit::default()
    };

    for rep in 0..spec.repetitions {
        let run_digests = if spec.mode == Mode::Oracle {
            let t = Instant::now();
            let d = run_sequential(&spec.cfg)?;
            wall_ms.push(t.elapsed().as_secs_f64() * 1e3);
            d
        } else {
            let report =
                run_phold(&spec.cfg, &opts).with_context(|| format!("{} (rep {rep})", spec.cfg))?;
            wall_ms.push(report.wall.as_secs_f64() * 1e3);
            rollbacks += report.stats.rollbacks;
            anti_messages += report.stats.anti_messages_sent;
            gvt_rounds += report.gvt_rounds;
            audit.gvt_monotone &= is_monotone(&report.gvt_log);
            audit.gvt_violations += report.stats.gvt_violations;
            audit.fossil_violations += report.stats.fossil_violations;
            audit.population_checks += report.population_checks;
            audit.population_violations += report.population_violations;
            audit.terminated &= report.final_gvt() > spec.cfg.end_time();
            report.digests
        };
        if let Some(expected) = &oracle {
            let diff = run_digests.diff(expected);
            if !diff.is_empty() {
                mismatches.push(format!("{} rep {rep}: {}", spec.cfg, diff.join("; ")));
            }
        }
        match digests {
            Some(first) => audit.reproducible &= first == run_digests,
            None => digests = Some(run_digests),
        }
    }

    let (mean_wct_ms, sd_wct_ms) = mean_sd(&wall_ms);
    Ok(RunResult {
        spec: spec.clone(),
        wall_ms,
        mean_wct_ms,
        sd_wct_ms,
        digests: digests.expect("at least one repetition"),
        rollbacks,
        anti_messages,
        gvt_rounds,
        speedup: None,
        communication_bound: false,
        mismatches,
        audit,
    })
}

/// Runs every entry in order, one engine at a time, then fills in speedups.
pub fn run_matrix(specs: &[RunSpec]) -> Result<Vec<RunResult>> {
    anyhow::ensure!(!specs.is_empty(), "nothing to run");
    let mut results = specs.iter().map(execute).collect::<Result<Vec<_>>>()?;
    assign_speedups(&mut results);
    Ok(results)
}

fn same_model(a: &RunSpec, b: &RunSpec) -> bool {
    a.cfg.canonical_key() == b.cfg.canonical_key() && a.delay == b.delay
}

/// Speedup is relative to the 1-LP parallel row of the same model (and the
/// same delay injection). Sequential-simulator rows get none.
pub fn assign_speedups(results: &mut [RunResult]) {
    let timed = |r: &RunResult| r.spec.mode != Mode::Oracle;
    for i in 0..results.len() {
        if !timed(&results[i]) {
            continue;
        }
        let baseline = results
            .iter()
            .find(|b| timed(b) && b.spec.cfg.num_lps == 1 && same_model(&b.spec, &results[i].spec))
            .map(|b| b.mean_wct_ms);
        results[i].speedup = baseline.map(|b| {
            if results[i].spec.cfg.num_lps == 1 {
                1.0
            } else {
                b / results[i].mean_wct_ms
            }
        });
    }
    for i in 0..results.len() {
        let Some(s) = results[i].speedup else {
            continue;
        };
        let degraded = results.iter().any(|o| {
            o.spec.cfg.num_lps < results[i].spec.cfg.num_lps
                && same_model(&o.spec, &results[i].spec)
                && o.speedup.is_some_and(|os| os > s)
        });
        results[i].communication_bound = s < 1.0 || degraded;
    }
}

/// Published reference speedups for configurations measured on a 4-core
/// desktop, shown next to the host's own numbers.
pub fn reference_speedup(spec: &RunSpec) -> Option<f64> {
    let c = &spec.cfg;
    match (c.num_entities, c.workload_fpops, c.num_lps, spec.core_cap) {
        (1500, 10_000, 4, 4) if c.event_density == 0.5 => Some(2.14),
        (1000, _, 8, _) => Some(0.79),
        (1000, _, 4, _) => Some(1.87),
        _ => None,
    }
}

pub fn delay_label(delay: Option<DelayInjection>) -> String {
    delay.map_or_else(
        || "-".to_string(),
        |d| format!("{:.1}ms/{}", d.max.as_secs_f64() * 1e3, d.schedule_seed),
    )
}

/// Plain-text table for the terminal.
pub fn format_table(results: &[RunResult]) -> String {
    let mut out = format!(
        "{:>4} {:>5} {:>8} {:>7} {:>8} {:>7} {:>6} {:>11} {:>9} {:>8} {:>9} {:>8} {:>10}\n",
        "lps",
        "cores",
        "entities",
        "density",
        "workload",
        "end",
        "seed",
        "mean_ms",
        "sd_ms",
        "speedup",
        "rollbacks",
        "delay",
        "note"
    );
    for r in results {
        let c = &r.spec.cfg;
        let mut note = Vec::new();
        if r.communication_bound {
            note.push("comm-bound".to_string());
        }
        if !r.verified_ok() {
            note.push("MISMATCH".to_string());
        }
        if let Some(reference) = reference_speedup(&r.spec) {
            note.push(format!("ref {reference:.2}"));
        }
        if r.spec.mode == Mode::Oracle {
            note.push("sequential".to_string());
        }
        out.push_str(&format!(
            "{:>4} {:>5} {:>8} {:>7} {:>8} {:>7} {:>6} {:>11.1} {:>9.1} {:>8} {:>9} {:>8} {:>10}\n",
            c.num_lps,
            r.spec.core_cap,
            c.num_entities,
            c.event_density,
            c.workload_fpops,
            c.end_time,
            c.seed,
            r.mean_wct_ms,
            r.sd_wct_ms,
            r.speedup
                .map_or_else(|| "-".to_string(), |s| format!("{s:.2}")),
            r.rollbacks,
            delay_label(r.spec.delay),
            note.join(",")
        ));
    }
    out
}
