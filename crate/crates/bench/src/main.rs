use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use phold_bench::plan::{delay_injection, host_cores};
use phold_bench::{emit_csv, golden, parse_matrix, run, Mode, RunSpec};
use timewarp::PholdConfig;

/// Run PHOLD on the Time Warp engine and report wall-clock times, speedups
/// and digests.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// LP counts; a comma-separated list runs one configuration per value.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    lps: Vec<u32>,
    /// Maximum simultaneously executing LPs [default: host logical cores].
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long, default_value_t = 64)]
    entities: u32,
    /// Fraction of entities that start with one event.
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    /// Floating-point multiply-adds per event.
    #[arg(long, default_value_t = 0)]
    workload: u64,
    #[arg(long, default_value_t = 100.0)]
    end_time: f64,
    #[arg(long, default_value_t = 5.0)]
    mean_delay: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Never send an event to its own sender.
    #[arg(long)]
    exclude_self: bool,
    #[arg(long, default_value_t = 1)]
    reps: u32,
    #[arg(long, value_enum, default_value_t = Mode::Parallel)]
    mode: Mode,
    /// Upper bound of the random extra latency per event message; 0 disables.
    #[arg(long, default_value_t = 0.0)]
    delay_max_ms: f64,
    #[arg(long, default_value_t = 0)]
    delay_seed: u64,
    /// Matrix file: one run per line as space-separated key=value pairs.
    /// Command-line values act as defaults.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Golden digest file: written in oracle mode, checked in verify mode.
    #[arg(long)]
    golden: Option<PathBuf>,
}

impl Args {
    fn specs(&self) -> Result<Vec<RunSpec>> {
        let base = RunSpec {
            cfg: PholdConfig {
                num_lps: self.lps[0],
                num_entities: self.entities,
                event_density: self.density,
                workload_fpops: self.workload,
                mean_delay: self.mean_delay,
                end_time: self.end_time,
                seed: self.seed,
                exclude_self: self.exclude_self,
            },
            core_cap: self.cores.unwrap_or_else(host_cores),
            repetitions: self.reps,
            delay: delay_injection(self.delay_max_ms, self.delay_seed)?,
            mode: self.mode,
        };
        if let Some(path) = &self.matrix {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            return parse_matrix(&text, &base);
        }
        let specs: Vec<RunSpec> = self
            .lps
            .iter()
            .map(|&n| RunSpec {
                cfg: PholdConfig {
                    num_lps: n,
                    ..base.cfg.clone()
                },
                ..base.clone()
            })
            .collect();
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main(args: Args) -> Result<bool> {
    let specs = args.specs()?;
    let results = run::run_matrix(&specs)?;
    print!("{}", run::format_table(&results));

    if let Some(path) = &args.out {
        emit_csv(path, &results)?;
    }

    let mut ok = true;
    for r in &results {
        for m in &r.mismatches {
            eprintln!("digest mismatch: {m}");
            ok = false;
        }
    }

    let oracle_rows: Vec<_> = results
        .iter()
        .filter(|r| r.spec.mode == Mode::Oracle)
        .collect();
    if !oracle_rows.is_empty() {
        let mut lines: Vec<String> = oracle_rows
            .iter()
            .map(|r| golden::format_line(&r.spec.cfg, &r.digests))
            .collect();
        lines.dedup();
        for line in &lines {
            println!("{line}");
        }
        if let Some(path) = &args.golden {
            fs::write(path, lines.join("\n") + "\n")
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
    } else if let Some(path) = &args.golden {
        let set = golden::load(path)?;
        for r in results.iter().filter(|r| r.spec.mode == Mode::Verify) {
            match golden::check(&set, &r.spec.cfg, &r.digests) {
                Some(diff) if !diff.is_empty() => {
                    eprintln!("golden mismatch: {}: {}", r.spec.cfg, diff.join("; "));
                    ok = false;
                }
                Some(_) => {}
                None => log::warn!("no golden entry for {}", r.spec.cfg.canonical_key()),
            }
        }
    }
    Ok(ok)
}
