//! What to run: one [`RunSpec`] per matrix row.

use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use timewarp::transport::DelayInjection;
use timewarp::PholdConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// Time the parallel engine.
    Parallel,
    /// Time the sequential simulator.
    Oracle,
    /// Time the parallel engine and compare every run against the oracle.
    Verify,
}

impl FromStr for Mode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Mode::Parallel),
            "oracle" => Ok(Mode::Oracle),
            "verify" => Ok(Mode::Verify),
            other => bail!("unknown mode {other:?}"),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Parallel => "parallel",
            Mode::Oracle => "oracle",
            Mode::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub cfg: PholdConfig,
    /// Maximum number of LPs executing at once.
    pub core_cap: usize,
    pub repetitions: u32,
    pub delay: Option<DelayInjection>,
    pub mode: Mode,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            cfg: PholdConfig::default(),
            core_cap: host_cores(),
            repetitions: 1,
            delay: None,
            mode: Mode::Parallel,
        }
    }
}

pub fn host_cores() -> usize {
    num_cpus::get()
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.core_cap == 0 {
            bail!("cores must be at least 1");
        }
        if self.repetitions == 0 {
            bail!("reps must be at least 1");
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| anyhow!("{key}={value}: {e}");
        match key {
            "lps" => self.cfg.num_lps = value.parse().map_err(|e| bad(&e))?,
            "cores" => self.core_cap = value.parse().map_err(|e| bad(&e))?,
            "entities" => self.cfg.num_entities = value.parse().map_err(|e| bad(&e))?,
            "density" => self.cfg.event_density = value.parse().map_err(|e| bad(&e))?,
            "workload" => self.cfg.workload_fpops = value.parse().map_err(|e| bad(&e))?,
            "end_time" | "end-time" => self.cfg.end_time = value.parse().map_err(|e| bad(&e))?,
            "mean_delay" | "mean-delay" => {
                self.cfg.mean_delay = value.parse().map_err(|e| bad(&e))?
            }
            "seed" => self.cfg.seed = value.parse().map_err(|e| bad(&e))?,
            "exclude_self" | "exclude-self" => {
                self.cfg.exclude_self = value.parse().map_err(|e| bad(&e))?
            }
            "reps" => self.repetitions = value.parse().map_err(|e| bad(&e))?,
            "mode" => self.mode = value.parse()?,
            "delay_max_ms" | "delay-max-ms" => {
                let ms: f64 = value.parse().map_err(|e| bad(&e))?;
                let seed = self.delay.map_or(0, |d| d.schedule_seed);
                self.delay = delay_injection(ms, seed).map_err(|e| bad(&e))?;
            }
            "delay_seed" | "delay-seed" => {
                let seed = value.parse().map_err(|e| bad(&e))?;
                if let Some(d) = &mut self.delay {
                    d.schedule_seed = seed;
                } else {
                    // remember the seed for a later delay_max_ms
                    self.delay = Some(DelayInjection {
                        max: Duration::ZERO,
                        schedule_seed: seed,
                    });
                }
            }
            other => bail!("unknown key {other:?}"),
        }
        Ok(())
    }

    /// Drops a delay setting that never received a positive maximum.
    fn normalized(mut self) -> Self {
        if self.delay.is_some_and(|d| d.max.is_zero()) {
            self.delay = None;
        }
        self
    }
}

pub fn delay_injection(max_ms: f64, schedule_seed: u64) -> Result<Option<DelayInjection>> {
    if !(max_ms.is_finite() && max_ms >= 0.0) {
        bail!("delay must be a non-negative number of milliseconds");
    }
    Ok((max_ms > 0.0).then(|| DelayInjection {
        max: Duration::from_secs_f64(max_ms / 1000.0),
        schedule_seed,
    }))
}

/// Parses a matrix file: one run per line as space-separated `key=value`
/// pairs on top of `defaults`. Blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str, defaults: &RunSpec) -> Result<Vec<RunSpec>> {
    let mut specs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut spec = defaults.clone();
        for pair in line.split_whitespace() {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got {pair:?}", n + 1))?;
            spec.set(k, v).with_context(|| format!("line {}", n + 1))?;
        }
        let spec = spec.normalized();
        spec.validate().with_context(|| format!("line {}", n + 1))?;
        specs.push(spec);
    }
    if specs.is_empty() {
        bail!("matrix contains no runs");
    }
    Ok(specs)
}
