//! Global Virtual Time.
//!
//! A barrier variant of Samadi's algorithm. Every message (positive,
//! negative) is acknowledged by its receiver, and a sender keeps the message
//! in its unacknowledged set until the acknowledgment comes back. A round
//! runs as follows:
//!
//! 1. the controller asks every LP to pause;
//! 2. paused LPs stop starting buckets but keep receiving, rolling back and
//!    acknowledging;
//! 3. once every LP is paused and no message is unacknowledged anywhere,
//!    nothing is in transit and nothing can change, so each LP reports its
//!    [`LogicalProcess::local_min`](crate::lp::LogicalProcess::local_min);
//! 4. the minimum of the reports, clamped to the previous GVT, is broadcast
//!    and every LP fossil-collects with it.
//!
//! This module holds the pure decision logic; the round choreography lives in
//! the engine.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::event::{LpId, VirtualTime};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GvtReport {
    pub lp: LpId,
    pub local_min: VirtualTime,
    pub round: u64,
    /// Queued events at the LP when it reported.
    pub live_events: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GvtLogEntry {
    pub wall_clock_ms: f64,
    pub round: u64,
    pub gvt: VirtualTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GvtDecision {
    pub round: u64,
    pub gvt: VirtualTime,
    pub terminate: bool,
    pub live_events: u64,
}

#[derive(Debug)]
pub struct GvtController {
    num_lps: usize,
    end_time: VirtualTime,
    current: VirtualTime,
    round: u64,
    started: Instant,
    log: Vec<GvtLogEntry>,
}

impl GvtController {
    pub fn new(num_lps: usize, end_time: VirtualTime) -> Self {
        GvtController {
            num_lps,
            end_time,
            current: VirtualTime::ZERO,
            round: 0,
            started: Instant::now(),
            log: Vec::new(),
        }
    }

    pub fn current_gvt(&self) -> VirtualTime {
        self.current
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Opens a new round and returns its number.
    pub fn begin_round(&mut self) -> u64 {
        self.round += 1;
        self.round
    }

    pub fn log(&self) -> &[GvtLogEntry] {
        &self.log
    }

    pub fn into_log(self) -> Vec<GvtLogEntry> {
        self.log
    }

    /// Folds one complete set of reports into a new GVT.
    ///
    /// Exactly one report per LP for the current round is required; anything
    /// else aborts the round with [`Error::MissingReports`] and leaves the
    /// controller unchanged so the caller can retry. The run terminates once
    /// GVT passes the end time: at that point every event at or before the
    /// end time has been processed and can no longer be rolled back.
    pub fn compute_gvt(&mut self, reports: &[GvtReport]) -> Result<GvtDecision> {
        let mut seen = vec![false; self.num_lps];
        for r in reports.iter().filter(|r| r.round == self.round) {
            if let Some(slot) = seen.get_mut(r.lp.index()) {
                *slot = true;
            }
        }
        let missing = seen.iter().filter(|s| !**s).count();
        let current: Vec<&GvtReport> = reports.iter().filter(|r| r.round == self.round).collect();
        if missing > 0 || current.len() != self.num_lps {
            return Err(Error::MissingReports {
                round: self.round,
                missing: missing.max(1),
            });
        }
        let min = current
            .iter()
            .map(|r| r.local_min)
            .min()
            .unwrap_or(VirtualTime::INFINITY);
        let gvt = min.max(self.current);
        self.current = gvt;
        self.log.push(GvtLogEntry {
            wall_clock_ms: self.started.elapsed().as_secs_f64() * 1e3,
            round: self.round,
            gvt,
        });
        Ok(GvtDecision {
            round: self.round,
            gvt,
            terminate: gvt > self.end_time,
            live_events: current.iter().map(|r| r.live_events).sum(),
        })
    }
}

/// True when `log` never decreases.
pub fn is_monotone(log: &[GvtLogEntry]) -> bool {
    log.windows(2).all(|w| w[0].gvt <= w[1].gvt)
}
