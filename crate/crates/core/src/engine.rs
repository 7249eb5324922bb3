//! Parallel Time Warp runtime.
//!
//! One OS thread per LP plus a coordinator thread for GVT rounds. LPs talk
//! only through the [`Transport`]; the coordinator additionally reads a few
//! shared atomics (pause acknowledgements, idle markers and a global count of
//! unacknowledged messages) to detect quiescence.
//!
//! A core cap bounds how many LPs execute simultaneously: an LP must hold a
//! permit while it processes buckets or handles messages and gives it back
//! before blocking.

use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::digest::{CommitDigest, Digests};
use crate::error::{Error, Result};
use crate::event::{LpId, VirtualTime};
use crate::gvt::{GvtController, GvtLogEntry, GvtReport};
use crate::lp::{LogicalProcess, LpStats};
use crate::model::Model;
use crate::partition::{Partition, PartitionScheme};
use crate::phold::{PholdConfig, PholdModel};
use crate::transport::{Body, Control, DelayInjection, Endpoint, Mailbox, Transport};

/// When the coordinator starts a GVT round: after `buckets` buckets on LP 0,
/// after `wall` of wall-clock time, or as soon as every LP is idle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GvtTrigger {
    pub buckets: u64,
    pub wall: Duration,
}

impl Default for GvtTrigger {
    fn default() -> Self {
        GvtTrigger {
            buckets: 64,
            wall: Duration::from_millis(50),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineOptions {
    /// Upper bound on simultaneously executing LPs.
    pub core_cap: usize,
    pub partition: PartitionScheme,
    pub delay: Option<DelayInjection>,
    pub gvt_trigger: GvtTrigger,
    pub watchdog: Duration,
    /// Buckets an LP may process per permit hold.
    pub quantum: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            core_cap: usize::MAX,
            partition: PartitionScheme::RoundRobin,
            delay: None,
            gvt_trigger: GvtTrigger::default(),
            watchdog: Duration::from_secs(60),
            quantum: 16,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub digests: Digests,
    pub stats: LpStats,
    pub per_lp: Vec<LpStats>,
    pub gvt_rounds: u64,
    pub gvt_log: Vec<GvtLogEntry>,
    /// Barriers where the live event count differed from the expected
    /// population (only checked when one is given).
    pub population_violations: u64,
    pub population_checks: u64,
    pub dropped_sends: u64,
    pub wall: Duration,
}

impl RunReport {
    pub fn final_gvt(&self) -> VirtualTime {
        self.gvt_log.last().map_or(VirtualTime::ZERO, |e| e.gvt)
    }
}

/// Runs PHOLD in parallel with `cfg.num_lps` LPs.
pub fn run_phold(cfg: &PholdConfig, opts: &EngineOptions) -> Result<RunReport> {
    let model = PholdModel::new(cfg.clone())?;
    run_parallel(
        &model,
        cfg.num_lps,
        cfg.end_time(),
        Some(u64::from(cfg.initial_population())),
        opts,
    )
}

pub fn run_parallel<M: Model>(
    model: &M,
    num_lps: u32,
    end_time: VirtualTime,
    expected_population: Option<u64>,
    opts: &EngineOptions,
) -> Result<RunReport> {
    let started = Instant::now();
    let partition = Partition::new(num_lps, model.num_entities(), opts.partition)?;
    let n = num_lps as usize;
    if opts.core_cap == 0 {
        return Err(Error::Config("core cap must be at least 1".into()));
    }

    let mut lps: Vec<LogicalProcess<'_, M>> = (0..num_lps)
        .map(|i| LogicalProcess::new(LpId(i), model, partition, end_time))
        .collect();
    for ev in model.initial_events() {
        lps[partition.lp_of(ev.target_entity).index()].seed(ev)?;
    }

    let (transport, mut mailboxes) = Transport::new(n + 1, opts.delay);
    let controller_box = mailboxes.pop().expect("controller mailbox");
    let shared = Shared {
        transport,
        partition,
        cap: (opts.core_cap < n).then(|| CoreCap::new(opts.core_cap)),
        unacked_total: AtomicI64::new(0),
        paused_round: (0..n).map(|_| AtomicU64::new(0)).collect(),
        idle_after: (0..n).map(|_| AtomicU64::new(0)).collect(),
        lp0_buckets: AtomicU64::new(0),
        abort: AtomicBool::new(false),
        controller: n,
        quantum: opts.quantum.max(1),
    };

    let (lp_results, ctrl_result) = thread::scope(|scope| {
        let shared = &shared;
        let workers: Vec<_> = lps
            .into_iter()
            .zip(mailboxes)
            .map(|(mut lp, mut mailbox)| {
                thread::Builder::new()
                    .name(format!("lp{}", lp.id().0))
                    .spawn_scoped(scope, move || {
                        let r = lp_worker(&mut lp, &mut mailbox, shared);
                        if r.is_err() {
                            shared.abort.store(true, Ordering::Release);
                        }
                        r.map(|_| lp)
                    })
                    .expect("spawn LP thread")
            })
            .collect();
        let ctrl = coordinator(shared, controller_box, end_time, expected_population, opts);
        if ctrl.is_err() {
            shared.abort.store(true, Ordering::Release);
        }
        let results: Vec<_> = workers
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Worker("LP thread panicked".into())))
            })
            .collect();
        (results, ctrl)
    });

    // an LP failure is the root cause when both sides report errors
    let mut finished = Vec::with_capacity(n);
    for r in lp_results {
        finished.push(r?);
    }
    let ctrl = ctrl_result?;

    let mut commits = CommitDigest::default();
    let mut state = 0u64;
    let mut stats = LpStats::default();
    let mut per_lp = Vec::with_capacity(n);
    for lp in &finished {
        commits.merge(lp.commits());
        state = state.wrapping_add(lp.state_digest());
        stats.merge(lp.stats());
        per_lp.push(*lp.stats());
    }
    Ok(RunReport {
        digests: Digests::new(commits, state),
        stats,
        per_lp,
        gvt_rounds: ctrl.rounds,
        gvt_log: ctrl.log,
        population_violations: ctrl.population_violations,
        population_checks: ctrl.population_checks,
        dropped_sends: shared.transport.dropped(),
        wall: started.elapsed(),
    })
}

struct Shared {
    transport: Transport,
    partition: Partition,
    cap: Option<CoreCap>,
    /// Positive and negative messages sent but not yet acknowledged back.
    unacked_total: AtomicI64,
    /// Last round each LP paused for.
    paused_round: Vec<AtomicU64>,
    /// `r + 1` when the LP found nothing to do after resuming from round `r`;
    /// 0 while it has work.
    idle_after: Vec<AtomicU64>,
    lp0_buckets: AtomicU64,
    abort: AtomicBool,
    controller: Endpoint,
    quantum: usize,
}

impl Shared {
    fn permit(&self) -> Option<Permit<'_>> {
        self.cap.as_ref().map(CoreCap::acquire)
    }

    fn aborted(&self) -> bool {
        self.abort.load(Ordering::Acquire)
    }
}

struct CoreCap {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a CoreCap);

impl CoreCap {
    fn new(permits: usize) -> Self {
        CoreCap {
            free: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("core cap poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("core cap poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("core cap poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Hands the LP's outbox to the transport. The global unacknowledged count
/// goes up before the message becomes visible, so the coordinator can never
/// observe zero while a message is on its way.
fn flush<M: Model>(lp: &mut LogicalProcess<'_, M>, shared: &Shared) {
    if !lp.has_outbox() {
        return;
    }
    let me = lp.id().index();
    for msg in lp.take_outbox() {
        shared.unacked_total.fetch_add(1, Ordering::AcqRel);
        let dst = shared.partition.lp_of(msg.target_entity).index();
        shared.transport.send(me, dst, Body::Event(msg));
    }
}

fn lp_worker<M: Model>(
    lp: &mut LogicalProcess<'_, M>,
    mailbox: &mut Mailbox,
    shared: &Shared,
) -> Result<()> {
    let me = lp.id().index();
    let mut paused = false;
    let mut resumed_round = 0u64;
    let mut inbox = Vec::new();
    loop {
        if shared.aborted() {
            return Ok(());
        }
        mailbox.drain_into(&mut inbox);
        if !inbox.is_empty() {
            let _permit = shared.permit();
            for env in inbox.drain(..) {
                match env.body {
                    Body::Event(msg) => {
                        lp.receive(msg)?;
                        // anti-messages caused by this delivery are counted
                        // before the ack releases the sender's count
                        flush(lp, shared);
                        shared.transport.send(me, env.source, Body::Ack(msg));
                    }
                    Body::Ack(msg) => {
                        lp.handle_ack(&msg)?;
                        shared.unacked_total.fetch_sub(1, Ordering::AcqRel);
                    }
                    Body::Control(Control::Pause { round }) => {
                        paused = true;
                        shared.idle_after[me].store(0, Ordering::Release);
                        shared.paused_round[me].store(round, Ordering::Release);
                    }
                    Body::Control(Control::RequestReport { round }) => {
                        let report = Control::Report {
                            round,
                            local_min: lp.local_min(),
                            live_events: lp.future().len() as u64,
                        };
                        shared
                            .transport
                            .send(me, shared.controller, Body::Control(report));
                    }
                    Body::Control(Control::Resume {
                        round,
                        gvt,
                        terminate,
                    }) => {
                        lp.fossil_collect(gvt)?;
                        paused = false;
                        resumed_round = round;
                        if terminate {
                            return Ok(());
                        }
                    }
                    Body::Control(Control::Report { .. }) => {
                        log::warn!("{}: stray GVT report ignored", lp.id());
                    }
                }
            }
        }

        if paused {
            mailbox.wait(Duration::from_millis(2));
            continue;
        }

        if lp.next_runnable_time().is_some() {
            shared.idle_after[me].store(0, Ordering::Release);
            let _permit = shared.permit();
            for _ in 0..shared.quantum {
                if lp.process_next()? == 0 {
                    break;
                }
                if me == 0 {
                    shared.lp0_buckets.fetch_add(1, Ordering::Relaxed);
                }
                if !mailbox.is_empty() {
                    break;
                }
            }
            flush(lp, shared);
        } else {
            shared.idle_after[me].store(resumed_round + 1, Ordering::Release);
            mailbox.wait(Duration::from_millis(5));
        }
    }
}

struct CoordinatorOutcome {
    rounds: u64,
    log: Vec<GvtLogEntry>,
    population_violations: u64,
    population_checks: u64,
}

fn coordinator(
    shared: &Shared,
    mut mailbox: Mailbox,
    end_time: VirtualTime,
    expected_population: Option<u64>,
    opts: &EngineOptions,
) -> Result<CoordinatorOutcome> {
    let n = shared.paused_round.len();
    let started = Instant::now();
    let mut gvt = GvtController::new(n, end_time);
    let mut population_violations = 0;
    let mut population_checks = 0;
    let mut last_completed = 0u64;
    let poll = Duration::from_micros(100);

    let check = |shared: &Shared| -> Result<bool> {
        if shared.aborted() {
            return Ok(false);
        }
        if started.elapsed() > opts.watchdog {
            return Err(Error::Watchdog(opts.watchdog));
        }
        Ok(true)
    };

    loop {
        // wait for a trigger
        let since = Instant::now();
        let base = shared.lp0_buckets.load(Ordering::Relaxed);
        loop {
            if !check(shared)? {
                return Err(Error::Worker("run aborted by an LP".into()));
            }
            let steps = shared.lp0_buckets.load(Ordering::Relaxed) - base;
            let all_idle = shared
                .idle_after
                .iter()
                .all(|a| a.load(Ordering::Acquire) == last_completed + 1);
            if steps >= opts.gvt_trigger.buckets
                || since.elapsed() >= opts.gvt_trigger.wall
                || all_idle
            {
                break;
            }
            thread::sleep(poll);
        }

        let round = gvt.begin_round();
        for lp in 0..n {
            shared.transport.send(
                shared.controller,
                lp,
                Body::Control(Control::Pause { round }),
            );
        }

        // quiescence: everyone paused for this round and nothing unacknowledged
        loop {
            if !check(shared)? {
                return Err(Error::Worker("run aborted by an LP".into()));
            }
            let all_paused = shared
                .paused_round
                .iter()
                .all(|r| r.load(Ordering::Acquire) == round);
            if all_paused && shared.unacked_total.load(Ordering::Acquire) == 0 {
                break;
            }
            thread::sleep(poll);
        }

        for lp in 0..n {
            shared.transport.send(
                shared.controller,
                lp,
                Body::Control(Control::RequestReport { round }),
            );
        }
        let reports = collect_reports(shared, &mut mailbox, round, n, &check)?;

        let decision = match gvt.compute_gvt(&reports) {
            Ok(d) => d,
            Err(Error::MissingReports { round, missing }) => {
                log::warn!("GVT round {round} missing {missing} report(s); retrying");
                let current = gvt.current_gvt();
                for lp in 0..n {
                    let resume = Control::Resume {
                        round,
                        gvt: current,
                        terminate: false,
                    };
                    shared
                        .transport
                        .send(shared.controller, lp, Body::Control(resume));
                }
                last_completed = round;
                continue;
            }
            Err(e) => return Err(e),
        };

        if let Some(expected) = expected_population {
            population_checks += 1;
            if decision.live_events != expected {
                population_violations += 1;
                log::error!(
                    "round {round}: {} live events, expected {expected}",
                    decision.live_events
                );
            }
        }

        for lp in 0..n {
            let resume = Control::Resume {
                round,
                gvt: decision.gvt,
                terminate: decision.terminate,
            };
            shared
                .transport
                .send(shared.controller, lp, Body::Control(resume));
        }
        last_completed = round;
        if decision.terminate {
            shared.transport.close();
            return Ok(CoordinatorOutcome {
                rounds: gvt.round(),
                log: gvt.into_log(),
                population_violations,
                population_checks,
            });
        }
    }
}

fn collect_reports(
    shared: &Shared,
    mailbox: &mut Mailbox,
    round: u64,
    n: usize,
    check: &dyn Fn(&Shared) -> Result<bool>,
) -> Result<Vec<GvtReport>> {
    let deadline = Instant::now() + Duration::from_secs(5);
    let mut reports = Vec::with_capacity(n);
    while reports.len() < n && Instant::now() < deadline {
        if !check(shared)? {
            return Err(Error::Worker("run aborted by an LP".into()));
        }
        for env in mailbox.drain() {
            if let Body::Control(Control::Report {
                round: r,
                local_min,
                live_events,
            }) = env.body
            {
                reports.push(GvtReport {
                    lp: LpId(env.source as u32),
                    local_min,
                    round: r,
                    live_events,
                });
            }
        }
        if reports.len() < n {
            mailbox.wait(Duration::from_millis(1));
        }
    }
    reports.retain(|r| r.round == round);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::run_sequential;

    fn cfg(lps: u32, entities: u32, density: f64) -> PholdConfig {
        PholdConfig {
            num_lps: lps,
            num_entities: entities,
            event_density: density,
            end_time: 50.0,
            ..PholdConfig::default()
        }
    }

    #[test]
    fn single_lp_matches_oracle() {
        let c = cfg(1, 16, 1.0);
        let r = run_phold(&c, &EngineOptions::default()).unwrap();
        assert_eq!(r.digests, run_sequential(&c).unwrap());
        assert_eq!(r.stats.rollbacks, 0);
        assert!(r.final_gvt() > c.end_time());
    }

    #[test]
    fn four_lps_match_oracle() {
        let c = cfg(4, 32, 0.5);
        let r = run_phold(&c, &EngineOptions::default()).unwrap();
        assert_eq!(r.digests, run_sequential(&c).unwrap());
        assert_eq!(r.population_violations, 0);
        assert!(r.population_checks > 0);
    }

    #[test]
    fn empty_population_terminates_immediately() {
        let c = cfg(3, 16, 0.0);
        let r = run_phold(&c, &EngineOptions::default()).unwrap();
        assert_eq!(r.digests.committed_count, 0);
        assert!(r.final_gvt().is_infinite());
    }

    #[test]
    fn core_cap_of_one_still_completes() {
        let c = cfg(4, 32, 1.0);
        let opts = EngineOptions {
            core_cap: 1,
            ..EngineOptions::default()
        };
        let r = run_phold(&c, &opts).unwrap();
        assert_eq!(r.digests, run_sequential(&c).unwrap());
    }

    #[test]
    fn block_partition_gives_same_trace() {
        let c = cfg(3, 20, 1.0);
        let opts = EngineOptions {
            partition: PartitionScheme::Block,
            ..EngineOptions::default()
        };
        assert_eq!(
            run_phold(&c, &opts).unwrap().digests,
            run_sequential(&c).unwrap()
        );
    }

    #[test]
    fn zero_core_cap_is_rejected() {
        let opts = EngineOptions {
            core_cap: 0,
            ..EngineOptions::default()
        };
        assert!(run_phold(&cfg(2, 8, 1.0), &opts).is_err());
    }
}
