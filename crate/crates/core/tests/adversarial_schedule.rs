//! Drives logical processes from a single thread under randomly chosen
//! schedules: which LP runs next, which (source, destination) queue delivers
//! next, and when a GVT barrier happens. Delivery stays FIFO per pair. Every
//! schedule must commit exactly the oracle's trace.

use std::collections::VecDeque;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timewarp::event::{EventMessage, LpId, VirtualTime};
use timewarp::lp::{LogicalProcess, LpStats};
use timewarp::model::Model;
use timewarp::oracle::run_sequential;
use timewarp::partition::{Partition, PartitionScheme};
use timewarp::phold::{PholdConfig, PholdModel};
use timewarp::Digests;

enum Wire {
    Event(EventMessage),
    Ack(EventMessage),
}

struct Outcome {
    digests: Digests,
    stats: LpStats,
    gvt_log: Vec<VirtualTime>,
    population_ok: bool,
}

fn route(
    lp: &mut LogicalProcess<'_, PholdModel>,
    partition: &Partition,
    queues: &mut [Vec<VecDeque<Wire>>],
) {
    let src = lp.id().index();
    for m in lp.take_outbox() {
        let dst = partition.lp_of(m.target_entity).index();
        queues[src][dst].push_back(Wire::Event(m));
    }
}

fn deliver(
    lps: &mut [LogicalProcess<'_, PholdModel>],
    partition: &Partition,
    queues: &mut [Vec<VecDeque<Wire>>],
    src: usize,
    dst: usize,
) {
    match queues[src][dst].pop_front().expect("non-empty queue") {
        Wire::Event(m) => {
            lps[dst].receive(m).expect("protocol violation");
            route(&mut lps[dst], partition, queues);
            queues[dst][src].push_back(Wire::Ack(m));
        }
        Wire::Ack(m) => lps[dst].handle_ack(&m).expect("unknown ack"),
    }
}

fn run_schedule(cfg: &PholdConfig, schedule_seed: u64, gvt_every: u32) -> Outcome {
    let model = PholdModel::new(cfg.clone()).unwrap();
    let n = cfg.num_lps as usize;
    let partition =
        Partition::new(cfg.num_lps, cfg.num_entities, PartitionScheme::RoundRobin).unwrap();
    let end = cfg.end_time();
    let mut lps: Vec<_> = (0..cfg.num_lps)
        .map(|i| LogicalProcess::new(LpId(i), &model, partition, end))
        .collect();
    for ev in model.initial_events() {
        lps[partition.lp_of(ev.target_entity).index()]
            .seed(ev)
            .unwrap();
    }
    let mut queues: Vec<Vec<VecDeque<Wire>>> = (0..n)
        .map(|_| (0..n).map(|_| VecDeque::new()).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule_seed);
    // uneven LP speeds provoke stragglers
    let speed: Vec<u32> = (0..n).map(|_| rng.random_range(1..=8)).collect();
    let mut gvt_log = Vec::new();
    let mut population_ok = true;
    let expected = u64::from(cfg.initial_population());

    let mut steps = 0u32;
    loop {
        steps += 1;
        assert!(steps < 2_000_000, "schedule did not terminate");
        let busy: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (0..n).map(move |d| (s, d)))
            .filter(|(s, d)| !queues[*s][*d].is_empty())
            .collect();

        if steps.is_multiple_of(gvt_every) {
            // barrier: flush every queue to quiescence, then report
            loop {
                let pending: Vec<(usize, usize)> = (0..n)
                    .flat_map(|s| (0..n).map(move |d| (s, d)))
                    .filter(|(s, d)| !queues[*s][*d].is_empty())
                    .collect();
                if pending.is_empty() {
                    break;
                }
                let (s, d) = pending[rng.random_range(0..pending.len())];
                deliver(&mut lps, &partition, &mut queues, s, d);
            }
            let live: u64 = lps.iter().map(|lp| lp.future().len() as u64).sum();
            population_ok &= live == expected;
            assert!(lps
                .iter()
                .all(|lp| lp.unacked_len() == 0 && lp.pending_antis_len() == 0));
            let gvt = lps.iter().map(|lp| lp.local_min()).min().unwrap();
            let gvt = gvt.max(gvt_log.last().copied().unwrap_or(VirtualTime::ZERO));
            gvt_log.push(gvt);
            for lp in &mut lps {
                lp.fossil_collect(gvt).unwrap();
            }
            if gvt > end {
                break;
            }
            continue;
        }

        let runnable: Vec<usize> = (0..n)
            .filter(|i| lps[*i].next_runnable_time().is_some())
            .collect();
        let deliver_now = !busy.is_empty() && (runnable.is_empty() || rng.random_bool(0.3));
        if deliver_now {
            let (s, d) = busy[rng.random_range(0..busy.len())];
            deliver(&mut lps, &partition, &mut queues, s, d);
        } else if !runnable.is_empty() {
            let total: u32 = runnable.iter().map(|i| speed[*i]).sum();
            let mut pick = rng.random_range(0..total);
            let mut chosen = runnable[0];
            for i in &runnable {
                if pick < speed[*i] {
                    chosen = *i;
                    break;
                }
                pick -= speed[*i];
            }
            lps[chosen].process_next().unwrap();
            route(&mut lps[chosen], &partition, &mut queues);
        }
    }

    let mut commits = timewarp::digest::CommitDigest::default();
    let mut state = 0u64;
    let mut stats = LpStats::default();
    for lp in &lps {
        commits.merge(lp.commits());
        state = state.wrapping_add(lp.state_digest());
        stats.merge(lp.stats());
    }
    Outcome {
        digests: Digests::new(commits, state),
        stats,
        gvt_log,
        population_ok,
    }
}

fn config(lps: u32, entities: u32, density: f64, seed: u64) -> PholdConfig {
    PholdConfig {
        num_lps: lps,
        num_entities: entities,
        event_density: density,
        workload_fpops: 10,
        end_time: 40.0,
        seed,
        ..PholdConfig::default()
    }
}

#[test]
fn fixed_schedule_exercises_rollbacks_and_matches_oracle() {
    let cfg = config(4, 24, 1.0, 5);
    let oracle = run_sequential(&cfg).unwrap();
    let out = run_schedule(&cfg, 99, 400);
    assert_eq!(out.digests, oracle);
    assert!(out.stats.rollbacks > 0, "schedule produced no rollbacks");
    assert!(out.stats.anti_messages_sent > 0);
    assert_eq!(out.stats.gvt_violations, 0);
    assert_eq!(out.stats.fossil_violations, 0);
    assert!(out.population_ok);
}

#[test]
fn anti_messages_all_find_their_twins() {
    let cfg = config(3, 16, 1.0, 8);
    let out = run_schedule(&cfg, 4, 300);
    // each anti-message annihilates exactly one positive: queued, processed or deferred
    assert!(out.stats.annihilations >= out.stats.anti_messages_sent);
    assert_eq!(out.digests, run_sequential(&cfg).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn any_schedule_commits_the_oracle_trace(
        lps in 1u32..=4,
        entities in 4u32..=24,
        density in prop_oneof![Just(0.25), Just(0.5), Just(1.0)],
        seed in 0u64..1000,
        schedule in any::<u64>(),
        gvt_every in 50u32..600,
    ) {
        let cfg = config(lps, entities, density, seed);
        let out = run_schedule(&cfg, schedule, gvt_every);
        prop_assert_eq!(out.digests, run_sequential(&cfg).unwrap());
        prop_assert!(out.gvt_log.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(out.stats.gvt_violations, 0);
        prop_assert_eq!(out.stats.fossil_violations, 0);
        prop_assert!(out.population_ok);
    }
}
