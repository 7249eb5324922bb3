//! Single-threaded reference simulator.
//!
//! Runs the PHOLD model with a plain binary heap in strict [`EventKey`] order.
//! It shares the model code and the digests with the parallel engine but none
//! of the Time Warp machinery, so a digest mismatch points at the latter.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::digest::{CommitDigest, Digests};
use crate::error::Result;
use crate::event::{EntityId, EventKey, EventMessage};
use crate::phold::{handle_event, init_model, EntityState, PholdConfig};

pub type OracleResult = Digests;

struct Pending(EventMessage);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.0.key() == other.0.key()
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.key().cmp(&other.0.key())
    }
}

pub fn run_sequential(cfg: &PholdConfig) -> Result<OracleResult> {
    run_sequential_traced(cfg, |_| {})
}

/// Like [`run_sequential`], calling `on_commit` for every committed event in
/// commit order.
pub fn run_sequential_traced(
    cfg: &PholdConfig,
    mut on_commit: impl FnMut(&EventMessage),
) -> Result<OracleResult> {
    cfg.validate()?;
    let end = cfg.end_time();
    let mut entities: Vec<EntityState> = (0..cfg.num_entities)
        .map(|e| EntityState::new(EntityId(e)))
        .collect();
    let mut queue: BinaryHeap<Reverse<Pending>> = init_model(cfg)
        .into_iter()
        .map(|m| Reverse(Pending(m)))
        .collect();
    let mut commits = CommitDigest::default();
    let mut last: Option<EventKey> = None;

    while let Some(Reverse(Pending(ev))) = queue.pop() {
        if ev.timestamp > end {
            break;
        }
        debug_assert!(
            last.is_none_or(|k| k < ev.key()),
            "keys must be unique and increasing"
        );
        last = Some(ev.key());
        let next = handle_event(&mut entities[ev.target_entity.index()], &ev, cfg);
        commits.commit(&ev);
        on_commit(&ev);
        queue.push(Reverse(Pending(next)));
    }

    let state = entities
        .iter()
        .fold(0u64, |acc, e| acc.wrapping_add(e.digest()));
    Ok(Digests::new(commits, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::VirtualTime;

    #[test]
    fn zero_density_is_empty() {
        let cfg = PholdConfig {
            num_entities: 10,
            event_density: 0.0,
            ..PholdConfig::default()
        };
        let r = run_sequential(&cfg).unwrap();
        assert_eq!(r.committed_count, 0);
        assert_eq!(r.committed_digest, 0);
        let untouched = (0..10).fold(0u64, |acc, e| {
            acc.wrapping_add(EntityState::new(EntityId(e)).digest())
        });
        assert_eq!(r.final_state_digest, untouched);
        assert_eq!(r.max_timestamp_committed, VirtualTime::ZERO);
    }

    #[test]
    fn deterministic() {
        let cfg = PholdConfig {
            num_entities: 32,
            event_density: 1.0,
            workload_fpops: 100,
            ..PholdConfig::default()
        };
        assert_eq!(run_sequential(&cfg).unwrap(), run_sequential(&cfg).unwrap());
    }

    #[test]
    fn commits_in_strict_key_order_up_to_end_time() {
        let cfg = PholdConfig {
            num_entities: 16,
            event_density: 1.0,
            end_time: 50.0,
            ..PholdConfig::default()
        };
        let mut keys = Vec::new();
        let r = run_sequential_traced(&cfg, |e| keys.push(e.key())).unwrap();
        assert_eq!(keys.len() as u64, r.committed_count);
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(keys.iter().all(|k| k.timestamp.value() <= 50.0));
        assert_eq!(keys.last().unwrap().timestamp, r.max_timestamp_committed);
    }

    // One entity, every event bounces back to itself: the committed count is
    // the length of the exponential chain below t=20. Frozen value computed
    // by an independent Python re-implementation of the sampler.
    #[test]
    fn single_entity_chain_golden() {
        let cfg = PholdConfig {
            num_entities: 1,
            event_density: 1.0,
            end_time: 20.0,
            mean_delay: 5.0,
            seed: 1,
            ..PholdConfig::default()
        };
        let r = run_sequential(&cfg).unwrap();
        assert_eq!(r.committed_count, 5);
    }

    #[test]
    fn lp_count_does_not_matter() {
        let base = PholdConfig {
            num_entities: 16,
            event_density: 0.5,
            ..PholdConfig::default()
        };
        let other = PholdConfig {
            num_lps: 3,
            ..base.clone()
        };
        assert_eq!(
            run_sequential(&base).unwrap(),
            run_sequential(&other).unwrap()
        );
    }
}
