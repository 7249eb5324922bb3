//! The logical process: speculative execution, state saving, straggler
//! detection, rollback with anti-messages, annihilation and fossil collection.
//!
//! An LP owns a disjoint set of entities and processes its future events one
//! timestamp bucket at a time without waiting for other LPs. Before each
//! bucket it saves a full copy of its entity states. A message that sorts
//! before the last processed event (a straggler), or an anti-message whose
//! positive twin was already processed, rolls the LP back to the newest
//! snapshot older than the offending timestamp.
//!
//! The LP never talks to other LPs directly. Remote sends and anti-messages
//! accumulate in an outbox that the caller drains and routes; acknowledgments
//! are fed back through [`LogicalProcess::handle_ack`].

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::digest::CommitDigest;
use crate::error::{Error, Result};
use crate::event::{make_antimessage, EventId, EventKey, EventMessage, LpId, Sign, VirtualTime};
use crate::model::Model;
use crate::partition::Partition;
use crate::queue::EventHeap;

/// Saved entity states. `at_time` is the LVT when the snapshot was taken, i.e.
/// just before the next bucket was processed.
#[derive(Clone, Debug)]
pub struct StateSnapshot<E> {
    pub at_time: VirtualTime,
    processed_len: usize,
    sent_len: usize,
    entities: Vec<E>,
}

#[derive(Clone, Copy, Debug)]
struct SentEntry {
    msg: EventMessage,
    local: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReceiveOutcome {
    /// Positive message queued for future processing.
    Enqueued,
    /// Positive message met an anti-message that arrived first.
    Annihilated,
    /// Anti-message removed its still-queued twin.
    AnnihilatedQueued,
    /// The message forced a rollback.
    RollbackTriggered,
    /// Anti-message arrived before its twin and is parked.
    Deferred,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LpStats {
    pub events_processed: u64,
    pub buckets_processed: u64,
    pub rollbacks: u64,
    pub events_rolled_back: u64,
    pub anti_messages_sent: u64,
    pub annihilations: u64,
    /// Received messages stamped below the last applied GVT.
    pub gvt_violations: u64,
    /// Fossil-collection safety breaches: an LP ahead of GVT left without a
    /// snapshot at or below it, or a rollback undoing events below GVT.
    pub fossil_violations: u64,
}

impl LpStats {
    pub fn merge(&mut self, other: &LpStats) {
        self.events_processed += other.events_processed;
        self.buckets_processed += other.buckets_processed;
        self.rollbacks += other.rollbacks;
        self.events_rolled_back += other.events_rolled_back;
        self.anti_messages_sent += other.anti_messages_sent;
        self.annihilations += other.annihilations;
        self.gvt_violations += other.gvt_violations;
        self.fossil_violations += other.fossil_violations;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FossilReport {
    pub snapshots_freed: usize,
    pub processed_freed: usize,
    pub sent_freed: usize,
    pub committed: usize,
}

// (timestamp, id, is_negative)
type UnackedKey = (VirtualTime, EventId, bool);

pub struct LogicalProcess<'m, M: Model> {
    id: LpId,
    model: &'m M,
    partition: Partition,
    end_time: VirtualTime,
    lvt: VirtualTime,
    gvt: VirtualTime,
    future: EventHeap,
    entities: Vec<M::Entity>,
    // processed and sent logs are addressed by absolute position; the deques
    // hold positions `base..base + len`.
    processed: VecDeque<EventMessage>,
    processed_base: usize,
    processed_ids: HashSet<EventId>,
    sent: VecDeque<SentEntry>,
    sent_base: usize,
    snapshots: VecDeque<StateSnapshot<M::Entity>>,
    pending_antis: HashSet<EventId>,
    unacked: BTreeMap<UnackedKey, u32>,
    committed_upto: usize,
    commits: CommitDigest,
    last_key: Option<EventKey>,
    dropped_last_key: Option<EventKey>,
    outbox: Vec<EventMessage>,
    scratch: Vec<EventMessage>,
    stats: LpStats,
}

impl<'m, M: Model> LogicalProcess<'m, M> {
    pub fn new(id: LpId, model: &'m M, partition: Partition, end_time: VirtualTime) -> Self {
        let entities = partition
            .entities_of(id)
            .into_iter()
            .map(|e| model.init_entity(e))
            .collect();
        LogicalProcess {
            id,
            model,
            partition,
            end_time,
            lvt: VirtualTime::ZERO,
            gvt: VirtualTime::ZERO,
            future: EventHeap::new(),
            entities,
            processed: VecDeque::new(),
            processed_base: 0,
            processed_ids: HashSet::new(),
            sent: VecDeque::new(),
            sent_base: 0,
            snapshots: VecDeque::new(),
            pending_antis: HashSet::new(),
            unacked: BTreeMap::new(),
            committed_upto: 0,
            commits: CommitDigest::default(),
            last_key: None,
            dropped_last_key: None,
            outbox: Vec::new(),
            scratch: Vec::new(),
            stats: LpStats::default(),
        }
    }

    pub fn id(&self) -> LpId {
        self.id
    }

    pub fn lvt(&self) -> VirtualTime {
        self.lvt
    }

    /// Last GVT applied through [`fossil_collect`](Self::fossil_collect).
    pub fn gvt(&self) -> VirtualTime {
        self.gvt
    }

    pub fn future(&self) -> &EventHeap {
        &self.future
    }

    pub fn stats(&self) -> &LpStats {
        &self.stats
    }

    pub fn commits(&self) -> &CommitDigest {
        &self.commits
    }

    pub fn entities(&self) -> &[M::Entity] {
        &self.entities
    }

    pub fn processed_log_len(&self) -> usize {
        self.processed.len()
    }

    pub fn sent_log_len(&self) -> usize {
        self.sent.len()
    }

    pub fn unacked_len(&self) -> usize {
        self.unacked.values().map(|c| *c as usize).sum()
    }

    pub fn pending_antis_len(&self) -> usize {
        self.pending_antis.len()
    }

    pub fn snapshot_times(&self) -> Vec<VirtualTime> {
        self.snapshots.iter().map(|s| s.at_time).collect()
    }

    /// Sum of the model's per-entity digests over the entities owned here.
    pub fn state_digest(&self) -> u64 {
        self.entities
            .iter()
            .fold(0u64, |acc, e| acc.wrapping_add(self.model.entity_digest(e)))
    }

    /// Places an initial event straight into the future list.
    pub fn seed(&mut self, msg: EventMessage) -> Result<()> {
        debug_assert_eq!(self.partition.lp_of(msg.target_entity), self.id);
        self.future.insert(msg)
    }

    /// Timestamp of the next bucket if it lies within the run horizon.
    pub fn next_runnable_time(&self) -> Option<VirtualTime> {
        self.future.min_time().filter(|t| *t <= self.end_time)
    }

    /// Remote positive and negative messages produced since the last call.
    pub fn take_outbox(&mut self) -> Vec<EventMessage> {
        std::mem::take(&mut self.outbox)
    }

    pub fn has_outbox(&self) -> bool {
        !self.outbox.is_empty()
    }

    /// Executes the next timestamp bucket. Returns how many events ran; 0 when
    /// there is nothing to do before the end time.
    pub fn process_next(&mut self) -> Result<usize> {
        let Some(t) = self.next_runnable_time() else {
            return Ok(0);
        };
        self.save_state();
        let bucket = self.future.pop_min_bucket().expect("min_time was Some");
        let n = bucket.len();
        for ev in bucket {
            let slot = self.partition.slot_of(ev.target_entity);
            self.scratch.clear();
            self.model
                .handle(&mut self.entities[slot], &ev, &mut self.scratch);
            self.processed.push_back(ev);
            self.processed_ids.insert(ev.id);
            self.last_key = Some(ev.key());
            for i in 0..self.scratch.len() {
                let generated = self.scratch[i];
                debug_assert!(
                    generated.timestamp > ev.timestamp,
                    "lookahead must be positive"
                );
                let local = self.partition.lp_of(generated.target_entity) == self.id;
                self.sent.push_back(SentEntry {
                    msg: generated,
                    local,
                });
                if local {
                    self.future.insert(generated)?;
                } else {
                    self.track_unacked(&generated);
                    self.outbox.push(generated);
                }
            }
        }
        self.lvt = t;
        self.stats.events_processed += n as u64;
        self.stats.buckets_processed += 1;
        Ok(n)
    }

    pub fn receive(&mut self, msg: EventMessage) -> Result<ReceiveOutcome> {
        match msg.sign {
            Sign::Positive => self.receive_positive(msg),
            Sign::Negative => self.receive_negative(msg),
        }
    }

    pub fn receive_positive(&mut self, msg: EventMessage) -> Result<ReceiveOutcome> {
        if !msg.is_positive() {
            return Err(Error::WrongSign {
                id: msg.id,
                expected: "positive",
            });
        }
        self.check_gvt_safety(&msg);
        if self.pending_antis.remove(&msg.id) {
            self.stats.annihilations += 1;
            return Ok(ReceiveOutcome::Annihilated);
        }
        if self.future.contains(&msg.id) || self.processed_ids.contains(&msg.id) {
            return Err(Error::DuplicateEvent(msg.id));
        }
        if self.is_straggler(&msg) {
            self.rollback_to(msg.timestamp, None)?;
            self.future.insert(msg)?;
            Ok(ReceiveOutcome::RollbackTriggered)
        } else {
            self.future.insert(msg)?;
            Ok(ReceiveOutcome::Enqueued)
        }
    }

    pub fn receive_negative(&mut self, anti: EventMessage) -> Result<ReceiveOutcome> {
        if anti.is_positive() {
            return Err(Error::WrongSign {
                id: anti.id,
                expected: "negative",
            });
        }
        self.check_gvt_safety(&anti);
        if self.future.remove_by_id(&anti.id).is_some() {
            self.stats.annihilations += 1;
            return Ok(ReceiveOutcome::AnnihilatedQueued);
        }
        if self.processed_ids.contains(&anti.id) {
            self.rollback_to(anti.timestamp, Some(anti.id))?;
            self.stats.annihilations += 1;
            return Ok(ReceiveOutcome::RollbackTriggered);
        }
        if !self.pending_antis.insert(anti.id) {
            return Err(Error::DuplicateAnti(anti.id));
        }
        Ok(ReceiveOutcome::Deferred)
    }

    /// Rolls back for `cause`: a positive straggler (which is *not* enqueued
    /// here) or an anti-message whose twin was processed (the twin is
    /// discarded). Returns the restored LVT.
    pub fn rollback(&mut self, cause: &EventMessage) -> Result<VirtualTime> {
        match cause.sign {
            Sign::Positive => self.rollback_to(cause.timestamp, None),
            Sign::Negative => self.rollback_to(cause.timestamp, Some(cause.id)),
        }
    }

    /// Sender side of an acknowledgment: `msg` (positive or negative) reached
    /// its destination.
    pub fn handle_ack(&mut self, msg: &EventMessage) -> Result<()> {
        let key = unacked_key(msg);
        match self.unacked.get_mut(&key) {
            Some(count) if *count > 1 => *count -= 1,
            Some(_) => {
                self.unacked.remove(&key);
            }
            None => return Err(Error::UnknownAck(msg.id)),
        }
        Ok(())
    }

    /// Lower bound on any timestamp this LP can still produce or receive via
    /// its own unacknowledged sends. `+inf` for a drained LP.
    pub fn local_min(&self) -> VirtualTime {
        let next_work = self.future.min_time().unwrap_or(VirtualTime::INFINITY);
        let in_flight = self
            .unacked
            .keys()
            .next()
            .map(|k| k.0)
            .unwrap_or(VirtualTime::INFINITY);
        next_work.min(in_flight)
    }

    /// Applies a committed GVT: commits processed events at or below it and
    /// reclaims snapshots and log entries that no rollback can reach.
    pub fn fossil_collect(&mut self, gvt: VirtualTime) -> Result<FossilReport> {
        if gvt < self.gvt {
            return Err(Error::NonMonotoneGvt {
                previous: self.gvt,
                proposed: gvt,
            });
        }
        self.gvt = gvt;
        let mut report = FossilReport::default();

        let processed_end = self.processed_end();
        while self.committed_upto < processed_end {
            let ev = self.processed[self.committed_upto - self.processed_base];
            if ev.timestamp > gvt {
                break;
            }
            self.commits.commit(&ev);
            self.committed_upto += 1;
            report.committed += 1;
        }

        // Everything processed is final: checkpoint here so the logs drain.
        if self.lvt <= gvt && !self.processed.is_empty() {
            self.save_state();
        }

        if let Some(keep) = self.snapshots.iter().rposition(|s| s.at_time <= gvt) {
            self.snapshots.drain(..keep);
            report.snapshots_freed = keep;
        }

        if let Some(front) = self.snapshots.front() {
            if front.processed_len <= self.committed_upto {
                let (p_cut, s_cut) = (front.processed_len, front.sent_len);
                report.processed_freed = p_cut - self.processed_base;
                for ev in self.processed.drain(..report.processed_freed) {
                    self.processed_ids.remove(&ev.id);
                    self.dropped_last_key = Some(ev.key());
                }
                self.processed_base = p_cut;
                report.sent_freed = s_cut - self.sent_base;
                self.sent.drain(..report.sent_freed);
                self.sent_base = s_cut;
            }
        }

        if self.lvt > gvt && !self.snapshots.iter().any(|s| s.at_time <= gvt) {
            self.stats.fossil_violations += 1;
        }
        Ok(report)
    }

    fn processed_end(&self) -> usize {
        self.processed_base + self.processed.len()
    }

    fn sent_end(&self) -> usize {
        self.sent_base + self.sent.len()
    }

    /// Pushes a snapshot of the current state unless the newest one already
    /// describes it. A snapshot with the same `at_time` is superseded: every
    /// restore rule picks the newest candidate among equal times.
    fn save_state(&mut self) {
        let position = self.processed_end();
        if let Some(top) = self.snapshots.back() {
            if top.processed_len == position {
                return;
            }
            if top.at_time == self.lvt {
                self.snapshots.pop_back();
            }
        }
        self.snapshots.push_back(StateSnapshot {
            at_time: self.lvt,
            processed_len: position,
            sent_len: self.sent_end(),
            entities: self.entities.clone(),
        });
    }

    fn is_straggler(&self, msg: &EventMessage) -> bool {
        self.last_key.is_some_and(|last| msg.key() < last)
    }

    fn check_gvt_safety(&mut self, msg: &EventMessage) {
        if msg.timestamp < self.gvt {
            self.stats.gvt_violations += 1;
            log::error!(
                "{}: received {} stamped {} below GVT {}",
                self.id,
                msg.id,
                msg.timestamp,
                self.gvt
            );
        }
    }

    fn track_unacked(&mut self, msg: &EventMessage) {
        *self.unacked.entry(unacked_key(msg)).or_insert(0) += 1;
    }

    fn rollback_to(
        &mut self,
        cause_time: VirtualTime,
        annihilate: Option<EventId>,
    ) -> Result<VirtualTime> {
        let idx = self
            .snapshots
            .iter()
            .rposition(|s| s.at_time < cause_time)
            .ok_or(Error::NoRestorePoint {
                restore: cause_time,
                gvt: self.gvt,
            })?;
        let (restore_time, processed_len, sent_len) = {
            let s = &self.snapshots[idx];
            (s.at_time, s.processed_len, s.sent_len)
        };
        if processed_len < self.committed_upto {
            return Err(Error::RollbackIntoCommitted {
                restore: restore_time,
                gvt: self.gvt,
            });
        }

        let undone: Vec<EventMessage> = self
            .processed
            .drain(processed_len - self.processed_base..)
            .collect();
        if undone.first().is_some_and(|e| e.timestamp < self.gvt) {
            self.stats.fossil_violations += 1;
        }
        self.stats.events_rolled_back += undone.len() as u64;
        for ev in undone {
            self.processed_ids.remove(&ev.id);
            if Some(ev.id) != annihilate {
                self.future.insert(ev)?;
            }
        }

        let retracted: Vec<SentEntry> = self.sent.drain(sent_len - self.sent_base..).collect();
        for entry in retracted {
            if entry.local {
                self.future
                    .remove_by_id(&entry.msg.id)
                    .ok_or(Error::LostLocalEvent(entry.msg.id))?;
            } else {
                let anti = make_antimessage(&entry.msg)?;
                self.track_unacked(&anti);
                self.outbox.push(anti);
                self.stats.anti_messages_sent += 1;
            }
        }

        self.entities.clone_from(&self.snapshots[idx].entities);
        self.snapshots.truncate(idx + 1);
        self.lvt = restore_time;
        self.last_key = self
            .processed
            .back()
            .map(|e| e.key())
            .or(self.dropped_last_key);
        self.stats.rollbacks += 1;
        Ok(restore_time)
    }
}

fn unacked_key(msg: &EventMessage) -> UnackedKey {
    (msg.timestamp, msg.id, msg.sign == Sign::Negative)
}
