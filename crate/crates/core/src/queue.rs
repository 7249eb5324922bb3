//! Future-event list.
//!
//! [`EventHeap`] is a binary min-heap whose nodes are *buckets*: every pending
//! event sharing one timestamp lives in the same node, kept sorted by
//! [`EventKey`]. Two side indexes (timestamp → heap slot, event id → bucket
//! timestamp) make arbitrary removal possible, which anti-message
//! annihilation needs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::event::{EventId, EventMessage, VirtualTime};

#[derive(Debug, Clone)]
struct Bucket {
    timestamp: VirtualTime,
    events: Vec<EventMessage>,
}

#[derive(Debug, Clone, Default)]
pub struct EventHeap {
    heap: Vec<Bucket>,
    slot_of: HashMap<VirtualTime, usize>,
    index: HashMap<EventId, VirtualTime>,
}

impl EventHeap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of queued events (not buckets).
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn bucket_count(&self) -> usize {
        self.heap.len()
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.index.contains_key(id)
    }

    pub fn min_time(&self) -> Option<VirtualTime> {
        self.heap.first().map(|b| b.timestamp)
    }

    pub fn insert(&mut self, msg: EventMessage) -> Result<()> {
        if !msg.is_positive() {
            return Err(Error::WrongSign {
                id: msg.id,
                expected: "positive",
            });
        }
        if self.index.contains_key(&msg.id) {
            return Err(Error::DuplicateEvent(msg.id));
        }
        self.index.insert(msg.id, msg.timestamp);
        match self.slot_of.get(&msg.timestamp) {
            Some(&slot) => {
                let events = &mut self.heap[slot].events;
                let key = msg.key();
                let at = events.partition_point(|e| e.key() < key);
                events.insert(at, msg);
            }
            None => {
                let slot = self.heap.len();
                self.heap.push(Bucket {
                    timestamp: msg.timestamp,
                    events: vec![msg],
                });
                self.slot_of.insert(msg.timestamp, slot);
                self.sift_up(slot);
            }
        }
        Ok(())
    }

    /// Removes and returns every event of the minimal timestamp in key order;
    /// `None` signals an empty queue.
    pub fn pop_min_bucket(&mut self) -> Option<Vec<EventMessage>> {
        if self.heap.is_empty() {
            return None;
        }
        let bucket = self.remove_slot(0);
        for e in &bucket.events {
            self.index.remove(&e.id);
        }
        Some(bucket.events)
    }

    pub fn remove_by_id(&mut self, id: &EventId) -> Option<EventMessage> {
        let ts = self.index.remove(id)?;
        let slot = self.slot_of[&ts];
        let events = &mut self.heap[slot].events;
        let at = events
            .iter()
            .position(|e| e.id == *id)
            .expect("index and bucket contents disagree");
        let msg = events.remove(at);
        if events.is_empty() {
            self.remove_slot(slot);
        }
        Some(msg)
    }

    /// All queued events in key order. Allocates; meant for inspection.
    pub fn to_sorted_vec(&self) -> Vec<EventMessage> {
        let mut all: Vec<EventMessage> = self
            .heap
            .iter()
            .flat_map(|b| b.events.iter().copied())
            .collect();
        all.sort_by_key(|e| e.key());
        all
    }

    fn remove_slot(&mut self, slot: usize) -> Bucket {
        let last = self.heap.len() - 1;
        self.swap(slot, last);
        let bucket = self.heap.pop().expect("non-empty");
        self.slot_of.remove(&bucket.timestamp);
        if slot < self.heap.len() {
            self.sift_down(slot);
            self.sift_up(slot);
        }
        bucket
    }

    fn swap(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        self.heap.swap(a, b);
        self.slot_of.insert(self.heap[a].timestamp, a);
        self.slot_of.insert(self.heap[b].timestamp, b);
    }

    fn sift_up(&mut self, mut slot: usize) {
        while slot > 0 {
            let parent = (slot - 1) / 2;
            if self.heap[slot].timestamp >= self.heap[parent].timestamp {
                break;
            }
            self.swap(slot, parent);
            slot = parent;
        }
    }

    fn sift_down(&mut self, mut slot: usize) {
        let n = self.heap.len();
        loop {
            let left = 2 * slot + 1;
            let right = left + 1;
            let mut smallest = slot;
            if left < n && self.heap[left].timestamp < self.heap[smallest].timestamp {
                smallest = left;
            }
            if right < n && self.heap[right].timestamp < self.heap[smallest].timestamp {
                smallest = right;
            }
            if smallest == slot {
                break;
            }
            self.swap(slot, smallest);
            slot = smallest;
        }
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        for (i, b) in self.heap.iter().enumerate() {
            if i > 0 {
                assert!(self.heap[(i - 1) / 2].timestamp <= b.timestamp);
            }
            assert_eq!(self.slot_of[&b.timestamp], i);
            assert!(!b.events.is_empty());
            for w in b.events.windows(2) {
                assert!(w[0].key() < w[1].key());
            }
            for e in &b.events {
                assert_eq!(e.timestamp, b.timestamp);
                assert_eq!(self.index[&e.id], b.timestamp);
            }
        }
        assert_eq!(self.slot_of.len(), self.heap.len());
        let total: usize = self.heap.iter().map(|b| b.events.len()).sum();
        assert_eq!(total, self.index.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EntityId;
    use proptest::prelude::*;

    fn ev(t: f64, target: u32, sender: u32, seq: u64) -> EventMessage {
        EventMessage::new(
            EventId::new(EntityId(sender), seq),
            VirtualTime::new(t).unwrap(),
            EntityId(sender),
            EntityId(target),
        )
    }

    fn vt(t: f64) -> VirtualTime {
        VirtualTime::new(t).unwrap()
    }

    #[test]
    fn min_time_tracks_smallest() {
        let mut h = EventHeap::new();
        assert_eq!(h.min_time(), None);
        h.insert(ev(5.0, 0, 0, 0)).unwrap();
        assert_eq!(h.min_time(), Some(vt(5.0)));
        h.insert(ev(3.0, 0, 0, 1)).unwrap();
        assert_eq!(h.min_time(), Some(vt(3.0)));
        h.insert(ev(9.0, 0, 0, 2)).unwrap();
        assert_eq!(h.min_time(), Some(vt(3.0)));
    }

    #[test]
    fn same_timestamp_events_share_a_bucket() {
        let mut h = EventHeap::new();
        let a = ev(7.0, 1, 0, 0);
        let b = ev(7.0, 2, 0, 1);
        h.insert(b).unwrap();
        h.insert(a).unwrap();
        h.insert(ev(2.0, 0, 1, 0)).unwrap();
        assert_eq!(h.bucket_count(), 2);
        assert_eq!(h.pop_min_bucket().unwrap().len(), 1);
        assert_eq!(h.pop_min_bucket().unwrap(), vec![a, b]);
        assert_eq!(h.pop_min_bucket(), None);
    }

    #[test]
    fn pop_sole_bucket_empties() {
        let mut h = EventHeap::new();
        let x = ev(2.0, 0, 0, 0);
        h.insert(x).unwrap();
        assert_eq!(h.pop_min_bucket(), Some(vec![x]));
        assert!(h.is_empty());
        assert_eq!(h.min_time(), None);
        assert_eq!(h.len(), 0);
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let mut h = EventHeap::new();
        h.insert(ev(1.0, 0, 1, 4)).unwrap();
        assert_eq!(
            h.insert(ev(2.0, 3, 1, 4)),
            Err(Error::DuplicateEvent(EventId::new(EntityId(1), 4)))
        );
    }

    #[test]
    fn negative_messages_are_not_queued() {
        let mut h = EventHeap::new();
        let anti = crate::event::make_antimessage(&ev(1.0, 0, 0, 0)).unwrap();
        assert!(matches!(h.insert(anti), Err(Error::WrongSign { .. })));
    }

    #[test]
    fn remove_by_id_cases() {
        let mut h = EventHeap::new();
        let a = ev(4.0, 0, 1, 4);
        let b = ev(4.0, 1, 2, 0);
        h.insert(a).unwrap();
        h.insert(b).unwrap();
        h.insert(ev(8.0, 1, 2, 1)).unwrap();

        assert_eq!(h.remove_by_id(&EventId::new(EntityId(9), 9)), None);
        assert_eq!(h.len(), 3);

        assert_eq!(h.remove_by_id(&a.id), Some(a));
        assert_eq!(h.min_time(), Some(vt(4.0)));
        assert_eq!(h.pop_min_bucket(), Some(vec![b]));

        let c = EventId::new(EntityId(2), 1);
        assert!(h.remove_by_id(&c).is_some());
        assert!(h.is_empty());
        h.check_invariants();
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(u8, u32),
        Pop,
        Remove(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (0u8..12, 0u32..4).prop_map(|(t, e)| Op::Insert(t, e)),
            1 => Just(Op::Pop),
            2 => any::<usize>().prop_map(Op::Remove),
        ]
    }

    proptest! {
        // Reference model: a flat vector sorted by key on every pop.
        #[test]
        fn matches_sorted_list_reference(ops in prop::collection::vec(op(), 0..200)) {
            let mut h = EventHeap::new();
            let mut reference: Vec<EventMessage> = Vec::new();
            let mut next_seq = 0u64;
            for op in ops {
                match op {
                    Op::Insert(t, e) => {
                        let m = ev(t as f64 * 0.5, e, e, next_seq);
                        next_seq += 1;
                        h.insert(m).unwrap();
                        reference.push(m);
                    }
                    Op::Pop => {
                        reference.sort_by_key(|m| m.key());
                        let expected: Vec<EventMessage> = match reference.first() {
                            Some(first) => {
                                let t = first.timestamp;
                                let n = reference.iter().take_while(|m| m.timestamp == t).count();
                                reference.drain(..n).collect()
                            }
                            None => Vec::new(),
                        };
                        let got = h.pop_min_bucket().unwrap_or_default();
                        prop_assert_eq!(got, expected);
                    }
                    Op::Remove(pick) => {
                        if reference.is_empty() {
                            prop_assert_eq!(h.remove_by_id(&EventId::new(EntityId(0), u64::MAX)), None);
                        } else {
                            let victim = reference.remove(pick % reference.len());
                            prop_assert_eq!(h.remove_by_id(&victim.id), Some(victim));
                        }
                    }
                }
                h.check_invariants();
                prop_assert_eq!(h.len(), reference.len());
            }
            reference.sort_by_key(|m| m.key());
            let mut drained = Vec::new();
            while let Some(bucket) = h.pop_min_bucket() {
                drained.extend(bucket);
            }
            prop_assert_eq!(drained, reference);
        }
    }
}
