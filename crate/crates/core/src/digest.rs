//! Order-independent digests over committed events and final entity states.
//!
//! Each item is hashed independently and the hashes are summed with wrapping
//! arithmetic, so partial digests from different LPs (or from the sequential
//! oracle) combine to the same value regardless of commit order.

use crate::event::{EventMessage, VirtualTime};

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a sequence of words into one.
pub fn hash_words(words: &[u64]) -> u64 {
    words.iter().fold(0x6a09_e667_f3bc_c908, |h, w| {
        mix64(h ^ mix64(w.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    })
}

pub fn event_hash(msg: &EventMessage) -> u64 {
    hash_words(&[
        msg.timestamp.to_bits(),
        u64::from(msg.target_entity.0),
        u64::from(msg.id.sender.0),
        msg.id.sequence,
    ])
}

/// Running reduction of a committed event stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommitDigest {
    pub digest: u64,
    pub count: u64,
    pub max_timestamp: VirtualTime,
}

impl CommitDigest {
    pub fn commit(&mut self, msg: &EventMessage) {
        self.digest = self.digest.wrapping_add(event_hash(msg));
        self.count += 1;
        self.max_timestamp = self.max_timestamp.max(msg.timestamp);
    }

    pub fn merge(&mut self, other: &CommitDigest) {
        self.digest = self.digest.wrapping_add(other.digest);
        self.count += other.count;
        self.max_timestamp = self.max_timestamp.max(other.max_timestamp);
    }
}

/// The comparison handle between a parallel run and the sequential oracle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Digests {
    pub committed_digest: u64,
    pub committed_count: u64,
    pub final_state_digest: u64,
    pub max_timestamp_committed: VirtualTime,
}

impl Digests {
    pub fn new(commits: CommitDigest, final_state_digest: u64) -> Self {
        Digests {
            committed_digest: commits.digest,
            committed_count: commits.count,
            final_state_digest,
            max_timestamp_committed: commits.max_timestamp,
        }
    }

    /// Human-readable list of fields that differ from `expected`.
    pub fn diff(&self, expected: &Digests) -> Vec<String> {
        let mut out = Vec::new();
        if self.committed_digest != expected.committed_digest {
            out.push(format!(
                "committed_digest: got {:016x}, expected {:016x}",
                self.committed_digest, expected.committed_digest
            ));
        }
        if self.committed_count != expected.committed_count {
            out.push(format!(
                "committed_count: got {}, expected {}",
                self.committed_count, expected.committed_count
            ));
        }
        if self.final_state_digest != expected.final_state_digest {
            out.push(format!(
                "final_state_digest: got {:016x}, expected {:016x}",
                self.final_state_digest, expected.final_state_digest
            ));
        }
        if self.max_timestamp_committed != expected.max_timestamp_committed {
            out.push(format!(
                "max_timestamp_committed: got {}, expected {}",
                self.max_timestamp_committed, expected.max_timestamp_committed
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{EntityId, EventId};

    fn ev(t: f64, target: u32, sender: u32, seq: u64) -> EventMessage {
        EventMessage::new(
            EventId::new(EntityId(sender), seq),
            VirtualTime::new(t).unwrap(),
            EntityId(sender),
            EntityId(target),
        )
    }

    #[test]
    fn order_independent() {
        let events = [ev(1.0, 0, 1, 0), ev(2.5, 3, 0, 7), ev(2.5, 3, 1, 7)];
        let mut forward = CommitDigest::default();
        events.iter().for_each(|e| forward.commit(e));
        let mut split_a = CommitDigest::default();
        let mut split_b = CommitDigest::default();
        split_b.commit(&events[2]);
        split_a.commit(&events[0]);
        split_b.commit(&events[1]);
        split_a.merge(&split_b);
        assert_eq!(forward, split_a);
        assert_eq!(forward.count, 3);
        assert_eq!(forward.max_timestamp.value(), 2.5);
    }

    #[test]
    fn every_key_field_matters() {
        let base = event_hash(&ev(1.0, 2, 3, 4));
        assert_ne!(base, event_hash(&ev(1.5, 2, 3, 4)));
        assert_ne!(base, event_hash(&ev(1.0, 9, 3, 4)));
        assert_ne!(base, event_hash(&ev(1.0, 2, 9, 4)));
        assert_ne!(base, event_hash(&ev(1.0, 2, 3, 9)));
    }

    #[test]
    fn empty_digest_is_zero() {
        let d = Digests::new(CommitDigest::default(), 0);
        assert_eq!(d.committed_digest, 0);
        assert!(d.diff(&Digests::default()).is_empty());
    }
}
