//! Shared vocabulary: virtual time, identities, messages and the total order
//! over events.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Simulated time.
///
/// Valid values are finite and `>= 0`. [`VirtualTime::INFINITY`] is a
/// distinguished sentinel above every valid time, used by GVT reports of
/// drained LPs. Comparison is exact (no epsilon): two times are equal only
/// when their bit patterns are.
#[derive(Clone, Copy, Default)]
pub struct VirtualTime(f64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0.0);
    pub const INFINITY: VirtualTime = VirtualTime(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            // folds -0.0 into +0.0
            Ok(VirtualTime(value + 0.0))
        } else {
            Err(Error::InvalidTime(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn to_bits(self) -> u64 {
        self.0.to_bits()
    }

    /// `self + delta`, bumped to the next representable value when the sum
    /// rounds back onto `self`. Keeps lookahead strictly positive.
    pub fn advance(self, delta: f64) -> VirtualTime {
        debug_assert!(delta > 0.0 && delta.is_finite());
        let t = self.0 + delta;
        if t > self.0 {
            VirtualTime(t)
        } else {
            VirtualTime(self.0.next_up())
        }
    }
}

impl PartialEq for VirtualTime {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for VirtualTime {}

impl Hash for VirtualTime {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state)
    }
}

impl PartialOrd for VirtualTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VirtualTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Debug for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("+inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl TryFrom<f64> for VirtualTime {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        VirtualTime::new(value)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct LpId(pub u32);

impl LpId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lp{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct EntityId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Run-unique message identity.
///
/// `sender` is the generating entity and `sequence` that entity's event
/// counter at generation time. Both are restored by rollback, so re-executed
/// events regenerate the same identities on every LP count.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct EventId {
    pub sender: EntityId,
    pub sequence: u64,
}

impl EventId {
    pub fn new(sender: EntityId, sequence: u64) -> Self {
        EventId { sender, sequence }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.sender.0, self.sequence)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Sign {
    Positive,
    Negative,
}

/// A timestamped model event. A negative-sign copy is an anti-message.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct EventMessage {
    pub id: EventId,
    pub timestamp: VirtualTime,
    pub source_entity: EntityId,
    pub target_entity: EntityId,
    pub sign: Sign,
    /// Model-defined opaque word.
    pub payload: u64,
}

impl EventMessage {
    pub fn new(
        id: EventId,
        timestamp: VirtualTime,
        source_entity: EntityId,
        target_entity: EntityId,
    ) -> Self {
        EventMessage {
            id,
            timestamp,
            source_entity,
            target_entity,
            sign: Sign::Positive,
            payload: 0,
        }
    }

    pub fn with_payload(mut self, payload: u64) -> Self {
        self.payload = payload;
        self
    }

    pub fn key(&self) -> EventKey {
        EventKey {
            timestamp: self.timestamp,
            target_entity: self.target_entity,
            id: self.id,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.sign == Sign::Positive
    }
}

/// Negative twin of `msg`; every other field is copied unchanged.
pub fn make_antimessage(msg: &EventMessage) -> Result<EventMessage> {
    match msg.sign {
        Sign::Positive => Ok(EventMessage {
            sign: Sign::Negative,
            ..*msg
        }),
        Sign::Negative => Err(Error::AlreadyNegative(msg.id)),
    }
}

/// Sort key for events: `(timestamp, target_entity, sender, sequence)`.
///
/// Field order matters: the derived `Ord` is lexicographic in declaration
/// order and `EventId` orders by `(sender, sequence)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct EventKey {
    pub timestamp: VirtualTime,
    pub target_entity: EntityId,
    pub id: EventId,
}

pub fn compare(a: &EventKey, b: &EventKey) -> Ordering {
    a.cmp(b)
}
