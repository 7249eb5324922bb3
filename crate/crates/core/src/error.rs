use crate::event::{EventId, VirtualTime};

/// Errors raised by the engine, the LP runtime and the supporting data
/// structures.
///
/// `Protocol*` variants indicate a broken Time Warp invariant. They are fatal
/// for a run: the engine stops and reports them instead of producing digests.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid virtual time {0}: must be finite and non-negative")]
    InvalidTime(f64),

    #[error("anti-message requested for message {0} which is already negative")]
    AlreadyNegative(EventId),

    #[error("expected a {expected} message, got {id} with the opposite sign")]
    WrongSign { id: EventId, expected: &'static str },

    #[error("protocol violation: event {0} delivered twice")]
    DuplicateEvent(EventId),

    #[error("protocol violation: duplicate anti-message for {0}")]
    DuplicateAnti(EventId),

    #[error("protocol violation: acknowledgment for unknown message {0}")]
    UnknownAck(EventId),

    #[error("protocol violation: GVT moved backwards from {previous} to {proposed}")]
    NonMonotoneGvt {
        previous: VirtualTime,
        proposed: VirtualTime,
    },

    #[error("protocol violation: no snapshot precedes restore time {restore} (gvt {gvt})")]
    NoRestorePoint {
        restore: VirtualTime,
        gvt: VirtualTime,
    },

    #[error("protocol violation: rollback to {restore} would undo committed events (gvt {gvt})")]
    RollbackIntoCommitted {
        restore: VirtualTime,
        gvt: VirtualTime,
    },

    #[error("protocol violation: locally scheduled event {0} vanished before retraction")]
    LostLocalEvent(EventId),

    #[error("GVT round {round} is missing reports from {missing} LP(s)")]
    MissingReports { round: u64, missing: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("watchdog expired after {0:?} before GVT passed the end time")]
    Watchdog(std::time::Duration),

    #[error("LP worker failed: {0}")]
    Worker(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
