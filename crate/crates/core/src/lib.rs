//! Optimistic parallel discrete-event simulation.
//!
//! The crate implements the Time Warp protocol on a single shared-memory
//! machine: logical processes ([`lp`]) execute events speculatively, roll back
//! on stragglers and cancel their speculative sends with anti-messages. A
//! barrier-style, acknowledgment-based GVT computation ([`gvt`]) bounds how
//! far back any rollback can reach, which drives fossil collection and
//! termination. [`phold`] provides the PHOLD benchmark model and [`oracle`] a
//! sequential simulator whose digests every parallel run must reproduce.
//!
//! ```no_run
//! use timewarp::{engine, oracle, phold::PholdConfig};
//!
//! let cfg = PholdConfig { num_lps: 4, num_entities: 256, ..PholdConfig::default() };
//! let run = engine::run_phold(&cfg, &engine::EngineOptions::default()).unwrap();
//! assert_eq!(run.digests, oracle::run_sequential(&cfg).unwrap());
//! ```

pub mod digest;
pub mod engine;
pub mod error;
pub mod event;
pub mod gvt;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod phold;
pub mod queue;
pub mod transport;

pub use digest::Digests;
pub use engine::{run_phold, EngineOptions, RunReport};
pub use error::{Error, Result};
pub use event::{EntityId, EventId, EventKey, EventMessage, LpId, Sign, VirtualTime};
pub use phold::PholdConfig;
