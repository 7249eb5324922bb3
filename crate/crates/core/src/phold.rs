//! PHOLD: a fixed population of events bouncing between entities.
//!
//! Every handled event costs a configurable number of floating-point
//! multiply-adds and schedules exactly one successor with an exponentially
//! distributed delay and a uniformly chosen recipient. All randomness comes
//! from a counter-based generator keyed by `(seed, entity, counter)`, so a
//! rolled-back entity regenerates the same successors on replay.

use std::fmt;

use crate::digest::{hash_words, mix64};
use crate::error::{Error, Result};
use crate::event::{EntityId, EventId, EventMessage, VirtualTime};
use crate::model::Model;

const TWO_POW_NEG_52: f64 = 1.0 / (1u64 << 52) as f64;
const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug, PartialEq)]
pub struct PholdConfig {
    pub num_lps: u32,
    pub num_entities: u32,
    /// Fraction of entities that start the run with one event.
    pub event_density: f64,
    /// Multiply-add iterations per handled event.
    pub workload_fpops: u64,
    pub mean_delay: f64,
    pub end_time: f64,
    pub seed: u64,
    /// Draw recipients from every entity except the sender.
    pub exclude_self: bool,
}

impl Default for PholdConfig {
    fn default() -> Self {
        PholdConfig {
            num_lps: 1,
            num_entities: 64,
            event_density: 0.5,
            workload_fpops: 0,
            mean_delay: 5.0,
            end_time: 100.0,
            seed: 1,
            exclude_self: false,
        }
    }
}

impl PholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_lps == 0 {
            return Err(Error::Config("num_lps must be at least 1".into()));
        }
        if self.num_entities == 0 {
            return Err(Error::Config("num_entities must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.event_density) {
            return Err(Error::Config(format!(
                "event_density {} outside [0, 1]",
                self.event_density
            )));
        }
        if !(self.mean_delay.is_finite() && self.mean_delay > 0.0) {
            return Err(Error::Config(format!(
                "mean_delay {} must be finite and positive",
                self.mean_delay
            )));
        }
        VirtualTime::new(self.end_time).map_err(|_| {
            Error::Config(format!("end_time {} is not a valid time", self.end_time))
        })?;
        if self.num_entities < self.num_lps {
            log::warn!(
                "{} entities over {} LPs leaves some LPs without entities",
                self.num_entities,
                self.num_lps
            );
        }
        Ok(())
    }

    pub fn end_time(&self) -> VirtualTime {
        VirtualTime::new(self.end_time).expect("validated end_time")
    }

    /// `ceil(density * entities)`, ignoring floating noise below 1e-9.
    pub fn initial_population(&self) -> u32 {
        let exact = self.event_density * f64::from(self.num_entities);
        let nearest = exact.round();
        let n = if (exact - nearest).abs() < 1e-9 {
            nearest
        } else {
            exact.ceil()
        };
        (n as u32).min(self.num_entities)
    }

    /// Stable textual key identifying the committed trace. The LP count is
    /// left out on purpose: the trace does not depend on it.
    pub fn canonical_key(&self) -> String {
        format!(
            "entities={} density={} workload={} mean={} end={} seed={} exclude_self={}",
            self.num_entities,
            self.event_density,
            self.workload_fpops,
            self.mean_delay,
            self.end_time,
            self.seed,
            self.exclude_self
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntityState {
    pub id: EntityId,
    pub event_counter: u64,
    pub checksum: f64,
}

impl EntityState {
    pub fn new(id: EntityId) -> Self {
        EntityState {
            id,
            event_counter: 0,
            checksum: 0.0,
        }
    }

    pub fn digest(&self) -> u64 {
        hash_words(&[
            u64::from(self.id.0),
            self.event_counter,
            self.checksum.to_bits(),
        ])
    }
}

/// Two independent 64-bit words for `(seed, entity, counter)`.
fn sample_words(seed: u64, entity: EntityId, counter: u64) -> (u64, u64) {
    let h = mix64(mix64(mix64(seed ^ 0x5851_f42d_4c95_7f2d) ^ u64::from(entity.0)) ^ counter);
    (
        mix64(h.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        mix64(h.wrapping_add(0x3c6e_f372_fe94_f82a)),
    )
}

/// Maps a word onto the open interval (0, 1). 52 bits keep `x + 0.5` exact
/// at the top end, so 1.0 is never produced.
fn open_unit(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * TWO_POW_NEG_52
}

/// Exponential delay with the given mean; always strictly positive.
pub fn exp_sample(seed: u64, entity: EntityId, counter: u64, mean: f64) -> f64 {
    let (w, _) = sample_words(seed, entity, counter);
    -mean * open_unit(w).ln()
}

/// Uniform recipient in `0..num_entities`. With `exclude_self` (and more than
/// one entity) the sender itself is never drawn.
pub fn uniform_sample(
    seed: u64,
    entity: EntityId,
    counter: u64,
    num_entities: u32,
    exclude_self: bool,
) -> EntityId {
    let (_, w) = sample_words(seed, entity, counter);
    let scaled = |n: u32| ((u128::from(w) * u128::from(n)) >> 64) as u32;
    if exclude_self && num_entities > 1 {
        let pick = scaled(num_entities - 1);
        EntityId(if pick >= entity.0 { pick + 1 } else { pick })
    } else {
        EntityId(scaled(num_entities))
    }
}

/// Runs `n_fpops` multiply-add steps on an accumulator seeded from `id` and
/// returns how far the accumulator moved. Zero iterations contribute exactly 0.
pub fn workload(n_fpops: u64, id: EventId) -> f64 {
    let start =
        1.0 + (mix64((u64::from(id.sender.0) << 32) ^ id.sequence) >> 11) as f64 * TWO_POW_NEG_53;
    let mut acc = start;
    for _ in 0..n_fpops {
        acc = acc * 0.999_999_9 + 1.0e-7;
    }
    acc - start
}

/// The initial event population: one event from each of the first
/// `ceil(density * E)` entities.
pub fn init_model(cfg: &PholdConfig) -> Vec<EventMessage> {
    (0..cfg.initial_population())
        .map(|e| {
            let source = EntityId(e);
            let delay = exp_sample(cfg.seed, source, 0, cfg.mean_delay);
            let target = uniform_sample(cfg.seed, source, 0, cfg.num_entities, cfg.exclude_self);
            EventMessage::new(
                EventId::new(source, 0),
                VirtualTime::ZERO.advance(delay),
                source,
                target,
            )
        })
        .collect()
}

/// Consumes `event` at `state` and returns its successor.
pub fn handle_event(
    state: &mut EntityState,
    event: &EventMessage,
    cfg: &PholdConfig,
) -> EventMessage {
    debug_assert_eq!(event.target_entity, state.id);
    state.checksum += workload(cfg.workload_fpops, event.id);
    state.event_counter += 1;
    let counter = state.event_counter;
    let delay = exp_sample(cfg.seed, state.id, counter, cfg.mean_delay);
    let target = uniform_sample(
        cfg.seed,
        state.id,
        counter,
        cfg.num_entities,
        cfg.exclude_self,
    );
    EventMessage::new(
        EventId::new(state.id, counter),
        event.timestamp.advance(delay),
        state.id,
        target,
    )
}

/// [`Model`] adapter used by the parallel engine.
#[derive(Clone, Debug)]
pub struct PholdModel {
    cfg: PholdConfig,
}

impl PholdModel {
    pub fn new(cfg: PholdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(PholdModel { cfg })
    }

    pub fn config(&self) -> &PholdConfig {
        &self.cfg
    }
}

impl Model for PholdModel {
    type Entity = EntityState;

    fn num_entities(&self) -> u32 {
        self.cfg.num_entities
    }

    fn init_entity(&self, id: EntityId) -> EntityState {
        EntityState::new(id)
    }

    fn initial_events(&self) -> Vec<EventMessage> {
        init_model(&self.cfg)
    }

    fn handle(&self, entity: &mut EntityState, event: &EventMessage, emit: &mut Vec<EventMessage>) {
        emit.push(handle_event(entity, event, &self.cfg));
    }

    fn entity_digest(&self, entity: &EntityState) -> u64 {
        entity.digest()
    }
}

impl fmt::Display for PholdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lps={} {}", self.num_lps, self.canonical_key())
    }
}
