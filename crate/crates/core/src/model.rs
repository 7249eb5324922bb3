use crate::event::{EntityId, EventMessage};

/// A simulation model runnable by the engine.
///
/// Handlers must be deterministic functions of the entity state and the
/// event: rollback restores entity state and re-executes, and the result has
/// to match the first execution bit for bit when the inputs match.
pub trait Model: Send + Sync {
    type Entity: Clone + Send;

    fn num_entities(&self) -> u32;

    fn init_entity(&self, id: EntityId) -> Self::Entity;

    /// Events present at time zero.
    fn initial_events(&self) -> Vec<EventMessage>;

    /// Executes `event` against `entity`, pushing newly scheduled events onto
    /// `emit`. Every emitted timestamp must be strictly greater than
    /// `event.timestamp`.
    fn handle(&self, entity: &mut Self::Entity, event: &EventMessage, emit: &mut Vec<EventMessage>);

    /// Order-independent contribution of one entity to the final state digest.
    fn entity_digest(&self, entity: &Self::Entity) -> u64;
}
