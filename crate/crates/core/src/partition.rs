use crate::error::{Error, Result};
use crate::event::{EntityId, LpId};

/// How entities are assigned to LPs. The mapping is static for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PartitionScheme {
    /// `lp(e) = e mod num_lps`
    #[default]
    RoundRobin,
    /// Contiguous ranges; the first `E mod L` LPs get one extra entity.
    Block,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partition {
    num_lps: u32,
    num_entities: u32,
    scheme: PartitionScheme,
}

impl Partition {
    pub fn new(num_lps: u32, num_entities: u32, scheme: PartitionScheme) -> Result<Self> {
        if num_lps == 0 {
            return Err(Error::Config("num_lps must be at least 1".into()));
        }
        if num_entities == 0 {
            return Err(Error::Config("num_entities must be at least 1".into()));
        }
        Ok(Partition {
            num_lps,
            num_entities,
            scheme,
        })
    }

    pub fn num_lps(&self) -> u32 {
        self.num_lps
    }

    pub fn num_entities(&self) -> u32 {
        self.num_entities
    }

    pub fn lp_of(&self, entity: EntityId) -> LpId {
        match self.scheme {
            PartitionScheme::RoundRobin => LpId(entity.0 % self.num_lps),
            PartitionScheme::Block => {
                let (base, extra) = self.block_shape();
                let big = extra * (base + 1);
                if entity.0 < big {
                    LpId(entity.0 / (base + 1))
                } else {
                    LpId(extra + (entity.0 - big) / base.max(1))
                }
            }
        }
    }

    /// Position of `entity` inside its owner's entity vector.
    pub fn slot_of(&self, entity: EntityId) -> usize {
        match self.scheme {
            PartitionScheme::RoundRobin => (entity.0 / self.num_lps) as usize,
            PartitionScheme::Block => {
                let lp = self.lp_of(entity);
                (entity.0 - self.first_of_block(lp)) as usize
            }
        }
    }

    /// Entities owned by `lp`, in slot order.
    pub fn entities_of(&self, lp: LpId) -> Vec<EntityId> {
        match self.scheme {
            PartitionScheme::RoundRobin => (lp.0..self.num_entities)
                .step_by(self.num_lps as usize)
                .map(EntityId)
                .collect(),
            PartitionScheme::Block => {
                let (base, extra) = self.block_shape();
                let first = self.first_of_block(lp);
                let len = base + u32::from(lp.0 < extra);
                (first..first + len).map(EntityId).collect()
            }
        }
    }

    fn block_shape(&self) -> (u32, u32) {
        (
            self.num_entities / self.num_lps,
            self.num_entities % self.num_lps,
        )
    }

    fn first_of_block(&self, lp: LpId) -> u32 {
        let (base, extra) = self.block_shape();
        lp.0 * base + lp.0.min(extra)
    }
}
