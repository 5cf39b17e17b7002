//! The combined edge-scheduling and node-controlling adversary.
//!
//! The schedule picks the edge each round; in-flight packets sit in the
//! engine's per-direction queues, which the adversary drains according to its
//! delivery policy. Corrupted nodes run their usual state machine with a
//! [`Strategy`] hooked into the points where a node makes a choice.

mod schedule;
mod strategies;
mod strategy;

use serde::{Deserialize, Serialize};

pub use schedule::{read_schedule, write_schedule, Activation, DeliveryPolicy, Schedule, ScheduleError, ScheduleSpec};
pub use strategies::{Dropping, Duplication, HeightLying, Replacement, Uphill};
pub use strategy::{CodewordChoice, ProtocolHonest, Strategy};

use crate::model::{NodeId, Outcome};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StrategySpec {
    Replacement {
        #[serde(default)]
        h_star: Option<u64>,
        #[serde(default)]
        budget: Option<u64>,
        /// Replace only within the same secret set; needs χ from the
        /// scenario's cheat injection.
        #[serde(default)]
        white_box: bool,
    },
    Duplication {
        pool_target: u64,
    },
    Uphill,
    HeightLying,
    Dropping,
    ProtocolHonest,
}

impl StrategySpec {
    pub fn build(&self, seed: u64) -> Box<dyn Strategy + Send> {
        match *self {
            StrategySpec::Replacement { h_star, budget, white_box } => Box::new(Replacement::new(h_star, budget, white_box, seed)),
            StrategySpec::Duplication { pool_target } => Box::new(Duplication::new(pool_target)),
            StrategySpec::Uphill => Box::new(Uphill::new()),
            StrategySpec::HeightLying => Box::new(HeightLying::new(seed)),
            StrategySpec::Dropping => Box::new(Dropping),
            StrategySpec::ProtocolHonest => Box::new(ProtocolHonest),
        }
    }
}

/// When a node falls under the adversary's control. Triggers look only at
/// the public trace so runs stay replayable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Trigger {
    #[default]
    Start,
    AtRound { round: u64 },
    /// After the first transmission closing with `outcome`.
    AfterOutcome { outcome: Outcome },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub node: NodeId,
    pub strategy: StrategySpec,
    #[serde(default)]
    pub trigger: Trigger,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorruptionPlan(pub Vec<Corruption>);

impl CorruptionPlan {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().map(|c| c.node)
    }

    pub fn is_corrupt(&self, u: NodeId) -> bool {
        self.0.iter().any(|c| c.node == u)
    }
}
