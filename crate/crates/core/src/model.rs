//! Entities, goods, supply/demand items, transactions and schedules.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multiset::Multiset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("transaction of {good} from {giver} to itself")]
    SelfTransaction { giver: Entity, good: Good },
    #[error("step {index} is not basic: more than one transaction from {giver} to {receiver}")]
    NonBasicStep {
        index: usize,
        giver: Entity,
        receiver: Entity,
    },
    #[error("schedule must contain at least one step")]
    EmptySchedule,
    #[error("{states} states given for {steps} steps (expected 1 shared state or one per step)")]
    LengthMismatch { states: usize, steps: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Entity(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Good(pub String);

impl Entity {
    pub fn new(id: impl Into<String>) -> Self {
        Entity(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Good {
    pub fn new(id: impl Into<String>) -> Self {
        Good(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Good {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An element of the supply-demand space: an offer of a good or a
/// willingness to accept one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplyDemandItem {
    Supply { entity: Entity, good: Good },
    Demand { entity: Entity, good: Good },
}

impl SupplyDemandItem {
    pub fn supply(entity: &Entity, good: &Good) -> Self {
        SupplyDemandItem::Supply {
            entity: entity.clone(),
            good: good.clone(),
        }
    }

    pub fn demand(entity: &Entity, good: &Good) -> Self {
        SupplyDemandItem::Demand {
            entity: entity.clone(),
            good: good.clone(),
        }
    }
}

/// A good moving from `giver` to `receiver`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transaction {
    giver: Entity,
    receiver: Entity,
    good: Good,
}

impl Transaction {
    pub fn new(giver: Entity, receiver: Entity, good: Good) -> Result<Self, ModelError> {
        if giver == receiver {
            return Err(ModelError::SelfTransaction { giver, good });
        }
        Ok(Transaction {
            giver,
            receiver,
            good,
        })
    }

    pub fn giver(&self) -> &Entity {
        &self.giver
    }

    pub fn receiver(&self) -> &Entity {
        &self.receiver
    }

    pub fn good(&self) -> &Good {
        &self.good
    }

    /// The supply/demand multipair the transaction consumes.
    pub fn items(&self) -> [SupplyDemandItem; 2] {
        [
            SupplyDemandItem::supply(&self.giver, &self.good),
            SupplyDemandItem::demand(&self.receiver, &self.good),
        ]
    }

    /// Whether the transaction runs between `a` and `b` in either direction.
    pub fn is_between(&self, a: &Entity, b: &Entity) -> bool {
        (&self.giver == a && &self.receiver == b) || (&self.giver == b && &self.receiver == a)
    }
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.giver, self.good, self.receiver)
    }
}

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Available supply and demand at one point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct State(pub Multiset<SupplyDemandItem>);

impl State {
    /// The smallest state in which `step` is admissible.
    pub fn minimal_for(step: &TransactionStep) -> State {
        State(step.required_items())
    }

    pub fn items(&self) -> &Multiset<SupplyDemandItem> {
        &self.0
    }
}

impl FromIterator<SupplyDemandItem> for State {
    fn from_iter<I: IntoIterator<Item = SupplyDemandItem>>(iter: I) -> Self {
        State(iter.into_iter().collect())
    }
}

/// The transactions realised at one point of the model.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct TransactionStep(pub Multiset<Transaction>);

impl TransactionStep {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn transactions(&self) -> &Multiset<Transaction> {
        &self.0
    }

    /// Union of the supply/demand multipairs of every transaction, with
    /// multiplicity.
    pub fn required_items(&self) -> Multiset<SupplyDemandItem> {
        self.0.iter().flat_map(|t| t.items()).collect()
    }

    pub fn is_admissible(&self, state: &State) -> bool {
        self.required_items().is_multisubset(&state.0)
    }

    pub fn is_basic(&self) -> bool {
        self.first_duplicate_direction().is_none()
    }

    /// The first ordered (giver, receiver) pair with more than one
    /// transaction, if any.
    pub fn first_duplicate_direction(&self) -> Option<(&Entity, &Entity)> {
        let mut directions: Multiset<(&Entity, &Entity)> = Multiset::new();
        for (t, &c) in self.0.iter_counts() {
            directions.insert_n((&t.giver, &t.receiver), c);
        }
        directions
            .iter_counts()
            .find(|(_, &c)| c > 1)
            .map(|(&(g, r), _)| (g, r))
    }

    /// The unique transaction from `giver` to `receiver`, assuming the step
    /// is basic.
    pub fn transaction_from(&self, giver: &Entity, receiver: &Entity) -> Option<&Transaction> {
        self.0
            .iter_counts()
            .map(|(t, _)| t)
            .find(|t| &t.giver == giver && &t.receiver == receiver)
    }
}

impl FromIterator<Transaction> for TransactionStep {
    fn from_iter<I: IntoIterator<Item = Transaction>>(iter: I) -> Self {
        TransactionStep(iter.into_iter().collect())
    }
}

/// Smallest `k` dividing `steps.len()` such that `steps[i] == steps[i % k]`
/// for every `i`. `None` for an empty list.
pub fn detect_cycle_order<T: PartialEq>(steps: &[T]) -> Option<usize> {
    let n = steps.len();
    (1..=n)
        .filter(|k| n.is_multiple_of(*k))
        .find(|&k| (k..n).all(|i| steps[i] == steps[i % k]))
}

/// A basic transaction schedule repeated cyclically with minimal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    steps: Vec<TransactionStep>,
}

impl Schedule {
    /// Validates basicness and reduces the list to its minimal period.
    pub fn new(steps: Vec<TransactionStep>) -> Result<Self, ModelError> {
        let order = detect_cycle_order(&steps).ok_or(ModelError::EmptySchedule)?;
        for (index, step) in steps.iter().enumerate() {
            if let Some((g, r)) = step.first_duplicate_direction() {
                return Err(ModelError::NonBasicStep {
                    index,
                    giver: g.clone(),
                    receiver: r.clone(),
                });
            }
        }
        let mut steps = steps;
        steps.truncate(order);
        Ok(Schedule { steps })
    }

    pub fn order(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[TransactionStep] {
        &self.steps
    }

    /// The step realised at zero-based position `i`, taken cyclically.
    pub fn step(&self, i: usize) -> &TransactionStep {
        &self.steps[i % self.steps.len()]
    }

    /// Unordered entity pairs that transact somewhere in the schedule, each
    /// oriented by entity order.
    pub fn interacting_pairs(&self) -> Vec<(Entity, Entity)> {
        let mut pairs: Vec<(Entity, Entity)> = self
            .steps
            .iter()
            .flat_map(|s| s.0.iter_counts().map(|(t, _)| t))
            .map(|t| {
                if t.giver < t.receiver {
                    (t.giver.clone(), t.receiver.clone())
                } else {
                    (t.receiver.clone(), t.giver.clone())
                }
            })
            .collect();
        pairs.sort();
        pairs.dedup();
        pairs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepCheck {
    pub index: usize,
    pub admissible: bool,
    pub basic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub steps: Vec<StepCheck>,
    pub admissible: bool,
    pub basic: bool,
    /// Minimal cycle order of the step list (`None` for an empty list).
    pub order: Option<usize>,
}

impl ValidationReport {
    /// A finite step list read cyclically is cyclical whenever it is
    /// non-empty.
    pub fn cyclical(&self) -> bool {
        self.order.is_some()
    }
}

/// Checks admissibility and basicness of every step. `states` holds either
/// one state per step or a single state shared by all steps.
pub fn validate_instance(
    states: &[State],
    steps: &[TransactionStep],
) -> Result<ValidationReport, ModelError> {
    if states.len() != steps.len() && states.len() != 1 {
        return Err(ModelError::LengthMismatch {
            states: states.len(),
            steps: steps.len(),
        });
    }
    let checks: Vec<StepCheck> = steps
        .iter()
        .enumerate()
        .map(|(index, step)| StepCheck {
            index,
            admissible: step.is_admissible(&states[index % states.len()]),
            basic: step.is_basic(),
        })
        .collect();
    Ok(ValidationReport {
        admissible: checks.iter().all(|c| c.admissible),
        basic: checks.iter().all(|c| c.basic),
        order: detect_cycle_order(steps),
        steps: checks,
    })
}
