//! Scenario files: entities, goods, yield curves, a cyclical schedule and run
//! parameters, stored as versioned TOML.
//!
//! ```toml
//! version = 1
//! name = "alternating"
//! entities = ["P", "Q"]
//! goods = ["a", "b"]
//! schedule = [
//!     [{ giver = "P", receiver = "Q", good = "a" }],
//!     [{ giver = "Q", receiver = "P", good = "b" }],
//! ]
//!
//! [[curves]]
//! giver = "P"
//! receiver = "Q"
//! good = "a"
//! kind = "linear_flat"
//! slope = -0.5
//! intercept = 2.0
//!
//! [[curves]]
//! giver = "Q"
//! receiver = "P"
//! good = "b"
//! kind = "linear_flat"
//! slope = -0.25
//! intercept = 1.0
//!
//! [run]
//! x0 = 0.0
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, YieldCurve};
use crate::dynamics::{CurveAssignment, Pair};
use crate::model::{
    validate_instance, Entity, Good, Schedule, State, SupplyDemandItem, Transaction,
    TransactionStep, ValidationReport,
};
use crate::solver::{SolverConfig, DEFAULT_DIVERGENCE_BOUND, DEFAULT_MAX_ITER, DEFAULT_TOL};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}: {source}")]
    Io {
        origin: String,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: {location}: {message}")]
    Invalid {
        origin: String,
        location: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveLiteral {
    LinearFlat {
        slope: f64,
        intercept: f64,
    },
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        left_slope: f64,
        #[serde(default)]
        right_slope: f64,
    },
    Zero,
}

impl CurveLiteral {
    pub fn build(&self) -> Result<YieldCurve, CurveError> {
        match self {
            CurveLiteral::LinearFlat { slope, intercept } => {
                YieldCurve::linear_flat(*slope, *intercept)
            }
            CurveLiteral::Piecewise {
                breakpoints,
                values,
                left_slope,
                right_slope,
            } => YieldCurve::piecewise(breakpoints.clone(), values.clone(), *left_slope, *right_slope),
            CurveLiteral::Zero => Ok(YieldCurve::zero()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub giver: String,
    pub receiver: String,
    pub good: String,
    #[serde(flatten)]
    pub curve: CurveLiteral,
}

fn one() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionSpec {
    pub giver: String,
    pub receiver: String,
    pub good: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub count: usize,
}

impl TransactionSpec {
    pub fn new(giver: &str, receiver: &str, good: &str) -> Self {
        TransactionSpec {
            giver: giver.into(),
            receiver: receiver.into(),
            good: good.into(),
            count: 1,
        }
    }
}

impl fmt::Display for TransactionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.giver, self.good, self.receiver)?;
        if self.count != 1 {
            write!(f, " x{}", self.count)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSpec {
    pub x0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_bound: f64,
    /// Trajectory length written by `run`.
    pub steps: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<Vec<f64>>,
    /// Restricts runs to this ordered pair instead of every interacting pair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<[String; 2]>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            x0: 0.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            steps: 100,
            seed: 0,
            starts: None,
            pair: None,
        }
    }
}

impl RunSpec {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            divergence_bound: self.divergence_bound,
        }
    }
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub entities: Vec<String>,
    pub goods: Vec<String>,
    pub schedule: Vec<Vec<TransactionSpec>>,
    /// One shared state or one state per schedule step. Omitted: each step
    /// gets the minimal state that admits it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<Vec<SupplyDemandItem>>>,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub run: RunSpec,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub entities: Vec<Entity>,
    pub goods: Vec<Good>,
    pub curves: CurveAssignment,
    pub schedule: Schedule,
    pub states: Vec<State>,
    pub validation: ValidationReport,
    pub run: RunSpec,
    source: ScenarioFile,
}

impl Scenario {
    pub fn source(&self) -> &ScenarioFile {
        &self.source
    }

    /// Serializes back to the file format.
    pub fn emit(&self) -> String {
        self.source.to_toml()
    }

    /// The pairs to analyse: `selector`, else the file's `run.pair`, else
    /// every pair that transacts in the schedule.
    pub fn pairs(&self, selector: Option<(&str, &str)>) -> Result<Vec<Pair>, ScenarioError> {
        let chosen = selector.map(|(a, b)| (a.to_string(), b.to_string())).or_else(|| {
            self.run
                .pair
                .as_ref()
                .map(|[a, b]| (a.clone(), b.clone()))
        });
        match chosen {
            Some((a, b)) => {
                let invalid = |message: String| ScenarioError::Invalid {
                    origin: self.name.clone(),
                    location: "pair".into(),
                    message,
                };
                for id in [&a, &b] {
                    if !self.entities.iter().any(|e| e.as_str() == id) {
                        return Err(invalid(format!("unknown entity {id:?}")));
                    }
                }
                Pair::new(Entity::new(a), Entity::new(b))
                    .map(|p| vec![p])
                    .map_err(|e| invalid(e.to_string()))
            }
            None => Ok(self
                .schedule
                .interacting_pairs()
                .into_iter()
                .map(|(p, q)| Pair { p, q })
                .collect()),
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn validate(self, origin: &str) -> Result<Scenario, ScenarioError> {
        let invalid = |location: String, message: String| ScenarioError::Invalid {
            origin: origin.to_string(),
            location,
            message,
        };
        if self.version != FORMAT_VERSION {
            return Err(invalid(
                "version".into(),
                format!("unsupported version {} (expected {FORMAT_VERSION})", self.version),
            ));
        }
        let entities = unique_ids(&self.entities, "entities", &invalid)?;
        let goods = unique_ids(&self.goods, "goods", &invalid)?;
        let transaction = |location: &str, giver: &str, receiver: &str, good: &str| {
            if !entities.contains(giver) {
                return Err(invalid(location.into(), format!("unknown entity {giver:?}")));
            }
            if !entities.contains(receiver) {
                return Err(invalid(location.into(), format!("unknown entity {receiver:?}")));
            }
            if !goods.contains(good) {
                return Err(invalid(location.into(), format!("unknown good {good:?}")));
            }
            Transaction::new(Entity::new(giver), Entity::new(receiver), Good::new(good))
                .map_err(|e| invalid(location.into(), e.to_string()))
        };

        let mut curves = CurveAssignment::new();
        for (i, spec) in self.curves.iter().enumerate() {
            let location = format!("curves[{i}] ({} -{}-> {})", spec.giver, spec.good, spec.receiver);
            let t = transaction(&location, &spec.giver, &spec.receiver, &spec.good)?;
            let curve = spec
                .curve
                .build()
                .map_err(|e| invalid(location.clone(), e.to_string()))?;
            curves
                .insert(t, curve)
                .map_err(|e| invalid(location.clone(), e.to_string()))?;
        }

        let mut steps = Vec::with_capacity(self.schedule.len());
        for (i, raw) in self.schedule.iter().enumerate() {
            let mut step = TransactionStep::empty();
            for (j, spec) in raw.iter().enumerate() {
                let location = format!("schedule[{i}][{j}] ({spec})");
                let t = transaction(&location, &spec.giver, &spec.receiver, &spec.good)?;
                if curves.get(&t).is_none() {
                    return Err(invalid(location, format!("no curve assigned to {t}")));
                }
                step.0.insert_n(t, spec.count);
            }
            if let Some((g, r)) = step.first_duplicate_direction() {
                return Err(invalid(
                    format!("schedule[{i}]"),
                    format!("non-basic step: more than one transaction from {g} to {r}"),
                ));
            }
            steps.push(step);
        }
        if steps.is_empty() {
            return Err(invalid("schedule".into(), "schedule has no steps".into()));
        }

        let states: Vec<State> = match &self.states {
            Some(raw) => {
                for (i, items) in raw.iter().enumerate() {
                    for (j, item) in items.iter().enumerate() {
                        let (SupplyDemandItem::Supply { entity, good }
                        | SupplyDemandItem::Demand { entity, good }) = item;
                        if !entities.contains(entity.as_str()) || !goods.contains(good.as_str()) {
                            return Err(invalid(
                                format!("states[{i}][{j}]"),
                                format!("undeclared entity or good in {item:?}"),
                            ));
                        }
                    }
                }
                raw.iter().map(|items| items.iter().cloned().collect()).collect()
            }
            None => steps.iter().map(State::minimal_for).collect(),
        };
        let validation = validate_instance(&states, &steps)
            .map_err(|e| invalid("states".into(), e.to_string()))?;
        if let Some(bad) = validation.steps.iter().find(|c| !c.admissible) {
            return Err(invalid(
                format!("schedule[{}]", bad.index),
                "step is not admissible in its state".into(),
            ));
        }
        let schedule =
            Schedule::new(steps).map_err(|e| invalid("schedule".into(), e.to_string()))?;

        if self.run.tol.is_nan() || self.run.tol <= 0.0 || self.run.max_iter == 0 {
            return Err(invalid(
                "run".into(),
                "tol must be positive and max_iter at least 1".into(),
            ));
        }

        Ok(Scenario {
            name: self.name.clone(),
            entities: self.entities.iter().map(Entity::new).collect(),
            goods: self.goods.iter().map(Good::new).collect(),
            curves,
            schedule,
            states,
            validation,
            run: self.run.clone(),
            source: self,
        })
    }
}

fn unique_ids<'a>(
    ids: &'a [String],
    field: &str,
    invalid: &dyn Fn(String, String) -> ScenarioError,
) -> Result<BTreeSet<&'a str>, ScenarioError> {
    let mut seen = BTreeSet::new();
    for (i, id) in ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return Err(invalid(format!("{field}[{i}]"), format!("duplicate id {id:?}")));
        }
    }
    Ok(seen)
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    ScenarioFile::parse(text, origin)?.validate(origin)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        origin: origin.clone(),
        source,
    })?;
    parse_scenario(&text, &origin)
}

/// Parameters of the randomized scenario family used by the verification
/// suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomFamily {
    pub max_order: usize,
    /// Slopes are drawn from `(slope_min, slope_max]`.
    pub slope_min: f64,
    pub slope_max: f64,
    pub intercept_max: f64,
    /// Goods available per direction; each step picks one or none.
    pub goods_per_direction: usize,
}

impl Default for RandomFamily {
    fn default() -> Self {
        RandomFamily {
            max_order: 5,
            slope_min: -0.95,
            slope_max: -0.05,
            intercept_max: 5.0,
            goods_per_direction: 2,
        }
    }
}

/// A random two-entity scenario: order in `1..=max_order`, linear-flat curves,
/// and per-step presence of a transaction in each direction, with at least
/// one non-empty step.
pub fn random_scenario<R: Rng>(rng: &mut R, family: &RandomFamily, name: &str) -> ScenarioFile {
    let g = family.goods_per_direction.max(1);
    let forward: Vec<String> = (0..g).map(|i| format!("a{i}")).collect();
    let backward: Vec<String> = (0..g).map(|i| format!("b{i}")).collect();
    let mut curve = |giver: &str, receiver: &str, good: &str| CurveSpec {
        giver: giver.into(),
        receiver: receiver.into(),
        good: good.into(),
        curve: CurveLiteral::LinearFlat {
            // (slope_min, slope_max]
            slope: family.slope_max - rng.random::<f64>() * (family.slope_max - family.slope_min),
            intercept: rng.random_range(0.0..=family.intercept_max),
        },
    };
    let mut curves: Vec<CurveSpec> = forward.iter().map(|a| curve("P", "Q", a)).collect();
    curves.extend(backward.iter().map(|b| curve("Q", "P", b)));

    let k = rng.random_range(1..=family.max_order);
    let schedule = loop {
        let steps: Vec<Vec<TransactionSpec>> = (0..k)
            .map(|_| {
                let mut step = vec![];
                if rng.random_bool(0.5) {
                    step.push(TransactionSpec::new("P", "Q", &forward[rng.random_range(0..g)]));
                }
                if rng.random_bool(0.5) {
                    step.push(TransactionSpec::new("Q", "P", &backward[rng.random_range(0..g)]));
                }
                step
            })
            .collect();
        if steps.iter().any(|s| !s.is_empty()) {
            break steps;
        }
    };
    ScenarioFile {
        version: FORMAT_VERSION,
        name: name.to_string(),
        entities: vec!["P".into(), "Q".into()],
        goods: forward.into_iter().chain(backward).collect(),
        schedule,
        states: None,
        curves,
        run: RunSpec {
            pair: Some(["P".into(), "Q".into()]),
            ..RunSpec::default()
        },
    }
}
