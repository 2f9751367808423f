//! Structured reports and trajectory files.

use std::path::Path;

use gifteq_core::solver::{
    check_conditions_ops, find_equilibrium_ops, invariant_interval_of, ClosureEvidence,
    DivergenceWitness,
};
use gifteq_core::{
    AccountOperator, BalanceTrajectory, ConditionReport, EquilibriumResult, InvariantInterval,
    Pair, SolverConfig, Status,
};
use serde::Serialize;

use crate::CliError;

/// Random interior points added to the closure check of the invariant
/// interval.
pub const CLOSURE_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub interval: [f64; 2],
    pub interval_closed_under_operators: bool,
    pub closure_evidence: ClosureEvidence,
    pub all_curves_nonincreasing_nonexpanding: bool,
    pub exists_uniformly_monotonous_step: bool,
    pub exists_contraction_step: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_step: Option<usize>,
    pub cycle_rate_bound: f64,
    pub theorem_applies: bool,
}

impl From<&ConditionReport> for ConditionSummary {
    fn from(c: &ConditionReport) -> Self {
        ConditionSummary {
            interval: [c.interval.lo, c.interval.hi],
            interval_closed_under_operators: c.interval_closed_under_operators,
            closure_evidence: c.closure_evidence,
            all_curves_nonincreasing_nonexpanding: c.all_curves_nonincreasing_nonexpanding,
            exists_uniformly_monotonous_step: c.exists_uniformly_monotonous_step,
            exists_contraction_step: c.exists_contraction_step,
            witness_step: c.witness_step,
            cycle_rate_bound: c.cycle_rate_bound,
            theorem_applies: c.theorem_applies(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub p: String,
    pub q: String,
    pub status: Status,
    pub k: usize,
    pub x0: f64,
    pub u: Vec<f64>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_sum_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceWitness>,
    pub conditions: ConditionSummary,
}

/// Everything computed for one ordered pair.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub pair: Pair,
    pub ops: Vec<AccountOperator>,
    pub invariant: InvariantInterval,
    pub conditions: ConditionReport,
    pub result: EquilibriumResult,
}

impl PairAnalysis {
    pub fn new(pair: Pair, ops: Vec<AccountOperator>, x0: f64, config: &SolverConfig) -> Self {
        let invariant = invariant_interval_of(&ops);
        let conditions = check_conditions_ops(&ops, &invariant.interval(), CLOSURE_SAMPLES);
        let result = find_equilibrium_ops(&ops, x0, config);
        PairAnalysis {
            pair,
            ops,
            invariant,
            conditions,
            result,
        }
    }

    pub fn report(&self) -> PairReport {
        let r = &self.result;
        PairReport {
            p: self.pair.p.to_string(),
            q: self.pair.q.to_string(),
            status: r.status,
            k: r.order(),
            x0: r.x0,
            u: r.u.clone(),
            iterations: r.iterations,
            zero_sum_residual: r.zero_sum_residual,
            rate_q: r.rate_q,
            trajectory: None,
            divergence: r.divergence,
            conditions: ConditionSummary::from(&self.conditions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub status: Status,
    pub pairs: Vec<PairReport>,
}

/// Diverged outranks max-iterations, which outranks converged.
pub fn overall_status<'a>(statuses: impl IntoIterator<Item = &'a Status>) -> Status {
    let rank = |s: &Status| match s {
        Status::Converged => 0,
        Status::MaxIterations => 1,
        Status::Diverged => 2,
    };
    statuses
        .into_iter()
        .copied()
        .max_by_key(rank)
        .unwrap_or(Status::Converged)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalReport {
    pub lower: f64,
    pub upper: f64,
    pub upper_unconstrained: bool,
    pub lower_unconstrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairConditions {
    pub p: String,
    pub q: String,
    pub k: usize,
    pub invariant_interval: IntervalReport,
    pub conditions: ConditionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsReport {
    pub scenario: String,
    pub pairs: Vec<PairConditions>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub x0: f64,
    pub status: Status,
    pub iterations: usize,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPair {
    pub p: String,
    pub q: String,
    pub k: usize,
    pub converged: usize,
    /// Largest max-norm distance of a converged equilibrium from the first.
    pub spread: f64,
    pub runs: Vec<SweepRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub status: Status,
    pub pairs: Vec<SweepPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

/// One verification check, possibly aggregated over many runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub scenario: String,
    pub name: String,
    pub outcome: Outcome,
    pub runs: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn single(scenario: &str, name: &str, passed: bool) -> Self {
        CheckRecord {
            scenario: scenario.to_string(),
            name: name.to_string(),
            outcome: if passed { Outcome::Pass } else { Outcome::Fail },
            runs: 1,
            failures: usize::from(!passed),
            worst: None,
            bound: None,
            note: None,
        }
    }

    pub fn skip(scenario: &str, name: &str, note: impl Into<String>) -> Self {
        CheckRecord {
            outcome: Outcome::Skip,
            runs: 0,
            failures: 0,
            note: Some(note.into()),
            ..Self::single(scenario, name, true)
        }
    }

    pub fn value(mut self, worst: f64, bound: f64) -> Self {
        self.worst = Some(worst);
        self.bound = Some(bound);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub target: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: usize,
    pub failed: usize,
    pub skipped: usize,
    pub records: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub equilibria: Vec<PairReport>,
}

impl VerifyReport {
    pub fn new(target: &str, seed: u64, records: Vec<CheckRecord>, equilibria: Vec<PairReport>) -> Self {
        let failed = records.iter().filter(|r| r.outcome == Outcome::Fail).count();
        let skipped = records.iter().filter(|r| r.outcome == Outcome::Skip).count();
        VerifyReport {
            target: target.to_string(),
            seed,
            passed: failed == 0,
            checks: records.len(),
            failed,
            skipped,
            records,
            equilibria,
        }
    }
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("reports contain only plain data")
}

#[derive(Serialize)]
struct Row {
    step_index: usize,
    phase: usize,
    balance: f64,
    p_yield: f64,
    q_yield: f64,
}

/// Writes one row per step: `step_index` counts from 1 and `phase` is the
/// schedule position of the step.
pub fn write_trajectory(path: &Path, t: &BalanceTrajectory) -> Result<(), CliError> {
    let io = |source: std::io::Error| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    for i in 0..t.len() {
        w.serialize(Row {
            step_index: i + 1,
            phase: i % t.order,
            balance: t.balances[i],
            p_yield: t.p_yields[i],
            q_yield: t.q_yields[i],
        })
        .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}
