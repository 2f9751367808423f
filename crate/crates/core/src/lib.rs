//! Simulation and verification of pairwise account balances in a gift
//! economy.
//!
//! Entities give goods to each other on a cyclical schedule. Each gift pays
//! the giver a yield read off a non-increasing, non-expanding yield curve of
//! the current pairwise balance, and the balance moves by the net yield. This
//! crate evolves those balances, finds the k-fold equilibria of cyclical
//! schedules by fixed-point iteration, and checks the Lipschitz conditions
//! under which such an equilibrium exists, is unique and has zero net yield
//! per cycle.

pub mod bundled;
pub mod curve;
pub mod dynamics;
pub mod model;
pub mod multiset;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use curve::{CurveError, CurveProperties, Interval, PiecewiseLinear, YieldCurve};
pub use dynamics::{
    build_operator, compose_cycle, trajectory, AccountOperator, BalanceTrajectory,
    CurveAssignment, CycleOperator, DynamicsError, Ledger, Pair, VectorOperator,
};
pub use model::{
    detect_cycle_order, validate_instance, Entity, Good, ModelError, Schedule, State,
    SupplyDemandItem, Transaction, TransactionStep, ValidationReport,
};
pub use multiset::Multiset;
pub use solver::{
    check_conditions, construct_invariant_interval, estimate_rate, find_equilibrium,
    verify_uniqueness, verify_zero_sum, ConditionReport, EquilibriumResult, InvariantInterval,
    SolverConfig, SolverError, Status,
};
