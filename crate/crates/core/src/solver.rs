//! k-fold equilibria of cyclical schedules.
//!
//! The solver iterates whole cycles of account operators until two successive
//! cycle vectors agree in max-norm. Around it sit the diagnostics: the
//! invariant interval built from curve zero crossings, the contraction
//! conditions on that interval, the zero-sum residual of the equilibrium
//! yields, multi-start uniqueness and an empirical convergence rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::curve::{Interval, YieldCurve};
use crate::dynamics::{
    cycle_operators, operator_rate_bound, AccountOperator, BalanceTrajectory, CurveAssignment,
    DynamicsError, Pair, VectorOperator,
};
use crate::model::Schedule;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e12;

/// Slack for membership tests against the invariant interval.
const CLOSURE_EPS: f64 = 1e-12;
/// Cycle vectors kept for the rate estimate.
const HISTORY_CAP: usize = 4096;
const CLOSURE_SEED: u64 = 0x636c_6f73_7572_6521;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("equilibrium result has status {0:?}, expected converged")]
    NotConverged(Status),
    #[error("no starting balances given")]
    NoStarts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_bound: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    Diverged,
    MaxIterations,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::MaxIterations => "max-iterations",
        })
    }
}

/// Proof that the orbit has entered a region where every operator is a
/// translation and the cycle drifts away from the origin for ever.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceWitness {
    /// Net balance change per cycle; its sign is the direction of escape.
    pub drift_per_cycle: f64,
    /// Cycles still needed to pass the divergence bound at that drift.
    pub cycles_to_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub status: Status,
    /// Balance after each step of one cycle (length k). For non-converged
    /// runs, the last cycle computed.
    pub u: Vec<f64>,
    /// Number of cycles computed.
    pub iterations: usize,
    /// Max-norm distance between the last two cycle vectors.
    pub last_step: f64,
    pub zero_sum_residual: Option<f64>,
    pub rate_q: Option<f64>,
    pub divergence: Option<DivergenceWitness>,
    pub x0: f64,
}

impl EquilibriumResult {
    pub fn order(&self) -> usize {
        self.u.len()
    }

    pub fn is_converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Interval `[lower, upper]` closed under every account operator of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantInterval {
    pub lower: f64,
    pub upper: f64,
    /// No transaction from P in the cycle: nothing bounds the balance from
    /// above and uniqueness holds only relative to the lower side.
    pub upper_unconstrained: bool,
    pub lower_unconstrained: bool,
}

impl InvariantInterval {
    pub fn interval(&self) -> Interval {
        Interval {
            lo: self.lower,
            hi: self.upper,
        }
    }

    /// `n` starting balances spread evenly over the interval. Unbounded sides
    /// are cut off at a window around the finite end (or the origin).
    pub fn spanning_starts(&self, n: usize) -> Vec<f64> {
        let width = |z: f64| 10.0 * z.abs().max(1.0);
        let (lo, hi) = match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => (self.lower, self.upper),
            (true, false) => (self.lower, self.lower + width(self.lower)),
            (false, true) => (self.upper - width(self.upper), self.upper),
            (false, false) => (-10.0, 10.0),
        };
        match n {
            0 => vec![],
            1 => vec![0.5 * (lo + hi)],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Upper end from the largest zero crossing among the P curves, lower end
/// from the mirrored largest crossing among the Q curves.
pub fn construct_invariant_interval(
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
) -> Result<InvariantInterval, DynamicsError> {
    let ops = cycle_operators(schedule, pair, curves)?;
    Ok(invariant_interval_of(&ops))
}

/// `None` when all curves are trivial, `+inf` when some curve never reaches
/// zero, otherwise the largest crossing.
fn largest_crossing<'a>(curves: impl Iterator<Item = &'a YieldCurve>) -> Option<f64> {
    curves
        .filter(|c| !c.is_identically_zero())
        .map(|c| c.zero_crossing().unwrap_or(f64::INFINITY))
        .reduce(f64::max)
}

pub fn invariant_interval_of(ops: &[AccountOperator]) -> InvariantInterval {
    let z = largest_crossing(ops.iter().map(|op| &op.p_curve));
    let zq = largest_crossing(ops.iter().map(|op| &op.q_curve));
    let upper = z.unwrap_or(f64::INFINITY);
    let lower = zq.map_or(f64::NEG_INFINITY, |z| -z);
    // Crossings of general piecewise curves may leave a gap where both sides
    // are flat; the ordered hull is still closed under every operator.
    InvariantInterval {
        lower: lower.min(upper),
        upper: upper.max(lower),
        upper_unconstrained: z.is_none(),
        lower_unconstrained: zq.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosureEvidence {
    /// Every P curve vanishes at the upper end and every mirrored Q curve at
    /// the lower end, which with non-expansion proves closure.
    Analytic,
    /// No sampled point (breakpoints, ends and random interior points)
    /// escaped. Not a proof.
    Empirical,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub interval: Interval,
    pub interval_closed_under_operators: bool,
    pub closure_evidence: ClosureEvidence,
    pub all_curves_nonincreasing_nonexpanding: bool,
    pub exists_uniformly_monotonous_step: bool,
    pub exists_contraction_step: bool,
    /// First step at which one curve is uniformly monotonous and one a
    /// contraction on the interval.
    pub witness_step: Option<usize>,
    /// Product over the cycle of the per-step contraction bounds.
    pub cycle_rate_bound: f64,
}

impl ConditionReport {
    pub fn theorem_applies(&self) -> bool {
        self.interval_closed_under_operators
            && self.all_curves_nonincreasing_nonexpanding
            && self.exists_uniformly_monotonous_step
            && self.exists_contraction_step
            && self.witness_step.is_some()
    }
}

pub fn check_conditions(
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
    interval: &Interval,
    samples: usize,
) -> Result<ConditionReport, DynamicsError> {
    let ops = cycle_operators(schedule, pair, curves)?;
    Ok(check_conditions_ops(&ops, interval, samples))
}

pub fn check_conditions_ops(
    ops: &[AccountOperator],
    interval: &Interval,
    samples: usize,
) -> ConditionReport {
    let closure_evidence = closure_evidence(ops, interval, samples);
    let interval_closed_under_operators = closure_evidence != ClosureEvidence::Violated;

    if interval.is_degenerate() {
        // A single point: every map into it is a contraction.
        return ConditionReport {
            interval: *interval,
            interval_closed_under_operators,
            closure_evidence,
            all_curves_nonincreasing_nonexpanding: true,
            exists_uniformly_monotonous_step: interval_closed_under_operators,
            exists_contraction_step: interval_closed_under_operators,
            witness_step: interval_closed_under_operators.then_some(0),
            cycle_rate_bound: 0.0,
        };
    }

    let mirrored = interval.mirrored();
    let mut all_ok = true;
    let mut any_uniform = false;
    let mut any_contraction = false;
    let mut witness_step = None;
    let mut cycle_rate_bound = 1.0;
    for (j, op) in ops.iter().enumerate() {
        let p = op.p_curve.analyze(interval, 0);
        let q = op.q_curve.analyze(&mirrored, 0);
        all_ok &= p.nonincreasing && p.is_nonexpanding() && q.nonincreasing && q.is_nonexpanding();
        let uniform = p.is_uniformly_monotonous() || q.is_uniformly_monotonous();
        let contraction = p.is_contraction() || q.is_contraction();
        any_uniform |= uniform;
        any_contraction |= contraction;
        if uniform && contraction && witness_step.is_none() {
            witness_step = Some(j);
        }
        cycle_rate_bound *= operator_rate_bound(op, interval);
    }
    ConditionReport {
        interval: *interval,
        interval_closed_under_operators,
        closure_evidence,
        all_curves_nonincreasing_nonexpanding: all_ok,
        exists_uniformly_monotonous_step: any_uniform,
        exists_contraction_step: any_contraction,
        witness_step,
        cycle_rate_bound,
    }
}

fn closure_evidence(ops: &[AccountOperator], interval: &Interval, samples: usize) -> ClosureEvidence {
    let upper_ok = !interval.hi.is_finite()
        || ops.iter().all(|op| op.p_curve.eval(interval.hi) == 0.0);
    let lower_ok = !interval.lo.is_finite()
        || ops.iter().all(|op| op.q_curve.eval(-interval.lo) == 0.0);

    let mut anchors: Vec<f64> = ops
        .iter()
        .flat_map(|op| {
            let p = op.p_curve.as_piecewise().breakpoints().iter().copied();
            let q = op.q_curve.as_piecewise().breakpoints().iter().map(|b| -b);
            p.chain(q)
        })
        .collect();
    let (lo, hi) = interval.sampling_window(&anchors);
    anchors.retain(|&a| lo <= a && a <= hi);
    anchors.extend([lo, hi]);
    let mut rng = ChaCha8Rng::seed_from_u64(CLOSURE_SEED);
    anchors.extend((0..samples).map(|_| {
        if lo < hi {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    }));
    let escaped = anchors.iter().any(|&x| {
        ops.iter().any(|op| {
            let y = op.apply(x);
            y < interval.lo - CLOSURE_EPS || y > interval.hi + CLOSURE_EPS
        })
    });
    match (escaped, upper_ok && lower_ok) {
        (true, _) => ClosureEvidence::Violated,
        (false, true) => ClosureEvidence::Analytic,
        (false, false) => ClosureEvidence::Empirical,
    }
}

/// Iterates whole cycles from `x0` until two successive cycle vectors agree
/// within `config.tol` in max-norm.
pub fn find_equilibrium(
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
    x0: f64,
    config: &SolverConfig,
) -> Result<EquilibriumResult, DynamicsError> {
    let ops = cycle_operators(schedule, pair, curves)?;
    Ok(find_equilibrium_ops(&ops, x0, config))
}

pub fn find_equilibrium_ops(
    ops: &[AccountOperator],
    x0: f64,
    config: &SolverConfig,
) -> EquilibriumResult {
    assert!(config.tol > 0.0 && config.max_iter >= 1);
    let vop = VectorOperator::new(ops.to_vec());
    let k = ops.len();
    let escaped = |v: &[f64]| {
        v.iter()
            .any(|x| !x.is_finite() || x.abs() > config.divergence_bound)
    };

    let mut current = vop.first_cycle(x0);
    let mut history = vec![current.clone()];
    let mut iterations = 1;
    let mut last_step = f64::INFINITY;
    let mut divergence = None;

    let status = loop {
        if escaped(&current) {
            break Status::Diverged;
        }
        if let Some(w) = divergence_certificate(ops, current[k - 1], config.divergence_bound) {
            divergence = Some(w);
            break Status::Diverged;
        }
        if iterations >= config.max_iter {
            break Status::MaxIterations;
        }
        let next = vop.first_cycle(current[k - 1]);
        iterations += 1;
        last_step = max_distance(&next, &current);
        current = next;
        if history.len() < HISTORY_CAP {
            history.push(current.clone());
        }
        if last_step <= config.tol && !escaped(&current) {
            break Status::Converged;
        }
    };

    let (zero_sum_residual, rate_q) = if status == Status::Converged {
        let errors: Vec<f64> = history.iter().map(|h| max_distance(h, &current)).collect();
        let scale = current.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        (
            Some(zero_sum_of(ops, &current)),
            rate_from_errors(&errors, scale).map(|r| r.rate),
        )
    } else {
        (None, None)
    };
    EquilibriumResult {
        status,
        u: current,
        iterations,
        last_step,
        zero_sum_residual,
        rate_q,
        divergence,
        x0,
    }
}

fn max_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Checks whether the orbit through `x` (entering the cycle at phase 0) is in
/// a tail region where each operator is `x -> x + c_i` and the cycle drifts
/// outward without ever leaving the region.
fn divergence_certificate(
    ops: &[AccountOperator],
    x: f64,
    bound: f64,
) -> Option<DivergenceWitness> {
    let active = |c: &&YieldCurve| !c.is_identically_zero();
    let first_bp = |c: &YieldCurve| c.as_piecewise().breakpoints()[0];
    let last_bp = |c: &YieldCurve| *c.as_piecewise().breakpoints().last().unwrap();

    // Right tail: P at its right tail (always flat), Q(-x) at Q's left tail.
    let right_edge = ops
        .iter()
        .flat_map(|op| {
            let p = Some(&op.p_curve).filter(active).map(last_bp);
            let q = Some(&op.q_curve).filter(active).map(|c| -first_bp(c));
            p.into_iter().chain(q)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let right_flat = ops
        .iter()
        .all(|op| op.q_curve.as_piecewise().left_slope() == 0.0);
    if right_flat && x >= right_edge {
        let shifts = ops.iter().map(|op| {
            let p = op.p_curve.as_piecewise();
            let q = op.q_curve.as_piecewise();
            p.values().last().unwrap() - q.values()[0]
        });
        if let Some(w) = drift(shifts, x, right_edge, 1.0, bound) {
            return Some(w);
        }
    }

    // Left tail: P at its left tail, Q(-x) at Q's right tail (always flat).
    let left_edge = ops
        .iter()
        .flat_map(|op| {
            let p = Some(&op.p_curve).filter(active).map(first_bp);
            let q = Some(&op.q_curve).filter(active).map(|c| -last_bp(c));
            p.into_iter().chain(q)
        })
        .fold(f64::INFINITY, f64::min);
    let left_flat = ops
        .iter()
        .all(|op| op.p_curve.as_piecewise().left_slope() == 0.0);
    if left_flat && x <= left_edge {
        let shifts = ops.iter().map(|op| {
            let p = op.p_curve.as_piecewise();
            let q = op.q_curve.as_piecewise();
            p.values()[0] - q.values().last().unwrap()
        });
        return drift(shifts, x, left_edge, -1.0, bound);
    }
    None
}

/// `sign = 1` for escape to `+inf` past `edge`, `-1` for `-inf`.
fn drift(
    shifts: impl Iterator<Item = f64>,
    x: f64,
    edge: f64,
    sign: f64,
    bound: f64,
) -> Option<DivergenceWitness> {
    let mut partial = 0.0_f64;
    let mut worst = 0.0_f64;
    for s in shifts {
        partial += sign * s;
        worst = worst.min(partial);
    }
    let stays_in_tail = sign * (x - edge) + worst >= 0.0;
    (partial > 0.0 && stays_in_tail).then(|| DivergenceWitness {
        drift_per_cycle: sign * partial,
        cycles_to_bound: ((bound - x.abs()) / partial).max(0.0),
    })
}

/// Giver-side yields `(P_j, Q_j)` paid at each step of one cycle through `u`,
/// where `u[j]` is the balance after step `j`.
pub fn cycle_yields(ops: &[AccountOperator], u: &[f64]) -> Vec<(f64, f64)> {
    let k = ops.len();
    assert_eq!(u.len(), k);
    (0..k)
        .map(|j| ops[j].yields(u[(j + k - 1) % k]))
        .collect()
}

fn zero_sum_of(ops: &[AccountOperator], u: &[f64]) -> f64 {
    cycle_yields(ops, u)
        .iter()
        .map(|(p, q)| p - q)
        .sum::<f64>()
        .abs()
}

/// `|sum_j P_j(u_{j-1}) - Q_j(-u_{j-1})|` over one cycle of a converged
/// equilibrium.
pub fn verify_zero_sum(
    result: &EquilibriumResult,
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
) -> Result<f64, SolverError> {
    if result.status != Status::Converged {
        return Err(SolverError::NotConverged(result.status));
    }
    let ops = cycle_operators(schedule, pair, curves)?;
    Ok(zero_sum_of(&ops, &result.u))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub unique: bool,
    /// Largest max-norm distance between any equilibrium and the first one.
    pub max_spread: f64,
    pub threshold: f64,
    /// Starts whose runs did not converge, with their status.
    pub failures: Vec<(f64, Status)>,
    pub equilibria: Vec<Vec<f64>>,
}

/// Runs the solver from every start and checks that all equilibria agree
/// within `10 * tol`.
pub fn verify_uniqueness(
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
    starts: &[f64],
    config: &SolverConfig,
) -> Result<UniquenessReport, SolverError> {
    let ops = cycle_operators(schedule, pair, curves)?;
    verify_uniqueness_ops(&ops, starts, config, 10.0 * config.tol)
}

pub fn verify_uniqueness_ops(
    ops: &[AccountOperator],
    starts: &[f64],
    config: &SolverConfig,
    threshold: f64,
) -> Result<UniquenessReport, SolverError> {
    if starts.is_empty() {
        return Err(SolverError::NoStarts);
    }
    let mut failures = vec![];
    let mut equilibria: Vec<Vec<f64>> = vec![];
    for &s in starts {
        let r = find_equilibrium_ops(ops, s, config);
        if r.is_converged() {
            equilibria.push(r.u);
        } else {
            failures.push((s, r.status));
        }
    }
    // Every run enters the cycle at the same phase, so vectors compare
    // componentwise without rotation.
    let max_spread = equilibria
        .first()
        .map(|first| {
            equilibria
                .iter()
                .map(|u| max_distance(u, first))
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0);
    Ok(UniquenessReport {
        unique: failures.is_empty() && max_spread <= threshold,
        max_spread,
        threshold,
        failures,
        equilibria,
    })
}

/// Rotates a cycle vector to start at its smallest entry, for comparing
/// cycles entered at different phases.
pub fn phase_aligned(u: &[f64]) -> Vec<f64> {
    let start = u
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    u[start..].iter().chain(&u[..start]).copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    /// Per-cycle error reduction factor.
    pub rate: f64,
    /// Root-mean-square residual of the log-error regression.
    pub log_residual_rms: f64,
    pub points: usize,
}

/// Per-cycle max-norm errors of `trajectory` against the cycle vector `u`,
/// fitted as `log e_i ~ a + i log(rate)`.
pub fn estimate_rate(trajectory: &BalanceTrajectory, u: &[f64]) -> Option<RateEstimate> {
    let k = u.len();
    if k == 0 {
        return None;
    }
    let errors: Vec<f64> = trajectory
        .balances
        .chunks_exact(k)
        .map(|cycle| max_distance(cycle, u))
        .collect();
    let scale = u.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    rate_from_errors(&errors, scale)
}

/// Least-squares fit on the errors before they reach the noise floor, using
/// the last 50 such points and skipping the first cycle.
pub fn rate_from_errors(errors: &[f64], scale: f64) -> Option<RateEstimate> {
    let floor = 1e-8 * scale;
    let usable = errors
        .iter()
        .skip(1)
        .position(|&e| e <= floor)
        .map_or(errors.len(), |p| p + 1);
    if usable < 4 {
        return None;
    }
    let start = usable.saturating_sub(50).max(1);
    let pts: Vec<(f64, f64)> = (start..usable)
        .map(|i| (i as f64, errors[i].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let rate = slope.exp();
    (rate < 1.0).then_some(RateEstimate {
        rate,
        log_residual_rms: rms,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::trajectory_from_operators;

    fn lf(s: f64, c: f64) -> YieldCurve {
        YieldCurve::linear_flat(s, c).unwrap()
    }

    fn op(p: YieldCurve, q: YieldCurve) -> AccountOperator {
        AccountOperator {
            p_curve: p,
            q_curve: q,
        }
    }

    fn p_only(c: YieldCurve) -> AccountOperator {
        op(c, YieldCurve::zero())
    }

    fn q_only(c: YieldCurve) -> AccountOperator {
        op(YieldCurve::zero(), c)
    }

    /// Bisection on `g(x) = P(x) - Q(-x)`, decreasing in x.
    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn invariant_interval_examples() {
        let ops = vec![
            p_only(lf(-0.5, 2.0)),
            op(lf(-0.5, 1.0), lf(-0.25, 1.0)),
        ];
        let i = invariant_interval_of(&ops);
        assert_eq!((i.lower, i.upper), (-4.0, 4.0));

        let i = invariant_interval_of(&[AccountOperator::trivial()]);
        assert_eq!((i.lower, i.upper), (f64::NEG_INFINITY, f64::INFINITY));
        assert!(i.upper_unconstrained && i.lower_unconstrained);

        let i = invariant_interval_of(&[p_only(lf(-0.5, 2.0))]);
        assert_eq!((i.lower, i.upper), (f64::NEG_INFINITY, 4.0));
        assert!(i.lower_unconstrained && !i.upper_unconstrained);

        let i = invariant_interval_of(&[p_only(lf(0.0, 1.0))]);
        assert_eq!(i.upper, f64::INFINITY);
        assert!(!i.upper_unconstrained);
    }

    #[test]
    fn conditions_for_linear_flat_and_counterexamples() {
        let ops = vec![p_only(lf(-0.5, 2.0)), q_only(lf(-0.25, 1.0))];
        let i = invariant_interval_of(&ops).interval();
        let r = check_conditions_ops(&ops, &i, 200);
        assert!(r.theorem_applies());
        assert_eq!(r.closure_evidence, ClosureEvidence::Analytic);
        assert_eq!(r.witness_step, Some(0));
        assert!((r.cycle_rate_bound - 0.375).abs() < 1e-15);

        let constant = vec![p_only(lf(0.0, 1.0))];
        let i = invariant_interval_of(&constant).interval();
        let r = check_conditions_ops(&constant, &i, 200);
        assert!(!r.theorem_applies());
        assert!(!r.exists_uniformly_monotonous_step);

        let trivial = vec![AccountOperator::trivial(); 2];
        let r = check_conditions_ops(&trivial, &Interval::real_line(), 50);
        assert!(!r.exists_uniformly_monotonous_step);
        assert!(!r.theorem_applies());
    }

    #[test]
    fn closure_violation_detected() {
        let ops = vec![p_only(lf(-0.5, 2.0))];
        let r = check_conditions_ops(&ops, &Interval::new(-10.0, 1.0).unwrap(), 100);
        assert_eq!(r.closure_evidence, ClosureEvidence::Violated);
        assert!(!r.theorem_applies());
    }

    #[test]
    fn symmetric_simultaneous_converges_to_zero() {
        let ops = vec![op(lf(-0.5, 1.0), lf(-0.5, 1.0))];
        for x0 in [-5.0, 0.0, 3.0] {
            let r = find_equilibrium_ops(&ops, x0, &SolverConfig::default());
            assert!(r.is_converged());
            assert!(r.u[0].abs() <= 1e-8);
            assert!(r.iterations <= 200);
        }
    }

    #[test]
    fn asymmetric_simultaneous_matches_bisection() {
        let (p, q) = (lf(-0.5, 2.0), lf(-0.25, 1.0));
        let oracle = bisect(|x| p.eval(x) - q.eval(-x), 0.0, 4.0);
        assert!((oracle - 4.0 / 3.0).abs() < 1e-12);
        let r = find_equilibrium_ops(&[op(p, q)], 0.0, &SolverConfig::default());
        assert!(r.is_converged());
        assert!((r.u[0] - oracle).abs() < 1e-8);
    }

    #[test]
    fn alternating_equilibrium_and_zero_sum() {
        // x1 = x0 + 2 - 0.5 x0, x0 = x1 - (1 + 0.25 x1)
        // => x1 = 0.5 x0 + 2, x0 = 0.75 x1 - 1 => x1 = 2.4, x0 = 0.8
        let ops = vec![p_only(lf(-0.5, 2.0)), q_only(lf(-0.25, 1.0))];
        let brute = trajectory_from_operators(&ops, 0.0, 500);
        assert!((brute.at(499) - 2.4).abs() < 1e-12);
        assert!((brute.at(500) - 0.8).abs() < 1e-12);

        let r = find_equilibrium_ops(&ops, 0.0, &SolverConfig::default());
        assert!(r.is_converged());
        assert!((r.u[0] - 2.4).abs() < 1e-8 && (r.u[1] - 0.8).abs() < 1e-8);
        let y = cycle_yields(&ops, &r.u);
        assert!((y[0].0 - 1.6).abs() < 1e-8 && (y[1].1 - 1.6).abs() < 1e-8);
        assert!(r.zero_sum_residual.unwrap() <= 2.0 * DEFAULT_TOL);
        let rate = r.rate_q.unwrap();
        assert!((rate - 0.375).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn trivial_dynamics_converge_immediately() {
        let ops = vec![AccountOperator::trivial(); 3];
        let r = find_equilibrium_ops(&ops, 7.5, &SolverConfig::default());
        assert!(r.is_converged());
        assert_eq!(r.u, vec![7.5; 3]);
        assert_eq!(r.zero_sum_residual, Some(0.0));
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn constant_curve_diverges_with_certificate() {
        let ops = vec![p_only(lf(0.0, 1.0))];
        let r = find_equilibrium_ops(&ops, 0.0, &SolverConfig::default());
        assert_eq!(r.status, Status::Diverged);
        let w = r.divergence.unwrap();
        assert_eq!(w.drift_per_cycle, 1.0);
        assert!((w.cycles_to_bound - (1e12 - 1.0)).abs() < 1.0);

        // a Q-side constant drifts the other way
        let ops = vec![q_only(lf(0.0, 0.5)), AccountOperator::trivial()];
        let r = find_equilibrium_ops(&ops, 3.0, &SolverConfig::default());
        assert_eq!(r.status, Status::Diverged);
        assert_eq!(r.divergence.unwrap().drift_per_cycle, -0.5);
    }

    #[test]
    fn plain_bound_also_triggers_divergence() {
        // contracting toward a far-away point passes the bound first
        let ops = vec![p_only(lf(-0.5, 1e13))];
        let cfg = SolverConfig::default();
        let r = find_equilibrium_ops(&ops, 0.0, &cfg);
        assert_eq!(r.status, Status::Diverged);
        assert!(r.divergence.is_none());
    }

    #[test]
    fn max_iterations_status() {
        let ops = vec![op(lf(-0.5, 2.0), lf(-0.25, 1.0))];
        let cfg = SolverConfig {
            tol: 1e-300,
            max_iter: 3,
            ..SolverConfig::default()
        };
        let r = find_equilibrium_ops(&ops, 100.0, &cfg);
        assert_eq!(r.status, Status::MaxIterations);
        assert_eq!(r.iterations, 3);
        assert!(r.zero_sum_residual.is_none());
    }

    #[test]
    fn zero_sum_rejects_non_converged() {
        let ops = vec![p_only(lf(0.0, 1.0))];
        let r = find_equilibrium_ops(&ops, 0.0, &SolverConfig::default());
        assert!(!r.is_converged());
    }

    #[test]
    fn uniqueness_over_starts() {
        let ops = vec![p_only(lf(-0.5, 2.0)), q_only(lf(-0.25, 1.0))];
        let starts = invariant_interval_of(&ops).spanning_starts(10);
        assert_eq!(starts.len(), 10);
        assert_eq!((starts[0], starts[9]), (-4.0, 4.0));
        let cfg = SolverConfig::default();
        let u = verify_uniqueness_ops(&ops, &starts, &cfg, 10.0 * cfg.tol).unwrap();
        assert!(u.unique, "{u:?}");
        let single = verify_uniqueness_ops(&ops, &[1.0], &cfg, 10.0 * cfg.tol).unwrap();
        assert!(single.unique && single.max_spread == 0.0);

        let constant = vec![p_only(lf(0.0, 1.0))];
        let u = verify_uniqueness_ops(&constant, &[0.0, 1.0], &cfg, 1e-9).unwrap();
        assert!(!u.unique);
        assert_eq!(u.failures.len(), 2);
        assert!(u.failures.iter().all(|f| f.1 == Status::Diverged));
        assert_eq!(verify_uniqueness_ops(&ops, &[], &cfg, 1.0), Err(SolverError::NoStarts));
    }

    #[test]
    fn rate_estimates() {
        let sym = vec![op(lf(-0.5, 1.0), lf(-0.5, 1.0))];
        let t = trajectory_from_operators(&sym, 3.0, 20);
        assert!(estimate_rate(&t, &[0.0]).is_none());

        let alt = vec![p_only(lf(-0.5, 2.0)), q_only(lf(-0.25, 1.0))];
        let t = trajectory_from_operators(&alt, 0.0, 60);
        let est = estimate_rate(&t, &[2.4, 0.8]).unwrap();
        assert!((est.rate - 0.375).abs() < 1e-6, "{est:?}");
        assert!(est.log_residual_rms < 1e-6);

        let t = trajectory_from_operators(&alt, 0.8, 20);
        assert!(estimate_rate(&t, &[2.4, 0.8]).is_none());
    }

    #[test]
    fn phase_alignment_rotates_to_minimum() {
        assert_eq!(phase_aligned(&[2.4, 0.8]), vec![0.8, 2.4]);
        assert_eq!(phase_aligned(&[3.0, 1.0, 2.0]), vec![1.0, 2.0, 3.0]);
    }
}
