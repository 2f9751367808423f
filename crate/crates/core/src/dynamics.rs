//! Account operators, balance trajectories and cycle composition.
//!
//! For an ordered pair `(P, Q)` and a basic step, the account operator is
//! `A(x) = x + P(x) - Q(-x)` where `P` is the yield curve of the step's
//! transaction from P to Q and `Q` that of the transaction from Q to P (zero
//! when the step has none). Both transactions of one step act simultaneously;
//! sequential exchanges belong in separate steps.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::curve::{Interval, YieldCurve};
use crate::model::{Entity, Schedule, Transaction, TransactionStep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step is not basic: more than one transaction from {giver} to {receiver}")]
    NonBasicStep { giver: Entity, receiver: Entity },
    #[error("no yield curve assigned to transaction {0}")]
    MissingCurve(Transaction),
    #[error("yield curve for {0} assigned twice")]
    DuplicateCurve(Transaction),
    #[error("pair ({0}, {0}) is not a pair of distinct entities")]
    DegeneratePair(Entity),
}

/// Yield curves keyed by (giver, receiver, good). Curves never depend on the
/// step index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveAssignment {
    curves: BTreeMap<Transaction, YieldCurve>,
}

impl CurveAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Transaction, curve: YieldCurve) -> Result<(), DynamicsError> {
        if self.curves.contains_key(&t) {
            return Err(DynamicsError::DuplicateCurve(t));
        }
        self.curves.insert(t, curve);
        Ok(())
    }

    pub fn get(&self, t: &Transaction) -> Option<&YieldCurve> {
        self.curves.get(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Transaction, &YieldCurve)> {
        self.curves.iter()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }
}

/// Ordered pair of distinct entities; balances are read from `p`'s side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub p: Entity,
    pub q: Entity,
}

impl Pair {
    pub fn new(p: Entity, q: Entity) -> Result<Self, DynamicsError> {
        if p == q {
            return Err(DynamicsError::DegeneratePair(p));
        }
        Ok(Pair { p, q })
    }

    pub fn swapped(&self) -> Pair {
        Pair {
            p: self.q.clone(),
            q: self.p.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountOperator {
    pub p_curve: YieldCurve,
    pub q_curve: YieldCurve,
}

impl AccountOperator {
    pub fn trivial() -> Self {
        AccountOperator {
            p_curve: YieldCurve::zero(),
            q_curve: YieldCurve::zero(),
        }
    }

    /// `x + P(x) - Q(-x)`.
    pub fn apply(&self, x: f64) -> f64 {
        let (p, q) = self.yields(x);
        x + p - q
    }

    /// The giver-side yields `(P(x), Q(-x))` at balance `x`.
    pub fn yields(&self, x: f64) -> (f64, f64) {
        (self.p_curve.eval(x), self.q_curve.eval(-x))
    }

    pub fn is_trivial(&self) -> bool {
        self.p_curve.is_identically_zero() && self.q_curve.is_identically_zero()
    }
}

/// Builds the operator of `step` for `pair`.
pub fn build_operator(
    step: &TransactionStep,
    pair: &Pair,
    curves: &CurveAssignment,
) -> Result<AccountOperator, DynamicsError> {
    if let Some((g, r)) = step.first_duplicate_direction() {
        if (g == &pair.p && r == &pair.q) || (g == &pair.q && r == &pair.p) {
            return Err(DynamicsError::NonBasicStep {
                giver: g.clone(),
                receiver: r.clone(),
            });
        }
    }
    let curve_of = |giver: &Entity, receiver: &Entity| -> Result<YieldCurve, DynamicsError> {
        match step.transaction_from(giver, receiver) {
            Some(t) => curves
                .get(t)
                .cloned()
                .ok_or_else(|| DynamicsError::MissingCurve(t.clone())),
            None => Ok(YieldCurve::zero()),
        }
    };
    Ok(AccountOperator {
        p_curve: curve_of(&pair.p, &pair.q)?,
        q_curve: curve_of(&pair.q, &pair.p)?,
    })
}

/// Operators for every step of one cycle, in schedule order.
pub fn cycle_operators(
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
) -> Result<Vec<AccountOperator>, DynamicsError> {
    schedule
        .steps()
        .iter()
        .map(|s| build_operator(s, pair, curves))
        .collect()
}

/// A balance sequence `x_1 .. x_n` started from `x0`, with the yields paid at
/// each step.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceTrajectory {
    pub x0: f64,
    pub balances: Vec<f64>,
    /// `P_i(x_{i-1})`
    pub p_yields: Vec<f64>,
    /// `Q_i(-x_{i-1})`
    pub q_yields: Vec<f64>,
    /// Order of the schedule that produced the trajectory.
    pub order: usize,
}

impl BalanceTrajectory {
    pub fn len(&self) -> usize {
        self.balances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balances.is_empty()
    }

    /// Balance after `i` steps; `at(0)` is the initial balance.
    pub fn at(&self, i: usize) -> f64 {
        if i == 0 {
            self.x0
        } else {
            self.balances[i - 1]
        }
    }

    /// Sum over steps of `p_yield - q_yield`.
    pub fn net_yield(&self) -> f64 {
        self.p_yields
            .iter()
            .zip(&self.q_yields)
            .map(|(p, q)| p - q)
            .sum()
    }

    /// `|x_n - x_0 - net_yield|`.
    pub fn telescoping_residual(&self) -> f64 {
        let last = self.balances.last().copied().unwrap_or(self.x0);
        (last - self.x0 - self.net_yield()).abs()
    }
}

/// Iterates `x_i = A_i(x_{i-1})` for `n` steps with the schedule read
/// cyclically.
pub fn trajectory(
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
    x0: f64,
    n: usize,
) -> Result<BalanceTrajectory, DynamicsError> {
    let ops = cycle_operators(schedule, pair, curves)?;
    Ok(trajectory_from_operators(&ops, x0, n))
}

pub fn trajectory_from_operators(ops: &[AccountOperator], x0: f64, n: usize) -> BalanceTrajectory {
    let mut t = BalanceTrajectory {
        x0,
        balances: Vec::with_capacity(n),
        p_yields: Vec::with_capacity(n),
        q_yields: Vec::with_capacity(n),
        order: ops.len(),
    };
    let mut x = x0;
    for i in 0..n {
        let (p, q) = ops[i % ops.len()].yields(x);
        x = x + p - q;
        t.balances.push(x);
        t.p_yields.push(p);
        t.q_yields.push(q);
    }
    t
}

/// One full cycle of operators starting after phase `i`: maps `x_i` to
/// `x_{i+k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOperator {
    ops: Vec<AccountOperator>,
    phase: usize,
}

impl CycleOperator {
    pub fn apply(&self, x: f64) -> f64 {
        let k = self.ops.len();
        (0..k).fold(x, |x, j| self.ops[(self.phase + j) % k].apply(x))
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn order(&self) -> usize {
        self.ops.len()
    }
}

pub fn compose_cycle(
    schedule: &Schedule,
    pair: &Pair,
    curves: &CurveAssignment,
    phase: usize,
) -> Result<CycleOperator, DynamicsError> {
    let ops = cycle_operators(schedule, pair, curves)?;
    Ok(CycleOperator {
        phase: phase % ops.len(),
        ops,
    })
}

/// The componentwise map on `R^k` taking one cycle's balances to the next
/// cycle's: component `j` is the cycle operator started after phase `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorOperator {
    ops: Vec<AccountOperator>,
}

impl VectorOperator {
    pub fn new(ops: Vec<AccountOperator>) -> Self {
        assert!(!ops.is_empty());
        VectorOperator { ops }
    }

    pub fn order(&self) -> usize {
        self.ops.len()
    }

    pub fn operators(&self) -> &[AccountOperator] {
        &self.ops
    }

    /// Balances after each step of the first cycle started from `x0`.
    pub fn first_cycle(&self, x0: f64) -> Vec<f64> {
        let mut x = x0;
        self.ops
            .iter()
            .map(|op| {
                x = op.apply(x);
                x
            })
            .collect()
    }

    /// Since every component is driven by the same orbit, the next vector is
    /// the next cycle of the orbit through the last component.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let k = self.ops.len();
        assert_eq!(v.len(), k);
        (0..k)
            .map(|j| (1..=k).fold(v[j], |x, s| self.ops[(j + s) % k].apply(x)))
            .collect()
    }
}

/// Pairwise balances of a whole community, one signed value per unordered
/// pair, stored from the perspective of the smaller entity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    balances: BTreeMap<(Entity, Entity), f64>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Balance of `p` with respect to `q`.
    pub fn balance(&self, p: &Entity, q: &Entity) -> f64 {
        if p < q {
            self.balances
                .get(&(p.clone(), q.clone()))
                .copied()
                .unwrap_or(0.0)
        } else {
            -self
                .balances
                .get(&(q.clone(), p.clone()))
                .copied()
                .unwrap_or(0.0)
        }
    }

    pub fn set_balance(&mut self, p: &Entity, q: &Entity, x: f64) {
        if p < q {
            self.balances.insert((p.clone(), q.clone()), x);
        } else {
            self.balances.insert((q.clone(), p.clone()), -x);
        }
    }

    /// Applies one step to every pair that transacts in it. Pairs without a
    /// transaction in the step keep their balance.
    pub fn update(
        &self,
        step: &TransactionStep,
        curves: &CurveAssignment,
    ) -> Result<Ledger, DynamicsError> {
        let mut pairs: Vec<(Entity, Entity)> = step
            .transactions()
            .iter_counts()
            .map(|(t, _)| {
                if t.giver() < t.receiver() {
                    (t.giver().clone(), t.receiver().clone())
                } else {
                    (t.receiver().clone(), t.giver().clone())
                }
            })
            .collect();
        pairs.sort();
        pairs.dedup();
        let mut next = self.clone();
        for (a, b) in pairs {
            let pair = Pair { p: a, q: b };
            let op = build_operator(step, &pair, curves)?;
            let x = self.balance(&pair.p, &pair.q);
            next.set_balance(&pair.p, &pair.q, op.apply(x));
        }
        Ok(next)
    }
}

/// Lipschitz bound of one operator's action restricted to `interval`, via the
/// contraction lemma: if one curve is uniformly monotonous with constant `r`
/// and the other a contraction with modulus `q`, the operator contracts by
/// `max(|1 - r|, q)`; otherwise the bound is 1.
pub fn operator_rate_bound(op: &AccountOperator, interval: &Interval) -> f64 {
    if interval.is_degenerate() {
        return 0.0;
    }
    let p = op.p_curve.analyze(interval, 0);
    let q = op.q_curve.analyze(&interval.mirrored(), 0);
    let mut bound: f64 = 1.0;
    if p.is_uniformly_monotonous() {
        if let Some(qq) = q.contraction_q {
            bound = bound.min((1.0 - p.uniform_lower).abs().max(qq));
        }
    }
    if q.is_uniformly_monotonous() {
        if let Some(pq) = p.contraction_q {
            bound = bound.min((1.0 - q.uniform_lower).abs().max(pq));
        }
    }
    // one curve both uniformly monotonous and a contraction, the other only
    // non-expanding
    for c in [&p, &q] {
        if let (true, Some(cq)) = (c.is_uniformly_monotonous(), c.contraction_q) {
            bound = bound.min((1.0 - c.uniform_lower).abs().max(cq));
        }
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Good;
    use proptest::prelude::*;

    fn e(s: &str) -> Entity {
        Entity::new(s)
    }

    fn tx(g: &str, r: &str, good: &str) -> Transaction {
        Transaction::new(e(g), e(r), Good::new(good)).unwrap()
    }

    fn lf(s: f64, c: f64) -> YieldCurve {
        YieldCurve::linear_flat(s, c).unwrap()
    }

    fn pq() -> Pair {
        Pair::new(e("P"), e("Q")).unwrap()
    }

    fn curves(p: YieldCurve, q: YieldCurve) -> CurveAssignment {
        let mut c = CurveAssignment::new();
        c.insert(tx("P", "Q", "a"), p).unwrap();
        c.insert(tx("Q", "P", "b"), q).unwrap();
        c
    }

    fn alternating() -> Schedule {
        Schedule::new(vec![
            [tx("P", "Q", "a")].into_iter().collect(),
            [tx("Q", "P", "b")].into_iter().collect(),
        ])
        .unwrap()
    }

    #[test]
    fn build_operator_directions() {
        let c = curves(lf(-0.5, 2.0), lf(-0.25, 1.0));
        let op = build_operator(&[tx("P", "Q", "a")].into_iter().collect(), &pq(), &c).unwrap();
        assert!(op.q_curve.is_identically_zero());
        assert_eq!(op.p_curve, lf(-0.5, 2.0));

        let op = build_operator(&TransactionStep::empty(), &pq(), &c).unwrap();
        assert!(op.is_trivial());

        let both = [tx("P", "Q", "a"), tx("Q", "P", "b")].into_iter().collect();
        let op = build_operator(&both, &pq(), &c).unwrap();
        assert!(!op.p_curve.is_identically_zero() && !op.q_curve.is_identically_zero());

        let bad = [tx("P", "Q", "a"), tx("P", "Q", "a")].into_iter().collect();
        assert!(matches!(
            build_operator(&bad, &pq(), &c),
            Err(DynamicsError::NonBasicStep { .. })
        ));
        let missing = [tx("P", "Q", "z")].into_iter().collect();
        assert!(matches!(
            build_operator(&missing, &pq(), &c),
            Err(DynamicsError::MissingCurve(_))
        ));
    }

    #[test]
    fn duplicate_curve_key_rejected() {
        let mut c = curves(lf(-0.5, 2.0), YieldCurve::zero());
        assert!(matches!(
            c.insert(tx("P", "Q", "a"), lf(-0.1, 1.0)),
            Err(DynamicsError::DuplicateCurve(_))
        ));
    }

    #[test]
    fn apply_examples() {
        let sym = AccountOperator {
            p_curve: lf(-0.5, 1.0),
            q_curve: lf(-0.5, 1.0),
        };
        assert_eq!(sym.apply(0.0), 0.0);
        let one_sided = AccountOperator {
            p_curve: lf(-0.5, 2.0),
            q_curve: YieldCurve::zero(),
        };
        assert_eq!(one_sided.apply(0.0), 2.0);
        let t = AccountOperator::trivial();
        assert!(t.is_trivial());
        for x in [-7.5, 0.0, 3.25] {
            assert_eq!(t.apply(x), x);
        }
        let zero_pw =
            YieldCurve::piecewise(vec![-1.0, 2.0], vec![0.0, 0.0], 0.0, 0.0).unwrap();
        assert!(AccountOperator {
            p_curve: zero_pw,
            q_curve: YieldCurve::zero()
        }
        .is_trivial());
        assert!(!one_sided.is_trivial());
    }

    /// (slope, intercept) of the P and Q curves of a step, if present.
    type HandStep = (Option<(f64, f64)>, Option<(f64, f64)>);

    /// Hand iteration of `x + P(x) - Q(-x)`, independent of the operator code.
    fn hand_iterate(x0: f64, steps: &[HandStep], n: usize) -> Vec<f64> {
        let y = |c: Option<(f64, f64)>, x: f64| match c {
            Some((s, b)) => (b + s * x).max(0.0),
            None => 0.0,
        };
        let mut x = x0;
        let mut out = vec![];
        for i in 0..n {
            let (p, q) = steps[i % steps.len()];
            x = x + y(p, x) - y(q, -x);
            out.push(x);
        }
        out
    }

    #[test]
    fn alternating_trajectory_matches_hand_iteration() {
        let c = curves(lf(-0.5, 1.0), lf(-0.5, 1.0));
        let t = trajectory(&alternating(), &pq(), &c, 0.0, 2).unwrap();
        // step 1: 0 + P(0) = 1; step 2: 1 - Q(-1) = 1 - 1.5
        let oracle = hand_iterate(0.0, &[(Some((-0.5, 1.0)), None), (None, Some((-0.5, 1.0)))], 2);
        assert_eq!(oracle, vec![1.0, -0.5]);
        assert_eq!(t.balances, oracle);
        assert_eq!(t.p_yields, vec![1.0, 0.0]);
        assert_eq!(t.q_yields, vec![0.0, 1.5]);
    }

    #[test]
    fn trivial_and_empty_trajectories() {
        let c = curves(YieldCurve::zero(), YieldCurve::zero());
        let t = trajectory(&alternating(), &pq(), &c, 5.0, 10).unwrap();
        assert!(t.balances.iter().all(|&x| x == 5.0));
        let t = trajectory(&alternating(), &pq(), &c, 5.0, 0).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.at(0), 5.0);
    }

    #[test]
    fn compose_cycle_unfolds_definition() {
        let c = curves(lf(-0.5, 2.0), lf(-0.25, 1.0));
        let single = Schedule::new(vec![[tx("P", "Q", "a")].into_iter().collect()]).unwrap();
        let c0 = compose_cycle(&single, &pq(), &c, 0).unwrap();
        let a = build_operator(single.step(0), &pq(), &c).unwrap();
        let alt = alternating();
        let a1 = build_operator(alt.step(0), &pq(), &c).unwrap();
        let a2 = build_operator(alt.step(1), &pq(), &c).unwrap();
        let c_alt = compose_cycle(&alt, &pq(), &c, 0).unwrap();
        for i in -20..=20 {
            let x = i as f64 * 0.5;
            assert_eq!(c0.apply(x), a.apply(x));
            assert_eq!(c_alt.apply(x), a2.apply(a1.apply(x)));
        }
    }

    #[test]
    fn cycle_operator_reproduces_trajectory() {
        let mut c = curves(lf(-0.5, 2.0), lf(-0.25, 1.0));
        c.insert(tx("P", "Q", "c"), lf(-0.8, 3.0)).unwrap();
        let s = Schedule::new(vec![
            [tx("P", "Q", "a")].into_iter().collect(),
            [tx("P", "Q", "c"), tx("Q", "P", "b")].into_iter().collect(),
            TransactionStep::empty(),
        ])
        .unwrap();
        let t = trajectory(&s, &pq(), &c, -3.0, 40).unwrap();
        for i in 0..30 {
            let ci = compose_cycle(&s, &pq(), &c, i).unwrap();
            assert_eq!(ci.apply(t.at(i)), t.at(i + 3));
            let ck = compose_cycle(&s, &pq(), &c, i + 3).unwrap();
            assert_eq!(ck, ci);
        }
        let v = VectorOperator::new(cycle_operators(&s, &pq(), &c).unwrap());
        let first = v.first_cycle(-3.0);
        assert_eq!(first, t.balances[0..3].to_vec());
        assert_eq!(v.apply(&first), t.balances[3..6].to_vec());
    }

    #[test]
    fn ledger_updates() {
        let c = curves(lf(-0.5, 2.0), lf(-0.25, 1.0));
        let l = Ledger::new();
        assert_eq!(l.update(&TransactionStep::empty(), &c).unwrap(), l);

        let l1 = l.update(&[tx("P", "Q", "a")].into_iter().collect(), &c).unwrap();
        assert_eq!(l1.balance(&e("P"), &e("Q")), 2.0);
        assert_eq!(l1.balance(&e("Q"), &e("P")), -2.0);

        let mut c3 = c.clone();
        c3.insert(tx("R", "P", "c"), lf(-0.5, 1.0)).unwrap();
        let l2 = l1.update(&[tx("R", "P", "c")].into_iter().collect(), &c3).unwrap();
        assert_eq!(l2.balance(&e("P"), &e("Q")), 2.0);
        // R gives to P: R's balance with P rises by R's yield
        assert_eq!(l2.balance(&e("R"), &e("P")), 1.0);
        assert_eq!(l2.balance(&e("P"), &e("R")), -1.0);
    }

    #[test]
    fn rate_bound_of_alternating_steps() {
        let c = curves(lf(-0.5, 2.0), lf(-0.25, 1.0));
        let ops = cycle_operators(&alternating(), &pq(), &c).unwrap();
        let i = Interval::new(-4.0, 4.0).unwrap();
        assert_eq!(operator_rate_bound(&ops[0], &i), 0.5);
        assert_eq!(operator_rate_bound(&ops[1], &i), 0.75);
        assert_eq!(operator_rate_bound(&AccountOperator::trivial(), &i), 1.0);
    }

    fn arb_op() -> impl Strategy<Value = AccountOperator> {
        let curve = prop_oneof![
            Just(YieldCurve::zero()),
            (-0.999f64..=0.0, 0.0f64..5.0).prop_map(|(s, c)| lf(s, c)),
        ];
        (curve.clone(), curve).prop_map(|(p, q)| AccountOperator { p_curve: p, q_curve: q })
    }

    proptest! {
        #[test]
        fn operators_and_cycles_are_nonexpanding(
            ops in proptest::collection::vec(arb_op(), 1..5),
            x in -20.0f64..20.0, y in -20.0f64..20.0,
        ) {
            for op in &ops {
                prop_assert!((op.apply(x) - op.apply(y)).abs() <= (x - y).abs() + 1e-12);
            }
            let cyc = CycleOperator { ops: ops.clone(), phase: 0 };
            prop_assert!((cyc.apply(x) - cyc.apply(y)).abs() <= (x - y).abs() + 1e-12);
        }

        #[test]
        fn telescoping_holds(
            ops in proptest::collection::vec(arb_op(), 1..5),
            x0 in -20.0f64..20.0, n in 0usize..200,
        ) {
            let t = trajectory_from_operators(&ops, x0, n);
            let scale = t.balances.iter().fold(x0.abs(), |m, b| m.max(b.abs())) + 1.0;
            prop_assert!(t.telescoping_residual() <= (n as f64 + 1.0) * f64::EPSILON * scale * 4.0);
        }

        #[test]
        fn ledger_stays_antisymmetric(
            seq in proptest::collection::vec(0usize..4, 0..30)
        ) {
            let mut c = curves(lf(-0.5, 2.0), lf(-0.25, 1.0));
            c.insert(tx("P", "R", "a"), lf(-0.3, 1.0)).unwrap();
            c.insert(tx("R", "Q", "b"), lf(-0.6, 2.5)).unwrap();
            let steps: Vec<TransactionStep> = vec![
                [tx("P", "Q", "a")].into_iter().collect(),
                [tx("Q", "P", "b"), tx("P", "R", "a")].into_iter().collect(),
                [tx("R", "Q", "b")].into_iter().collect(),
                TransactionStep::empty(),
            ];
            let mut l = Ledger::new();
            for i in seq {
                l = l.update(&steps[i], &c).unwrap();
            }
            for (a, b) in [("P", "Q"), ("P", "R"), ("Q", "R")] {
                prop_assert_eq!(l.balance(&e(a), &e(b)), -l.balance(&e(b), &e(a)));
            }
        }
    }
}
