use gifteq_core::bundled;
use gifteq_core::scenario::{parse_scenario, CurveLiteral, Scenario};
use gifteq_core::solver::{cycle_yields, find_equilibrium_ops, Status};
use gifteq_core::{
    dynamics::cycle_operators, find_equilibrium, trajectory, verify_zero_sum, Pair, SolverConfig,
};

fn load(text: &str) -> Scenario {
    parse_scenario(text, "test").unwrap()
}

fn pair_of(s: &Scenario) -> Pair {
    s.pairs(None).unwrap().remove(0)
}

/// Linear-flat coefficients (slope, intercept) of the curve for `giver -> receiver`
/// in step `j`, if that step has such a transaction.
fn coeffs(s: &Scenario, j: usize, giver: &str, receiver: &str) -> Option<(f64, f64)> {
    let src = s.source();
    let t = src.schedule[j]
        .iter()
        .find(|t| t.giver == giver && t.receiver == receiver)?;
    let c = src
        .curves
        .iter()
        .find(|c| c.giver == giver && c.receiver == receiver && c.good == t.good)?;
    match c.curve {
        CurveLiteral::LinearFlat { slope, intercept } => Some((slope, intercept)),
        _ => panic!("oracle handles linear-flat curves only"),
    }
}

/// Fixed point of the cycle assuming every yield is on its linear part:
/// each step is affine, `x -> (1 + sp + sq) x + (cp - cq)`, so the cycle map
/// is affine and its fixed point solves a scalar equation. Returns the
/// balances after each step.
fn affine_oracle(s: &Scenario) -> Vec<f64> {
    let pair = pair_of(s);
    let (p, q) = (pair.p.as_str(), pair.q.as_str());
    let k = s.schedule.order();
    let steps: Vec<(f64, f64)> = (0..k)
        .map(|j| {
            let (sp, cp) = coeffs(s, j, p, q).unwrap_or((0.0, 0.0));
            let (sq, cq) = coeffs(s, j, q, p).unwrap_or((0.0, 0.0));
            (1.0 + sp + sq, cp - cq)
        })
        .collect();
    let (a, b) = steps
        .iter()
        .fold((1.0, 0.0), |(a, b), &(m, c)| (m * a, m * b + c));
    let mut x = b / (1.0 - a);
    let u: Vec<f64> = steps
        .iter()
        .map(|&(m, c)| {
            x = m * x + c;
            x
        })
        .collect();
    // the linear-part assumption must hold along the cycle
    for j in 0..k {
        let before = u[(j + k - 1) % k];
        if let Some((sp, cp)) = coeffs(s, j, p, q) {
            assert!(cp + sp * before > 0.0, "P flat at step {j}");
        }
        if let Some((sq, cq)) = coeffs(s, j, q, p) {
            assert!(cq - sq * before > 0.0, "Q flat at step {j}");
        }
    }
    u
}

fn solve(s: &Scenario, x0: f64) -> gifteq_core::EquilibriumResult {
    let pair = pair_of(s);
    find_equilibrium(&s.schedule, &pair, &s.curves, x0, &SolverConfig::default()).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn worked_scenarios_match_affine_oracle() {
    for (name, text) in bundled::WORKED {
        let s = load(text);
        let expected = affine_oracle(&s);
        for x0 in [-7.0, 0.0, 2.5, 9.0] {
            let r = solve(&s, x0);
            assert_eq!(r.status, Status::Converged, "{name}");
            assert_close(&r.u, &expected, 1e-8);
        }
    }
}

#[test]
fn simultaneous_oracle_values() {
    // P(x) = Q(-x): 2 - x/2 = 1 + x/4
    let r = solve(&load(bundled::SIMULTANEOUS), 0.0);
    assert!((r.u[0] - 4.0 / 3.0).abs() < 1e-8);
}

#[test]
fn alternating_oracle_values() {
    // u1 = u0 + 2 - u0/2, u0 = u1 - 1 + u1/4
    let s = load(bundled::ALTERNATING);
    let r = solve(&s, 0.0);
    assert_close(&r.u, &[2.4, 0.8], 1e-8);
    let pair = pair_of(&s);
    let ops = cycle_operators(&s.schedule, &pair, &s.curves).unwrap();
    let y = cycle_yields(&ops, &r.u);
    assert!((y[0].0 - 1.6).abs() < 1e-8 && (y[1].1 - 1.6).abs() < 1e-8);
    assert!(verify_zero_sum(&r, &s.schedule, &pair, &s.curves).unwrap() <= 1e-9);
}

#[test]
fn alternating_long_run_agrees_with_solver() {
    let s = load(bundled::ALTERNATING);
    let pair = pair_of(&s);
    let t = trajectory(&s.schedule, &pair, &s.curves, 0.0, 500).unwrap();
    let tail = &t.balances[498..];
    assert_close(tail, &[2.4, 0.8], 1e-8);
}

#[test]
fn two_then_one_yield_identity() {
    // the two gifts of P are repaid by the single gift of Q
    let s = load(bundled::TWO_THEN_ONE);
    let pair = pair_of(&s);
    let r = solve(&s, 0.0);
    let ops = cycle_operators(&s.schedule, &pair, &s.curves).unwrap();
    let y = cycle_yields(&ops, &r.u);
    let (a, b, c) = (y[0].0, y[1].0, y[2].1);
    assert!(a > 0.0 && b > 0.0 && a != b);
    assert!((c - (a + b)).abs() <= 1e-8, "{a} + {b} != {c}");
}

#[test]
fn one_then_both_yield_identity() {
    let s = load(bundled::ONE_THEN_BOTH);
    let pair = pair_of(&s);
    let r = solve(&s, 0.0);
    let ops = cycle_operators(&s.schedule, &pair, &s.curves).unwrap();
    let y = cycle_yields(&ops, &r.u);
    let (a, b, c) = (y[0].0, y[1].0, y[1].1);
    assert!((c - (a + b)).abs() <= 1e-8);
    // C - B is the balance change over the lone step
    assert!(((c - b) - (r.u[0] - r.u[1])).abs() <= 1e-8);
}

#[test]
fn both_both_one_yield_identity() {
    let s = load(bundled::BOTH_BOTH_ONE);
    let pair = pair_of(&s);
    assert_eq!((pair.p.as_str(), pair.q.as_str()), ("P", "R"));
    let r = solve(&s, 0.0);
    let ops = cycle_operators(&s.schedule, &pair, &s.curves).unwrap();
    let y = cycle_yields(&ops, &r.u);
    let lhs = y[0].0 + y[1].0;
    let rhs = y[0].1 + y[1].1 + y[2].1;
    assert!(y[2].0 == 0.0);
    assert!((lhs - rhs).abs() <= 1e-8);
}

#[test]
fn constant_yield_diverges() {
    let s = load(bundled::CONSTANT_YIELD);
    let r = solve(&s, 0.0);
    assert_eq!(r.status, Status::Diverged);
    let w = r.divergence.unwrap();
    assert_eq!(w.drift_per_cycle, 1.0);
    assert!((w.cycles_to_bound - 1e12).abs() <= 1.0);
    let pair = pair_of(&s);
    assert!(verify_zero_sum(&r, &s.schedule, &pair, &s.curves).is_err());
}

#[test]
fn idle_pair_is_a_fixed_point() {
    let s = load(bundled::IDLE);
    let r = solve(&s, 1.5);
    assert_eq!(r.status, Status::Converged);
    assert_eq!(r.u, vec![1.5, 1.5]);
    assert_eq!(r.zero_sum_residual, Some(0.0));
}

#[test]
fn cycle_error_never_grows() {
    // every operator is non-expanding, so the distance to the equilibrium
    // cannot increase from one step to the next
    for (name, text) in bundled::WORKED {
        let s = load(text);
        let pair = pair_of(&s);
        let u = solve(&s, 0.0).u;
        let k = u.len();
        let t = trajectory(&s.schedule, &pair, &s.curves, 20.0, 60 * k).unwrap();
        let err: Vec<f64> = t
            .balances
            .iter()
            .enumerate()
            .map(|(i, x)| (x - u[i % k]).abs())
            .collect();
        for c in err.chunks_exact(k).collect::<Vec<_>>().windows(2) {
            let (prev, next) = (c[0], c[1]);
            for j in 0..k {
                assert!(next[j] <= prev[j] + 1e-12, "{name}");
            }
        }
    }
}

#[test]
fn max_iterations_is_reported() {
    let s = load(bundled::ALTERNATING);
    let pair = pair_of(&s);
    let ops = cycle_operators(&s.schedule, &pair, &s.curves).unwrap();
    let cfg = SolverConfig {
        max_iter: 3,
        ..SolverConfig::default()
    };
    let r = find_equilibrium_ops(&ops, 100.0, &cfg);
    assert_eq!(r.status, Status::MaxIterations);
    assert!(r.zero_sum_residual.is_none());
    assert!(verify_zero_sum(&r, &s.schedule, &pair, &s.curves).is_err());
}

#[test]
fn bundled_files_round_trip() {
    for (name, text) in bundled::ALL {
        let s = load(text);
        let again = parse_scenario(&s.emit(), name).unwrap();
        assert_eq!(again.source(), s.source(), "{name}");
    }
}
