//! Verification of single scenarios and the built-in suites.

use gifteq_core::bundled;
use gifteq_core::curve::{Interval, PiecewiseLinear, YieldCurve};
use gifteq_core::dynamics::{cycle_operators, operator_rate_bound};
use gifteq_core::scenario::{parse_scenario, random_scenario, RandomFamily, Scenario};
use gifteq_core::solver::{cycle_yields, verify_uniqueness_ops};
use gifteq_core::verify::{
    check_composition, check_l_contraction, check_l_nonexpanding, check_reflection,
    random_yield_curve, MapClass, SampledCheck,
};
use gifteq_core::{AccountOperator, Entity, Pair, SolverConfig, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::{CheckRecord, Outcome, PairAnalysis, PairReport, VerifyReport};
use crate::CliError;

/// Sample pairs per sampled Lipschitz check.
pub const LEMMA_SAMPLES: usize = 1000;
pub const RANDOM_SCENARIOS: usize = 1000;
pub const RANDOM_CURVE_PAIRS: usize = 1000;
/// Starts spread over the invariant interval for the uniqueness check.
pub const UNIQUENESS_STARTS: usize = 10;
pub const UNIQUENESS_TOL: f64 = 1e-6;
/// Per-step slack on the zero-sum residual.
pub const ZERO_SUM_TOL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-8;
/// Allowed excess of a fitted convergence rate over the analytic bound.
pub const RATE_SLACK: f64 = 0.05;

pub const SUITES: [&str; 3] = ["paper-graphs", "random", "negative-controls"];

pub fn run_suite(name: &str, seed: u64) -> Result<VerifyReport, CliError> {
    match name {
        "paper-graphs" => worked_suite(seed),
        "random" => Ok(random_suite(seed)),
        "negative-controls" => Ok(negative_controls(seed)),
        other => Err(CliError::Usage(format!(
            "unknown suite {other:?}; expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

/// A finite window of `interval` for sampling: unbounded sides are cut at the
/// curves' breakpoints plus a margin.
fn finite_interval(interval: &Interval, ops: &[AccountOperator]) -> Interval {
    let anchors: Vec<f64> = ops
        .iter()
        .flat_map(|op| {
            let p = op.p_curve.as_piecewise().breakpoints().to_vec();
            let q = op.q_curve.as_piecewise().breakpoints().iter().map(|b| -b).collect::<Vec<_>>();
            p.into_iter().chain(q)
        })
        .collect();
    let (lo, hi) = interval.sampling_window(&anchors);
    Interval { lo, hi }
}

fn sampled(scenario: &str, name: String, c: &SampledCheck) -> CheckRecord {
    match &c.inapplicable {
        Some(reason) => CheckRecord::skip(scenario, &name, reason.clone()),
        None => CheckRecord {
            runs: c.samples,
            failures: c.violations.len(),
            ..CheckRecord::single(scenario, &name, c.passed)
        }
        .value(c.worst_ratio, c.bound),
    }
}

fn class_of(bound: f64) -> MapClass {
    if bound < 1.0 {
        MapClass::Contraction(bound)
    } else {
        MapClass::NonExpanding
    }
}

/// Checks for one pair: the lemma inequalities at every step, the modulus of
/// the composed cycle, and the equilibrium claims (existence, uniqueness,
/// zero sum, rate) when the convergence conditions hold.
pub fn verify_pair(label: &str, a: &PairAnalysis, config: &SolverConfig, seed: u64) -> Vec<CheckRecord> {
    let mut out = vec![];
    let applies = a.conditions.theorem_applies();
    let ops = &a.ops;
    let k = ops.len();
    let iv = a.invariant.interval();
    let window = finite_interval(&iv, ops);

    out.push(
        CheckRecord::single(
            label,
            "curves non-increasing and non-expanding",
            a.conditions.all_curves_nonincreasing_nonexpanding,
        ),
    );
    out.push(
        CheckRecord::single(label, "invariant interval closed", a.conditions.interval_closed_under_operators)
            .note(format!("{iv}, {:?}", a.conditions.closure_evidence)),
    );

    for (j, op) in ops.iter().enumerate() {
        let p = op.p_curve.as_piecewise();
        // A(x) = x + P(x) + R(x) with R(x) = -Q(-x)
        let r = op.q_curve.reflect();
        let s = seed.wrapping_add(j as u64);
        let ne = check_l_nonexpanding(p, &r, &window, LEMMA_SAMPLES, s);
        out.push(sampled(label, format!("step {j} operator non-expanding"), &ne));
        if !window.is_degenerate() {
            let c = check_l_contraction(p, &r, &window, LEMMA_SAMPLES, s);
            out.push(sampled(label, format!("step {j} operator contraction"), &c));
            let refl = check_reflection(op.q_curve.as_piecewise(), &window.mirrored(), LEMMA_SAMPLES, s);
            out.push(sampled(label, format!("step {j} reflection"), &refl));
        }
    }

    if !window.is_degenerate() {
        // C = (A_{k-1} .. A_1) . A_0 with the modulus predicted by its factors
        let bounds: Vec<f64> = ops.iter().map(|op| operator_rate_bound(op, &iv)).collect();
        let rest = |x: f64| ops[1..].iter().fold(x, |x, op| op.apply(x));
        let first = |x: f64| ops[0].apply(x);
        let c = check_composition(
            &rest,
            &first,
            &window,
            LEMMA_SAMPLES,
            class_of(bounds[1..].iter().product()),
            class_of(bounds[0]),
            seed,
        );
        out.push(sampled(label, "cycle operator modulus".into(), &c));
    }

    let r = &a.result;
    if applies {
        out.push(
            CheckRecord::single(label, "equilibrium found", r.status == Status::Converged)
                .note(format!("{} after {} cycles", r.status, r.iterations)),
        );
    } else {
        out.push(CheckRecord::skip(
            label,
            "equilibrium found",
            format!("convergence conditions do not hold; solver reports {}", r.status),
        ));
    }

    match r.zero_sum_residual {
        Some(res) => {
            let bound = k as f64 * ZERO_SUM_TOL;
            out.push(CheckRecord::single(label, "zero sum of yields", res <= bound).value(res, bound));
        }
        None => out.push(CheckRecord::skip(label, "zero sum of yields", "no equilibrium")),
    }

    if applies {
        let starts = a.invariant.spanning_starts(UNIQUENESS_STARTS);
        let u = verify_uniqueness_ops(ops, &starts, config, UNIQUENESS_TOL)
            .expect("spanning starts are never empty");
        out.push(
            CheckRecord {
                runs: starts.len(),
                failures: u.failures.len(),
                ..CheckRecord::single(label, "unique equilibrium", u.unique)
            }
            .value(u.max_spread, UNIQUENESS_TOL),
        );
        let bound = a.conditions.cycle_rate_bound;
        match r.rate_q {
            Some(q) => out.push(
                CheckRecord::single(label, "rate within bound", q <= bound + RATE_SLACK).value(q, bound),
            ),
            None => out.push(CheckRecord::skip(
                label,
                "rate within bound",
                "too few cycles above the noise floor to fit a rate",
            )),
        }
    } else {
        out.push(CheckRecord::skip(label, "unique equilibrium", "convergence conditions do not hold"));
    }
    out
}

/// Records, per-pair reports and the analyses they came from.
pub type ScenarioVerification = (Vec<CheckRecord>, Vec<PairReport>, Vec<PairAnalysis>);

/// Runs every pair of a scenario through [`verify_pair`].
pub fn verify_scenario(s: &Scenario, seed: u64) -> Result<ScenarioVerification, CliError> {
    let config = s.run.solver_config();
    let mut records = vec![];
    let mut reports = vec![];
    let mut analyses = vec![];
    for pair in s.pairs(None)? {
        let ops = cycle_operators(&s.schedule, &pair, &s.curves)?;
        let a = PairAnalysis::new(pair.clone(), ops, s.run.x0, &config);
        let label = format!("{}:{},{}", s.name, pair.p, pair.q);
        records.extend(verify_pair(&label, &a, &config, seed));
        reports.push(a.report());
        analyses.push(a);
    }
    Ok((records, reports, analyses))
}

/// A sum of yields named by letters, e.g. `A + B`, with each letter bound to
/// one (step, giver) yield of the equilibrium cycle.
struct Identity {
    text: &'static str,
    lhs: &'static [(usize, Side)],
    rhs: &'static [(usize, Side)],
}

#[derive(Clone, Copy)]
enum Side {
    P,
    Q,
}

fn identity_for(file: &str) -> Identity {
    use Side::*;
    match file {
        // both yields agree at the intersection point
        "simultaneous.scn" => Identity {
            text: "P(u) = Q(-u)",
            lhs: &[(0, P)],
            rhs: &[(0, Q)],
        },
        "alternating.scn" => Identity {
            text: "A = B",
            lhs: &[(0, P)],
            rhs: &[(1, Q)],
        },
        "two_then_one.scn" => Identity {
            text: "C = A + B",
            lhs: &[(2, Q)],
            rhs: &[(0, P), (1, P)],
        },
        "one_then_both.scn" => Identity {
            text: "C = A + B",
            lhs: &[(1, Q)],
            rhs: &[(0, P), (1, P)],
        },
        "both_both_one.scn" => Identity {
            text: "A + B = C + D + E",
            lhs: &[(0, P), (1, P)],
            rhs: &[(0, Q), (1, Q), (2, Q)],
        },
        other => panic!("no identity for {other}"),
    }
}

/// `(lhs, rhs)` of the identity at the equilibrium `u`.
fn evaluate_identity(id: &Identity, ops: &[AccountOperator], u: &[f64]) -> (f64, f64) {
    let y = cycle_yields(ops, u);
    let sum = |terms: &[(usize, Side)]| {
        terms
            .iter()
            .map(|&(j, side)| match side {
                Side::P => y[j].0,
                Side::Q => y[j].1,
            })
            .sum::<f64>()
    };
    (sum(id.lhs), sum(id.rhs))
}

/// The worked schedules: full verification plus the yield identity that each
/// equilibrium satisfies.
fn worked_suite(seed: u64) -> Result<VerifyReport, CliError> {
    let mut records = vec![];
    let mut equilibria = vec![];
    for (file, text) in bundled::WORKED {
        let s = parse_scenario(text, file)?;
        let (recs, reports, analyses) = verify_scenario(&s, seed)?;
        records.extend(recs);
        equilibria.extend(reports);
        let a = &analyses[0];
        let id = identity_for(file);
        let name = format!("yield identity {}", id.text);
        let label = format!("{}:{},{}", s.name, a.pair.p, a.pair.q);
        if a.result.is_converged() {
            let (l, r) = evaluate_identity(&id, &a.ops, &a.result.u);
            let gap = (l - r).abs();
            records.push(
                CheckRecord::single(&label, &name, gap <= IDENTITY_TOL)
                    .value(gap, IDENTITY_TOL)
                    .note(format!("{l} vs {r}")),
            );
        } else {
            records.push(CheckRecord::single(&label, &name, false).note("no equilibrium"));
        }
    }
    Ok(VerifyReport::new("paper-graphs", seed, records, equilibria))
}

/// Folds many records of the same check into one.
#[derive(Default)]
struct Tally {
    runs: usize,
    failures: usize,
    skipped: usize,
    worst: Option<f64>,
    bound: Option<f64>,
}

impl Tally {
    fn add(&mut self, passed: bool, value: Option<(f64, f64)>) {
        self.runs += 1;
        self.failures += usize::from(!passed);
        if let Some((v, b)) = value {
            self.worst = Some(self.worst.map_or(v, |w| w.max(v)));
            self.bound = Some(b);
        }
    }

    fn record(&self, scenario: &str, name: &str) -> CheckRecord {
        let outcome = match (self.runs, self.failures) {
            (0, _) => Outcome::Skip,
            (_, 0) => Outcome::Pass,
            _ => Outcome::Fail,
        };
        CheckRecord {
            scenario: scenario.to_string(),
            name: name.to_string(),
            outcome,
            runs: self.runs,
            failures: self.failures,
            worst: self.worst,
            bound: self.bound,
            note: (self.skipped > 0).then(|| format!("{} not applicable", self.skipped)),
        }
    }
}

/// Solver claims over the random scenario family and lemma checks over random
/// curve pairs.
fn random_suite(seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = RandomFamily::default();
    let (mut converged, mut zero_sum, mut unique, mut diverged) =
        (Tally::default(), Tally::default(), Tally::default(), Tally::default());
    for i in 0..RANDOM_SCENARIOS {
        let file = random_scenario(&mut rng, &family, &format!("random-{i}"));
        let s = file.validate("random").expect("generated scenarios are valid");
        let pair = s.pairs(None).expect("generated pair is declared").remove(0);
        let ops = cycle_operators(&s.schedule, &pair, &s.curves).expect("curves cover the schedule");
        let config = s.run.solver_config();
        let a = PairAnalysis::new(pair, ops, 0.0, &config);
        let k = a.ops.len() as f64;
        if a.conditions.theorem_applies() {
            converged.add(a.result.is_converged(), None);
            let starts = a.invariant.spanning_starts(UNIQUENESS_STARTS);
            let u = verify_uniqueness_ops(&a.ops, &starts, &config, UNIQUENESS_TOL)
                .expect("spanning starts are never empty");
            unique.add(u.unique, Some((u.max_spread, UNIQUENESS_TOL)));
        } else {
            converged.skipped += 1;
            unique.skipped += 1;
        }
        match a.result.zero_sum_residual {
            Some(res) => zero_sum.add(res <= k * ZERO_SUM_TOL, Some((res / k, ZERO_SUM_TOL))),
            None => zero_sum.skipped += 1,
        }
        if a.result.status == Status::Diverged {
            diverged.runs += 1;
        }
    }
    let label = format!("random scenarios x{RANDOM_SCENARIOS}");
    let mut records = vec![
        converged.record(&label, "equilibrium found"),
        unique.record(&label, "unique equilibrium"),
        zero_sum.record(&label, "zero sum of yields per step"),
    ];
    if diverged.runs > 0 {
        records.push(
            CheckRecord::skip(&label, "diverged", format!("{} scenarios diverged", diverged.runs)),
        );
    }

    let (mut ne, mut con, mut refl) = (Tally::default(), Tally::default(), Tally::default());
    for i in 0..RANDOM_CURVE_PAIRS {
        let p = random_yield_curve(&mut rng);
        let q = random_yield_curve(&mut rng);
        let a: f64 = rng.random_range(-15.0..15.0);
        let b: f64 = rng.random_range(-15.0..15.0);
        let iv = Interval::new(a.min(b), a.max(b) + 0.5).expect("ordered ends");
        let s = seed.wrapping_add(i as u64);
        let (pp, qp) = (p.as_piecewise(), q.as_piecewise());
        let c = check_l_nonexpanding(pp, qp, &iv, LEMMA_SAMPLES, s);
        ne.add(c.passed, Some((c.worst_ratio, c.bound)));
        let c = check_l_contraction(pp, qp, &iv, LEMMA_SAMPLES, s);
        if c.is_applicable() {
            con.add(c.passed, Some((c.worst_ratio / c.bound.max(f64::MIN_POSITIVE), 1.0)));
        } else {
            con.skipped += 1;
        }
        let c = check_reflection(pp, &iv, LEMMA_SAMPLES, s);
        refl.add(c.passed, None);
    }
    let label = format!("random curve pairs x{RANDOM_CURVE_PAIRS}");
    records.push(ne.record(&label, "L non-expanding"));
    records.push(con.record(&label, "L contraction (ratio to bound)"));
    records.push(refl.record(&label, "reflection keeps constants"));
    VerifyReport::new("random", seed, records, vec![])
}

/// Inputs that break the assumptions must be caught. A record passes when
/// the control behaves as expected.
fn negative_controls(seed: u64) -> VerifyReport {
    const LABEL: &str = "negative controls";
    let mut records = vec![];
    let window = Interval { lo: -5.0, hi: 5.0 };

    // two slope -1.5 curves: L(x) = 6 - 2x
    let steep = PiecewiseLinear::affine(-1.5, 3.0).expect("finite");
    let c = check_l_nonexpanding(&steep, &steep, &window, LEMMA_SAMPLES, seed);
    records.push(
        CheckRecord::single(LABEL, "steep pair violates non-expansion", !c.passed)
            .value(c.worst_ratio, c.bound)
            .note(format!("{} violations", c.violations.len())),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut caught = Tally::default();
    for i in 0..100 {
        let s: f64 = rng.random_range(-3.0..-1.05);
        let c0: f64 = rng.random_range(0.0..5.0);
        let f = PiecewiseLinear::affine(s, c0).expect("finite");
        let c = check_l_nonexpanding(&f, &f, &window, LEMMA_SAMPLES, seed.wrapping_add(i));
        caught.add(!c.passed, Some((c.worst_ratio, 1.0)));
    }
    records.push(caught.record(LABEL, "random steep pairs violate non-expansion"));

    // a steep curve is rejected as a yield curve in the first place
    let rejected = YieldCurve::linear_flat(-1.2, 1.0).is_err()
        && YieldCurve::try_from(PiecewiseLinear::affine(-1.5, 3.0).expect("finite")).is_err();
    records.push(CheckRecord::single(LABEL, "steep curves rejected", rejected));

    // unit slopes are non-expanding but no contraction
    let unit = PiecewiseLinear::affine(-1.0, 5.0).expect("finite");
    let c = check_l_contraction(&unit, &unit, &window, LEMMA_SAMPLES, seed);
    records.push(
        CheckRecord::single(LABEL, "unit slopes give no contraction", !c.is_applicable())
            .note(c.inapplicable.unwrap_or_default()),
    );

    // constant yield with nothing given back
    let outcome = parse_scenario(bundled::CONSTANT_YIELD, "constant_yield.scn").map(|s| {
        let pair = Pair::new(Entity::new("P"), Entity::new("Q")).expect("distinct");
        let ops = cycle_operators(&s.schedule, &pair, &s.curves).expect("curves cover schedule");
        PairAnalysis::new(pair, ops, 0.0, &s.run.solver_config())
    });
    match outcome {
        Ok(a) => records.push(
            CheckRecord::single(LABEL, "constant yield diverges", a.result.status == Status::Diverged)
                .note(format!(
                    "{} after {} cycles; drift per cycle {}",
                    a.result.status,
                    a.result.iterations,
                    a.result.divergence.map_or(0.0, |w| w.drift_per_cycle)
                )),
        ),
        Err(e) => records.push(CheckRecord::single(LABEL, "constant yield diverges", false).note(e.to_string())),
    }

    // scenario loader rejects the same mistakes
    for (name, text) in [
        ("steep slope rejected on load", STEEP_SCENARIO),
        ("non-basic step rejected on load", NON_BASIC_SCENARIO),
    ] {
        let r = parse_scenario(text, "control.scn");
        let note = match &r {
            Err(e) => e.to_string(),
            Ok(_) => "loaded".to_string(),
        };
        records.push(CheckRecord::single(LABEL, name, r.is_err()).note(note));
    }
    VerifyReport::new("negative-controls", seed, records, vec![])
}

const STEEP_SCENARIO: &str = r#"
version = 1
entities = ["P", "Q"]
goods = ["a"]
schedule = [[{ giver = "P", receiver = "Q", good = "a" }]]

[[curves]]
giver = "P"
receiver = "Q"
good = "a"
kind = "linear_flat"
slope = -1.2
intercept = 1.0
"#;

const NON_BASIC_SCENARIO: &str = r#"
version = 1
entities = ["P", "Q"]
goods = ["a", "b"]
schedule = [[
    { giver = "P", receiver = "Q", good = "a" },
    { giver = "P", receiver = "Q", good = "b" },
]]

[[curves]]
giver = "P"
receiver = "Q"
good = "a"
kind = "linear_flat"
slope = -0.5
intercept = 1.0

[[curves]]
giver = "P"
receiver = "Q"
good = "b"
kind = "linear_flat"
slope = -0.5
intercept = 1.0
"#;
