//! Sampled checks of the Lipschitz inequalities behind the convergence
//! results: non-expansion and contraction of `L(x) = x + P(x) + Q(x)`,
//! composition of non-expanding maps and contractions, and invariance of
//! curve constants under reflection `x -> -P(-x)`.
//!
//! Each check draws seeded random pairs and always adds every pair of
//! breakpoints inside the interval, where piecewise-linear inequalities are
//! tightest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curve::{analyze, Interval, PiecewiseLinear, YieldCurve, SLOPE_EPS};

/// Absolute slack on every sampled inequality.
pub const CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub x: f64,
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledCheck {
    pub name: String,
    pub samples: usize,
    pub violations: Vec<Violation>,
    pub passed: bool,
    /// Largest observed `|f(x) - f(y)| / |x - y|`.
    pub worst_ratio: f64,
    /// Lipschitz modulus the samples were tested against.
    pub bound: f64,
    /// Set when the preconditions of the check do not hold; the check is
    /// then not run and `passed` is false.
    pub inapplicable: Option<String>,
}

impl SampledCheck {
    fn inapplicable(name: &str, reason: String) -> Self {
        SampledCheck {
            name: name.to_string(),
            samples: 0,
            violations: vec![],
            passed: false,
            worst_ratio: 0.0,
            bound: f64::NAN,
            inapplicable: Some(reason),
        }
    }

    pub fn is_applicable(&self) -> bool {
        self.inapplicable.is_none()
    }
}

/// Declared Lipschitz class of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MapClass {
    NonExpanding,
    Contraction(f64),
}

impl MapClass {
    pub fn modulus(&self) -> f64 {
        match *self {
            MapClass::NonExpanding => 1.0,
            MapClass::Contraction(q) => q,
        }
    }
}

/// Pairs to test: breakpoint pairs and window ends first, then `n` random
/// pairs.
fn sample_pairs(interval: &Interval, anchors: &[f64], n: usize, seed: u64) -> Vec<(f64, f64)> {
    let (lo, hi) = interval.sampling_window(anchors);
    let mut pts: Vec<f64> = anchors
        .iter()
        .copied()
        .filter(|&a| lo <= a && a <= hi)
        .chain([lo, hi])
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut pairs = vec![];
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            pairs.push((a, b));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let x = rng.random_range(lo..=hi);
        let y = rng.random_range(lo..=hi);
        pairs.push((x, y));
    }
    pairs
}

fn run_lipschitz(
    name: &str,
    f: impl Fn(f64) -> f64,
    pairs: &[(f64, f64)],
    modulus: f64,
) -> SampledCheck {
    let mut violations = vec![];
    let mut worst_ratio = 0.0_f64;
    let mut samples = 0;
    for &(x, y) in pairs {
        if x == y {
            continue;
        }
        samples += 1;
        let lhs = (f(x) - f(y)).abs();
        let d = (x - y).abs();
        worst_ratio = worst_ratio.max(lhs / d);
        let rhs = modulus * d;
        if lhs > rhs + CHECK_TOL {
            violations.push(Violation { x, y, lhs, rhs });
        }
    }
    SampledCheck {
        name: name.to_string(),
        samples,
        passed: violations.is_empty(),
        violations,
        worst_ratio,
        bound: modulus,
        inapplicable: None,
    }
}

fn anchors(curves: &[&PiecewiseLinear]) -> Vec<f64> {
    curves
        .iter()
        .flat_map(|c| c.breakpoints().iter().copied())
        .collect()
}

/// `|L(x) - L(y)| <= |x - y|` for `L(x) = x + P(x) + Q(x)`.
///
/// Takes raw piecewise-linear functions so that invalid curves can be used as
/// negative controls.
pub fn check_l_nonexpanding(
    p: &PiecewiseLinear,
    q: &PiecewiseLinear,
    interval: &Interval,
    n: usize,
    seed: u64,
) -> SampledCheck {
    let pairs = sample_pairs(interval, &anchors(&[p, q]), n, seed);
    run_lipschitz(
        "L non-expanding",
        |x| x + p.eval(x) + q.eval(x),
        &pairs,
        1.0,
    )
}

/// `|L(x) - L(y)| <= max(|1 - r|, q) |x - y|` where one of the curves is
/// uniformly monotonous with constant `r` on the interval and the other a
/// contraction with modulus `q`, or one curve is both and the other merely
/// non-expanding. Every applicable assignment is tried and the smallest bound
/// is used.
pub fn check_l_contraction(
    p: &PiecewiseLinear,
    q: &PiecewiseLinear,
    interval: &Interval,
    n: usize,
    seed: u64,
) -> SampledCheck {
    const NAME: &str = "L contraction";
    if interval.is_degenerate() {
        return SampledCheck::inapplicable(NAME, "degenerate interval".into());
    }
    let pp = analyze(p, interval, 0);
    let qp = analyze(q, interval, 0);
    for (label, props) in [("P", &pp), ("Q", &qp)] {
        if !props.nonincreasing || !props.is_nonexpanding() {
            return SampledCheck::inapplicable(
                NAME,
                format!(
                    "{label} is not non-increasing and non-expanding on {interval} (slopes up to {})",
                    props.lipschitz_upper
                ),
            );
        }
    }
    let mut bound: Option<f64> = None;
    // (uniformly monotonous curve, contraction curve); the second pair of
    // each kind covers a single curve that is both, with the other merely
    // non-expanding.
    for (uniform, contraction) in [(&pp, &qp), (&qp, &pp), (&pp, &pp), (&qp, &qp)] {
        if let (true, Some(qq)) = (uniform.is_uniformly_monotonous(), contraction.contraction_q) {
            // r may exceed 1 by rounding only; the lemma has r <= 1.
            let r = uniform.uniform_lower.min(1.0 + SLOPE_EPS);
            let b = (1.0 - r).abs().max(qq);
            bound = Some(bound.map_or(b, |cur| cur.min(b)));
        }
    }
    let Some(bound) = bound else {
        return SampledCheck::inapplicable(
            NAME,
            format!(
                "no uniformly monotonous curve paired with a contraction on {interval} \
                 (r_P = {}, r_Q = {}, L_P = {}, L_Q = {})",
                pp.uniform_lower, qp.uniform_lower, pp.lipschitz_upper, qp.lipschitz_upper
            ),
        );
    };
    let pairs = sample_pairs(interval, &anchors(&[p, q]), n, seed);
    run_lipschitz(NAME, |x| x + p.eval(x) + q.eval(x), &pairs, bound)
}

/// Checks the declared classes of `f` and `g`, then that `f . g` has the
/// modulus predicted by composing them: non-expanding if both are, a
/// contraction with modulus `m_f * m_g` otherwise.
pub fn check_composition(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    interval: &Interval,
    n: usize,
    f_class: MapClass,
    g_class: MapClass,
    seed: u64,
) -> SampledCheck {
    const NAME: &str = "composition";
    let pairs = sample_pairs(interval, &[], n, seed);
    let g_check = run_lipschitz("g", g, &pairs, g_class.modulus());
    if !g_check.passed {
        return SampledCheck::inapplicable(NAME, format!("g is not {g_class:?} on samples"));
    }
    // f is exercised on the image of the interval under g.
    let image: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (g(x), g(y))).collect();
    let f_check = run_lipschitz("f", f, &image, f_class.modulus());
    if !f_check.passed {
        return SampledCheck::inapplicable(NAME, format!("f is not {f_class:?} on samples"));
    }
    let modulus = f_class.modulus() * g_class.modulus();
    run_lipschitz(NAME, |x| f(g(x)), &pairs, modulus)
}

/// Reflection `x -> -P(-x)` keeps monotonicity, the uniform monotonicity
/// constant and the Lipschitz constant. Compares exact constants on the
/// mirrored interval and the difference quotients at mirrored sample pairs.
pub fn check_reflection(p: &PiecewiseLinear, interval: &Interval, n: usize, seed: u64) -> SampledCheck {
    const NAME: &str = "reflection";
    if interval.is_degenerate() {
        return SampledCheck::inapplicable(NAME, "degenerate interval".into());
    }
    let r = p.reflect();
    let mirrored = interval.mirrored();
    let a = analyze(p, interval, 0);
    let b = analyze(&r, &mirrored, 0);
    let mut violations = vec![];
    if a.nonincreasing != b.nonincreasing {
        violations.push(Violation {
            x: f64::NAN,
            y: f64::NAN,
            lhs: a.nonincreasing as u8 as f64,
            rhs: b.nonincreasing as u8 as f64,
        });
    }
    for (lhs, rhs) in [
        (a.lipschitz_upper, b.lipschitz_upper),
        (a.uniform_lower, b.uniform_lower),
    ] {
        if (lhs - rhs).abs() > CHECK_TOL {
            violations.push(Violation {
                x: f64::NAN,
                y: f64::NAN,
                lhs,
                rhs,
            });
        }
    }
    let pairs = sample_pairs(interval, p.breakpoints(), n, seed);
    let mut worst_ratio = 0.0_f64;
    let mut samples = 0;
    for &(x, y) in &pairs {
        if x == y {
            continue;
        }
        samples += 1;
        let qa = (p.eval(x) - p.eval(y)) / (x - y);
        let qb = (r.eval(-x) - r.eval(-y)) / (y - x);
        worst_ratio = worst_ratio.max(qb.abs());
        if (qa - qb).abs() > 1e-9 * (1.0 + qa.abs()) {
            violations.push(Violation { x, y, lhs: qa, rhs: qb });
        }
    }
    SampledCheck {
        name: NAME.to_string(),
        samples,
        passed: violations.is_empty(),
        violations,
        worst_ratio,
        bound: a.lipschitz_upper,
        inapplicable: None,
    }
}

/// A random valid yield curve: half the time linear-flat, otherwise up to
/// four breakpoints in `[-10, 10]` with piece slopes drawn from `[-1, 0]` and
/// a flat right tail.
pub fn random_yield_curve<R: Rng>(rng: &mut R) -> YieldCurve {
    if rng.random_bool(0.5) {
        // slope in (-1, 0]
        let slope = -rng.random::<f64>() * (1.0 - f64::EPSILON);
        return YieldCurve::linear_flat(slope, rng.random_range(0.0..=5.0))
            .expect("coefficients drawn in range");
    }
    let n = rng.random_range(1..=4);
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut ys = vec![0.0; xs.len()];
    ys[xs.len() - 1] = rng.random_range(0.0..=3.0);
    for j in (0..xs.len() - 1).rev() {
        let slope: f64 = -rng.random::<f64>();
        ys[j] = ys[j + 1] - slope * (xs[j + 1] - xs[j]);
    }
    let left: f64 = -rng.random::<f64>();
    YieldCurve::piecewise(xs, ys, left, 0.0).expect("slopes drawn in [-1, 0]")
}
