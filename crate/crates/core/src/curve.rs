//! Piecewise-linear yield curves and their metric properties.
//!
//! [`PiecewiseLinear`] is the signed workhorse: a finite list of breakpoints
//! with linear interpolation between them and linear extrapolation outside.
//! [`YieldCurve`] wraps it with the constraints every yield curve obeys:
//! non-negative values and piece slopes in `[-1, 0]`, i.e. non-increasing and
//! non-expanding. Because every piece is linear, Lipschitz and uniform
//! monotonicity constants on an interval can be read off the slopes exactly.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when checking piece slopes against `[-1, 0]`; interior slopes
/// are recomputed from breakpoint values and pick up rounding.
pub const SLOPE_EPS: f64 = 1e-12;

const ANALYZE_SEED: u64 = 0x7969_656c_6463_7276;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("curve needs at least one breakpoint")]
    NoBreakpoints,
    #[error("{breakpoints} breakpoints but {values} values")]
    LengthMismatch { breakpoints: usize, values: usize },
    #[error("breakpoints must be finite and strictly increasing (at index {index})")]
    BadBreakpoints { index: usize },
    #[error("non-finite curve parameter")]
    NonFinite,
    #[error("yield value {value} at x = {x} is negative")]
    NegativeValue { x: f64, value: f64 },
    #[error("slope {slope} outside [-1, 0]: yield curves must be non-increasing and non-expanding")]
    SlopeOutOfRange { slope: f64 },
    #[error("linear-flat slope {slope} outside (-1, 0]")]
    LinearFlatSlope { slope: f64 },
    #[error("intercept {intercept} is negative")]
    NegativeIntercept { intercept: f64 },
    #[error("interval [{lo}, {hi}] is empty or degenerate")]
    BadInterval { lo: f64, hi: f64 },
}

/// A closed interval of the real line; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, CurveError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(CurveError::BadInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn real_line() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// The image of the interval under `x -> -x`.
    pub fn mirrored(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    /// Length of the overlap with `[a, b]`.
    fn overlap(&self, a: f64, b: f64) -> f64 {
        let lo = self.lo.max(a);
        let hi = self.hi.min(b);
        if hi > lo {
            hi - lo
        } else {
            0.0
        }
    }

    /// A finite sub-window to draw samples from. Infinite ends are replaced
    /// by points a little beyond the anchors (usually breakpoints).
    pub fn sampling_window(&self, anchors: &[f64]) -> (f64, f64) {
        if self.is_bounded() {
            return (self.lo, self.hi);
        }
        let finite = anchors
            .iter()
            .copied()
            .chain([self.lo, self.hi])
            .filter(|v| v.is_finite());
        let (amin, amax) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        let (amin, amax) = if amin.is_finite() { (amin, amax) } else { (0.0, 0.0) };
        let pad = 10.0 + (amax - amin);
        let lo = if self.lo.is_finite() { self.lo } else { amin - pad };
        let hi = if self.hi.is_finite() { self.hi } else { amax + pad };
        (lo, hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// One linear piece `[lo, hi]` of a piecewise-linear function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
}

/// A continuous piecewise-linear function on the whole real line.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinear {
    pub fn new(
        xs: Vec<f64>,
        ys: Vec<f64>,
        left_slope: f64,
        right_slope: f64,
    ) -> Result<Self, CurveError> {
        if xs.is_empty() {
            return Err(CurveError::NoBreakpoints);
        }
        if xs.len() != ys.len() {
            return Err(CurveError::LengthMismatch {
                breakpoints: xs.len(),
                values: ys.len(),
            });
        }
        if !left_slope.is_finite() || !right_slope.is_finite() || ys.iter().any(|y| !y.is_finite())
        {
            return Err(CurveError::NonFinite);
        }
        if let Some(index) = xs.iter().position(|x| !x.is_finite()) {
            return Err(CurveError::BadBreakpoints { index });
        }
        if let Some(index) = xs.windows(2).position(|w| w[0] >= w[1]) {
            return Err(CurveError::BadBreakpoints { index: index + 1 });
        }
        Ok(PiecewiseLinear {
            xs,
            ys,
            left_slope,
            right_slope,
        })
    }

    /// `x -> slope * x + intercept` with no flat part.
    pub fn affine(slope: f64, intercept: f64) -> Result<Self, CurveError> {
        Self::new(vec![0.0], vec![intercept], slope, slope)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn left_slope(&self) -> f64 {
        self.left_slope
    }

    pub fn right_slope(&self) -> f64 {
        self.right_slope
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.left_slope * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.right_slope * (x - self.xs[n - 1]);
        }
        // xs[j - 1] < x < xs[j]
        let j = self.xs.partition_point(|&b| b < x);
        if self.xs[j] == x {
            return self.ys[j];
        }
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.ys[j - 1], self.ys[j]);
        y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
    }

    /// All pieces, including the two unbounded tails.
    pub fn pieces(&self) -> Vec<Piece> {
        let n = self.xs.len();
        let mut out = Vec::with_capacity(n + 1);
        out.push(Piece {
            lo: f64::NEG_INFINITY,
            hi: self.xs[0],
            slope: self.left_slope,
        });
        for j in 1..n {
            out.push(Piece {
                lo: self.xs[j - 1],
                hi: self.xs[j],
                slope: (self.ys[j] - self.ys[j - 1]) / (self.xs[j] - self.xs[j - 1]),
            });
        }
        out.push(Piece {
            lo: self.xs[n - 1],
            hi: f64::INFINITY,
            slope: self.right_slope,
        });
        out
    }

    /// Slopes of the pieces overlapping `interval` in a set of positive length.
    pub fn slopes_on(&self, interval: &Interval) -> Vec<f64> {
        self.pieces()
            .into_iter()
            .filter(|p| interval.overlap(p.lo, p.hi) > 0.0)
            .map(|p| p.slope)
            .collect()
    }

    /// `x -> -f(-x)`. Slopes are preserved and the piece order reverses.
    pub fn reflect(&self) -> PiecewiseLinear {
        PiecewiseLinear {
            xs: self.xs.iter().rev().map(|x| -x).collect(),
            ys: self.ys.iter().rev().map(|y| -y).collect(),
            left_slope: self.right_slope,
            right_slope: self.left_slope,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.left_slope == 0.0 && self.right_slope == 0.0 && self.ys.iter().all(|&y| y == 0.0)
    }
}

/// Lipschitz and monotonicity constants of a curve restricted to an interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveProperties {
    pub nonincreasing: bool,
    /// Largest absolute piece slope on the interval.
    pub lipschitz_upper: f64,
    /// Smallest absolute piece slope on the interval; positive means
    /// uniformly monotonous.
    pub uniform_lower: f64,
    /// Contraction modulus, present when `lipschitz_upper < 1`.
    pub contraction_q: Option<f64>,
    pub interval: Interval,
    /// Extremes of `|f(x) - f(y)| / |x - y|` over the random cross-check pairs.
    pub sampled_max_quotient: f64,
    pub sampled_min_quotient: f64,
    /// Largest `|f(x) - f(y)| - L|x - y|` over the pairs; should not exceed
    /// rounding.
    pub upper_bound_excess: f64,
    /// Largest `r|x - y| - |f(x) - f(y)|` over the pairs.
    pub lower_bound_excess: f64,
    pub samples: usize,
}

impl CurveProperties {
    pub fn is_uniformly_monotonous(&self) -> bool {
        self.uniform_lower > 0.0
    }

    pub fn is_contraction(&self) -> bool {
        self.contraction_q.is_some()
    }

    pub fn is_nonexpanding(&self) -> bool {
        self.lipschitz_upper <= 1.0 + SLOPE_EPS
    }
}

/// Exact slope analysis on `interval`, cross-checked with `n` random pairs.
///
/// Panics if `interval` is degenerate.
pub fn analyze(f: &PiecewiseLinear, interval: &Interval, n: usize) -> CurveProperties {
    assert!(!interval.is_degenerate(), "analyze needs a non-degenerate interval");
    let slopes = f.slopes_on(interval);
    let nonincreasing = slopes.iter().all(|&s| s <= 0.0);
    let lipschitz_upper = slopes.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let uniform_lower = slopes.iter().fold(f64::INFINITY, |m, s| m.min(s.abs()));
    let contraction_q = (lipschitz_upper < 1.0).then_some(lipschitz_upper);

    let (lo, hi) = interval.sampling_window(f.breakpoints());
    let mut rng = ChaCha8Rng::seed_from_u64(ANALYZE_SEED);
    let mut qmax = 0.0_f64;
    let mut qmin = f64::INFINITY;
    let mut upper_bound_excess = f64::NEG_INFINITY;
    let mut lower_bound_excess = f64::NEG_INFINITY;
    let mut samples = 0;
    for _ in 0..n {
        let x = rng.random_range(lo..=hi);
        let y = rng.random_range(lo..=hi);
        if x == y {
            continue;
        }
        let (df, d) = ((f.eval(x) - f.eval(y)).abs(), (x - y).abs());
        upper_bound_excess = upper_bound_excess.max(df - lipschitz_upper * d);
        lower_bound_excess = lower_bound_excess.max(uniform_lower * d - df);
        let q = df / d;
        qmax = qmax.max(q);
        qmin = qmin.min(q);
        samples += 1;
    }
    CurveProperties {
        nonincreasing,
        lipschitz_upper,
        uniform_lower,
        contraction_q,
        interval: *interval,
        sampled_max_quotient: qmax,
        sampled_min_quotient: if samples == 0 { 0.0 } else { qmin },
        upper_bound_excess,
        lower_bound_excess,
        samples,
    }
}

/// A non-negative, non-increasing, non-expanding yield curve.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldCurve {
    inner: PiecewiseLinear,
}

impl YieldCurve {
    /// The identically zero curve.
    pub fn zero() -> Self {
        YieldCurve {
            inner: PiecewiseLinear {
                xs: vec![0.0],
                ys: vec![0.0],
                left_slope: 0.0,
                right_slope: 0.0,
            },
        }
    }

    /// `intercept + slope * x` until it reaches zero, flat at zero afterwards.
    /// A zero slope gives the constant curve `intercept`.
    pub fn linear_flat(slope: f64, intercept: f64) -> Result<Self, CurveError> {
        if !slope.is_finite() || !intercept.is_finite() {
            return Err(CurveError::NonFinite);
        }
        if slope <= -1.0 || slope > 0.0 {
            return Err(CurveError::LinearFlatSlope { slope });
        }
        if intercept < 0.0 {
            return Err(CurveError::NegativeIntercept { intercept });
        }
        let inner = if slope == 0.0 {
            PiecewiseLinear::new(vec![0.0], vec![intercept], 0.0, 0.0)?
        } else {
            let z = intercept / -slope;
            PiecewiseLinear::new(vec![z + 0.0], vec![0.0], slope, 0.0)?
        };
        Ok(YieldCurve { inner })
    }

    /// A general piecewise-linear yield curve. A negative right tail slope is
    /// cut off where the curve reaches zero.
    pub fn piecewise(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        left_slope: f64,
        right_slope: f64,
    ) -> Result<Self, CurveError> {
        Self::try_from(PiecewiseLinear::new(
            breakpoints,
            values,
            left_slope,
            right_slope,
        )?)
    }

    pub fn as_piecewise(&self) -> &PiecewiseLinear {
        &self.inner
    }

    /// Yield at balance `x`; never negative.
    pub fn eval(&self, x: f64) -> f64 {
        self.inner.eval(x).max(0.0)
    }

    /// Smallest `x` from which the curve is zero. `None` when the curve never
    /// reaches zero; negative infinity for the zero curve.
    pub fn zero_crossing(&self) -> Option<f64> {
        let pl = &self.inner;
        if pl.is_identically_zero() {
            return Some(f64::NEG_INFINITY);
        }
        let last = *pl.ys.last().unwrap();
        if last > 0.0 || pl.right_slope != 0.0 {
            return None;
        }
        match pl.ys.iter().rposition(|&y| y > 0.0) {
            Some(j) => Some(pl.xs[j + 1]),
            None => Some(pl.xs[0]),
        }
    }

    /// `x -> -eval(-x)`, a non-positive signed piecewise-linear function.
    pub fn reflect(&self) -> PiecewiseLinear {
        self.inner.reflect()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.inner.is_identically_zero()
    }

    pub fn analyze(&self, interval: &Interval, n: usize) -> CurveProperties {
        analyze(&self.inner, interval, n)
    }
}

impl TryFrom<PiecewiseLinear> for YieldCurve {
    type Error = CurveError;

    fn try_from(mut pl: PiecewiseLinear) -> Result<Self, CurveError> {
        if let Some((&x, &value)) = pl.xs.iter().zip(&pl.ys).find(|(_, &y)| y < 0.0) {
            return Err(CurveError::NegativeValue { x, value });
        }
        for piece in pl.pieces() {
            if piece.slope > 0.0 || piece.slope < -1.0 - SLOPE_EPS {
                return Err(CurveError::SlopeOutOfRange { slope: piece.slope });
            }
        }
        if pl.right_slope < 0.0 {
            let (x_last, y_last) = (*pl.xs.last().unwrap(), *pl.ys.last().unwrap());
            if y_last > 0.0 {
                pl.xs.push(x_last + y_last / -pl.right_slope);
                pl.ys.push(0.0);
            }
            pl.right_slope = 0.0;
        }
        Ok(YieldCurve { inner: pl })
    }
}
