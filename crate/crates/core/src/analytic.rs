//! Exact accuracy of majority voting on binary and bi-level populations.
//!
//! For a query whose single-call accuracy is `p`, `K` independent calls
//! followed by a majority vote are correct with probability
//! `I_p((K+1)/2, (K+1)/2)` when `K` is odd. Even `K` needs a tie rule:
//! [`EvenCalls::RandomTieBreak`] is what a voter actually does, while
//! [`EvenCalls::BetaContinuation`] evaluates the same beta expression at
//! half-integer shapes. The continuation interpolates smoothly between the odd
//! points and is what [`optimal_k`] maximizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::BiLevelSpec;
use crate::special::{binomial_pmf, log_beta_unchecked, reg_inc_beta_checked, Probability};

/// Relative tolerance used to decide that `p1 (1 - p1) = p2 (1 - p2)`.
const RATIO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: u32,
    pub accuracy: f64,
    pub stderr: Option<f64>,
}

/// Accuracy as a function of the number of calls.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerformanceCurve {
    points: Vec<CurvePoint>,
}

impl PerformanceCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        for pair in points.windows(2) {
            if pair[1].k <= pair[0].k {
                return Err(Error::input(format!(
                    "curve k values must be strictly increasing ({} then {})",
                    pair[0].k, pair[1].k
                )));
            }
        }
        for pt in &points {
            if pt.k == 0 {
                return Err(Error::input("curve k values must be positive"));
            }
            if !(pt.accuracy.is_finite() && (0.0..=1.0).contains(&pt.accuracy)) {
                return Err(Error::input(format!("accuracy {} at k={} outside [0, 1]", pt.accuracy, pt.k)));
            }
            if let Some(se) = pt.stderr {
                if !(se.is_finite() && se >= 0.0) {
                    return Err(Error::input(format!("stderr {se} at k={} is not a nonnegative number", pt.k)));
                }
            }
        }
        Ok(PerformanceCurve { points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn ks(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.k).collect()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.accuracy).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn accuracy_at(&self, k: u32) -> Option<f64> {
        self.points
            .binary_search_by_key(&k, |p| p.k)
            .ok()
            .map(|i| self.points[i].accuracy)
    }
}

/// Checks that a list of call counts is nonempty, positive, sorted and distinct.
pub fn validate_ks(ks: &[u32]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::input("empty list of call counts"));
    }
    if ks[0] == 0 {
        return Err(Error::input("call counts must be positive"));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("call counts must be sorted and distinct"));
    }
    Ok(())
}

/// Shape of the accuracy curve over odd numbers of calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandscapeShape {
    MonotoneIncrease,
    MonotoneDecrease,
    /// Rises, then falls.
    InverseU,
    /// Falls, then rises.
    UShape,
    Flat,
}

impl std::fmt::Display for LandscapeShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            LandscapeShape::MonotoneIncrease => "MonotoneIncrease",
            LandscapeShape::MonotoneDecrease => "MonotoneDecrease",
            LandscapeShape::InverseU => "InverseU",
            LandscapeShape::UShape => "UShape",
            LandscapeShape::Flat => "Flat",
        };
        f.write_str(name)
    }
}

/// How an even number of calls is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvenCalls {
    /// Ties are broken uniformly at random: half the tie mass counts as correct.
    #[default]
    RandomTieBreak,
    /// `I_p(K/2 + 1/2, K/2 + 1/2)` evaluated at half-integer shapes.
    BetaContinuation,
}

fn require_k(k: u32) -> Result<()> {
    if k == 0 {
        Err(Error::domain("number of calls must be at least 1"))
    } else {
        Ok(())
    }
}

/// Probability that a majority vote over `k` calls with per-call accuracy
/// `p` on a binary query returns the true answer.
pub fn vote_accuracy(p: Probability, k: u32) -> Result<f64> {
    vote_accuracy_with(p, k, EvenCalls::RandomTieBreak)
}

pub fn vote_accuracy_with(p: Probability, k: u32, even: EvenCalls) -> Result<f64> {
    require_k(k)?;
    let p = p.value();
    if k % 2 == 1 {
        let m = f64::from(k / 2 + 1);
        return reg_inc_beta_checked(p, m, m);
    }
    match even {
        EvenCalls::RandomTieBreak => {
            // Pr[Bin(2m, p) > m] = I_p(m + 1, m)
            let m = k / 2;
            let above = reg_inc_beta_checked(p, f64::from(m + 1), f64::from(m))?;
            let tie = binomial_pmf(u64::from(k), u64::from(m), p)?;
            Ok((above + 0.5 * tie).clamp(0.0, 1.0))
        }
        EvenCalls::BetaContinuation => {
            let shape = (f64::from(k) + 1.0) / 2.0;
            reg_inc_beta_checked(p, shape, shape)
        }
    }
}

/// `F(K; D) = alpha F(K, p1) + (1 - alpha) F(K, p2)`.
pub fn bilevel_accuracy(spec: &BiLevelSpec, k: u32) -> Result<f64> {
    bilevel_accuracy_with(spec, k, EvenCalls::RandomTieBreak)
}

pub fn bilevel_accuracy_with(spec: &BiLevelSpec, k: u32, even: EvenCalls) -> Result<f64> {
    let alpha = spec.alpha();
    let easy = if alpha > 0.0 { vote_accuracy_with(Probability::new(spec.p1())?, k, even)? } else { 0.0 };
    let hard = if alpha < 1.0 { vote_accuracy_with(Probability::new(spec.p2())?, k, even)? } else { 0.0 };
    Ok((alpha * easy + (1.0 - alpha) * hard).clamp(0.0, 1.0))
}

/// `ln(alpha (2 p1 - 1) / ((1 - alpha)(1 - 2 p2)))`.
fn log_level_ratio(spec: &BiLevelSpec) -> f64 {
    let (a, p1, p2) = (spec.alpha(), spec.p1(), spec.p2());
    (a / (1.0 - a)).ln() + (2.0 * p1 - 1.0).ln() - (1.0 - 2.0 * p2).ln()
}

/// `ln(p1 (1 - p1) / (p2 (1 - p2)))`.
fn log_variance_ratio(spec: &BiLevelSpec) -> f64 {
    let (p1, p2) = (spec.p1(), spec.p2());
    (p1 * (1.0 - p1)).ln() - (p2 * (1.0 - p2)).ln()
}

/// Sign-carrying factor of the odd-step increment:
/// `F(2m+1; D) - F(2m-1; D)` has the sign of `delta_f(spec, m)`.
pub fn delta_f(spec: &BiLevelSpec, m: u32) -> Result<f64> {
    spec.require_mixed()?;
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    Ok((log_level_ratio(spec) + f64::from(m) * log_variance_ratio(spec)).exp_m1())
}

/// Exact odd-step increment `F(2m+1; D) - F(2m-1; D)` rebuilt from
/// [`delta_f`] and the beta recurrence.
pub fn odd_step_increment(spec: &BiLevelSpec, m: u32) -> Result<f64> {
    let delta = delta_f(spec, m)?;
    let (a, p2) = (spec.alpha(), spec.p2());
    let mf = f64::from(m);
    let log_scale = mf * (p2 * (1.0 - p2)).ln() - mf.ln() - log_beta_unchecked(mf, mf);
    Ok((1.0 - a) * (1.0 - 2.0 * p2) * log_scale.exp() * delta)
}

/// `t = p2 (1 - p2)(1/2 - p2) / (p1 (1 - p1)(p1 - 1/2)) + 1`.
/// The increment from one to three calls vanishes at `alpha = 1 - 1/t`.
pub fn threshold_t(p1: Probability, p2: Probability) -> Result<f64> {
    let (p1, p2) = (p1.value(), p2.value());
    if !(p2 < 0.5 && 0.5 < p1) {
        return Err(Error::domain(format!("threshold needs p2 < 1/2 < p1, got p1={p1}, p2={p2}")));
    }
    Ok(p2 * (1.0 - p2) * (0.5 - p2) / (p1 * (1.0 - p1) * (p1 - 0.5)) + 1.0)
}

/// `1 - 1/t`.
pub fn alpha_threshold(p1: Probability, p2: Probability) -> Result<f64> {
    Ok(1.0 - 1.0 / threshold_t(p1, p2)?)
}

fn single_level_shape(p: f64) -> LandscapeShape {
    // p in {0, 1} gives a constant curve as well
    if p == 0.5 || p == 0.0 || p == 1.0 {
        LandscapeShape::Flat
    } else if p > 0.5 {
        LandscapeShape::MonotoneIncrease
    } else {
        LandscapeShape::MonotoneDecrease
    }
}

/// Classifies the accuracy curve over odd `K` from the sign pattern of the
/// increments.
///
/// Each level contributes `w · (p(1-p))^m (2p - 1)` to the increment at step
/// `m`. When both levels push the same way the curve is monotone. When they
/// oppose, the easy/hard contribution ratio scales like `r^m` with
/// `r = p1(1-p1) / (p2(1-p2))`, so the sign of the increment flips at most
/// once and the first increment decides the shape.
pub fn landscape_shape(spec: &BiLevelSpec) -> LandscapeShape {
    let (a, p1, p2) = (spec.alpha(), spec.p1(), spec.p2());
    let active = |w: f64, p: f64| w > 0.0 && p != 0.5 && p > 0.0 && p < 1.0;
    match (active(a, p1), active(1.0 - a, p2)) {
        (false, false) => return LandscapeShape::Flat,
        (true, false) => return single_level_shape(p1),
        (false, true) => return single_level_shape(p2),
        (true, true) => {}
    }
    // p1 >= p2 by construction, so opposing pushes mean p2 < 1/2 < p1
    if p1 < 0.5 || p2 > 0.5 {
        return single_level_shape(p1);
    }
    let log_r = log_variance_ratio(spec);
    let first = log_level_ratio(spec) + log_r;
    if log_r.abs() <= RATIO_TOLERANCE {
        let log_c = log_level_ratio(spec);
        return if log_c.abs() <= RATIO_TOLERANCE {
            LandscapeShape::Flat
        } else if log_c > 0.0 {
            LandscapeShape::MonotoneIncrease
        } else {
            LandscapeShape::MonotoneDecrease
        };
    }
    if log_r < 0.0 {
        if first <= 0.0 {
            LandscapeShape::MonotoneDecrease
        } else {
            LandscapeShape::InverseU
        }
    } else if first >= 0.0 {
        LandscapeShape::MonotoneIncrease
    } else {
        LandscapeShape::UShape
    }
}

/// Closed-form optimum `K* = 2 ln(alpha (2p1-1) / ((1-alpha)(1-2p2))) / ln(p2(1-p2) / (p1(1-p1)))`.
/// Defined only when the curve has an interior maximum.
pub fn continuous_optimal_k(spec: &BiLevelSpec) -> Option<f64> {
    if landscape_shape(spec) != LandscapeShape::InverseU {
        return None;
    }
    Some(2.0 * log_level_ratio(spec) / -log_variance_ratio(spec))
}

const TIE_TOLERANCE: f64 = 1e-13;

/// Result of [`optimal_k`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalCalls {
    /// Maximizer of the scanned curve, smallest on ties.
    pub k: u32,
    pub accuracy: f64,
    /// Closed-form `K*` when the curve has an interior maximum.
    pub continuous: Option<f64>,
    /// Whether the rounded closed form lands on the scanned optimum. `None`
    /// when there is no closed form or it rounds outside `1..=k_max`.
    pub closed_form_agrees: Option<bool>,
}

/// Number of calls in `1..=k_max` maximizing the bi-level accuracy, with even
/// counts scored by the beta continuation.
pub fn optimal_k(spec: &BiLevelSpec, k_max: u32) -> Result<OptimalCalls> {
    require_k(k_max)?;
    let mut best_k = 1;
    let mut best = bilevel_accuracy_with(spec, 1, EvenCalls::BetaContinuation)?;
    for k in 2..=k_max {
        let acc = bilevel_accuracy_with(spec, k, EvenCalls::BetaContinuation)?;
        // rounding noise must not break a tie in favour of a larger k
        if acc > best + TIE_TOLERANCE * best.abs() {
            best = acc;
            best_k = k;
        }
    }
    let continuous = continuous_optimal_k(spec);
    let closed_form_agrees = continuous.and_then(|c| {
        let rounded = c.round();
        (rounded >= 1.0 && rounded <= f64::from(k_max)).then_some(rounded as u32 == best_k)
    });
    Ok(OptimalCalls { k: best_k, accuracy: best, continuous, closed_form_agrees })
}

/// Exact curve at the requested call counts, ties at even `K` broken at random.
pub fn exact_curve(spec: &BiLevelSpec, ks: &[u32]) -> Result<PerformanceCurve> {
    exact_curve_with(spec, ks, EvenCalls::RandomTieBreak)
}

pub fn exact_curve_with(spec: &BiLevelSpec, ks: &[u32], even: EvenCalls) -> Result<PerformanceCurve> {
    validate_ks(ks)?;
    let points = ks
        .iter()
        .map(|&k| {
            Ok(CurvePoint { k, accuracy: bilevel_accuracy_with(spec, k, even)?, stderr: None })
        })
        .collect::<Result<Vec<_>>>()?;
    PerformanceCurve::new(points)
}
