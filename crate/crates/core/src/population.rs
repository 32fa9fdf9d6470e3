//! Queries, generators, filters and query difficulty.
//!
//! A query is represented by the categorical distribution of a single
//! generator draw over a finite answer set, plus the index of the true
//! answer. A filter is summarised by the probabilities that it keeps a
//! correct and an incorrect answer.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::Probability;

const SUM_TOLERANCE: f64 = 1e-9;

/// Categorical distribution of one generator call on one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    labels: Vec<String>,
    probs: Vec<f64>,
    true_index: usize,
}

impl AnswerDistribution {
    pub fn new(labels: Vec<String>, probs: Vec<f64>, true_index: usize) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::input("answer set needs at least two labels"));
        }
        if labels.len() != probs.len() {
            return Err(Error::input(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        if true_index >= labels.len() {
            return Err(Error::input(format!("true index {true_index} out of range")));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::input(format!("duplicate label {label:?}")));
            }
        }
        for &p in &probs {
            Probability::new(p)?;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(AnswerDistribution { labels, probs, true_index })
    }

    /// Two-answer query, `"correct"` with probability `p_true` and `"wrong"` otherwise.
    pub fn binary(p_true: Probability) -> Self {
        AnswerDistribution {
            labels: vec!["correct".to_string(), "wrong".to_string()],
            probs: vec![p_true.value(), 1.0 - p_true.value()],
            true_index: 0,
        }
    }

    /// Probability mass concentrated on the true answer.
    pub fn point_mass(labels: Vec<String>, true_index: usize) -> Result<Self> {
        let mut probs = vec![0.0; labels.len()];
        if let Some(p) = probs.get_mut(true_index) {
            *p = 1.0;
        }
        AnswerDistribution::new(labels, probs, true_index)
    }

    /// Uniform over `n` labels named `"a0"`, `"a1"`, … with the first one true.
    pub fn uniform(n: usize) -> Result<Self> {
        let labels = (0..n).map(|i| format!("a{i}")).collect();
        AnswerDistribution::new(labels, vec![1.0 / n as f64; n], 0)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn true_index(&self) -> usize {
        self.true_index
    }

    pub fn true_label(&self) -> &str {
        &self.labels[self.true_index]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn p_true(&self) -> f64 {
        self.probs[self.true_index]
    }

    pub fn is_binary(&self) -> bool {
        self.labels.len() == 2
    }
}

/// Probabilities that the filter keeps a correct and an incorrect answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub keep_correct: Probability,
    pub keep_incorrect: Probability,
}

impl FilterModel {
    pub fn new(keep_correct: f64, keep_incorrect: f64) -> Result<Self> {
        Ok(FilterModel {
            keep_correct: Probability::new(keep_correct)?,
            keep_incorrect: Probability::new(keep_incorrect)?,
        })
    }

    /// A filter that keeps everything.
    pub fn pass_through() -> Self {
        FilterModel { keep_correct: Probability::ONE, keep_incorrect: Probability::ONE }
    }
}

/// Mixture of easy queries (per-call accuracy `p1`, fraction `alpha`) and
/// hard queries (per-call accuracy `p2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiLevelSpec {
    alpha: Probability,
    p1: Probability,
    p2: Probability,
}

impl BiLevelSpec {
    /// Levels are reordered so that `p1 >= p2`; `alpha` is replaced by
    /// `1 - alpha` when that happens so the mixture itself is unchanged.
    pub fn new(alpha: f64, p1: f64, p2: f64) -> Result<Self> {
        let alpha = Probability::new(alpha)?;
        let p1 = Probability::new(p1)?;
        let p2 = Probability::new(p2)?;
        if p1.value() >= p2.value() {
            Ok(BiLevelSpec { alpha, p1, p2 })
        } else {
            Ok(BiLevelSpec { alpha: alpha.complement(), p1: p2, p2: p1 })
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    pub fn p1(&self) -> f64 {
        self.p1.value()
    }

    pub fn p2(&self) -> f64 {
        self.p2.value()
    }

    /// `p2 < 1/2 < p1` and `0 < alpha < 1`.
    pub fn is_mixed(&self) -> bool {
        self.p2() < 0.5 && 0.5 < self.p1() && self.alpha() > 0.0 && self.alpha() < 1.0
    }

    pub(crate) fn require_mixed(&self) -> Result<()> {
        if self.is_mixed() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "requires p2 < 1/2 < p1 and 0 < alpha < 1, got alpha={}, p1={}, p2={}",
                self.alpha(),
                self.p1(),
                self.p2()
            )))
        }
    }
}

/// Signed difficulty of a query: positive means hard (accuracy tends to 0
/// with more calls), negative means easy (accuracy tends to 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DifficultyIndicator(f64);

impl DifficultyIndicator {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value.abs() <= 1.0 {
            Ok(DifficultyIndicator(value))
        } else {
            Err(Error::domain(format!("difficulty {value} outside [-1, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Positive rescaling. The result is clamped back into `[-1, 1]`, which
    /// never changes the sign.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::domain("scale factor must be positive"));
        }
        Ok(DifficultyIndicator((self.0 * factor).clamp(-1.0, 1.0)))
    }
}

/// Best incorrect answer probability minus the true answer probability.
pub fn difficulty_vote(dist: &AnswerDistribution) -> DifficultyIndicator {
    let best_wrong = dist
        .probs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != dist.true_index)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    DifficultyIndicator((best_wrong - dist.p_true()).clamp(-1.0, 1.0))
}

/// Distribution of a generated answer conditioned on the filter keeping it.
pub fn kept_posterior(dist: &AnswerDistribution, filter: &FilterModel) -> Result<AnswerDistribution> {
    let kc = filter.keep_correct.value();
    let ki = filter.keep_incorrect.value();
    let weighted: Vec<f64> = dist
        .probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p * if i == dist.true_index { kc } else { ki })
        .collect();
    let kept: f64 = weighted.iter().sum();
    if kept <= 0.0 {
        return Err(Error::DegenerateFilter);
    }
    Ok(AnswerDistribution {
        labels: dist.labels.clone(),
        probs: weighted.into_iter().map(|w| w / kept).collect(),
        true_index: dist.true_index,
    })
}

pub fn difficulty_filter_vote(
    dist: &AnswerDistribution,
    filter: &FilterModel,
) -> Result<DifficultyIndicator> {
    Ok(difficulty_vote(&kept_posterior(dist, filter)?))
}

/// Limit of the accuracy as the number of calls grows without bound.
pub fn asymptotic_accuracy(d: DifficultyIndicator) -> Result<Probability> {
    if d.value() > 0.0 {
        Ok(Probability::ZERO)
    } else if d.value() < 0.0 {
        Ok(Probability::ONE)
    } else {
        Err(Error::TieAtInfinity)
    }
}

/// Whether filtering lowers the difficulty of a binary query. Defined only
/// for two-answer queries with `0 < Pr[y] < 1`.
pub fn filter_helps(dist: &AnswerDistribution, filter: &FilterModel) -> Result<bool> {
    if !dist.is_binary() {
        return Err(Error::Unsupported(format!(
            "filter comparison needs a binary answer set, got {} answers",
            dist.len()
        )));
    }
    let p = dist.p_true();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("Pr[y] must be strictly between 0 and 1, got {p}")));
    }
    Ok(difficulty_filter_vote(dist, filter)? < difficulty_vote(dist))
}
