//! Parametric scaling model and its estimation from a few call counts.
//!
//! Each query gets its own curve
//!
//! ```text
//! hard: G(K) = exp(-c1 K - c2 sqrt(K) + c3)
//! easy: G(K) = 1 - exp(-c1 K - c2 sqrt(K) + c3)
//! ```
//!
//! with `c1, c2 >= 0`, and the dataset curve is the weighted mean of the
//! per-query curves. Because the model is linear in `(c1, c2, c3)` after a
//! log transform, fitting is a small nonnegative least-squares problem,
//! optionally polished by damped Gauss-Newton on the untransformed loss.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{validate_ks, CurvePoint, PerformanceCurve};
use crate::error::{Error, Result};

const WEIGHT_TOLERANCE: f64 = 1e-9;
const SVD_EPS: f64 = 1e-14;

/// Fitted parameters of one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemFit {
    pub hard: bool,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl ItemFit {
    pub fn new(hard: bool, c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if !(c1.is_finite() && c2.is_finite() && c3.is_finite()) {
            return Err(Error::domain("fit parameters must be finite"));
        }
        if c1 < 0.0 || c2 < 0.0 {
            return Err(Error::domain(format!("c1 and c2 must be nonnegative, got {c1}, {c2}")));
        }
        Ok(ItemFit { hard, c1, c2, c3 })
    }

    fn exponent(&self, k: f64) -> f64 {
        -self.c1 * k - self.c2 * k.sqrt() + self.c3
    }
}

/// Model curve of one query at `k` calls.
pub fn g_item(k: u32, fit: &ItemFit) -> f64 {
    let tail = fit.exponent(f64::from(k)).exp().clamp(0.0, 1.0);
    if fit.hard {
        tail
    } else {
        1.0 - tail
    }
}

/// Whether the sample majority misses the true answer. Ties between
/// labels resolve to the lexicographically smallest one.
pub fn classify_item<S: AsRef<str>>(samples: &[S], true_answer: &str) -> Result<bool> {
    if samples.is_empty() {
        return Err(Error::input("cannot classify an item without samples"));
    }
    let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for s in samples {
        *counts.entry(s.as_ref()).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    // BTreeMap iterates in ascending order, so the first maximal label wins
    let majority = counts.iter().find(|&(_, &c)| c == top).map(|(l, _)| *l).unwrap_or_default();
    Ok(majority != true_answer)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Observations are clamped into `[epsilon, 1 - epsilon]` before fitting.
    pub epsilon: f64,
    /// Maximum damped Gauss-Newton steps after the log-linear solve; 0 disables.
    pub polish_steps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { epsilon: 1e-6, polish_steps: 50 }
    }
}

fn least_squares(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    design
        .clone()
        .svd(true, true)
        .solve(target, SVD_EPS)
        .map_err(|e| Error::Underdetermined(e.to_string()))
}

/// Nonnegative least squares over `(c1, c2)` with `c3` free. With only two
/// constrained coordinates the active set is found by trying each pinning
/// pattern and keeping the feasible solution with the smallest residual.
fn nonnegative_log_fit(ks: &[f64], target: &[f64]) -> Result<[f64; 3]> {
    let columns: [Box<dyn Fn(f64) -> f64>; 3] = [Box::new(|k| -k), Box::new(|k| -k.sqrt()), Box::new(|_| 1.0)];
    let y = DVector::from_column_slice(target);
    let mut best: Option<(f64, [f64; 3])> = None;
    for pinned in [[false, false], [true, false], [false, true], [true, true]] {
        let free: Vec<usize> = (0..3).filter(|&j| j == 2 || !pinned[j]).collect();
        let design = DMatrix::from_fn(ks.len(), free.len(), |i, j| columns[free[j]](ks[i]));
        let sol = least_squares(&design, &y)?;
        let mut c = [0.0; 3];
        for (slot, &j) in free.iter().enumerate() {
            c[j] = sol[slot];
        }
        if c[0] < 0.0 || c[1] < 0.0 {
            continue;
        }
        let residual: f64 = ks
            .iter()
            .zip(target)
            .map(|(&k, &t)| {
                let pred = -c[0] * k - c[1] * k.sqrt() + c[2];
                (pred - t).powi(2)
            })
            .sum();
        if best.is_none_or(|(r, _)| residual < r) {
            best = Some((residual, c));
        }
    }
    // the all-pinned pattern is always feasible
    Ok(best.expect("intercept-only fit is feasible").1)
}

fn squared_loss(fit: &ItemFit, ks: &[u32], obs: &[f64]) -> f64 {
    ks.iter().zip(obs).map(|(&k, &v)| (g_item(k, fit) - v).powi(2)).sum()
}

/// Damped Gauss-Newton on `sum (g_item - v)^2`, projecting `c1, c2` onto `>= 0`.
fn polish(start: ItemFit, ks: &[u32], obs: &[f64], steps: usize) -> ItemFit {
    let sign = if start.hard { 1.0 } else { -1.0 };
    let mut fit = start;
    let mut loss = squared_loss(&fit, ks, obs);
    for _ in 0..steps {
        if loss == 0.0 {
            break;
        }
        let n = ks.len();
        let mut jac = DMatrix::zeros(n, 3);
        let mut resid = DVector::zeros(n);
        for (i, (&k, &v)) in ks.iter().zip(obs).enumerate() {
            let kf = f64::from(k);
            let tail = fit.exponent(kf).exp();
            let d = if tail > 1.0 { 0.0 } else { sign * tail };
            jac[(i, 0)] = -kf * d;
            jac[(i, 1)] = -kf.sqrt() * d;
            jac[(i, 2)] = d;
            resid[i] = v - g_item(k, &fit);
        }
        let Ok(step) = least_squares(&jac, &resid) else { break };
        let mut scale = 1.0;
        let mut improved = None;
        for _ in 0..30 {
            let trial = ItemFit {
                hard: fit.hard,
                c1: (fit.c1 + scale * step[0]).max(0.0),
                c2: (fit.c2 + scale * step[1]).max(0.0),
                c3: fit.c3 + scale * step[2],
            };
            let trial_loss = squared_loss(&trial, ks, obs);
            if trial_loss.is_finite() && trial_loss < loss {
                improved = Some((trial, trial_loss));
                break;
            }
            scale *= 0.5;
        }
        match improved {
            Some((trial, trial_loss)) => {
                let gain = loss - trial_loss;
                fit = trial;
                loss = trial_loss;
                if gain <= 1e-15 * loss.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            None => break,
        }
    }
    fit
}

/// Fits one query's curve to observed `(k, accuracy)` pairs.
pub fn fit_item(train: &[(u32, f64)], hard: bool, opts: &FitOptions) -> Result<ItemFit> {
    let mut distinct: Vec<u32> = train.iter().map(|&(k, _)| k).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "need at least 3 distinct call counts, got {}",
            distinct.len()
        )));
    }
    if let Some(&(k, v)) = train.iter().find(|&&(k, v)| k == 0 || !(v.is_finite() && (0.0..=1.0).contains(&v))) {
        return Err(Error::input(format!("bad training point k={k}, accuracy={v}")));
    }
    let eps = opts.epsilon;
    let ks: Vec<u32> = train.iter().map(|&(k, _)| k).collect();
    let clamped: Vec<f64> = train.iter().map(|&(_, v)| v.clamp(eps, 1.0 - eps)).collect();
    let target: Vec<f64> = clamped.iter().map(|&v| if hard { v.ln() } else { (-v).ln_1p() }).collect();
    let kf: Vec<f64> = ks.iter().map(|&k| f64::from(k)).collect();
    let [c1, c2, c3] = nonnegative_log_fit(&kf, &target)?;
    let fit = ItemFit::new(hard, c1, c2, c3)?;
    if opts.polish_steps == 0 {
        return Ok(fit);
    }
    Ok(polish(fit, &ks, &clamped, opts.polish_steps))
}

/// Training data of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemData {
    pub id: String,
    /// Responses used to decide whether the query is hard.
    pub samples: Vec<String>,
    pub true_answer: String,
    pub train: Vec<(u32, f64)>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFit {
    pub id: String,
    pub fit: ItemFit,
    pub weight: f64,
}

/// Weighted mixture of per-query fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingModel {
    items: Vec<WeightedFit>,
}

impl ScalingModel {
    pub fn new(items: Vec<WeightedFit>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::input("scaling model has no items"));
        }
        if let Some(it) = items.iter().find(|it| !(it.weight.is_finite() && it.weight > 0.0)) {
            return Err(Error::input(format!("item {:?} has non-positive weight", it.id)));
        }
        let total: f64 = items.iter().map(|it| it.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::input(format!("item weights sum to {total}, not 1")));
        }
        Ok(ScalingModel { items })
    }

    /// Equal weights.
    pub fn uniform(fits: Vec<(String, ItemFit)>) -> Result<Self> {
        let w = 1.0 / fits.len().max(1) as f64;
        ScalingModel::new(fits.into_iter().map(|(id, fit)| WeightedFit { id, fit, weight: w }).collect())
    }

    pub fn items(&self) -> &[WeightedFit] {
        &self.items
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    items: Vec<ModelEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModelEntry {
    id: String,
    hard: bool,
    c: [f64; 3],
    weight: f64,
}

impl From<&ScalingModel> for ModelDocument {
    fn from(model: &ScalingModel) -> Self {
        ModelDocument {
            items: model
                .items
                .iter()
                .map(|it| ModelEntry {
                    id: it.id.clone(),
                    hard: it.fit.hard,
                    c: [it.fit.c1, it.fit.c2, it.fit.c3],
                    weight: it.weight,
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelDocument> for ScalingModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let items = doc
            .items
            .into_iter()
            .map(|e| {
                let [c1, c2, c3] = e.c;
                Ok(WeightedFit { fit: ItemFit::new(e.hard, c1, c2, c3)?, id: e.id, weight: e.weight })
            })
            .collect::<Result<Vec<_>>>()?;
        ScalingModel::new(items)
    }
}

/// Classifies and fits every item, then mixes the fits. Items are weighted
/// uniformly unless every item carries an explicit weight.
pub fn fit_dataset(items: &[ItemData], opts: &FitOptions) -> Result<ScalingModel> {
    if items.is_empty() {
        return Err(Error::input("no items to fit"));
    }
    let explicit = items.iter().filter(|it| it.weight.is_some()).count();
    if explicit != 0 && explicit != items.len() {
        return Err(Error::input("either every item carries a weight or none does"));
    }
    let fits = items
        .par_iter()
        .map(|it| {
            let fit = classify_item(&it.samples, &it.true_answer)
                .and_then(|hard| fit_item(&it.train, hard, opts))
                .map_err(|e| Error::Item { id: it.id.clone(), source: Box::new(e) })?;
            let weight = it.weight.unwrap_or(1.0);
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::Item {
                    id: it.id.clone(),
                    source: Box::new(Error::input("weight must be positive")),
                });
            }
            Ok(WeightedFit { id: it.id.clone(), fit, weight })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = fits.iter().map(|f| f.weight).sum();
    ScalingModel::new(fits.into_iter().map(|f| WeightedFit { weight: f.weight / total, ..f }).collect())
}

/// Model accuracy at each requested call count.
pub fn predict(model: &ScalingModel, ks: &[u32]) -> Result<PerformanceCurve> {
    validate_ks(ks)?;
    let points = ks
        .iter()
        .map(|&k| CurvePoint { k, accuracy: predict_at(model, k), stderr: None })
        .collect();
    PerformanceCurve::new(points)
}

fn predict_at(model: &ScalingModel, k: u32) -> f64 {
    model
        .items
        .iter()
        .map(|it| it.weight * g_item(k, &it.fit))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Predicted best number of calls in `1..=k_max`, smallest on ties.
pub fn predict_optimal_k(model: &ScalingModel, k_max: u32) -> Result<u32> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    let mut best_k = 1;
    let mut best = f64::NEG_INFINITY;
    for k in 1..=k_max {
        let acc = predict_at(model, k);
        if acc > best {
            best = acc;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Mean squared accuracy difference over a shared k grid.
pub fn curve_mse(predicted: &PerformanceCurve, reference: &PerformanceCurve) -> Result<f64> {
    if predicted.ks() != reference.ks() {
        return Err(Error::input("curves are on different k grids"));
    }
    if predicted.is_empty() {
        return Err(Error::input("cannot compare empty curves"));
    }
    let sum: f64 = predicted
        .points()
        .iter()
        .zip(reference.points())
        .map(|(a, b)| (a.accuracy - b.accuracy).powi(2))
        .sum();
    Ok(sum / predicted.len() as f64)
}
