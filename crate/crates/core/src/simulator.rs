//! Monte Carlo runs of Vote and Filter-Vote.
//!
//! Every (query, run, k) cell draws from its own ChaCha8 stream whose key is
//! `(master_seed, query, k_index, run)`. Answer draws and tie breaks use
//! stream 0 of that key, in that order; synthetic filter verdicts use
//! stream 1. Results therefore do not depend on how rayon schedules the
//! cells, and Filter-Vote with a keep-everything filter replays Vote exactly.

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{validate_ks, CurvePoint, PerformanceCurve};
use crate::error::{Error, Result};
use crate::population::{AnswerDistribution, BiLevelSpec, FilterModel};
use crate::trace::ResponseTrace;

const WEIGHT_TOLERANCE: f64 = 1e-9;

const ANSWER_STREAM: u64 = 0;
const FILTER_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Vote,
    FilterVote,
}

/// Master seed from which every per-cell stream is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    /// Generator for one cell. Distinct `(query, k_index, run, channel)`
    /// tuples map to distinct ChaCha keys or stream ids, so streams never overlap.
    pub fn stream(&self, query: u64, k_index: u64, run: u64, channel: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        for (chunk, word) in key.chunks_exact_mut(8).zip([self.master_seed, query, k_index, run]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(channel);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationQuery {
    pub dist: AnswerDistribution,
    pub weight: f64,
    pub filter: Option<FilterModel>,
}

/// Weighted set of synthetic queries.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    queries: Vec<PopulationQuery>,
}

impl SyntheticPopulation {
    pub fn new(queries: Vec<PopulationQuery>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::input("population has no queries"));
        }
        if let Some(q) = queries.iter().find(|q| !(q.weight.is_finite() && q.weight > 0.0)) {
            return Err(Error::input(format!("query weight {} is not positive", q.weight)));
        }
        let total: f64 = queries.iter().map(|q| q.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::input(format!("query weights sum to {total}, not 1")));
        }
        Ok(SyntheticPopulation { queries })
    }

    /// One binary query per level, weighted `alpha` and `1 - alpha`. A level
    /// with zero weight is dropped.
    pub fn from_bilevel(spec: &BiLevelSpec, filter: Option<FilterModel>) -> Self {
        let levels = [(spec.alpha(), spec.p1()), (1.0 - spec.alpha(), spec.p2())];
        let queries = levels
            .into_iter()
            .filter(|&(w, _)| w > 0.0)
            .map(|(weight, p)| PopulationQuery {
                dist: AnswerDistribution::binary(
                    crate::special::Probability::new(p).expect("levels are probabilities"),
                ),
                weight,
                filter,
            })
            .collect();
        SyntheticPopulation { queries }
    }

    pub fn queries(&self) -> &[PopulationQuery] {
        &self.queries
    }
}

/// Inverse-CDF sampler over answer indices.
struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    fn new(dist: &AnswerDistribution) -> Self {
        let mut acc = 0.0;
        let cumulative = dist
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Categorical { cumulative }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("at least two answers");
        let u = rng.gen::<f64>() * total;
        // zero-probability labels have c == previous c and are never selected
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// `k` independent draws of answer indices (positions in `dist.labels()`).
pub fn sample_answers<R: Rng + ?Sized>(dist: &AnswerDistribution, k: u32, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::domain("number of samples must be at least 1"));
    }
    let sampler = Categorical::new(dist);
    Ok((0..k).map(|_| sampler.draw(rng)).collect())
}

/// A most frequent answer. Among tied answers, taken in order of first
/// appearance, one is chosen uniformly from `rng`; no randomness is consumed
/// when the mode is unique.
pub fn majority_vote<T, R>(answers: &[T], rng: &mut R) -> Result<T>
where
    T: Eq + Hash + Clone,
    R: Rng + ?Sized,
{
    majority_vote_iter(answers.iter(), rng)
        .cloned()
        .ok_or_else(|| Error::input("majority vote over an empty answer list"))
}

fn majority_vote_iter<'a, T, R, I>(answers: I, rng: &mut R) -> Option<&'a T>
where
    T: Eq + Hash + 'a,
    R: Rng + ?Sized,
    I: IntoIterator<Item = &'a T>,
{
    let mut order: Vec<(&T, usize)> = Vec::new();
    let mut slot: HashMap<&T, usize> = HashMap::new();
    for a in answers {
        match slot.get(a) {
            Some(&i) => order[i].1 += 1,
            None => {
                slot.insert(a, order.len());
                order.push((a, 1));
            }
        }
    }
    let top = order.iter().map(|&(_, c)| c).max()?;
    let tied: Vec<&T> = order.iter().filter(|&&(_, c)| c == top).map(|&(a, _)| a).collect();
    if tied.len() == 1 {
        Some(tied[0])
    } else {
        Some(tied[rng.gen_range(0..tied.len())])
    }
}

/// Majority over the answers the filter kept, or over all answers when the
/// filter rejected every one of them.
pub fn filter_vote<T, R>(answers: &[T], keep: &[bool], rng: &mut R) -> Result<T>
where
    T: Eq + Hash + Clone,
    R: Rng + ?Sized,
{
    if answers.len() != keep.len() {
        return Err(Error::input(format!(
            "{} answers but {} keep flags",
            answers.len(),
            keep.len()
        )));
    }
    if !keep.iter().any(|&k| k) {
        return majority_vote(answers, rng);
    }
    majority_vote_iter(answers.iter().zip(keep).filter(|(_, &k)| k).map(|(a, _)| a), rng)
        .cloned()
        .ok_or_else(|| Error::input("majority vote over an empty answer list"))
}

fn check_runs(runs: u32) -> Result<()> {
    if runs == 0 {
        Err(Error::input("runs must be at least 1"))
    } else {
        Ok(())
    }
}

/// Per-query accuracy over `runs` at one k, plus the query weight.
fn aggregate(per_query: &[(f64, f64)], runs: u32, k: u32) -> CurvePoint {
    let mut accuracy = 0.0;
    let mut variance = 0.0;
    for &(w, acc) in per_query {
        accuracy += w * acc;
        variance += w * w * acc * (1.0 - acc) / f64::from(runs);
    }
    CurvePoint { k, accuracy: accuracy.clamp(0.0, 1.0), stderr: Some(variance.sqrt()) }
}

fn count_in_order(outcomes: &[bool], n_queries: usize, runs: u32) -> Vec<f64> {
    let runs = runs as usize;
    (0..n_queries)
        .map(|q| {
            let hits = outcomes[q * runs..(q + 1) * runs].iter().filter(|&&c| c).count();
            hits as f64 / runs as f64
        })
        .collect()
}

fn one_synthetic_run(
    query: &PopulationQuery,
    sampler: &Categorical,
    strategy: Strategy,
    k: u32,
    seed: &SeedSpec,
    cell: (u64, u64, u64),
) -> usize {
    let (q, ki, run) = cell;
    let mut rng = seed.stream(q, ki, run, ANSWER_STREAM);
    let answers: Vec<usize> = (0..k).map(|_| sampler.draw(&mut rng)).collect();
    let truth = query.dist.true_index();
    match strategy {
        Strategy::Vote => *majority_vote_iter(answers.iter(), &mut rng).expect("k >= 1"),
        Strategy::FilterVote => {
            let filter = query.filter.expect("checked before simulation");
            let mut flag_rng = seed.stream(q, ki, run, FILTER_STREAM);
            let keep: Vec<bool> = answers
                .iter()
                .map(|&a| {
                    let p = if a == truth { filter.keep_correct } else { filter.keep_incorrect };
                    flag_rng.gen::<f64>() < p.value()
                })
                .collect();
            filter_vote(&answers, &keep, &mut rng).expect("lengths match")
        }
    }
}

/// Answer chosen in every simulated run: one vector per entry of `ks`,
/// query-major (`query * runs + run`), holding indices into each query's
/// labels. Deterministic in `seed` regardless of thread count.
pub fn simulate_choices(
    pop: &SyntheticPopulation,
    strategy: Strategy,
    ks: &[u32],
    runs: u32,
    seed: SeedSpec,
) -> Result<Vec<Vec<usize>>> {
    validate_ks(ks)?;
    check_runs(runs)?;
    if strategy == Strategy::FilterVote {
        if let Some(i) = pop.queries.iter().position(|q| q.filter.is_none()) {
            return Err(Error::Config(format!("filter-vote needs a filter model for query {i}")));
        }
    }
    let samplers: Vec<Categorical> = pop.queries.iter().map(|q| Categorical::new(&q.dist)).collect();
    let cells = pop.queries.len() * runs as usize;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            (0..cells)
                .into_par_iter()
                .map(|cell| {
                    let q = cell / runs as usize;
                    let run = (cell % runs as usize) as u64;
                    one_synthetic_run(&pop.queries[q], &samplers[q], strategy, k, &seed, (q as u64, ki as u64, run))
                })
                .collect()
        })
        .collect())
}

/// Simulated accuracy curve. Deterministic in `seed` regardless of thread count.
pub fn simulate_curve(
    pop: &SyntheticPopulation,
    strategy: Strategy,
    ks: &[u32],
    runs: u32,
    seed: SeedSpec,
) -> Result<PerformanceCurve> {
    let choices = simulate_choices(pop, strategy, ks, runs, seed)?;
    let n_queries = pop.queries.len();
    let points = ks
        .iter()
        .zip(choices)
        .map(|(&k, chosen)| {
            let outcomes: Vec<bool> = chosen
                .iter()
                .enumerate()
                .map(|(cell, &c)| c == pop.queries[cell / runs as usize].dist.true_index())
                .collect();
            let accs = count_in_order(&outcomes, n_queries, runs);
            let weighted: Vec<(f64, f64)> = pop.queries.iter().map(|q| q.weight).zip(accs).collect();
            aggregate(&weighted, runs, k)
        })
        .collect();
    PerformanceCurve::new(points)
}

/// Bootstrap curve of every record separately: each run draws `k` responses
/// with replacement from the record and applies the strategy.
pub fn resample_record_curves(
    trace: &ResponseTrace,
    strategy: Strategy,
    ks: &[u32],
    runs: u32,
    seed: SeedSpec,
) -> Result<Vec<PerformanceCurve>> {
    validate_ks(ks)?;
    check_runs(runs)?;
    let records = trace.records();
    if records.is_empty() {
        return Err(Error::input("trace has no records"));
    }
    if strategy == Strategy::FilterVote {
        if let Some(r) = records.iter().find(|r| r.keep.is_none()) {
            return Err(Error::Config(format!("filter-vote needs keep flags on record {:?}", r.id)));
        }
    }
    // intern answers per record; index 0.. are answer ids, truth may be absent
    let interned: Vec<(Vec<usize>, Option<usize>, Vec<bool>)> = records
        .iter()
        .map(|r| {
            let mut ids: HashMap<&str, usize> = HashMap::new();
            let answers: Vec<usize> = r
                .answers
                .iter()
                .map(|a| {
                    let next = ids.len();
                    *ids.entry(a.as_str()).or_insert(next)
                })
                .collect();
            let truth = ids.get(r.true_answer.as_str()).copied();
            let keep = r.keep.as_ref().map(|k| k.iter().map(|&f| f == 1).collect()).unwrap_or_default();
            (answers, truth, keep)
        })
        .collect();

    let n = records.len();
    let mut per_k: Vec<Vec<f64>> = Vec::with_capacity(ks.len());
    for (ki, &k) in ks.iter().enumerate() {
        let outcomes: Vec<bool> = (0..n * runs as usize)
            .into_par_iter()
            .map(|cell| {
                let q = cell / runs as usize;
                let run = (cell % runs as usize) as u64;
                let (answers, truth, keep) = &interned[q];
                let mut rng = seed.stream(q as u64, ki as u64, run, ANSWER_STREAM);
                let picks: Vec<usize> = (0..k).map(|_| rng.gen_range(0..answers.len())).collect();
                let drawn: Vec<usize> = picks.iter().map(|&i| answers[i]).collect();
                let chosen = match strategy {
                    Strategy::Vote => *majority_vote_iter(drawn.iter(), &mut rng).expect("k >= 1"),
                    Strategy::FilterVote => {
                        let flags: Vec<bool> = picks.iter().map(|&i| keep[i]).collect();
                        filter_vote(&drawn, &flags, &mut rng).expect("lengths match")
                    }
                };
                Some(chosen) == *truth
            })
            .collect();
        per_k.push(count_in_order(&outcomes, n, runs));
    }
    (0..n)
        .map(|q| {
            let points = ks
                .iter()
                .zip(&per_k)
                .map(|(&k, accs)| {
                    let a = accs[q];
                    CurvePoint { k, accuracy: a, stderr: Some((a * (1.0 - a) / f64::from(runs)).sqrt()) }
                })
                .collect();
            PerformanceCurve::new(points)
        })
        .collect()
}

/// Trace-level bootstrap curve, weighting records by their trace weights
/// (uniform unless the file supplies weights).
pub fn resample_curve_from_trace(
    trace: &ResponseTrace,
    strategy: Strategy,
    ks: &[u32],
    runs: u32,
    seed: SeedSpec,
) -> Result<PerformanceCurve> {
    let curves = resample_record_curves(trace, strategy, ks, runs, seed)?;
    let weights = trace.weights();
    let points = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let per: Vec<(f64, f64)> =
                weights.iter().zip(&curves).map(|(&w, c)| (w, c.points()[i].accuracy)).collect();
            aggregate(&per, runs, k)
        })
        .collect();
    PerformanceCurve::new(points)
}
