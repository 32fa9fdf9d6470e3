//! Accuracy of majority-vote inference systems as the number of model calls
//! grows: closed forms for two-level populations, a Monte Carlo simulator,
//! trace bootstrapping, and a per-query scaling-law fit.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod io;
pub mod population;
pub mod scaling_law;
pub mod simulator;
pub mod special;
pub mod trace;

pub use analytic::{
    bilevel_accuracy, exact_curve, landscape_shape, optimal_k, vote_accuracy, CurvePoint, EvenCalls, LandscapeShape,
    OptimalCalls, PerformanceCurve,
};
pub use error::{Error, Result};
pub use population::{AnswerDistribution, BiLevelSpec, DifficultyIndicator, FilterModel};
pub use scaling_law::{fit_dataset, predict, FitOptions, ItemData, ItemFit, ScalingModel};
pub use simulator::{simulate_choices, simulate_curve, SeedSpec, Strategy, SyntheticPopulation};
pub use special::Probability;
pub use trace::{ResponseTrace, TraceRecord};
