use votelaw::analytic::exact_curve;
use votelaw::population::{difficulty_vote, AnswerDistribution, BiLevelSpec, FilterModel};
use votelaw::simulator::{
    resample_curve_from_trace, resample_record_curves, simulate_curve, PopulationQuery, SeedSpec, Strategy,
    SyntheticPopulation,
};
use votelaw::special::Probability;
use votelaw::trace::{ResponseTrace, TraceRecord};
use votelaw::Error;

fn single(dist: AnswerDistribution) -> SyntheticPopulation {
    SyntheticPopulation::new(vec![PopulationQuery { dist, weight: 1.0, filter: None }]).unwrap()
}

fn record(id: &str, truth: &str, answers: &[&str], keep: Option<Vec<u8>>, weight: Option<f64>) -> TraceRecord {
    TraceRecord {
        id: id.into(),
        true_answer: truth.into(),
        answers: answers.iter().map(|s| s.to_string()).collect(),
        keep,
        weight,
    }
}

#[test]
fn identical_under_any_thread_count() {
    let spec = BiLevelSpec::new(0.4, 0.8, 0.35).unwrap();
    let pop = SyntheticPopulation::from_bilevel(&spec, Some(FilterModel::new(0.9, 0.3).unwrap()));
    let ks = [1, 2, 4, 9];
    let run = |threads: usize, strategy: Strategy| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_curve(&pop, strategy, &ks, 500, SeedSpec::new(11)).unwrap())
    };
    for strategy in [Strategy::Vote, Strategy::FilterVote] {
        let one = run(1, strategy);
        let many = run(4, strategy);
        assert_eq!(one, many);
        for (a, b) in one.points().iter().zip(many.points()) {
            assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        }
    }
    assert_ne!(
        simulate_curve(&pop, Strategy::Vote, &ks, 500, SeedSpec::new(11)).unwrap(),
        simulate_curve(&pop, Strategy::Vote, &ks, 500, SeedSpec::new(12)).unwrap()
    );
}

#[test]
fn simulation_agrees_with_exact_curves() {
    let specs = [(0.5, 0.75, 0.4), (0.4, 0.85, 0.1), (0.6, 0.85, 0.1), (0.3, 0.9, 0.45), (0.7, 0.6, 0.2)];
    let ks = [1, 2, 3, 6, 11];
    let (mut cells, mut inside) = (0, 0);
    for (i, &(a, p1, p2)) in specs.iter().enumerate() {
        let spec = BiLevelSpec::new(a, p1, p2).unwrap();
        let exact = exact_curve(&spec, &ks).unwrap();
        let pop = SyntheticPopulation::from_bilevel(&spec, None);
        let sim = simulate_curve(&pop, Strategy::Vote, &ks, 10_000, SeedSpec::new(100 + i as u64)).unwrap();
        for (s, e) in sim.points().iter().zip(exact.points()) {
            cells += 1;
            if (s.accuracy - e.accuracy).abs() <= 3.0 * s.stderr.unwrap() {
                inside += 1;
            }
        }
    }
    assert!(inside as f64 >= 0.99 * cells as f64, "{inside}/{cells}");
}

#[test]
fn more_calls_help_easy_queries_and_hurt_hard_ones() {
    let cases = [
        AnswerDistribution::binary(Probability::new(0.6).unwrap()),
        AnswerDistribution::binary(Probability::new(0.4).unwrap()),
        AnswerDistribution::new(vec!["a".into(), "b".into(), "c".into()], vec![0.45, 0.35, 0.2], 0).unwrap(),
        AnswerDistribution::new(vec!["a".into(), "b".into(), "c".into()], vec![0.3, 0.45, 0.25], 0).unwrap(),
    ];
    for (i, dist) in cases.into_iter().enumerate() {
        let easy = difficulty_vote(&dist).value() < 0.0;
        let curve = simulate_curve(&single(dist), Strategy::Vote, &[1, 101], 10_000, SeedSpec::new(i as u64)).unwrap();
        let (one, many) = (&curve.points()[0], &curve.points()[1]);
        let margin = 3.0 * (one.stderr.unwrap().powi(2) + many.stderr.unwrap().powi(2)).sqrt();
        if easy {
            assert!(many.accuracy > one.accuracy + margin, "case {i}: {curve:?}");
        } else {
            assert!(many.accuracy < one.accuracy - margin, "case {i}: {curve:?}");
        }
    }
}

#[test]
fn filter_flags_are_replayed_from_the_trace() {
    // only the correct answer is kept, so Filter-Vote is right whenever it
    // appears among the draws: accuracy 1 - (2/3)^k
    let trace = ResponseTrace::new(vec![record("q", "A", &["A", "B", "B"], Some(vec![1, 0, 0]), None)]).unwrap();
    let ks = [1, 3, 5];
    let filtered = resample_curve_from_trace(&trace, Strategy::FilterVote, &ks, 10_000, SeedSpec::new(3)).unwrap();
    for pt in filtered.points() {
        let want = 1.0 - (2.0f64 / 3.0).powi(pt.k as i32);
        assert!((pt.accuracy - want).abs() <= 3.0 * pt.stderr.unwrap().max(1e-3), "{pt:?}");
    }
    let voted = resample_curve_from_trace(&trace, Strategy::Vote, &[5], 10_000, SeedSpec::new(3)).unwrap();
    assert!(voted.points()[0].accuracy < filtered.points()[2].accuracy);
}

#[test]
fn trace_weights_set_the_mixture() {
    let trace = ResponseTrace::new(vec![
        record("right", "A", &["A", "A"], None, Some(3.0)),
        record("wrong", "A", &["B", "C"], None, Some(1.0)),
    ])
    .unwrap();
    let curve = resample_curve_from_trace(&trace, Strategy::Vote, &[1, 4], 50, SeedSpec::new(1)).unwrap();
    assert_eq!(curve.accuracies(), vec![0.75, 0.75]);

    let per = resample_record_curves(&trace, Strategy::Vote, &[1, 4], 50, SeedSpec::new(1)).unwrap();
    assert_eq!(per[0].accuracies(), vec![1.0, 1.0]);
    assert_eq!(per[1].accuracies(), vec![0.0, 0.0]);
}

#[test]
fn trace_errors() {
    let no_flags = ResponseTrace::new(vec![record("q", "A", &["A"], None, None)]).unwrap();
    assert!(matches!(
        resample_curve_from_trace(&no_flags, Strategy::FilterVote, &[1], 10, SeedSpec::new(0)),
        Err(Error::Config(_))
    ));
    let empty = ResponseTrace::new(Vec::new()).unwrap();
    assert!(matches!(
        resample_curve_from_trace(&empty, Strategy::Vote, &[1], 10, SeedSpec::new(0)),
        Err(Error::Input(_))
    ));
}
