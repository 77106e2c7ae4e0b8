use super::*;
use crate::corpus::UserCorpus;
use crate::factors::RotationSpec;
use crate::fixture::{generate, FixtureConfig};
use crate::pipeline::FactorConfig;
use crate::utm::VocabularyConfig;

fn factor_cfg(k: usize) -> FactorConfig {
    FactorConfig {
        k,
        rotation: RotationSpec::of(crate::factors::RotationKind::Varimax),
        vocabulary: VocabularyConfig { max_terms: 1000, min_user_fraction: 0.05 },
        ..Default::default()
    }
}

fn stationary(users: usize, periods: usize, transient: Vec<usize>) -> UserCorpus {
    let cfg = FixtureConfig {
        users,
        terms: 90,
        k: 3,
        noise: 0.3,
        loading: 0.8,
        periods,
        tokens: 800,
        transient,
        seed: 3,
        ..Default::default()
    };
    generate(&cfg).unwrap().corpus()
}

#[test]
fn retest_stationary_factors_are_stable() {
    let corpus = stationary(300, 3, vec![]);
    let run = test_retest(&corpus, &factor_cfg(3), &RetestConfig::default()).unwrap();
    let rep = &run.report;
    assert_eq!(rep.periods.len(), 3);
    assert_eq!(rep.adjacent.len(), 2);
    for pc in &rep.adjacent {
        for r in pc.r.as_ref().unwrap() {
            assert!(r.unwrap() > 0.7, "{:?}", pc);
        }
    }
    // Period 0 against itself.
    for r in rep.vs_first[0].r.as_ref().unwrap() {
        assert!((r.unwrap() - 1.0).abs() < 1e-9);
    }
    let again = test_retest(&corpus, &factor_cfg(3), &RetestConfig::default()).unwrap();
    assert_eq!(rep, &again.report);
}

#[test]
fn retest_transient_factor_is_least_stable() {
    let corpus = stationary(300, 3, vec![2]);
    let run = test_retest(&corpus, &factor_cfg(3), &RetestConfig::default()).unwrap();
    let means: Vec<f64> = run.report.mean_cross_period_r.iter().map(|m| m.unwrap()).collect();
    let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let stable = means.iter().filter(|&&m| m > 0.7).count();
    assert_eq!(stable, 2, "{means:?}");
    assert!(min < 0.5, "{means:?}");
}

#[test]
fn retest_requires_timestamps() {
    let mut corpus = stationary(30, 1, vec![]);
    for u in &mut corpus.users {
        u.message_timestamps.clear();
        for m in &mut u.messages {
            m.timestamp = None;
        }
    }
    let err = test_retest(&corpus, &factor_cfg(2), &RetestConfig::default()).err().unwrap();
    assert!(matches!(err, crate::Error::MissingTimestamps(_)));
}

#[test]
fn retest_marks_thin_comparisons_missing() {
    let corpus = stationary(60, 2, vec![]);
    let cfg = RetestConfig { min_common_users: 1000, ..Default::default() };
    let run = test_retest(&corpus, &factor_cfg(2), &cfg).unwrap();
    assert!(run.report.adjacent.iter().all(|pc| pc.r.is_none()));
    assert!(run.report.mean_cross_period_r.iter().all(|m| m.is_none()));
}

#[test]
fn kept_indices_drop_count() {
    let kept = kept_indices(100, 0.2, 7);
    assert_eq!(kept.len(), 80);
    assert!(kept.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(kept_indices(10, 0.0, 1), (0..10).collect::<Vec<_>>());
    assert_ne!(kept_indices(100, 0.2, 7), kept_indices(100, 0.2, 8));
}

#[test]
fn dropout_without_dropping_is_perfect() {
    let corpus = stationary(200, 0, vec![]);
    let (train, hold) = split(&corpus, 150);
    let cfg = DropoutConfig { drop_fraction: 0.0, runs: 3, seed_base: 0 };
    let rep = dropout_reliability(&train, &hold, &factor_cfg(3), &cfg).unwrap();
    assert_eq!(rep.pairs.len(), 3);
    assert!((rep.grand_mean.unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn dropout_reliability_on_planted_structure() {
    let corpus = stationary(400, 0, vec![]);
    let (train, hold) = split(&corpus, 300);
    let cfg = DropoutConfig { drop_fraction: 0.2, runs: 4, seed_base: 10 };
    let rep = dropout_reliability(&train, &hold, &factor_cfg(3), &cfg).unwrap();
    assert_eq!(rep.n_dropped_per_run, 60);
    assert_eq!(rep.pairs.len(), 6);
    assert!(rep.grand_mean.unwrap() > 0.9, "{:?}", rep.grand_mean);
}

#[test]
fn dropout_single_run_has_no_mean() {
    let corpus = stationary(120, 0, vec![]);
    let (train, hold) = split(&corpus, 90);
    let cfg = DropoutConfig { drop_fraction: 0.2, runs: 1, seed_base: 0 };
    let rep = dropout_reliability(&train, &hold, &factor_cfg(2), &cfg).unwrap();
    assert!(rep.insufficient_runs);
    assert!(rep.grand_mean.is_none());
    assert!(dropout_reliability(&train, &hold, &factor_cfg(2), &DropoutConfig { drop_fraction: 1.0, ..cfg }).is_err());
}

fn split(corpus: &UserCorpus, n_train: usize) -> (UserCorpus, UserCorpus) {
    let mut train = corpus.clone();
    let hold_users = train.users.split_off(n_train);
    let hold = UserCorpus { users: hold_users, filter_config: corpus.filter_config.clone() };
    (train, hold)
}
