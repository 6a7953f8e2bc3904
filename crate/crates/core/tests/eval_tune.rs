use goalrec::data::{synth_dataset, ContinuousTrace, Dataset, SynthSpec};
use goalrec::eval::{build_report, cross_validate, Method, DEFAULT_OBS_LEVELS};
use goalrec::pipeline::PipelineConfig;
use goalrec::recognize::WeightParams;
use goalrec::tune::{grid_search, lhs_sample, tune_weights, LhsBounds};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_synth(seed: u64) -> Dataset {
    synth_dataset(&SynthSpec {
        traces_per_goal: 6,
        features: 8,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
}

fn small_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        n_features: 4,
        n_clusters: 6,
        seed,
        ..PipelineConfig::default()
    }
}

#[test]
fn instance_count_follows_the_protocol() {
    let ds = small_synth(1);
    let report = cross_validate(&ds, &small_config(1), &[Method::Pm, Method::Lda], &DEFAULT_OBS_LEVELS, "s1").unwrap();
    assert_eq!(report.metadata.folds, 6);
    assert_eq!(report.instances.len(), 2 * 6 * 3 * 4);
    for method in [Method::Pm, Method::Lda] {
        let rows = &report.results["s1"][&method];
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.summary.n == 18));
    }
}

#[test]
fn aggregates_are_recomputable_from_instances() {
    let ds = small_synth(2);
    let report = cross_validate(&ds, &small_config(2), &[Method::Pm, Method::Lda], &DEFAULT_OBS_LEVELS, "s").unwrap();
    for (method, summary) in &report.overall {
        let own: Vec<_> = report.instances.iter().filter(|r| r.method == *method).collect();
        let p = own.iter().map(|r| r.precision).sum::<f64>() / own.len() as f64;
        let r = own.iter().map(|r| r.recall).sum::<f64>() / own.len() as f64;
        assert!((summary.precision - p).abs() < 1e-12);
        assert!((summary.recall - r).abs() < 1e-12);
    }
    for level in &report.results["s"][&Method::Lda] {
        assert_eq!(level.summary.precision, level.summary.recall);
    }
    for r in &report.instances {
        assert!(r.recall == 0.0 || r.recall == 1.0);
        assert_eq!(r.probability_gap.is_some(), !r.inferred.contains(&r.true_goal));
        let k = (1.0 / r.precision).round();
        assert!(r.precision == 0.0 || (r.precision - 1.0 / k).abs() < 1e-12);
    }
    let rebuilt = build_report(report.metadata.clone(), report.instances.clone()).unwrap();
    assert_eq!(rebuilt, report);
}

#[test]
fn report_json_is_identical_across_thread_counts() {
    let ds = small_synth(3);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                cross_validate(&ds, &small_config(3), &[Method::Pm, Method::Lda], &DEFAULT_OBS_LEVELS, "s")
                    .unwrap()
                    .to_json()
                    .unwrap()
            })
    };
    assert_eq!(run(1), run(6));
}

#[test]
fn constant_separable_traces_give_perfect_pm_scores() {
    let mut traces = Vec::new();
    for (g, goal) in ["A", "B", "C"].iter().enumerate() {
        for i in 0..3 {
            let rows = vec![vec![g as f64 * 5.0, -(g as f64)]; 10];
            traces.push(ContinuousTrace::new(format!("{goal}{i}"), *goal, rows));
        }
    }
    let ds = Dataset {
        feature_names: vec!["a".into(), "b".into()],
        goals: vec!["A".into(), "B".into(), "C".into()],
        traces,
    };
    let config = PipelineConfig {
        n_features: 1,
        n_clusters: 3,
        ..PipelineConfig::default()
    };
    let report = cross_validate(&ds, &config, &[Method::Pm], &DEFAULT_OBS_LEVELS, "c").unwrap();
    for level in &report.results["c"][&Method::Pm] {
        assert_eq!((level.summary.precision, level.summary.recall), (1.0, 1.0));
    }
}

#[test]
fn training_failures_name_the_fold() {
    let ds = small_synth(4);
    let config = PipelineConfig {
        n_clusters: 10_000,
        ..small_config(4)
    };
    let err = cross_validate(&ds, &config, &[Method::Pm], &DEFAULT_OBS_LEVELS, "s").unwrap_err();
    assert!(err.to_string().contains("fold 0"), "{err}");
    assert!(matches!(err.root(), goalrec::Error::Infeasible(_)));
}

#[test]
fn grid_search_picks_the_maximum_and_skips_infeasible_cells() {
    let ds = small_synth(5);
    let base = small_config(5);
    let result = grid_search(&ds, &[2, 4], &[3, 6, 100_000], &base, &[0.3, 0.7], None).unwrap();
    assert_eq!(result.table.len(), 6);
    let skipped: Vec<_> = result.table.iter().filter(|e| e.f1.is_none()).collect();
    assert_eq!(skipped.len(), 2);
    assert!(skipped.iter().all(|e| e.n_clusters == 100_000 && e.skipped.is_some()));
    for e in &result.table {
        assert!(e.f1.is_none_or(|f| f <= result.best_f1));
    }
    let first_best = result.table.iter().find(|e| e.f1 == Some(result.best_f1)).unwrap();
    assert_eq!((first_best.n_features, first_best.n_clusters), (result.best_n_features, result.best_n_clusters));

    let shuffled = grid_search(&ds, &[4, 2], &[100_000, 6, 3], &base, &[0.3, 0.7], None).unwrap();
    assert_eq!(shuffled, result);

    let single = grid_search(&ds, &[4], &[6], &base, &[0.3, 0.7], None).unwrap();
    assert_eq!((single.best_n_features, single.best_n_clusters), (4, 6));

    assert!(grid_search(&ds, &[4], &[100_000], &base, &[0.3], None).is_err());
}

#[test]
fn grid_search_resumes_from_its_progress_file() {
    let ds = small_synth(6);
    let dir = tempfile::tempdir().unwrap();
    let progress = dir.path().join("progress.jsonl");
    let base = small_config(6);
    let first = grid_search(&ds, &[2, 4], &[4], &base, &[0.5], Some(&progress)).unwrap();
    let lines = std::fs::read_to_string(&progress).unwrap().lines().count();
    assert_eq!(lines, 2);
    let second = grid_search(&ds, &[2, 4, 6], &[4], &base, &[0.5], Some(&progress)).unwrap();
    assert_eq!(std::fs::read_to_string(&progress).unwrap().lines().count(), 3);
    assert_eq!(&second.table[..2], &first.table[..]);
}

#[test]
fn phi_only_candidates_score_identically() {
    let ds = small_synth(7);
    let candidates: Vec<WeightParams> = [0.0, 1.0, 3.5]
        .iter()
        .map(|&phi| WeightParams { phi, ..WeightParams::default() })
        .collect();
    let result = tune_weights(&ds, &small_config(7), &candidates, &DEFAULT_OBS_LEVELS, None, None).unwrap();
    let f1s: Vec<f64> = result.table.iter().map(|e| e.f1.unwrap()).collect();
    assert!(f1s.iter().all(|f| *f == f1s[0]));
    assert_eq!(result.best_weights.phi, 0.0);

    let one = tune_weights(&ds, &small_config(7), &candidates[1..2], &DEFAULT_OBS_LEVELS, None, None).unwrap();
    assert_eq!(one.best_f1, f1s[1]);
}

#[test]
fn cached_scoring_matches_full_cross_validation() {
    let ds = small_synth(8);
    let config = small_config(8);
    let params = WeightParams { lambda: 3.0, beta: 0.4, delta: 0.5, ..WeightParams::default() };
    let tuned = tune_weights(&ds, &config, &[params], &DEFAULT_OBS_LEVELS, None, None).unwrap();
    let full = cross_validate(&ds, &PipelineConfig { weights: params, ..config }, &[Method::Pm], &DEFAULT_OBS_LEVELS, "").unwrap();
    assert_eq!(tuned.best_f1, full.overall[&Method::Pm].f1);
}

/// Two informative channels hidden among eight noise channels.
fn informative_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let goals = ["A", "B", "C"];
    let mut traces = Vec::new();
    for (g, goal) in goals.iter().enumerate() {
        for i in 0..8 {
            let len = rng.random_range(12..18);
            let rows = (0..len)
                .map(|t| {
                    let phase = t as f64 / len as f64;
                    let target = [(-2.0, 2.0), (2.0, 2.0), (0.0, -2.0)][g];
                    let mut row = vec![
                        phase * target.0 + rng.random_range(-0.2..0.2),
                        phase * target.1 + rng.random_range(-0.2..0.2),
                    ];
                    row.extend((0..8).map(|_| rng.random_range(-1.0..1.0)));
                    row
                })
                .collect();
            traces.push(ContinuousTrace::new(format!("{goal}{i}"), *goal, rows));
        }
    }
    Dataset {
        feature_names: (0..10).map(|f| format!("f{f}")).collect(),
        goals: goals.iter().map(|g| g.to_string()).collect(),
        traces,
    }
}

#[test]
fn informative_subset_beats_all_features() {
    let ds = informative_dataset(9);
    let base = PipelineConfig { n_clusters: 8, seed: 9, ..PipelineConfig::default() };
    let result = grid_search(&ds, &(1..=10).collect::<Vec<_>>(), &[8], &base, &DEFAULT_OBS_LEVELS, None).unwrap();
    let all = result.table.iter().find(|e| e.n_features == 10).unwrap().f1.unwrap();
    assert!(result.best_f1 >= all);
    assert!(result.best_n_features <= 5, "best N_f = {}", result.best_n_features);
}

#[test]
fn lhs_search_dominates_the_defaults() {
    let ds = small_synth(10);
    let config = small_config(10);
    let mut candidates = lhs_sample(&LhsBounds::default(), 100, 10).unwrap();
    let sampled = tune_weights(&ds, &config, &candidates, &DEFAULT_OBS_LEVELS, None, Some(10)).unwrap();
    let default = tune_weights(&ds, &config, &[WeightParams::default()], &DEFAULT_OBS_LEVELS, None, None).unwrap();
    candidates.push(WeightParams::default());
    let with_default = tune_weights(&ds, &config, &candidates, &DEFAULT_OBS_LEVELS, None, Some(10)).unwrap();
    assert!(with_default.best_f1 >= default.best_f1);
    assert!(with_default.best_f1 >= sampled.best_f1);
    assert!(sampled.table.iter().all(|e| e.f1.unwrap() <= sampled.best_f1));
}

proptest! {
    #[test]
    fn lhs_covers_every_stratum_once(seed in any::<u64>(), n in 1usize..40) {
        let bounds = LhsBounds::default();
        let s = lhs_sample(&bounds, n, seed).unwrap();
        prop_assert_eq!(&s, &lhs_sample(&bounds, n, seed).unwrap());
        let check = |values: Vec<f64>, (lo, hi): (f64, f64)| -> Vec<usize> {
            let mut strata: Vec<usize> = values
                .iter()
                .map(|v| ((v - lo) / (hi - lo) * n as f64).floor() as usize)
                .collect();
            strata.sort_unstable();
            strata
        };
        let expect: Vec<usize> = (0..n).collect();
        prop_assert_eq!(check(s.iter().map(|w| w.phi).collect(), bounds.phi), expect.clone());
        prop_assert_eq!(check(s.iter().map(|w| w.delta).collect(), bounds.delta), expect.clone());
        prop_assert_eq!(check(s.iter().map(|w| w.lambda).collect(), bounds.lambda), expect.clone());
        prop_assert_eq!(check(s.iter().map(|w| w.beta).collect(), bounds.beta), expect);
        prop_assert!(s.iter().all(|w| w.validate().is_ok()));
    }
}
