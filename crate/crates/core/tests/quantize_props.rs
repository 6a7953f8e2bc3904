use goalrec::quantize::{assign_event, fit_codebook, kmeans, CodebookOptions, KMeansConfig};
use proptest::prelude::*;

fn points_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4, 6usize..30).prop_flat_map(|(dim, n)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assignment_is_the_nearest_centroid(points in points_strategy(), k in 1usize..5, seed in any::<u64>(), normalize in any::<bool>()) {
        let dim = points[0].len();
        let selected: Vec<usize> = (0..dim).collect();
        let cb = fit_codebook(&points, &selected, k, seed, CodebookOptions { normalize, kmeans: KMeansConfig::default() }).unwrap();
        for p in &points {
            let e = assign_event(p, &cb).unwrap().0 as usize;
            let z = cb.normalize(p);
            let best = cb.centroids.iter().map(|c| dist2(&z, c)).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(dist2(&z, &cb.centroids[e]), best);
            // Lowest index among equals.
            prop_assert!(cb.centroids[..e].iter().all(|c| dist2(&z, c) > best));
        }
    }

    #[test]
    fn wcss_never_increases_across_iterations(points in points_strategy(), k in 1usize..5, seed in any::<u64>()) {
        let fit = kmeans(&points, k, seed, KMeansConfig::default()).unwrap();
        for w in fit.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", fit.history);
        }
        prop_assert!((fit.wcss - fit.history.last().copied().unwrap()).abs() <= 1e-9 * (1.0 + fit.wcss));
    }

    #[test]
    fn fit_is_identical_across_worker_counts(points in points_strategy(), k in 1usize..5, seed in any::<u64>()) {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                kmeans(&points, k, seed, KMeansConfig::default()).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        let bits = |c: &Vec<Vec<f64>>| c.iter().flatten().map(|v| v.to_bits()).collect::<Vec<u64>>();
        prop_assert_eq!(bits(&a.centroids), bits(&b.centroids));
        prop_assert_eq!(a.wcss.to_bits(), b.wcss.to_bits());
        prop_assert_eq!(a.restart, b.restart);
    }
}
