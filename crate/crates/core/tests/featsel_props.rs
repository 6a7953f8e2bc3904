use goalrec::featsel::{correlation_matrix, fit_selection, Linkage};
use proptest::prelude::*;

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..7, 4usize..12).prop_flat_map(|(features, n)| {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, features), n)
    })
}

fn linkage_strategy() -> impl Strategy<Value = Linkage> {
    prop_oneof![Just(Linkage::Single), Just(Linkage::Complete), Just(Linkage::Average)]
}

proptest! {
    #[test]
    fn correlation_matrix_is_symmetric_with_unit_diagonal(rows in rows_strategy()) {
        let corr = correlation_matrix(&rows).unwrap();
        for i in 0..corr.size {
            prop_assert!((corr.get(i, i) - 1.0).abs() < 1e-12);
            for j in 0..corr.size {
                prop_assert!((corr.get(i, j) - corr.get(j, i)).abs() < 1e-12);
                prop_assert!(corr.get(i, j).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn cuts_are_nested_partitions(rows in rows_strategy(), linkage in linkage_strategy()) {
        let f = rows[0].len();
        let sel = fit_selection(&rows, 1, linkage).unwrap();
        let mut heights: Vec<f64> = sel.merge_tree.iter().map(|m| m.height).collect();
        heights.push(0.0);
        heights.push(2.0);
        heights.sort_by(f64::total_cmp);
        let mut previous: Option<Vec<Vec<usize>>> = None;
        for &h in heights.iter().rev() {
            let parts = sel.cut_at_height(h);
            let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..f).collect::<Vec<_>>());
            if let Some(coarser) = &previous {
                for part in &parts {
                    prop_assert!(coarser.iter().any(|c| part.iter().all(|x| c.contains(x))));
                }
            }
            previous = Some(parts);
        }
    }

    #[test]
    fn selection_has_one_medoid_per_cluster(rows in rows_strategy(), k in 1usize..6, linkage in linkage_strategy()) {
        let f = rows[0].len();
        let k = k.min(f);
        let sel = fit_selection(&rows, k, linkage).unwrap();
        prop_assert_eq!(sel.selected.len(), k);
        prop_assert_eq!(sel.clusters.len(), k);
        for (medoid, cluster) in sel.selected.iter().zip(&sel.clusters) {
            prop_assert!(cluster.contains(medoid));
        }
    }

    #[test]
    fn selection_is_invariant_to_affine_rescaling(
        rows in rows_strategy(),
        k in 1usize..6,
        linkage in linkage_strategy(),
        scales in prop::collection::vec(prop_oneof![0.5f64..4.0, -4.0f64..-0.5], 6),
        shifts in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let f = rows[0].len();
        let k = k.min(f);
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, x)| scales[j] * x + shifts[j]).collect())
            .collect();
        let a = correlation_matrix(&rows).unwrap();
        let b = correlation_matrix(&scaled).unwrap();
        let mut close = true;
        for i in 0..f {
            for j in 0..f {
                prop_assert!((a.get(i, j).abs() - b.get(i, j).abs()).abs() < 1e-9);
                // Near-ties between merge heights may legitimately flip under rounding.
                for p in 0..f {
                    for q in 0..f {
                        let gap = (a.distance(i, j) - a.distance(p, q)).abs();
                        if gap > 0.0 && gap < 1e-9 {
                            close = false;
                        }
                    }
                }
            }
        }
        prop_assume!(close);
        let sa = fit_selection(&rows, k, linkage).unwrap();
        let sb = fit_selection(&scaled, k, linkage).unwrap();
        prop_assert_eq!(sa.clusters, sb.clusters);
        prop_assert_eq!(sa.selected, sb.selected);
    }
}
