use goalrec::lda::{fit_lda, lda_classify};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Points = Vec<(String, Vec<f64>)>;

fn sample(seed: u64, classes: usize, per_class: usize, dim: usize) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut out = Vec::new();
    for c in 0..classes {
        let center: Vec<f64> = (0..dim).map(|_| 3.0 * noise.sample(&mut rng)).collect();
        for _ in 0..per_class {
            let p = center.iter().map(|m| m + noise.sample(&mut rng)).collect();
            out.push((format!("C{c}"), p));
        }
    }
    out
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Discriminant scores from scratch: class means, pooled covariance with
/// `n - K` denominator, uniform priors.
fn naive_scores(points: &Points, query: &[f64]) -> Vec<f64> {
    let mut labels: Vec<&String> = points.iter().map(|(l, _)| l).collect();
    labels.sort();
    labels.dedup();
    let dim = query.len();
    let means: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| {
            let members: Vec<&Vec<f64>> = points.iter().filter(|(c, _)| c == *l).map(|(_, p)| p).collect();
            (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64).collect()
        })
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for (l, p) in points {
        let m = &means[labels.iter().position(|x| *x == l).unwrap()];
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += (p[i] - m[i]) * (p[j] - m[j]);
            }
        }
    }
    let denom = (points.len() - labels.len()) as f64;
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    let prior = (1.0 / labels.len() as f64).ln();
    means
        .iter()
        .map(|m| {
            let w = solve(cov.clone(), m.clone());
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            dot(query, &w) - 0.5 * dot(m, &w) + prior
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_match_a_naive_solve(seed in any::<u64>(), classes in 2usize..4, dim in 1usize..4) {
        let points = sample(seed, classes, 12, dim);
        let model = fit_lda(&points, Some(0.0)).unwrap();
        // Classes keep first-appearance order.
        prop_assert_eq!(&model.classes, &(0..classes).map(|c| format!("C{c}")).collect::<Vec<_>>());
        for (_, q) in points.iter().step_by(5) {
            let ours = model.scores(q).unwrap();
            let naive = naive_scores(&points, q);
            for (a, b) in ours.iter().zip(&naive) {
                prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn posterior_is_normalized_and_agrees_with_label(seed in any::<u64>(), classes in 2usize..4, dim in 1usize..4) {
        let points = sample(seed, classes, 10, dim);
        let model = fit_lda(&points, None).unwrap();
        for (_, q) in &points {
            let (label, posterior) = lda_classify(&model, q).unwrap();
            prop_assert!((posterior.values().sum::<f64>() - 1.0).abs() < 1e-9);
            let top = posterior.values().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(posterior[&label], top);
        }
    }

    #[test]
    fn labels_are_affine_equivariant(seed in any::<u64>(), dim in 1usize..4, shift in prop::collection::vec(-5.0f64..5.0, 3)) {
        let points = sample(seed, 3, 10, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        // Diagonally dominant, hence invertible.
        let a: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 4.0 + f64::abs(noise.sample(&mut rng)) } else { 0.5 * noise.sample(&mut rng) }).collect())
            .collect();
        let map = |p: &[f64]| -> Vec<f64> {
            (0..dim).map(|i| (0..dim).map(|j| a[i][j] * p[j]).sum::<f64>() + shift[i]).collect()
        };
        let mapped: Points = points.iter().map(|(l, p)| (l.clone(), map(p))).collect();
        let m1 = fit_lda(&points, Some(0.0)).unwrap();
        let m2 = fit_lda(&mapped, Some(0.0)).unwrap();
        let queries: Vec<Vec<f64>> = (0..20).map(|_| (0..dim).map(|_| 4.0 * noise.sample(&mut rng)).collect()).collect();
        for q in &queries {
            let s1 = m1.scores(q).unwrap();
            let mut sorted = s1.clone();
            sorted.sort_by(|x, y| y.total_cmp(x));
            // Skip queries sitting on a decision boundary.
            prop_assume!(sorted[0] - sorted[1] > 1e-6);
            prop_assert_eq!(lda_classify(&m1, q).unwrap().0, lda_classify(&m2, &map(q)).unwrap().0);
        }
    }
}
