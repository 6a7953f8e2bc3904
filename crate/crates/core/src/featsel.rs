//! Feature selection by agglomerative clustering of the absolute-correlation
//! matrix, keeping one medoid per cluster.
//!
//! Distances are `1 - |rho|`. Clusters are identified by their smallest
//! member, and every tie (closest pair, medoid) resolves to the lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric matrix of absolute Pearson correlations, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub size: usize,
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            1.0 - self.get(i, j)
        }
    }

    /// Builds a matrix from explicit pairwise distances (`1 - |rho|`).
    pub fn from_distances(size: usize, distance: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            for j in 0..size {
                values[i * size + j] = if i == j { 1.0 } else { 1.0 - distance(i, j) };
            }
        }
        Self { size, values }
    }
}

/// Absolute Pearson correlation over all pooled rows. Zero-variance features
/// correlate 0 with every other feature and 1 with themselves.
pub fn correlation_matrix<R: AsRef<[f64]>>(rows: &[R]) -> Result<CorrelationMatrix> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let size = rows[0].as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != size) {
        return Err(Error::Validation("rows have differing widths".into()));
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; size];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row.as_ref()) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);

    // Centered cross-product sums, accumulated in row order.
    let mut cross = vec![0.0; size * size];
    let mut centered = vec![0.0; size];
    for row in rows {
        for ((c, v), m) in centered.iter_mut().zip(row.as_ref()).zip(&means) {
            *c = v - m;
        }
        for i in 0..size {
            let ci = centered[i];
            for j in i..size {
                cross[i * size + j] += ci * centered[j];
            }
        }
    }

    let mut values = vec![0.0; size * size];
    for i in 0..size {
        values[i * size + i] = 1.0;
        for j in (i + 1)..size {
            let vi = cross[i * size + i];
            let vj = cross[j * size + j];
            let rho = if vi > 0.0 && vj > 0.0 {
                (cross[i * size + j] / (vi.sqrt() * vj.sqrt())).abs().min(1.0)
            } else {
                0.0
            };
            values[i * size + j] = rho;
            values[j * size + i] = rho;
        }
    }
    Ok(CorrelationMatrix { size, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::Domain(format!("unknown linkage '{other}'"))),
        }
    }
}

impl Linkage {
    pub fn name(self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        }
    }

    fn between(self, corr: &CorrelationMatrix, a: &[usize], b: &[usize]) -> f64 {
        let pairs = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j)));
        match self {
            Linkage::Single => pairs
                .map(|(i, j)| corr.distance(i, j))
                .fold(f64::INFINITY, f64::min),
            Linkage::Complete => pairs
                .map(|(i, j)| corr.distance(i, j))
                .fold(f64::NEG_INFINITY, f64::max),
            Linkage::Average => {
                let sum: f64 = pairs.map(|(i, j)| corr.distance(i, j)).sum();
                sum / (a.len() * b.len()) as f64
            }
        }
    }
}

/// One agglomeration step. Leaves are `0..F`; the cluster created by step
/// `k` has id `F + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub n_selected: usize,
    pub linkage: Linkage,
    /// Medoid of each cluster, aligned with `clusters`. Empty until
    /// [`select_medoids`] runs.
    pub selected: Vec<usize>,
    /// Sorted members of each cluster, clusters ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// The full dendrogram down to a single cluster.
    pub merge_tree: Vec<Merge>,
}

impl FeatureSelection {
    pub fn feature_count(&self) -> usize {
        self.merge_tree.len() + 1
    }

    /// Projects a full feature row onto the selected features.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.selected.iter().map(|&i| row[i]).collect()
    }

    /// Partition obtained by applying every merge with height `<= height`.
    pub fn cut_at_height(&self, height: f64) -> Vec<Vec<usize>> {
        let steps = self
            .merge_tree
            .iter()
            .take_while(|m| m.height <= height)
            .count();
        partition_after(self.feature_count(), &self.merge_tree[..steps])
    }

    /// Partition with exactly `k` clusters.
    pub fn cut_into(&self, k: usize) -> Vec<Vec<usize>> {
        let f = self.feature_count();
        let k = k.clamp(1, f);
        partition_after(f, &self.merge_tree[..f - k])
    }
}

fn partition_after(feature_count: usize, merges: &[Merge]) -> Vec<Vec<usize>> {
    let mut members: Vec<Option<Vec<usize>>> = (0..feature_count).map(|i| Some(vec![i])).collect();
    for merge in merges {
        let mut joined = members[merge.left].take().expect("left cluster alive");
        joined.extend(members[merge.right].take().expect("right cluster alive"));
        joined.sort_unstable();
        members.push(Some(joined));
    }
    let mut clusters: Vec<Vec<usize>> = members.into_iter().flatten().collect();
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Agglomerates from singletons, always merging the closest pair (ties to
/// the lowest `(min member, min member)` pair), and records the whole
/// dendrogram. `clusters` holds the partition with `n_f` groups.
pub fn cluster_features(
    corr: &CorrelationMatrix,
    n_f: usize,
    linkage: Linkage,
) -> Result<FeatureSelection> {
    let f = corr.size;
    if n_f == 0 || n_f > f {
        return Err(Error::Domain(format!(
            "cluster count {n_f} outside 1..={f}"
        )));
    }

    // (dendrogram id, sorted members); kept ordered by smallest member.
    let mut active: Vec<(usize, Vec<usize>)> = (0..f).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::with_capacity(f.saturating_sub(1));
    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                let d = linkage.between(corr, &active[a].1, &active[b].1);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        let (right_id, right) = active.remove(b);
        let (left_id, left) = &mut active[a];
        let left_prev = *left_id;
        left.extend(right);
        left.sort_unstable();
        *left_id = f + merges.len();
        merges.push(Merge {
            left: left_prev,
            right: right_id,
            height,
            size: left.len(),
        });
    }

    let mut selection = FeatureSelection {
        n_selected: n_f,
        linkage,
        selected: Vec::new(),
        clusters: Vec::new(),
        merge_tree: merges,
    };
    selection.clusters = selection.cut_into(n_f);
    Ok(selection)
}

/// Medoid of each cluster: the member with the smallest mean distance to
/// the other members, ties to the lowest feature index.
pub fn select_medoids(mut selection: FeatureSelection, corr: &CorrelationMatrix) -> FeatureSelection {
    selection.selected = selection
        .clusters
        .iter()
        .map(|members| medoid(members, corr))
        .collect();
    selection
}

fn medoid(members: &[usize], corr: &CorrelationMatrix) -> usize {
    if members.len() == 1 {
        return members[0];
    }
    let others = (members.len() - 1) as f64;
    let mut best = (f64::INFINITY, members[0]);
    for &i in members {
        let mean = members
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| corr.distance(i, j))
            .sum::<f64>()
            / others;
        if mean < best.0 || (mean == best.0 && i < best.1) {
            best = (mean, i);
        }
    }
    best.1
}

/// Correlation, clustering and medoid selection in one call.
pub fn fit_selection<R: AsRef<[f64]>>(
    rows: &[R],
    n_f: usize,
    linkage: Linkage,
) -> Result<FeatureSelection> {
    let corr = correlation_matrix(rows)?;
    let selection = cluster_features(&corr, n_f, linkage)?;
    Ok(select_medoids(selection, &corr))
}
