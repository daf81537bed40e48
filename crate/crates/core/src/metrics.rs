//! Evaluation metrics: retrieval precision, average precision over pair
//! rankings, k-means clustering, matching-based clustering accuracy,
//! normalized mutual information, and k-NN classification accuracy.
//!
//! Neighbor searches are exact brute force; nothing here is approximate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{MarError, Result};

/// Named scalar results of a run plus the metadata needed to reproduce it.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub config_hash: String,
    pub values: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn new(seed: u64, config: &str) -> Self {
        Self {
            seed,
            config_hash: format!("{:016x}", fnv1a64(config.as_bytes())),
            values: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(MarError::NumericalFailure(format!(
                "metric {name} is not finite ({value})"
            )));
        }
        self.values.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "config_hash {}", self.config_hash)?;
        for (k, v) in &self.values {
            writeln!(f, "{k} {v:.17e}")?;
        }
        Ok(())
    }
}

/// FNV-1a, used only to fingerprint configuration text.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Fraction of the `k` nearest corpus points (Euclidean) sharing the query's
/// label, averaged over queries. With `exclude_self`, corpus row `i` is
/// treated as the same item as query row `i` and skipped.
pub fn precision_at_k(
    queries: ArrayView2<'_, f64>,
    corpus: ArrayView2<'_, f64>,
    query_labels: &[usize],
    corpus_labels: &[usize],
    k: usize,
    exclude_self: bool,
) -> Result<f64> {
    if queries.nrows() != query_labels.len() || corpus.nrows() != corpus_labels.len() {
        return Err(MarError::ShapeMismatch(
            "labels do not match representation row counts".into(),
        ));
    }
    if exclude_self && queries.nrows() != corpus.nrows() {
        return Err(MarError::InvalidArgument(
            "self exclusion requires corpus rows to parallel query rows".into(),
        ));
    }
    let available = corpus.nrows() - usize::from(exclude_self);
    if k == 0 || k > available {
        return Err(MarError::InvalidArgument(format!(
            "k = {k} outside [1, {available}]"
        )));
    }
    let mut total = 0.0;
    for (qi, q) in queries.rows().into_iter().enumerate() {
        let mut dists: Vec<(f64, usize)> = (0..corpus.nrows())
            .filter(|&ci| !(exclude_self && ci == qi))
            .map(|ci| (sq_dist(q, corpus.row(ci)), ci))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let hits = dists
            .iter()
            .take(k)
            .filter(|(_, ci)| corpus_labels[*ci] == query_labels[qi])
            .count();
        total += hits as f64 / k as f64;
    }
    Ok(total / queries.nrows() as f64)
}

/// Average precision of ranking pairs by ascending distance with similar
/// pairs as positives. Pairs at equal distance are admitted together at one
/// threshold (each distinct distance is one operating point).
pub fn average_precision_pairs(distances: &[f64], similar: &[bool]) -> Result<f64> {
    if distances.len() != similar.len() {
        return Err(MarError::ShapeMismatch(
            "distance and label counts differ".into(),
        ));
    }
    let pos = similar.iter().filter(|&&s| s).count();
    let neg = similar.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MarError::InvalidArgument(
            "need both similar and dissimilar pairs".into(),
        ));
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(MarError::InvalidArgument("non-finite distance".into()));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].partial_cmp(&distances[b]).unwrap());
    let mut ap = 0.0;
    let mut cum_pos = 0usize;
    let mut cum_tot = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && distances[order[j]] == distances[order[i]] {
            cum_pos += usize::from(similar[order[j]]);
            cum_tot += 1;
            j += 1;
        }
        let recall = cum_pos as f64 / pos as f64;
        let precision = cum_pos as f64 / cum_tot as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Lloyd's algorithm with distance-squared-weighted seeding, best of
/// `restarts` runs by inertia. Deterministic for a fixed seed.
pub fn kmeans(
    x: ArrayView2<'_, f64>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(MarError::InvalidArgument(format!(
            "cluster count {k} outside [1, {n}]"
        )));
    }
    if restarts == 0 {
        return Err(MarError::InvalidArgument("need at least one restart".into()));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        let (assign, inertia) = kmeans_once(x, k, &mut rng);
        if best.as_ref().map_or(true, |(bi, _)| inertia < *bi) {
            best = Some((inertia, assign));
        }
    }
    Ok(best.unwrap().1)
}

fn kmeans_once(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = x.nrows();
    let d = x.ncols();
    // Seeding: first centroid uniform, the rest weighted by squared distance
    // to the nearest chosen centroid.
    let mut centroids: Vec<Array1<f64>> = Vec::with_capacity(k);
    centroids.push(x.row(rng.random_range(0..n)).to_owned());
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(x.row(i), centroids[0].view()))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centroids.push(x.row(next).to_owned());
        for i in 0..n {
            let nd = sq_dist(x.row(i), centroids.last().unwrap().view());
            if nd < d2[i] {
                d2[i] = nd;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, cent) in centroids.iter().enumerate() {
                let dist = sq_dist(x.row(i), cent.view());
                if dist < best_d {
                    best_d = dist;
                    best_c = c;
                }
            }
            if assign[i] != best_c {
                assign[i] = best_c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![Array1::<f64>::zeros(d); k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums[assign[i]] += &x.row(i);
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its
                // current centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(x.row(a), centroids[assign[a]].view())
                            .partial_cmp(&sq_dist(x.row(b), centroids[assign[b]].view()))
                            .unwrap()
                    })
                    .unwrap();
                centroids[c] = x.row(far).to_owned();
            } else {
                centroids[c] = &sums[c] / counts[c] as f64;
            }
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(x.row(i), centroids[assign[i]].view()))
        .sum();
    (assign, inertia)
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres
/// with potentials). Returns the column assigned to each row.
fn min_cost_assignment(cost: &Array2<i64>) -> Vec<usize> {
    let n = cost.nrows();
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if matched[j] != 0 {
            assign[matched[j] - 1] = j - 1;
        }
    }
    assign
}

fn contingency(pred: &[usize], truth: &[usize]) -> (Array2<i64>, Vec<usize>, Vec<usize>) {
    let mut pred_ids: Vec<usize> = pred.to_vec();
    pred_ids.sort_unstable();
    pred_ids.dedup();
    let mut truth_ids: Vec<usize> = truth.to_vec();
    truth_ids.sort_unstable();
    truth_ids.dedup();
    let mut table = Array2::zeros((pred_ids.len(), truth_ids.len()));
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        let pi = pred_ids.binary_search(&p).unwrap();
        let ti = truth_ids.binary_search(&t).unwrap();
        table[[pi, ti]] += 1;
    }
    (table, pred_ids, truth_ids)
}

/// Clustering accuracy: the best one-to-one matching of predicted clusters to
/// true classes (maximum-weight matching on the contingency table), as a
/// fraction of points.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(MarError::ShapeMismatch(
            "cluster and class label counts differ".into(),
        ));
    }
    if pred.is_empty() {
        return Err(MarError::InvalidArgument("empty labelings".into()));
    }
    let (table, pred_ids, truth_ids) = contingency(pred, truth);
    let s = pred_ids.len().max(truth_ids.len());
    let max_w = *table.iter().max().unwrap();
    // Square-pad and convert max-weight to min-cost.
    let mut cost = Array2::from_elem((s, s), max_w);
    for i in 0..pred_ids.len() {
        for j in 0..truth_ids.len() {
            cost[[i, j]] = max_w - table[[i, j]];
        }
    }
    let assign = min_cost_assignment(&cost);
    let mut matched = 0i64;
    for i in 0..pred_ids.len() {
        if assign[i] < truth_ids.len() {
            matched += table[[i, assign[i]]];
        }
    }
    Ok(matched as f64 / pred.len() as f64)
}

/// Normalized mutual information `I(pred; truth) / sqrt(H(pred) H(truth))`.
/// Two trivial single-cluster partitions score 1; if exactly one side is
/// trivial the score is 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(MarError::ShapeMismatch(
            "cluster and class label counts differ".into(),
        ));
    }
    if pred.is_empty() {
        return Err(MarError::InvalidArgument("empty labelings".into()));
    }
    let (table, pred_ids, truth_ids) = contingency(pred, truth);
    let n = pred.len() as f64;
    let row_sums: Vec<f64> = (0..pred_ids.len())
        .map(|i| table.row(i).iter().sum::<i64>() as f64)
        .collect();
    let col_sums: Vec<f64> = (0..truth_ids.len())
        .map(|j| table.column(j).iter().sum::<i64>() as f64)
        .collect();
    let h = |sums: &[f64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| -(s / n) * (s / n).ln())
            .sum()
    };
    let hp = h(&row_sums);
    let ht = h(&col_sums);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..pred_ids.len() {
        for j in 0..truth_ids.len() {
            let nij = table[[i, j]] as f64;
            if nij > 0.0 {
                mi += (nij / n) * ((n * nij) / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    Ok(mi / (hp * ht).sqrt())
}

/// k-NN classification accuracy with majority vote; vote ties go to the tied
/// class whose nearest representative comes first in distance order.
pub fn knn_accuracy(
    train: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test: ArrayView2<'_, f64>,
    test_labels: &[usize],
    k: usize,
) -> Result<f64> {
    if train.nrows() != train_labels.len() || test.nrows() != test_labels.len() {
        return Err(MarError::ShapeMismatch(
            "labels do not match representation row counts".into(),
        ));
    }
    if k == 0 || k > train.nrows() {
        return Err(MarError::InvalidArgument(format!(
            "k = {k} outside [1, {}]",
            train.nrows()
        )));
    }
    let mut correct = 0usize;
    for (ti, t) in test.rows().into_iter().enumerate() {
        let mut dists: Vec<(f64, usize)> = (0..train.nrows())
            .map(|i| (sq_dist(t, train.row(i)), i))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let neighbors = &dists[..k];
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, i) in neighbors {
            *votes.entry(train_labels[*i]).or_insert(0) += 1;
        }
        let top = *votes.values().max().unwrap();
        let predicted = neighbors
            .iter()
            .map(|(_, i)| train_labels[*i])
            .find(|l| votes[l] == top)
            .unwrap();
        if predicted == test_labels[ti] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.nrows() as f64)
}
