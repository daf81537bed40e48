//! Synthetic long-tail data: class (or topic) sizes proportional to
//! `rank^(-exponent)`, so a few head classes dominate and the rest form a
//! thin tail. Feature mode places class means on mutually orthogonal-ish
//! directions with shared isotropic noise; document mode gives each topic a
//! distinct high-probability word block.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MarError, Result};
use crate::io::DenseDataset;
use crate::rbm::{Doc, DocBatch};

/// Deterministic largest-remainder allocation of `n` items over weights
/// `(t+1)^(-exponent)`, with every class getting at least one item.
fn longtail_quotas(n_classes: usize, exponent: f64, n: usize) -> Result<Vec<usize>> {
    if n_classes < 2 {
        return Err(MarError::InvalidArgument(
            "need at least two classes or topics".into(),
        ));
    }
    if n < n_classes {
        return Err(MarError::InvalidArgument(format!(
            "cannot allocate {n} items over {n_classes} classes"
        )));
    }
    let weights: Vec<f64> = (0..n_classes)
        .map(|t| ((t + 1) as f64).powf(-exponent))
        .collect();
    let total: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut quotas: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut remainder: Vec<(f64, usize)> = ideal
        .iter()
        .enumerate()
        .map(|(i, v)| (v - v.floor(), i))
        .collect();
    remainder.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut assigned: usize = quotas.iter().sum();
    let mut ri = 0;
    while assigned < n {
        quotas[remainder[ri % n_classes].1] += 1;
        assigned += 1;
        ri += 1;
    }
    // Tail classes rounded to zero borrow from the head.
    for t in 0..n_classes {
        while quotas[t] == 0 {
            let donor = (0..n_classes).max_by_key(|&i| quotas[i]).unwrap();
            if quotas[donor] <= 1 {
                return Err(MarError::InvalidArgument(
                    "not enough items to give every class one".into(),
                ));
            }
            quotas[donor] -= 1;
            quotas[t] += 1;
        }
    }
    Ok(quotas)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniforms.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Labeled points with long-tail class sizes. Class means sit on mutually
/// orthogonalized directions at distance `3` from the origin; all classes
/// share unit isotropic noise. Point order is shuffled.
pub fn synth_longtail_features(
    n_classes: usize,
    exponent: f64,
    n_points: usize,
    dim: usize,
    seed: u64,
) -> Result<DenseDataset> {
    if dim == 0 {
        return Err(MarError::InvalidArgument("dimension must be positive".into()));
    }
    let quotas = longtail_quotas(n_classes, exponent, n_points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Class directions: Gram-Schmidt over seeded Gaussian draws while
    // directions fit, random unit vectors beyond that.
    let mut dirs: Vec<Array1<f64>> = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        loop {
            let mut v: Array1<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            if dirs.len() < dim {
                for prev in &dirs {
                    let proj = v.dot(prev);
                    v.scaled_add(-proj, prev);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                dirs.push(v / norm);
                break;
            }
        }
    }

    let separation = 3.0;
    let mut x = Array2::zeros((n_points, dim));
    let mut labels = Vec::with_capacity(n_points);
    let mut row = 0;
    for (class, &count) in quotas.iter().enumerate() {
        for _ in 0..count {
            for j in 0..dim {
                x[[row, j]] = separation * dirs[class][j] + gaussian(&mut rng);
            }
            labels.push(class);
            row += 1;
        }
    }
    shuffle_rows(&mut x, &mut labels, &mut rng);
    DenseDataset::new(x, labels)
}

/// Documents with long-tail topic sizes. The vocabulary is cut into one block
/// per topic; a topic draws 90% of its tokens uniformly from its block and
/// 10% uniformly from the whole vocabulary. Document lengths are uniform in
/// `[len_min, len_max]`. Document order is shuffled.
pub fn synth_longtail_docs(
    n_topics: usize,
    exponent: f64,
    n_docs: usize,
    vocab: usize,
    len_min: u32,
    len_max: u32,
    seed: u64,
) -> Result<DocBatch> {
    if vocab < n_topics {
        return Err(MarError::InvalidArgument(format!(
            "vocabulary of {vocab} cannot hold {n_topics} topic blocks"
        )));
    }
    if len_min == 0 || len_min > len_max {
        return Err(MarError::InvalidArgument(
            "document length range must be positive and ordered".into(),
        ));
    }
    let quotas = longtail_quotas(n_topics, exponent, n_docs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let block = vocab / n_topics;
    let in_block_mass = 0.9;
    let mut docs = Vec::with_capacity(n_docs);
    for (topic, &count) in quotas.iter().enumerate() {
        let lo = topic * block;
        let hi = if topic == n_topics - 1 {
            vocab
        } else {
            lo + block
        };
        // Cumulative distribution: uniform background plus the topic block.
        let mut probs = vec![(1.0 - in_block_mass) / vocab as f64; vocab];
        for p in probs.iter_mut().take(hi).skip(lo) {
            *p += in_block_mass / (hi - lo) as f64;
        }
        let mut cum = Vec::with_capacity(vocab);
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cum.push(acc);
        }
        for _ in 0..count {
            let len = rng.random_range(len_min..=len_max);
            let mut counts = vec![0u32; vocab];
            for _ in 0..len {
                let u: f64 = rng.random();
                let idx = cum.partition_point(|&c| c <= u).min(vocab - 1);
                counts[idx] += 1;
            }
            let counts: Vec<(usize, u32)> = counts
                .into_iter()
                .enumerate()
                .filter(|&(_, c)| c > 0)
                .collect();
            docs.push(Doc::new(Some(topic as i64), counts)?);
        }
    }
    // Seeded shuffle of document order.
    for i in (1..docs.len()).rev() {
        let j = rng.random_range(0..=i);
        docs.swap(i, j);
    }
    DocBatch::new(vocab, docs)
}

fn shuffle_rows(x: &mut Array2<f64>, labels: &mut [usize], rng: &mut ChaCha8Rng) {
    let n = labels.len();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        if i != j {
            for c in 0..x.ncols() {
                x.swap([i, c], [j, c]);
            }
            labels.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_counts(labels: &[usize], classes: usize) -> Vec<usize> {
        let mut counts = vec![0usize; classes];
        for &l in labels {
            counts[l] += 1;
        }
        counts
    }

    #[test]
    fn exponent_zero_is_near_uniform() {
        let ds = synth_longtail_features(5, 0.0, 100, 4, 0).unwrap();
        let counts = class_counts(&ds.labels, 5);
        for &c in &counts {
            assert_eq!(c, 20);
        }
    }

    #[test]
    fn heavy_tail_head_dominates() {
        let batch = synth_longtail_docs(10, 1.5, 1000, 40, 5, 12, 0).unwrap();
        let mut counts = [0usize; 10];
        for d in &batch.docs {
            counts[d.label.unwrap() as usize] += 1;
        }
        assert!(
            counts[0] >= 10 * counts[9],
            "head {} vs tail {}",
            counts[0],
            counts[9]
        );
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synth_longtail_features(4, 1.0, 60, 3, 9).unwrap();
        let b = synth_longtail_features(4, 1.0, 60, 3, 9).unwrap();
        assert_eq!(a, b);
        let c = synth_longtail_docs(3, 1.0, 30, 9, 3, 6, 9).unwrap();
        let d = synth_longtail_docs(3, 1.0, 30, 9, 3, 6, 9).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn topics_prefer_their_blocks() {
        let batch = synth_longtail_docs(3, 1.0, 120, 9, 20, 20, 4).unwrap();
        for doc in &batch.docs {
            let topic = doc.label.unwrap() as usize;
            let block = 9 / 3;
            let in_block: u32 = doc
                .counts
                .iter()
                .filter(|&&(w, _)| w >= topic * block && w < (topic + 1) * block)
                .map(|&(_, c)| c)
                .sum();
            // 90% expected in-block; demand a majority.
            assert!(
                in_block * 2 > doc.len,
                "topic {topic} doc has {in_block}/{} in its block",
                doc.len
            );
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(synth_longtail_features(1, 1.0, 10, 2, 0).is_err());
        assert!(synth_longtail_features(3, 1.0, 2, 2, 0).is_err());
        assert!(synth_longtail_docs(4, 1.0, 10, 3, 2, 5, 0).is_err());
        assert!(synth_longtail_docs(2, 1.0, 10, 4, 0, 5, 0).is_err());
    }

    #[test]
    fn features_cluster_around_separated_means() {
        let ds = synth_longtail_features(3, 1.0, 90, 5, 2).unwrap();
        // Same-class points should be closer on average than cross-class.
        let mut same = (0.0, 0);
        let mut cross = (0.0, 0);
        for i in 0..ds.len() {
            for j in i + 1..ds.len() {
                let d: f64 = (0..5)
                    .map(|c| (ds.x[[i, c]] - ds.x[[j, c]]).powi(2))
                    .sum();
                if ds.labels[i] == ds.labels[j] {
                    same = (same.0 + d, same.1 + 1);
                } else {
                    cross = (cross.0 + d, cross.1 + 1);
                }
            }
        }
        assert!(same.0 / (same.1 as f64) < cross.0 / (cross.1 as f64));
    }
}
