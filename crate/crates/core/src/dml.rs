//! Distance metric learning with diversified projection directions: learn a
//! `K x D` matrix `A` so that `|Ax - Ay|^2` is small for similar pairs and at
//! least a margin for dissimilar ones.
//!
//! The margin constraints are relaxed to a hinge penalty with weight
//! `hinge_weight`, which keeps the problem solvable by plain projected
//! gradient machinery; the constrained formulation would need a different
//! solver. The whole objective is negated into maximization form so it plugs
//! into the alternating optimizer, which adds the angular surrogate on the
//! row directions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MarError, Result};
use crate::linalg::ComponentMatrix;
use crate::optimizer::{optimize, LossModel, OptimizerConfig};

/// Supervision: pairs labeled similar and dissimilar.
#[derive(Debug, Clone, Default)]
pub struct PairSet {
    pub similar: Vec<(Array1<f64>, Array1<f64>)>,
    pub dissimilar: Vec<(Array1<f64>, Array1<f64>)>,
}

/// Settings for the metric learner.
#[derive(Debug, Clone, PartialEq)]
pub struct DmlConfig {
    /// Latent dimension (rows of the learned matrix).
    pub k: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// Penalty weight on violated dissimilar-pair margins.
    pub hinge_weight: f64,
    pub margin: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for DmlConfig {
    fn default() -> Self {
        Self {
            k: 2,
            lambda: 0.0,
            gamma: 1.0,
            hinge_weight: 1.0,
            margin: 1.0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl DmlConfig {
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(MarError::InvalidArgument("latent dimension must be positive".into()));
        }
        if !(self.hinge_weight > 0.0) {
            return Err(MarError::InvalidArgument("hinge weight must be positive".into()));
        }
        Ok(())
    }
}

/// Squared distance in the latent space: `|Ax - Ay|^2`.
pub fn pair_distance(
    a: &ComponentMatrix,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<f64> {
    if x.len() != a.d() || y.len() != a.d() {
        return Err(MarError::ShapeMismatch(format!(
            "pair of dimensions {}/{} against metric over {}",
            x.len(),
            y.len(),
            a.d()
        )));
    }
    let diff = &x.to_owned() - &y;
    let projected = a.data().dot(&diff);
    Ok(projected.dot(&projected))
}

fn check_pairs(a: &ComponentMatrix, pairs: &PairSet) -> Result<()> {
    if pairs.similar.is_empty() || pairs.dissimilar.is_empty() {
        return Err(MarError::InvalidArgument(
            "need both similar and dissimilar pairs".into(),
        ));
    }
    for (x, y) in pairs.similar.iter().chain(pairs.dissimilar.iter()) {
        if x.len() != a.d() || y.len() != a.d() {
            return Err(MarError::ShapeMismatch(
                "pair dimension does not match the metric".into(),
            ));
        }
    }
    Ok(())
}

/// Maximization-form objective:
/// `-( mean_S |Az|^2 + hinge_weight * mean_D max(0, margin - |Az|^2) )`.
/// A dissimilar pair exactly at the margin is treated as inactive.
pub fn dml_objective(a: &ComponentMatrix, pairs: &PairSet, cfg: &DmlConfig) -> Result<f64> {
    cfg.validate()?;
    check_pairs(a, pairs)?;
    let mut sim = 0.0;
    for (x, y) in &pairs.similar {
        sim += pair_distance(a, x.view(), y.view())?;
    }
    sim /= pairs.similar.len() as f64;
    let mut dis = 0.0;
    for (x, y) in &pairs.dissimilar {
        let d2 = pair_distance(a, x.view(), y.view())?;
        if d2 < cfg.margin {
            dis += cfg.margin - d2;
        }
    }
    dis /= pairs.dissimilar.len() as f64;
    Ok(-(sim + cfg.hinge_weight * dis))
}

/// Gradient of [`dml_objective`] in the matrix entries:
/// `-(2/|S|) sum_S (Az) z^T + (2 mu/|D|) sum_{D active} (Az) z^T`.
pub fn dml_gradient(a: &ComponentMatrix, pairs: &PairSet, cfg: &DmlConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    check_pairs(a, pairs)?;
    let mut grad = Array2::zeros((a.k(), a.d()));
    let sim_scale = -2.0 / pairs.similar.len() as f64;
    for (x, y) in &pairs.similar {
        accumulate_outer(&mut grad, a, x, y, sim_scale);
    }
    let dis_scale = 2.0 * cfg.hinge_weight / pairs.dissimilar.len() as f64;
    for (x, y) in &pairs.dissimilar {
        let d2 = pair_distance(a, x.view(), y.view())?;
        if d2 < cfg.margin {
            accumulate_outer(&mut grad, a, x, y, dis_scale);
        }
    }
    Ok(grad)
}

fn accumulate_outer(
    grad: &mut Array2<f64>,
    a: &ComponentMatrix,
    x: &Array1<f64>,
    y: &Array1<f64>,
    scale: f64,
) {
    let z = x - y;
    let az = a.data().dot(&z);
    for i in 0..a.k() {
        grad.row_mut(i).scaled_add(scale * az[i], &z);
    }
}

/// The pair objective wrapped for the alternating optimizer.
pub struct DmlLoss<'a> {
    pub pairs: &'a PairSet,
    pub cfg: &'a DmlConfig,
}

impl LossModel for DmlLoss<'_> {
    fn objective(&self, a: &ComponentMatrix) -> Result<f64> {
        dml_objective(a, self.pairs, self.cfg)
    }

    fn gradient(&self, a: &ComponentMatrix) -> Result<Array2<f64>> {
        dml_gradient(a, self.pairs, self.cfg)
    }
}

/// How many pairs to draw from labeled points, and with which seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSpec {
    pub n_similar: usize,
    pub n_dissimilar: usize,
    pub seed: u64,
}

/// Draws index pairs without replacement: same-label pairs become similar,
/// cross-label pairs dissimilar. Requests beyond the available pool are
/// truncated with a warning, as are classes too small to pair.
pub fn generate_pairs(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    spec: &PairSpec,
) -> Result<PairSet> {
    if features.nrows() != labels.len() {
        return Err(MarError::ShapeMismatch(
            "features and labels do not align".into(),
        ));
    }
    let n = labels.len();
    let mut same = Vec::new();
    let mut cross = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] {
                same.push((i, j));
            } else {
                cross.push((i, j));
            }
        }
    }
    {
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        for &c in &classes {
            if labels.iter().filter(|&&l| l == c).count() < 2 {
                log::warn!("class {c} has fewer than two members; it yields no similar pairs");
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |pool: &mut Vec<(usize, usize)>, want: usize, kind: &str| {
        if want > pool.len() {
            log::warn!(
                "requested {want} {kind} pairs but only {} are available",
                pool.len()
            );
        }
        let take = want.min(pool.len());
        for i in 0..take {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool[..take].to_vec()
    };
    let sim_idx = draw(&mut same, spec.n_similar, "similar");
    let dis_idx = draw(&mut cross, spec.n_dissimilar, "dissimilar");
    let grab = |idx: &[(usize, usize)]| {
        idx.iter()
            .map(|&(i, j)| (features.row(i).to_owned(), features.row(j).to_owned()))
            .collect()
    };
    Ok(PairSet {
        similar: grab(&sim_idx),
        dissimilar: grab(&dis_idx),
    })
}

/// Generates pairs from labeled features and fits the metric with the
/// alternating optimizer from a seeded uniform(-0.1, 0.1) start. The
/// regularizer needs `2 <= K <= D`; otherwise it is disabled with a warning.
pub fn train_mar_dml(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &DmlConfig,
    pair_spec: &PairSpec,
) -> Result<ComponentMatrix> {
    cfg.validate()?;
    {
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(MarError::InvalidArgument(
                "need at least two classes to label pairs".into(),
            ));
        }
    }
    let pairs = generate_pairs(features, labels, pair_spec)?;
    train_mar_dml_on_pairs(&pairs, features.ncols(), cfg, pair_spec.seed)
}

/// Fits the metric on an explicit pair set.
pub fn train_mar_dml_on_pairs(
    pairs: &PairSet,
    input_dim: usize,
    cfg: &DmlConfig,
    seed: u64,
) -> Result<ComponentMatrix> {
    cfg.validate()?;
    let mut lambda = cfg.lambda;
    if lambda > 0.0 && (cfg.k < 2 || cfg.k > input_dim) {
        log::warn!(
            "angular regularizer disabled: needs 2 <= K <= D, got K = {} over D = {input_dim}",
            cfg.k
        );
        lambda = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a0 = Array2::zeros((cfg.k, input_dim));
    for v in a0.iter_mut() {
        *v = rng.random_range(-0.1..0.1);
    }
    let a0 = ComponentMatrix::new(a0)?;
    let opt_cfg = OptimizerConfig {
        lambda,
        gamma: cfg.gamma,
        seed,
        ..cfg.optimizer
    };
    let loss = DmlLoss { pairs, cfg };
    let (a, _) = optimize(&loss, &a0, &opt_cfg)?;
    Ok(a)
}

/// Latent representations: row-wise `A x`, one row per input point.
pub fn transform(a: &ComponentMatrix, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != a.d() {
        return Err(MarError::ShapeMismatch(format!(
            "points of dimension {} against metric over {}",
            x.ncols(),
            a.d()
        )));
    }
    Ok(x.dot(&a.data().t()))
}

/// Latent squared distances of a pair set with their similarity labels, in
/// the layout the ranking metrics consume.
pub fn evaluate_pairs(a: &ComponentMatrix, pairs: &PairSet) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut distances = Vec::with_capacity(pairs.similar.len() + pairs.dissimilar.len());
    let mut labels = Vec::with_capacity(distances.capacity());
    for (x, y) in &pairs.similar {
        distances.push(pair_distance(a, x.view(), y.view())?);
        labels.push(true);
    }
    for (x, y) in &pairs.dissimilar {
        distances.push(pair_distance(a, x.view(), y.view())?);
        labels.push(false);
    }
    Ok((distances, labels))
}
