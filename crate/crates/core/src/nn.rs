//! One-hidden-layer network for multiclass classification: sigmoid hidden
//! units, softmax output, cross-entropy loss, and an optional angular
//! regularizer on the hidden-unit weight vectors.
//!
//! The regularizer enters as `loss - lambda * surrogate(normalized rows)`,
//! with the surrogate gradient mapped through the row normalization (the
//! angular score itself only depends on row directions, so normalizing
//! inside the loss changes nothing about what is being rewarded).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MarError, Result};
use crate::linalg::{non_obtuse_angle, project_rows_unit, ComponentMatrix};
use crate::regularizer::{mar_breakdown, surrogate, surrogate_gradient, MarBreakdown, SurrogateConfig};

/// Weights and biases of the two layers. Hidden rows are the unit weight
/// vectors the regularizer acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `m x d`: row per hidden unit.
    pub hidden_w: Array2<f64>,
    pub hidden_b: Array1<f64>,
    /// `c x m`: row per output class.
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl MlpParams {
    pub fn zeros(input_dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            hidden_w: Array2::zeros((hidden, input_dim)),
            hidden_b: Array1::zeros(hidden),
            out_w: Array2::zeros((classes, hidden)),
            out_b: Array1::zeros(classes),
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_w.ncols()
    }

    pub fn classes(&self) -> usize {
        self.out_w.nrows()
    }
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub hidden_w: Array2<f64>,
    pub hidden_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p = logits.mapv(|v| (v - max).exp());
    let z = p.sum();
    p.mapv_inplace(|v| v / z);
    p
}

/// Class probabilities for one input.
pub fn forward(params: &MlpParams, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if x.len() != params.input_dim() {
        return Err(MarError::ShapeMismatch(format!(
            "input of length {} against dimension {}",
            x.len(),
            params.input_dim()
        )));
    }
    let hidden = (params.hidden_w.dot(&x) + &params.hidden_b).mapv(sigmoid);
    let logits = params.out_w.dot(&hidden) + &params.out_b;
    Ok(softmax(&logits))
}

/// Univariate regression head `sum_j alpha_j sigmoid(w_j . x)` over the same
/// hidden layer, used by the output-magnitude checks.
pub fn regression_output(
    hidden_w: &Array2<f64>,
    alpha: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> f64 {
    hidden_w
        .rows()
        .into_iter()
        .zip(alpha.iter())
        .map(|(w, &a)| a * sigmoid(w.dot(&x)))
        .sum()
}

/// Mean cross-entropy minus `lambda` times the surrogate of the hidden rows,
/// with the full gradient. The regularizer needs `2 <= m <= d`; otherwise it
/// is skipped with a warning.
pub fn loss_and_grad(
    params: &MlpParams,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    lambda: f64,
    gamma: f64,
    det_clamp: f64,
) -> Result<(f64, MlpGrads)> {
    let n = x.nrows();
    if n == 0 || n != y.len() {
        return Err(MarError::ShapeMismatch(
            "batch inputs and labels do not align".into(),
        ));
    }
    let classes = params.classes();
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        return Err(MarError::InvalidArgument(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    let mut grads = MlpGrads {
        hidden_w: Array2::zeros(params.hidden_w.dim()),
        hidden_b: Array1::zeros(params.hidden_units()),
        out_w: Array2::zeros(params.out_w.dim()),
        out_b: Array1::zeros(classes),
    };
    let mut loss = 0.0;
    for (i, xi) in x.rows().into_iter().enumerate() {
        let pre = params.hidden_w.dot(&xi) + &params.hidden_b;
        let z = pre.mapv(sigmoid);
        let logits = params.out_w.dot(&z) + &params.out_b;
        let p = softmax(&logits);
        loss -= p[y[i]].max(f64::MIN_POSITIVE).ln();

        let mut dlogits = p;
        dlogits[y[i]] -= 1.0;
        for c in 0..classes {
            let dc = dlogits[c];
            grads.out_w.row_mut(c).scaled_add(dc, &z);
            grads.out_b[c] += dc;
        }
        let dz = params.out_w.t().dot(&dlogits);
        let dpre = &dz * &z.mapv(|v| v * (1.0 - v));
        for j in 0..params.hidden_units() {
            grads.hidden_w.row_mut(j).scaled_add(dpre[j], &xi);
            grads.hidden_b[j] += dpre[j];
        }
    }
    let scale = 1.0 / n as f64;
    loss *= scale;
    grads.hidden_w *= scale;
    grads.hidden_b *= scale;
    grads.out_w *= scale;
    grads.out_b *= scale;

    if lambda > 0.0 {
        let m = params.hidden_units();
        let d = params.input_dim();
        if m < 2 || m > d {
            log::warn!(
                "angular regularizer skipped: needs 2 <= hidden units <= input dimension, got {m} units in {d} dimensions"
            );
        } else {
            let rows = ComponentMatrix::new(params.hidden_w.clone())?;
            let unit = project_rows_unit(&rows)?;
            let gamma_val = surrogate(&unit, gamma)?;
            loss -= lambda * gamma_val;
            let scfg = SurrogateConfig { gamma, det_clamp };
            let g = surrogate_gradient(&unit, &scfg)?;
            // Chain rule through row normalization: (I - u u^T) g / |w|.
            for i in 0..m {
                let wi = params.hidden_w.row(i);
                let norm = wi.dot(&wi).sqrt();
                let ui = unit.row(i);
                let gi = g.row(i);
                let radial = ui.dot(&gi);
                let tangent = (&gi - &(ui.to_owned() * radial)) / norm;
                grads.hidden_w.row_mut(i).scaled_add(-lambda, &tangent);
            }
        }
    }
    if !loss.is_finite() {
        return Err(MarError::NumericalFailure("loss is not finite".into()));
    }
    Ok((loss, grads))
}

/// Training settings for seeded minibatch SGD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnConfig {
    pub hidden: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub lr: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub det_clamp: f64,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            lambda: 0.0,
            gamma: 1.0,
            lr: 0.5,
            minibatch: 100,
            epochs: 100,
            seed: 0,
            det_clamp: 1e-6,
        }
    }
}

/// Seeded SGD over shuffled minibatches. Returns the parameters and the mean
/// train loss per epoch; zero epochs returns the initialization.
pub fn train_nn(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    classes: usize,
    cfg: &NnConfig,
) -> Result<(MlpParams, Vec<f64>)> {
    let n = x.nrows();
    if n == 0 || n != y.len() {
        return Err(MarError::ShapeMismatch(
            "training inputs and labels do not align".into(),
        ));
    }
    if classes < 2 || cfg.hidden == 0 || cfg.minibatch == 0 || !(cfg.lr > 0.0) {
        return Err(MarError::InvalidArgument(
            "need >= 2 classes, >= 1 hidden unit, positive minibatch and learning rate".into(),
        ));
    }
    let d = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParams::zeros(d, cfg.hidden, classes);
    let r_h = (6.0 / (d + cfg.hidden) as f64).sqrt();
    for w in params.hidden_w.iter_mut() {
        *w = rng.random_range(-r_h..r_h);
    }
    let r_o = (6.0 / (cfg.hidden + classes) as f64).sqrt();
    for w in params.out_w.iter_mut() {
        *w = rng.random_range(-r_o..r_o);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.minibatch) {
            let xb = Array2::from_shape_fn((chunk.len(), d), |(r, c)| x[[chunk[r], c]]);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grads) = match loss_and_grad(
                &params,
                xb.view(),
                &yb,
                cfg.lambda,
                cfg.gamma,
                cfg.det_clamp,
            ) {
                Ok(v) => v,
                Err(MarError::DependentRows(_)) => {
                    // Nudge the hidden rows apart and retry once.
                    for w in params.hidden_w.iter_mut() {
                        *w += rng.random_range(-1e-6..1e-6);
                    }
                    loss_and_grad(&params, xb.view(), &yb, cfg.lambda, cfg.gamma, cfg.det_clamp)?
                }
                Err(e) => return Err(e),
            };
            params.hidden_w.scaled_add(-cfg.lr, &grads.hidden_w);
            params.hidden_b.scaled_add(-cfg.lr, &grads.hidden_b);
            params.out_w.scaled_add(-cfg.lr, &grads.out_w);
            params.out_b.scaled_add(-cfg.lr, &grads.out_b);
            epoch_loss += loss;
            batches += 1.0;
        }
        trace.push(epoch_loss / batches);
    }
    Ok((params, trace))
}

/// Fraction of points whose argmax class matches the label.
pub fn accuracy(params: &MlpParams, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<f64> {
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(MarError::ShapeMismatch(
            "inputs and labels do not align".into(),
        ));
    }
    let mut correct = 0usize;
    for (i, xi) in x.rows().into_iter().enumerate() {
        let p = forward(params, xi)?;
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        if best == y[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / x.nrows() as f64)
}

/// Angular statistics of the hidden rows: the score breakdown (whose mean and
/// variance are the moment inputs of the Chebyshev angle bound) plus the
/// smallest pairwise angle.
pub fn measure_hidden_diversity(params: &MlpParams, gamma: f64) -> Result<(MarBreakdown, f64)> {
    if params.hidden_units() < 2 {
        return Err(MarError::InvalidArgument(
            "diversity needs at least two hidden units".into(),
        ));
    }
    let rows = ComponentMatrix::new(params.hidden_w.clone())?;
    let breakdown = mar_breakdown(&rows, gamma)?;
    let mut min_angle = f64::INFINITY;
    for i in 0..rows.k() {
        for j in i + 1..rows.k() {
            min_angle = min_angle.min(non_obtuse_angle(rows.row(i), rows.row(j))?);
        }
    }
    Ok((breakdown, min_angle))
}

/// Trains once per regularization weight and reports held-out accuracy.
pub fn lambda_sweep(
    x_train: ArrayView2<'_, f64>,
    y_train: &[usize],
    x_val: ArrayView2<'_, f64>,
    y_val: &[usize],
    classes: usize,
    base: &NnConfig,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = NnConfig { lambda, ..*base };
        let (params, _) = train_nn(x_train, y_train, classes, &cfg)?;
        out.push((lambda, accuracy(&params, x_val, y_val)?));
    }
    Ok(out)
}
