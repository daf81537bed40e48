//! Alternating optimization of a loss plus the angular surrogate: fix the row
//! directions and ascend in the row magnitudes (kept positive), then fix the
//! magnitudes and ascend in the directions (kept on the unit sphere), and
//! repeat until the combined objective stalls.
//!
//! Both sub-problems use projected gradient ascent with backtracking in the
//! deterministic case. Stochastic losses (anything whose gradient is a fresh
//! sample per call, like contrastive divergence) take fixed-size steps and
//! skip the monotonicity machinery, since a sampled objective cannot be
//! compared across calls.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MarError, Result};
use crate::linalg::{project_rows_unit, ComponentMatrix};
use crate::regularizer::{surrogate, surrogate_gradient, SurrogateConfig};

/// A maximization objective over a component matrix, with its gradient.
pub trait LossModel {
    fn objective(&self, a: &ComponentMatrix) -> Result<f64>;

    /// Gradient of the objective with respect to the matrix entries.
    fn gradient(&self, a: &ComponentMatrix) -> Result<Array2<f64>>;

    /// True when objective/gradient are sampled estimates (a fresh minibatch
    /// or reconstruction per call).
    fn stochastic(&self) -> bool {
        false
    }
}

/// A loss that is identically zero, leaving only the regularizer.
pub struct ZeroLoss;

impl LossModel for ZeroLoss {
    fn objective(&self, _a: &ComponentMatrix) -> Result<f64> {
        Ok(0.0)
    }

    fn gradient(&self, a: &ComponentMatrix) -> Result<Array2<f64>> {
        Ok(Array2::zeros(a.data().dim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Weight of the angular regularizer. Zero disables it.
    pub lambda: f64,
    /// Variance weight inside the regularizer.
    pub gamma: f64,
    pub outer_iters: usize,
    pub inner_g_iters: usize,
    pub inner_a_iters: usize,
    /// Initial step sizes for the magnitude and direction sub-problems.
    pub step_g: f64,
    pub step_a: f64,
    /// Multiplier applied to the step on each backtracking halving.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Magnitudes are kept at or above this floor (the open constraint
    /// `g_i > 0` closed off for stability).
    pub g_floor: f64,
    /// Relative change of the objective below which a loop is converged.
    pub rel_tol: f64,
    pub seed: u64,
    pub det_clamp: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            gamma: 1.0,
            outer_iters: 100,
            inner_g_iters: 50,
            inner_a_iters: 50,
            step_g: 0.1,
            step_a: 0.1,
            backtrack: 0.5,
            max_backtracks: 30,
            g_floor: 1e-8,
            rel_tol: 1e-6,
            seed: 0,
            det_clamp: 1e-6,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step_g > 0.0 && self.step_a > 0.0) {
            return Err(MarError::InvalidArgument("step sizes must be positive".into()));
        }
        if !(self.g_floor > 0.0) {
            return Err(MarError::InvalidArgument("g_floor must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(MarError::InvalidArgument("lambda must be nonnegative".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(MarError::InvalidArgument(
                "backtrack factor must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn surrogate_config(&self) -> SurrogateConfig {
        SurrogateConfig {
            gamma: self.gamma,
            det_clamp: self.det_clamp,
        }
    }
}

/// Splits a matrix into row magnitudes and unit row directions, so that
/// `diag(g) * A_unit` reconstructs the input.
pub fn split_magnitude_direction(a: &ComponentMatrix) -> Result<(Array1<f64>, ComponentMatrix)> {
    let mut g = Array1::zeros(a.k());
    for i in 0..a.k() {
        let n = a.row(i).dot(&a.row(i)).sqrt();
        if n <= crate::linalg::UNIT_TOL {
            return Err(MarError::DegenerateRow { index: i, norm: n });
        }
        g[i] = n;
    }
    Ok((g, project_rows_unit(a)?))
}

pub(crate) fn scale_rows(a_unit: &ComponentMatrix, g: &Array1<f64>) -> ComponentMatrix {
    let mut data = a_unit.data().clone();
    for i in 0..a_unit.k() {
        let s = g[i];
        data.row_mut(i).mapv_inplace(|x| x * s);
    }
    ComponentMatrix::new(data).expect("scaling finite rows keeps them finite")
}

fn finite_or_fail(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MarError::NumericalFailure(format!("{what} is not finite")))
    }
}

/// Projected gradient ascent on the row magnitudes with the directions fixed.
pub fn g_step<M: LossModel>(
    model: &M,
    a_unit: &ComponentMatrix,
    g0: &Array1<f64>,
    cfg: &OptimizerConfig,
) -> Result<Array1<f64>> {
    cfg.validate()?;
    if g0.iter().any(|&x| x < cfg.g_floor) {
        return Err(MarError::InvalidArgument(
            "initial magnitudes below the positivity floor".into(),
        ));
    }
    let mut g = g0.clone();
    let mut f = finite_or_fail(model.objective(&scale_rows(a_unit, &g))?, "objective")?;
    for _ in 0..cfg.inner_g_iters {
        let grad_a = model.gradient(&scale_rows(a_unit, &g))?;
        let mut grad_g = Array1::zeros(g.len());
        for i in 0..g.len() {
            grad_g[i] = grad_a.row(i).dot(&a_unit.row(i));
        }
        if model.stochastic() {
            g = propose_g(&g, &grad_g, cfg.step_g, cfg.g_floor);
            continue;
        }
        let mut step = cfg.step_g;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let cand = propose_g(&g, &grad_g, step, cfg.g_floor);
            let fc = finite_or_fail(model.objective(&scale_rows(a_unit, &cand))?, "objective")?;
            if fc >= f {
                accepted = Some((cand, fc));
                break;
            }
            step *= cfg.backtrack;
        }
        match accepted {
            Some((cand, fc)) => {
                let stalled = (fc - f).abs() <= cfg.rel_tol * f.abs().max(1.0);
                g = cand;
                f = fc;
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(g)
}

fn propose_g(g: &Array1<f64>, grad: &Array1<f64>, step: f64, floor: f64) -> Array1<f64> {
    let mut out = g.clone();
    for i in 0..g.len() {
        out[i] = (g[i] + step * grad[i]).max(floor);
    }
    out
}

/// Projected gradient ascent on the unit row directions with the magnitudes
/// fixed, maximizing the loss plus `lambda` times the surrogate.
///
/// If the rows become linearly dependent while the regularizer is active,
/// they are nudged by seeded noise of magnitude 1e-6 and the step retried;
/// persistent dependence is a numerical failure.
pub fn a_step<M: LossModel>(
    model: &M,
    g: &Array1<f64>,
    a_unit0: &ComponentMatrix,
    cfg: &OptimizerConfig,
) -> Result<ComponentMatrix> {
    cfg.validate()?;
    a_unit0.require_unit_rows()?;
    let scfg = cfg.surrogate_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5f5f_a5a5);
    let mut a = a_unit0.clone();

    let objective = |a: &ComponentMatrix| -> Result<f64> {
        let mut f = model.objective(&scale_rows(a, g))?;
        if cfg.lambda > 0.0 {
            f += cfg.lambda * surrogate(a, cfg.gamma)?;
        }
        finite_or_fail(f, "direction objective")
    };
    let grad = |a: &ComponentMatrix| -> Result<Array2<f64>> {
        let mut grad = model.gradient(&scale_rows(a, g))?;
        for i in 0..a.k() {
            let s = g[i];
            grad.row_mut(i).mapv_inplace(|x| x * s);
        }
        if cfg.lambda > 0.0 {
            grad += &(surrogate_gradient(a, &scfg)? * cfg.lambda);
        }
        Ok(grad)
    };

    let mut f = eval_with_reperturb(&objective, &mut a, &mut rng, cfg.lambda > 0.0)?;
    for _ in 0..cfg.inner_a_iters {
        let grad_a = match grad(&a) {
            Ok(v) => v,
            Err(MarError::DependentRows(_)) if cfg.lambda > 0.0 => {
                perturb(&mut a, &mut rng)?;
                f = eval_with_reperturb(&objective, &mut a, &mut rng, true)?;
                continue;
            }
            Err(e) => return Err(e),
        };
        if model.stochastic() {
            let cand = ComponentMatrix::new(a.data() + &(grad_a * cfg.step_a))?;
            a = project_rows_unit(&cand)?;
            continue;
        }
        let mut step = cfg.step_a;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let cand = ComponentMatrix::new(a.data() + &(&grad_a * step))?;
            let cand = project_rows_unit(&cand)?;
            match objective(&cand) {
                Ok(fc) => {
                    if fc >= f {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                Err(MarError::DependentRows(_)) => {}
                Err(e) => return Err(e),
            }
            step *= cfg.backtrack;
        }
        match accepted {
            Some((cand, fc)) => {
                let stalled = (fc - f).abs() <= cfg.rel_tol * f.abs().max(1.0);
                a = cand;
                f = fc;
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(a)
}

fn perturb(a: &mut ComponentMatrix, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut data = a.data().clone();
    for x in data.iter_mut() {
        *x += rng.random_range(-1e-6..1e-6);
    }
    *a = project_rows_unit(&ComponentMatrix::new(data)?)?;
    Ok(())
}

fn eval_with_reperturb(
    objective: &dyn Fn(&ComponentMatrix) -> Result<f64>,
    a: &mut ComponentMatrix,
    rng: &mut ChaCha8Rng,
    regularized: bool,
) -> Result<f64> {
    let mut attempts = 0;
    loop {
        match objective(a) {
            Ok(f) => return Ok(f),
            Err(MarError::DependentRows(_)) if regularized && attempts < 5 => {
                attempts += 1;
                perturb(a, rng)?;
            }
            Err(MarError::DependentRows(d)) => {
                return Err(MarError::NumericalFailure(format!(
                    "rows stayed linearly dependent after perturbation: {d}"
                )))
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs the alternating scheme and returns the recombined matrix together
/// with the per-outer-iteration values of the surrogate objective.
pub fn optimize<M: LossModel>(
    model: &M,
    a0: &ComponentMatrix,
    cfg: &OptimizerConfig,
) -> Result<(ComponentMatrix, Vec<f64>)> {
    cfg.validate()?;
    if cfg.outer_iters == 0 {
        return Ok((a0.clone(), Vec::new()));
    }
    let (mut g, mut a_unit) = split_magnitude_direction(a0)?;
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    for _ in 0..cfg.outer_iters {
        g = g_step(model, &a_unit, &g, cfg)?;
        a_unit = a_step(model, &g, &a_unit, cfg)?;
        let mut j = model.objective(&scale_rows(&a_unit, &g))?;
        if cfg.lambda > 0.0 {
            j += cfg.lambda * surrogate(&a_unit, cfg.gamma)?;
        }
        let j = finite_or_fail(j, "outer objective")?;
        trace.push(j);
        if let Some(p) = prev {
            if (j - p).abs() <= cfg.rel_tol * p.abs().max(1.0) {
                break;
            }
        }
        prev = Some(j);
    }
    Ok((scale_rows(&a_unit, &g), trace))
}
