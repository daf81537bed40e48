//! Evaluators for the generalization-bound formulas that tie the diversity of
//! hidden units (a probabilistic lower bound `theta` on their pairwise
//! angles) to estimation and approximation error.
//!
//! Every function here is a pure formula evaluator; nothing is trained or
//! sampled. Where `exp(2*sqrt(J))` can overflow, the evaluation happens in
//! log space.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{MarError, Result};

/// The constants that feed the bound formulas for a one-hidden-layer network:
/// `m` hidden units trained on `n` samples, an `L`-Lipschitz activation with
/// `|h(0)| = h0`, input norms bounded by `c1`, responses by `c2`, hidden
/// weight norms by `c3`, output weight norm by `c4`, pairwise hidden-unit
/// angles at least `theta` with probability `tau`, confidence `delta`, a
/// Barron smoothness constant `barron_c`, and `k_classes` output classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: usize,
    pub n: usize,
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub h0: f64,
    pub theta: f64,
    pub tau: f64,
    pub delta: f64,
    /// Optional empirical (mean, variance) of the pairwise angle distribution;
    /// feeds [`theta_lower_bound`].
    #[serde(default)]
    pub gamma_moments: Option<(f64, f64)>,
    pub barron_c: f64,
    pub k_classes: usize,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            m: 4,
            n: 1000,
            l: 0.25,
            c1: 2.0,
            c2: 1.0,
            c3: 2.0,
            c4: 3.0,
            h0: 0.5,
            theta: std::f64::consts::FRAC_PI_3,
            tau: 0.9,
            delta: 0.05,
            gamma_moments: None,
            barron_c: 0.5,
            k_classes: 5,
        }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("l", self.l),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("barron_c", self.barron_c),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(MarError::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.c4 >= 0.0) || !(self.h0 >= 0.0) {
            return Err(MarError::InvalidArgument(
                "c4 and h0 must be nonnegative".into(),
            ));
        }
        if self.m == 0 || self.n == 0 || self.k_classes < 2 {
            return Err(MarError::InvalidArgument(
                "m, n must be at least 1 and k_classes at least 2".into(),
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(MarError::InvalidArgument(
                "tau and delta must lie in (0, 1)".into(),
            ));
        }
        if !(self.theta >= 0.0 && self.theta <= FRAC_PI_2) {
            return Err(MarError::InvalidArgument(format!(
                "theta must lie in [0, pi/2], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Per-hidden-layer constants for the multilayer bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub units: usize,
    /// Norm bound on the weights feeding this layer.
    pub weight_bound: f64,
    /// Angle lower bound for this layer's unit weight vectors.
    pub theta: f64,
    /// Probability with which the angle bound holds.
    pub tau: f64,
}

/// Stack of hidden layers plus the norm bound on the output weights (the
/// recursion consumes one weight bound per layer transition, so the output
/// bound rides along here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub hidden: Vec<HiddenLayer>,
    pub output_weight_bound: f64,
}

/// Chebyshev angle lower bound from angle moments: `mu - sqrt(sigma/(1-tau))`
/// with `sigma` the variance. May be negative; callers decide whether to
/// clamp (and should flag it when they do).
pub fn theta_lower_bound(mu: f64, sigma: f64, tau: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(MarError::InvalidArgument(format!(
            "variance must be nonnegative, got {sigma}"
        )));
    }
    if tau >= 1.0 {
        return Err(MarError::InvalidArgument(format!(
            "tau must be below 1, got {tau}"
        )));
    }
    Ok(mu - (sigma / (1.0 - tau)).sqrt())
}

/// Squared output bound for a single hidden layer:
/// `J = m c4^2 h0^2 + L^2 c1^2 c3^2 c4^2 q + 2 sqrt(m) c1 c3 c4^2 L |h0| sqrt(q)`
/// with `q = (m-1) cos(theta) + 1`. Non-increasing in `theta`.
///
/// The arithmetic mirrors the shapes of the [`j_multilayer`] recursion so the
/// single-layer reduction of that recursion reproduces this value exactly.
pub fn j_single(inputs: &BoundInputs) -> f64 {
    let m = inputs.m as f64;
    let (l, c1, c3, c4, h0) = (inputs.l, inputs.c1, inputs.c3, inputs.c4, inputs.h0);
    let q = (m - 1.0) * inputs.theta.cos() + 1.0;
    let jprev = (c1 * c1) * (c3 * c3);
    m * (c4 * c4) * (h0 * h0)
        + (l * l) * (c4 * c4) * (q * jprev)
        + 2.0 * m.sqrt() * (c4 * c4) * l * h0.abs() * (q * jprev).sqrt()
}

/// The two addends of the squared-loss estimation bound: the Rademacher term
/// and the confidence term. Exposed so scaling behavior can be checked per
/// term.
pub fn estimation_bound_squared_parts(inputs: &BoundInputs) -> (f64, f64) {
    let j = j_single(inputs);
    let amp = j.sqrt() + inputs.c2;
    let (r1, r2) = rademacher_terms_single(inputs);
    let t1 = 8.0 * amp * (r1 + r2);
    let t2 = amp * amp * confidence_radius(inputs.delta, inputs.n);
    (t1, t2)
}

fn confidence_radius(delta: f64, n: usize) -> f64 {
    (2.0 * (2.0 / delta).ln() / n as f64).sqrt()
}

/// Rademacher complexity terms written with the same expression shapes as the
/// multilayer loop at P = 1.
fn rademacher_terms_single(inputs: &BoundInputs) -> (f64, f64) {
    let m = inputs.m as f64;
    let rt_n = (inputs.n as f64).sqrt();
    let two_l = 2.0 * inputs.l;
    let mut r1 = two_l.powi(1) * inputs.c1 * inputs.c4 / rt_n;
    r1 *= m.sqrt() * inputs.c3;
    let mut term = two_l.powi(0);
    term *= m.sqrt() * inputs.c4;
    let r2 = term * (inputs.h0.abs() / rt_n);
    (r1, r2)
}

/// Squared-loss estimation error bound and the probability with which it
/// holds: `(1 - delta) * tau`.
pub fn estimation_bound_squared(inputs: &BoundInputs) -> (f64, f64) {
    let (t1, t2) = estimation_bound_squared_parts(inputs);
    (t1 + t2, (1.0 - inputs.delta) * inputs.tau)
}

/// Squared output bound for a stack of hidden layers, by the recursion
/// `J^0 = c1^2 (c3^0)^2`,
/// `J^p = m^{p-1} (c3^p)^2 h0^2 + L^2 (c3^p)^2 q^{p-1} J^{p-1}
///        + 2 sqrt(m^{p-1}) (c3^p)^2 L |h0| sqrt(q^{p-1} J^{p-1})`.
pub fn j_multilayer(layers: &LayerSpec, l: f64, c1: f64, h0: f64) -> Result<f64> {
    if layers.hidden.is_empty() {
        return Err(MarError::InvalidArgument("no hidden layers given".into()));
    }
    let c3s: Vec<f64> = layers
        .hidden
        .iter()
        .map(|h| h.weight_bound)
        .chain(std::iter::once(layers.output_weight_bound))
        .collect();
    let mut j = (c1 * c1) * (c3s[0] * c3s[0]);
    for (p, layer) in layers.hidden.iter().enumerate() {
        let mprev = layer.units as f64;
        let q = (mprev - 1.0) * layer.theta.cos() + 1.0;
        let c3n = c3s[p + 1];
        j = mprev * (c3n * c3n) * (h0 * h0)
            + (l * l) * (c3n * c3n) * (q * j)
            + 2.0 * mprev.sqrt() * (c3n * c3n) * l * h0.abs() * (q * j).sqrt();
    }
    Ok(j)
}

/// Estimation bound for the multilayer hypothesis set; probability is
/// `(1 - delta) * prod_p tau^p`. `inputs` supplies `n`, `l`, `c1`, `c2`,
/// `h0`, and `delta`; the per-layer constants come from `layers`.
pub fn estimation_bound_multilayer(layers: &LayerSpec, inputs: &BoundInputs) -> Result<(f64, f64)> {
    if layers.hidden.is_empty() {
        return Err(MarError::InvalidArgument("no hidden layers given".into()));
    }
    let p_count = layers.hidden.len();
    let jp = j_multilayer(layers, inputs.l, inputs.c1, inputs.h0)?;
    let c3s: Vec<f64> = layers
        .hidden
        .iter()
        .map(|h| h.weight_bound)
        .chain(std::iter::once(layers.output_weight_bound))
        .collect();
    let ms: Vec<f64> = layers.hidden.iter().map(|h| h.units as f64).collect();
    let rt_n = (inputs.n as f64).sqrt();
    let two_l = 2.0 * inputs.l;

    let mut r1 = two_l.powi(p_count as i32) * inputs.c1 * c3s[p_count] / rt_n;
    for p in 0..p_count {
        r1 *= ms[p].sqrt() * c3s[p];
    }
    let mut sum = 0.0;
    for p in 0..p_count {
        let mut term = two_l.powi((p_count - 1 - p) as i32);
        for j in p..p_count {
            term *= ms[j].sqrt() * c3s[j + 1];
        }
        sum += term;
    }
    let r2 = sum * (inputs.h0.abs() / rt_n);

    let amp = jp.sqrt() + inputs.c2;
    let bound = 8.0 * amp * (r1 + r2) + amp * amp * confidence_radius(inputs.delta, inputs.n);
    let mut prob = 1.0 - inputs.delta;
    for layer in &layers.hidden {
        prob *= layer.tau;
    }
    Ok((bound, prob))
}

/// Logistic-loss estimation bound:
/// `4/(1+exp(-sqrt(J))) * (2Lc1c3c4 + c4|h0|) sqrt(m)/sqrt(n)
///  + log(1+exp(sqrt(J))) * sqrt(2 log(2/delta)/n)`.
pub fn estimation_bound_logistic(inputs: &BoundInputs) -> (f64, f64) {
    let j = j_single(inputs);
    let sj = j.sqrt();
    let m = inputs.m as f64;
    let rad = 2.0 * inputs.l * inputs.c1 * inputs.c3 * inputs.c4 + inputs.c4 * inputs.h0.abs();
    let t1 = 4.0 / (1.0 + (-sj).exp()) * rad * m.sqrt() / (inputs.n as f64).sqrt();
    let t2 = softplus(sj) * confidence_radius(inputs.delta, inputs.n);
    (t1 + t2, (1.0 - inputs.delta) * inputs.tau)
}

/// Hinge-loss estimation bound:
/// `4 (2Lc1c3c4 + c4|h0|) sqrt(m)/sqrt(n) + (1+sqrt(J)) sqrt(2 log(2/delta)/n)`.
/// The Rademacher term does not involve `theta`.
pub fn estimation_bound_hinge(inputs: &BoundInputs) -> (f64, f64) {
    let j = j_single(inputs);
    let m = inputs.m as f64;
    let rad = 2.0 * inputs.l * inputs.c1 * inputs.c3 * inputs.c4 + inputs.c4 * inputs.h0.abs();
    let t1 = 4.0 * rad * m.sqrt() / (inputs.n as f64).sqrt();
    let t2 = (1.0 + j.sqrt()) * confidence_radius(inputs.delta, inputs.n);
    (t1 + t2, (1.0 - inputs.delta) * inputs.tau)
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Cross-entropy constants from an explicit squared output bound `j`:
/// the loss Lipschitz constant `(K-1)/(K-1+exp(-2 sqrt(j)))` and the loss
/// magnitude bound `log(1 + (K-1) exp(2 sqrt(j)))` (evaluated in log space).
pub fn cross_entropy_constants_from_j(j: f64, k_classes: usize) -> Result<(f64, f64)> {
    if k_classes < 2 {
        return Err(MarError::InvalidArgument(format!(
            "need at least two classes, got {k_classes}"
        )));
    }
    if !(j >= 0.0) {
        return Err(MarError::InvalidArgument(format!(
            "squared output bound must be nonnegative, got {j}"
        )));
    }
    let km1 = k_classes as f64 - 1.0;
    let two_sj = 2.0 * j.sqrt();
    let lipschitz = km1 / (km1 + (-two_sj).exp());
    // 1 + (K-1) e^{2 sqrt(j)} = 1 + e^{ln(K-1) + 2 sqrt(j)}.
    let loss_bound = softplus(km1.ln() + two_sj);
    Ok((lipschitz, loss_bound))
}

/// Cross-entropy constants at the network described by `inputs`.
pub fn cross_entropy_constants(inputs: &BoundInputs) -> Result<(f64, f64)> {
    cross_entropy_constants_from_j(j_single(inputs), inputs.k_classes)
}

/// Approximation bound together with its feasibility preconditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxBound {
    pub bound: f64,
    /// The theta-independent Barron term `2C (1/sqrt(n) + (1+2 ln c1c3)/(c1c3))`.
    pub barron_term: f64,
    /// `c1 * c3 >= 1`.
    pub norm_product_ok: bool,
    /// `c4 >= 2 sqrt(m) C`.
    pub output_weight_ok: bool,
    /// `m <= 2 (floor((pi/2 - theta)/theta) + 1)`; unbounded when theta = 0.
    pub unit_cap_ok: bool,
    /// The unit cap itself; `None` means unbounded (theta = 0).
    pub unit_cap: Option<u64>,
    pub feasible: bool,
}

/// Approximation error bound
/// `2C (1/sqrt(n) + (1+2 ln c1c3)/(c1c3)) + 4 m C c1 c3 sin(theta'/2)` with
/// `theta' = min(3 m theta, pi)`. Non-decreasing in `theta`.
///
/// The `n` inside the Barron term is taken from `inputs.n` as an explicit
/// parameter; the source formulation leaves its role in this context open.
pub fn approximation_bound(inputs: &BoundInputs) -> ApproxBound {
    let m = inputs.m as f64;
    let c = inputs.barron_c;
    let c1c3 = inputs.c1 * inputs.c3;
    let barron = 2.0 * c * (1.0 / (inputs.n as f64).sqrt() + (1.0 + 2.0 * c1c3.ln()) / c1c3);
    let theta_prime = (3.0 * m * inputs.theta).min(PI);
    let bound = barron + 4.0 * m * c * c1c3 * (theta_prime / 2.0).sin();

    let norm_product_ok = c1c3 >= 1.0;
    let output_weight_ok = inputs.c4 >= 2.0 * m.sqrt() * c;
    let (unit_cap, unit_cap_ok) = if inputs.theta > 0.0 {
        let cap = 2.0 * (((FRAC_PI_2 - inputs.theta) / inputs.theta).floor() + 1.0);
        (Some(cap as u64), m <= cap)
    } else {
        (None, true)
    };
    ApproxBound {
        bound,
        barron_term: barron,
        norm_product_ok,
        output_weight_ok,
        unit_cap_ok,
        unit_cap,
        feasible: norm_product_ok && output_weight_ok && unit_cap_ok,
    }
}

/// One row of the theta tradeoff table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub theta: f64,
    pub estimation: f64,
    pub approximation: f64,
    pub total: f64,
}

/// Evaluates the estimation and approximation bounds over a grid of theta
/// values. The estimation column is non-increasing and the approximation
/// column non-decreasing when the grid is sorted ascending.
pub fn tradeoff_scan(inputs: &BoundInputs, theta_grid: &[f64]) -> Vec<TradeoffPoint> {
    theta_grid
        .iter()
        .map(|&theta| {
            let at = BoundInputs {
                theta,
                ..inputs.clone()
            };
            let (estimation, _) = estimation_bound_squared(&at);
            let approximation = approximation_bound(&at).bound;
            TradeoffPoint {
                theta,
                estimation,
                approximation,
                total: estimation + approximation,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_3;

    fn pinned() -> BoundInputs {
        BoundInputs {
            m: 4,
            n: 1000,
            l: 0.25,
            c1: 2.0,
            c2: 1.0,
            c3: 2.0,
            c4: 3.0,
            h0: 0.5,
            theta: FRAC_PI_3,
            tau: 0.9,
            delta: 0.05,
            gamma_moments: None,
            barron_c: 0.5,
            k_classes: 5,
        }
    }

    fn two_layer() -> LayerSpec {
        LayerSpec {
            hidden: vec![
                HiddenLayer {
                    units: 4,
                    weight_bound: 2.0,
                    theta: FRAC_PI_3,
                    tau: 0.9,
                },
                HiddenLayer {
                    units: 3,
                    weight_bound: 1.5,
                    theta: std::f64::consts::FRAC_PI_4,
                    tau: 0.95,
                },
            ],
            output_weight_bound: 3.0,
        }
    }

    #[test]
    fn theta_lower_bound_examples() {
        assert_relative_eq!(
            theta_lower_bound(1.3, 0.0, 0.5).unwrap(),
            1.3,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            theta_lower_bound(1.2, 0.04, 0.9).unwrap(),
            0.5675444679663241,
            max_relative = 1e-10
        );
        // Monotone: larger mean or smaller variance raises the bound.
        let base = theta_lower_bound(1.0, 0.1, 0.8).unwrap();
        assert!(theta_lower_bound(1.1, 0.1, 0.8).unwrap() > base);
        assert!(theta_lower_bound(1.0, 0.05, 0.8).unwrap() > base);
        assert!(theta_lower_bound(1.0, 0.1, 1.0).is_err());
        // May go negative; reported as-is.
        assert!(theta_lower_bound(0.1, 1.0, 0.9).unwrap() < 0.0);
    }

    #[test]
    fn j_single_pinned_values() {
        let spec_example = BoundInputs {
            m: 4,
            l: 1.0,
            c1: 1.0,
            c3: 1.0,
            c4: 1.0,
            h0: 0.5,
            theta: FRAC_PI_3,
            ..pinned()
        };
        assert_relative_eq!(
            j_single(&spec_example),
            6.66227766016838,
            max_relative = 1e-10
        );
        assert_relative_eq!(j_single(&pinned()), 59.96049894151542, max_relative = 1e-10);
    }

    #[test]
    fn j_single_trivial_collapses() {
        // h0=0, theta=pi/2 collapses J to L^2 C1^2 C3^2 C4^2.
        let a = BoundInputs {
            h0: 0.0,
            theta: FRAC_PI_2,
            ..pinned()
        };
        let expected = a.l * a.l * a.c1 * a.c1 * a.c3 * a.c3 * a.c4 * a.c4;
        assert_relative_eq!(j_single(&a), expected, max_relative = 1e-14);
        // m=1, h0=0 collapses the same way.
        let b = BoundInputs {
            m: 1,
            h0: 0.0,
            ..pinned()
        };
        assert_relative_eq!(j_single(&b), expected, max_relative = 1e-14);
    }

    #[test]
    fn estimation_squared_pinned_and_scaling() {
        let (bound, prob) = estimation_bound_squared(&pinned());
        assert_relative_eq!(bound, 39.74529085085559, max_relative = 1e-10);
        assert_relative_eq!(prob, 0.855, max_relative = 1e-12);

        // Quadrupling n halves the Rademacher term exactly.
        let (t1, _) = estimation_bound_squared_parts(&pinned());
        let big = BoundInputs {
            n: 4000,
            ..pinned()
        };
        let (t1_big, _) = estimation_bound_squared_parts(&big);
        assert_eq!(t1_big, t1 / 2.0);

        // Non-increasing in theta.
        let lo = BoundInputs {
            theta: 0.0,
            ..pinned()
        };
        let hi = BoundInputs {
            theta: FRAC_PI_2,
            ..pinned()
        };
        assert!(estimation_bound_squared(&hi).0 <= estimation_bound_squared(&lo).0);
    }

    #[test]
    fn multilayer_single_layer_reduction_is_exact() {
        let inputs = pinned();
        let spec = LayerSpec {
            hidden: vec![HiddenLayer {
                units: inputs.m,
                weight_bound: inputs.c3,
                theta: inputs.theta,
                tau: inputs.tau,
            }],
            output_weight_bound: inputs.c4,
        };
        let j1 = j_multilayer(&spec, inputs.l, inputs.c1, inputs.h0).unwrap();
        assert_eq!(j1, j_single(&inputs));
        let (b1, p1) = estimation_bound_multilayer(&spec, &inputs).unwrap();
        let (b0, p0) = estimation_bound_squared(&inputs);
        assert_eq!(b1, b0);
        assert_eq!(p1, p0);
    }

    #[test]
    fn multilayer_pinned_values() {
        let spec = two_layer();
        let j = j_multilayer(&spec, 0.25, 2.0, 0.5).unwrap();
        assert_relative_eq!(j, 50.55061887113982, max_relative = 1e-10);
        let (bound, prob) = estimation_bound_multilayer(&spec, &pinned()).unwrap();
        assert_relative_eq!(bound, 50.957399351467295, max_relative = 1e-10);
        assert_relative_eq!(prob, 0.8122499999999999, max_relative = 1e-12);
    }

    #[test]
    fn multilayer_telescopes_when_flat() {
        // h0=0 and all thetas at pi/2 telescope into
        // C1^2 (C3^0)^2 * prod_p L^2 (C3^p)^2.
        let mut spec = two_layer();
        for h in &mut spec.hidden {
            h.theta = FRAC_PI_2;
        }
        let l = 0.25;
        let c1 = 2.0;
        let j = j_multilayer(&spec, l, c1, 0.0).unwrap();
        let expected = c1 * c1
            * spec.hidden[0].weight_bound.powi(2)
            * (l * l * spec.hidden[1].weight_bound.powi(2))
            * (l * l * spec.output_weight_bound.powi(2));
        assert_relative_eq!(j, expected, max_relative = 1e-12);

        let empty = LayerSpec {
            hidden: vec![],
            output_weight_bound: 1.0,
        };
        assert!(j_multilayer(&empty, l, c1, 0.0).is_err());
    }

    #[test]
    fn logistic_pinned_and_small_j_limit() {
        let (bound, prob) = estimation_bound_logistic(&pinned());
        assert_relative_eq!(bound, 2.561693612030518, max_relative = 1e-10);
        assert_relative_eq!(prob, 0.855, max_relative = 1e-12);

        // As J -> 0 the Lipschitz factor tends to 4/2 = 2.
        let tiny = BoundInputs {
            c4: 1e-9,
            h0: 0.0,
            ..pinned()
        };
        let rad = 2.0 * tiny.l * tiny.c1 * tiny.c3 * tiny.c4;
        let t1 = estimation_bound_logistic(&tiny).0
            - softplus(j_single(&tiny).sqrt()) * confidence_radius(tiny.delta, tiny.n);
        let factor = t1 / (rad * (tiny.m as f64).sqrt() / (tiny.n as f64).sqrt());
        assert_relative_eq!(factor, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn hinge_pinned_and_theta_free_first_term() {
        let (bound, prob) = estimation_bound_hinge(&pinned());
        assert_relative_eq!(bound, 2.6483725775006035, max_relative = 1e-10);
        assert_relative_eq!(prob, 0.855, max_relative = 1e-12);

        // The Rademacher term ignores theta: moving theta changes only the
        // confidence term.
        let other = BoundInputs {
            theta: 0.1,
            ..pinned()
        };
        let shift = |i: &BoundInputs| {
            estimation_bound_hinge(i).0
                - (1.0 + j_single(i).sqrt()) * confidence_radius(i.delta, i.n)
        };
        assert_relative_eq!(shift(&pinned()), shift(&other), max_relative = 1e-14);
    }

    #[test]
    fn cross_entropy_examples() {
        let (lip, _) = cross_entropy_constants_from_j(0.0, 2).unwrap();
        assert_relative_eq!(lip, 0.5, max_relative = 1e-15);
        let (lip_many, _) = cross_entropy_constants_from_j(1.0, 1_000_000_000).unwrap();
        assert!((lip_many - 1.0).abs() < 1e-6);

        let (lip, lb) = cross_entropy_constants(&pinned()).unwrap();
        assert_relative_eq!(lip, 0.9999999530004302, max_relative = 1e-10);
        assert_relative_eq!(lb, 16.8731273886246, max_relative = 1e-10);

        // Large J must not overflow the log-space loss bound.
        let huge = BoundInputs {
            c1: 400.0,
            c3: 400.0,
            c4: 800.0,
            l: 1.0,
            m: 8,
            ..pinned()
        };
        let (_, lb) = cross_entropy_constants(&huge).unwrap();
        assert!(lb.is_finite());
        assert!(cross_entropy_constants_from_j(1.0, 1).is_err());
    }

    #[test]
    fn approximation_examples() {
        let inputs = BoundInputs {
            theta: 0.12,
            ..pinned()
        };
        let a = approximation_bound(&inputs);
        assert_relative_eq!(a.bound, 22.07507946024877, max_relative = 1e-10);

        // theta -> 0 leaves only the Barron term.
        let zero = BoundInputs {
            theta: 0.0,
            ..pinned()
        };
        let az = approximation_bound(&zero);
        assert_relative_eq!(az.bound, az.barron_term, max_relative = 1e-14);
        assert!(az.unit_cap.is_none());
        assert!(az.unit_cap_ok);

        // Saturation: 3 m theta >= pi pins the diversity term at 4mC c1c3.
        let sat = BoundInputs {
            theta: 1.5,
            ..pinned()
        };
        let asat = approximation_bound(&sat);
        let m = sat.m as f64;
        assert_relative_eq!(
            asat.bound - asat.barron_term,
            4.0 * m * sat.barron_c * sat.c1 * sat.c3,
            max_relative = 1e-12
        );

        // Feasibility flags at the pinned config: c1c3 = 4 >= 1,
        // c4 = 3 >= 2 sqrt(4) * 0.5 = 2, and the unit cap at theta = 0.12 is
        // 2*(floor((pi/2 - 0.12)/0.12)+1) = 26 >= m = 4.
        assert!(a.norm_product_ok && a.output_weight_ok && a.unit_cap_ok && a.feasible);
        assert_eq!(a.unit_cap, Some(26));
    }

    #[test]
    fn tradeoff_scan_monotone_columns() {
        let grid: Vec<f64> = (0..15).map(|i| 0.1 + i as f64 * 0.1).collect();
        let rows = tradeoff_scan(&pinned(), &grid);
        assert_eq!(rows.len(), 15);
        for w in rows.windows(2) {
            assert!(w[1].estimation <= w[0].estimation + 1e-12);
            assert!(w[1].approximation >= w[0].approximation - 1e-12);
        }
        assert!(tradeoff_scan(&pinned(), &[]).is_empty());
    }
}
