//! Runtime property checks: the surrogate lower bound, the ascent/descent
//! behavior of projected surrogate steps, the determinant expansion identity,
//! the gradient-direction characterization, the angle triangle inequality,
//! the regression output bound, and scale invariance of the angular score.
//!
//! Each suite runs `trials` seeded random instances and reports pass counts
//! and worst-case margins; the driver returns whether everything held.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::{j_single, BoundInputs};
use crate::error::Result;
use crate::linalg::{
    gram_det, non_obtuse_angle, orth_decompose, project_rows_unit, vector_angle, ComponentMatrix,
};
use crate::metrics::MetricsReport;
use crate::nn::regression_output;
use crate::regularizer::{ascent_step, mar_breakdown, surrogate, surrogate_gradient, SurrogateConfig};

/// Draws a unit-row matrix whose Gram determinant exceeds `min_det`.
pub fn random_unit_rows(
    k: usize,
    d: usize,
    min_det: f64,
    rng: &mut ChaCha8Rng,
) -> ComponentMatrix {
    loop {
        let mut data = Array2::zeros((k, d));
        for x in data.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let m = ComponentMatrix::new(data).expect("finite entries");
        if let Ok(u) = project_rows_unit(&m) {
            if gram_det(&u) > min_det {
                return u;
            }
        }
    }
}

struct SuiteOutcome {
    checks: usize,
    violations: usize,
}

/// Runs every suite with `trials` instances each and collects the outcome.
/// Zero trials produces an empty (vacuously passing) report.
pub fn run_verify(seed: u64, trials: usize) -> Result<(MetricsReport, bool)> {
    let mut report = MetricsReport::new(seed, &format!("verify trials={trials}"));
    if trials == 0 {
        report.set("checks_total", 0.0)?;
        report.set("violations_total", 0.0)?;
        return Ok((report, true));
    }
    let mut total_checks = 0usize;
    let mut total_violations = 0usize;
    let mut tally = |o: SuiteOutcome| {
        total_checks += o.checks;
        total_violations += o.violations;
    };

    tally(lower_bound_suite(seed, trials, &mut report)?);
    tally(ascent_suite(seed, trials, &mut report)?);
    tally(expansion_identity_suite(seed, trials, &mut report)?);
    tally(gradient_direction_suite(seed, trials, &mut report)?);
    tally(triangle_suite(seed, trials, &mut report)?);
    tally(output_bound_suite(seed, trials, &mut report)?);
    tally(scale_invariance_suite(seed, trials, &mut report)?);

    report.set("checks_total", total_checks as f64)?;
    report.set("violations_total", total_violations as f64)?;
    Ok((report, total_violations == 0))
}

/// Surrogate lower bound for gamma in {0.5, 1, 2}: surrogate <= score + 1e-9.
fn lower_bound_suite(seed: u64, trials: usize, report: &mut MetricsReport) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1111);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    let mut checks = 0;
    for _ in 0..trials {
        let k = rng.random_range(2..7);
        let d = rng.random_range(k..11);
        let a = random_unit_rows(k, d, 1e-9, &mut rng);
        for &gamma in &[0.5, 1.0, 2.0] {
            checks += 1;
            let margin = mar_breakdown(&a, gamma)?.omega - surrogate(&a, gamma)?;
            worst = worst.min(margin);
            if margin < -1e-9 {
                violations += 1;
            }
        }
    }
    report.set("lower_bound_worst_margin", worst)?;
    report.set("lower_bound_violations", violations as f64)?;
    Ok(SuiteOutcome { checks, violations })
}

/// Existence of a step size improving score and mean while not increasing
/// variance, all at once, over the geometric grid 1e-2 .. 1e-7.
fn ascent_suite(seed: u64, trials: usize, report: &mut MetricsReport) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2222);
    let cfg = SurrogateConfig::default();
    let grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
    let mut violations = 0;
    let mut largest_eta: f64 = 0.0;
    for _ in 0..trials {
        let k = rng.random_range(2..6);
        let d = rng.random_range(k..9);
        let a = random_unit_rows(k, d, 1e-9, &mut rng);
        let before = mar_breakdown(&a, 1.0)?;
        let mut found = None;
        for &eta in &grid {
            let after = mar_breakdown(&ascent_step(&a, eta, &cfg)?, 1.0)?;
            if after.omega >= before.omega - 1e-12
                && after.mean_angle >= before.mean_angle - 1e-12
                && after.angle_variance <= before.angle_variance + 1e-12
            {
                found = Some(eta);
                break;
            }
        }
        match found {
            Some(eta) => largest_eta = largest_eta.max(eta),
            None => violations += 1,
        }
    }
    report.set("ascent_largest_passing_step", largest_eta)?;
    report.set("ascent_violations", violations as f64)?;
    Ok(SuiteOutcome {
        checks: trials,
        violations,
    })
}

/// det(Gram(A)) = det(Gram(A without row i)) * l_i * (e_i . a_i).
fn expansion_identity_suite(
    seed: u64,
    trials: usize,
    report: &mut MetricsReport,
) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3333);
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    let mut checks = 0;
    for _ in 0..trials {
        let k = rng.random_range(2..7);
        let d = rng.random_range(k..9);
        let a = random_unit_rows(k, d, 1e-6, &mut rng);
        let full = gram_det(&a);
        for i in 0..k {
            checks += 1;
            let mut rows = Vec::new();
            for j in 0..k {
                if j != i {
                    rows.push(a.row(j).to_vec());
                }
            }
            let minor = gram_det(&ComponentMatrix::from_rows(&rows)?);
            let dec = orth_decompose(&a, i)?;
            let err = (full - minor * dec.residual_norm * dec.residual_dir.dot(&a.row(i))).abs();
            worst = worst.max(err);
            if err >= 1e-8 {
                violations += 1;
            }
        }
    }
    report.set("expansion_worst_abs_err", worst)?;
    report.set("expansion_violations", violations as f64)?;
    Ok(SuiteOutcome { checks, violations })
}

/// Each gradient row is a positive multiple of the residual direction.
fn gradient_direction_suite(
    seed: u64,
    trials: usize,
    report: &mut MetricsReport,
) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4444);
    let cfg = SurrogateConfig::default();
    let mut worst: f64 = 1.0;
    let mut violations = 0;
    let mut checks = 0;
    for _ in 0..trials {
        let k = rng.random_range(2..6);
        let d = rng.random_range(k..9);
        let a = random_unit_rows(k, d, 1e-6, &mut rng);
        let g = surrogate_gradient(&a, &cfg)?;
        for i in 0..k {
            checks += 1;
            let dec = orth_decompose(&a, i)?;
            let gi = g.row(i);
            let norm = gi.dot(&gi).sqrt();
            let cos = gi.dot(&dec.residual_dir) / norm;
            worst = worst.min(cos);
            if !(cos > 1.0 - 1e-8) {
                violations += 1;
            }
        }
    }
    report.set("gradient_direction_worst_cosine", worst)?;
    report.set("gradient_direction_violations", violations as f64)?;
    Ok(SuiteOutcome { checks, violations })
}

/// Orientation-sensitive angle triangle inequality on random triples.
fn triangle_suite(seed: u64, trials: usize, report: &mut MetricsReport) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut done = 0;
    while done < trials {
        let d = rng.random_range(2..6);
        let mut vs: Vec<Array1<f64>> = Vec::with_capacity(3);
        for _ in 0..3 {
            vs.push((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        if vs.iter().any(|v| v.dot(v) < 1e-12) {
            continue;
        }
        done += 1;
        let t12 = vector_angle(vs[0].view(), vs[1].view())?;
        let t23 = vector_angle(vs[1].view(), vs[2].view())?;
        let t13 = vector_angle(vs[0].view(), vs[2].view())?;
        let excess = t13 - t12 - t23;
        worst = worst.max(excess);
        if excess > 1e-12 {
            violations += 1;
        }
    }
    report.set("triangle_worst_excess", worst)?;
    report.set("triangle_violations", violations as f64)?;
    Ok(SuiteOutcome {
        checks: trials,
        violations,
    })
}

/// Constrained random regression networks never exceed sqrt(J).
fn output_bound_suite(seed: u64, trials: usize, report: &mut MetricsReport) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6666);
    let (m, d) = (4usize, 8usize);
    let inputs = BoundInputs {
        m,
        l: 0.25,
        c1: 2.0,
        c3: 1.5,
        c4: 2.0,
        h0: 0.5,
        theta: 0.5,
        ..Default::default()
    };
    let bound = j_single(&inputs).sqrt();
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    let mut done = 0;
    while done < trials {
        let mut w = Array2::zeros((m, d));
        for v in w.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let unit = match project_rows_unit(&ComponentMatrix::new(w)?) {
            Ok(u) => u,
            Err(_) => continue,
        };
        let mut min_angle = f64::INFINITY;
        for i in 0..m {
            for j in i + 1..m {
                min_angle = min_angle.min(non_obtuse_angle(unit.row(i), unit.row(j))?);
            }
        }
        if min_angle < inputs.theta {
            continue;
        }
        done += 1;
        let mut w = unit.into_inner();
        for mut row in w.rows_mut() {
            let s = rng.random_range(0.0..inputs.c3);
            row.mapv_inplace(|v| v * s);
        }
        let mut alpha: Array1<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = alpha.dot(&alpha).sqrt();
        let target = rng.random_range(0.0..inputs.c4);
        alpha.mapv_inplace(|v| v / norm * target);
        let mut x: Array1<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xn = x.dot(&x).sqrt();
        let xt = rng.random_range(0.0..inputs.c1);
        x.mapv_inplace(|v| v / xn * xt);
        let f = regression_output(&w, alpha.view(), x.view()).abs();
        worst = worst.max(f);
        if f > bound {
            violations += 1;
        }
    }
    report.set("output_bound_sqrt_j", bound)?;
    report.set("output_bound_worst_abs_output", worst)?;
    report.set("output_bound_violations", violations as f64)?;
    Ok(SuiteOutcome {
        checks: trials,
        violations,
    })
}

/// The angular score ignores row magnitudes.
fn scale_invariance_suite(
    seed: u64,
    trials: usize,
    report: &mut MetricsReport,
) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7777);
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..trials {
        let k = rng.random_range(2..6);
        let d = rng.random_range(k..8);
        let a = random_unit_rows(k, d, 1e-9, &mut rng);
        let mut scaled = a.data().clone();
        for i in 0..k {
            let s = rng.random_range(0.1..5.0);
            scaled.row_mut(i).mapv_inplace(|x| x * s);
        }
        let err = (mar_breakdown(&a, 1.0)?.omega
            - mar_breakdown(&ComponentMatrix::new(scaled)?, 1.0)?.omega)
            .abs();
        worst = worst.max(err);
        if err > 1e-12 {
            violations += 1;
        }
    }
    report.set("scale_invariance_worst_err", worst)?;
    report.set("scale_invariance_violations", violations as f64)?;
    Ok(SuiteOutcome {
        checks: trials,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes() {
        let (report, ok) = run_verify(0, 25).unwrap();
        assert!(ok, "verification failed: {report}");
        assert_eq!(report.get("violations_total"), Some(0.0));
        assert!(report.get("checks_total").unwrap() > 0.0);
    }

    #[test]
    fn zero_trials_is_empty() {
        let (report, ok) = run_verify(5, 0).unwrap();
        assert!(ok);
        assert_eq!(report.get("checks_total"), Some(0.0));
    }

    #[test]
    fn fixed_seed_reproduces_report() {
        let (r1, _) = run_verify(42, 10).unwrap();
        let (r2, _) = run_verify(42, 10).unwrap();
        assert_eq!(r1.values, r2.values);
    }
}
