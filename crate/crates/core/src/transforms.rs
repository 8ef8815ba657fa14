//! Generic numeric machinery for evaluating Laplace-Stieltjes transforms and
//! probability generating functions: busy-period fixed points, residual
//! (remaining-lifetime) transforms, safe evaluation of removable 0/0
//! singularities, and moment extraction by Richardson-extrapolated central
//! differences.
//!
//! Everything here works on plain `Fn(f64) -> f64` transform evaluators. All
//! model transforms in this crate are analytic in a neighbourhood of the
//! origin, so the differentiation routines may probe slightly negative
//! arguments; the magnitude of those probes is tied to the characteristic
//! scale of the transform and stays far inside the analyticity region for
//! stable models.

use thiserror::Error;

/// Errors from the numeric transform layer.
#[derive(Debug, Clone, Error)]
pub enum TransformError {
    #[error(
        "fixed-point iteration did not converge within {max_iterations} iterations \
         (last iterate {last_iterate}, gap {gap:e})"
    )]
    IterationLimit {
        max_iterations: usize,
        last_iterate: f64,
        gap: f64,
    },
    #[error(
        "moment of order {order} reached relative error {achieved:e} \
         (target {target:e}); best estimate {best}"
    )]
    Accuracy {
        order: usize,
        best: f64,
        achieved: f64,
        target: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
}

/// Convergence settings for busy-period fixed points.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointConfig {
    /// Stop when successive iterates differ by less than this.
    pub tolerance: f64,
    /// Hard cap on Picard iterations.
    pub max_iterations: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-14,
            max_iterations: 10_000,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<(), TransformError> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(TransformError::Domain(format!(
                "fixed-point tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(TransformError::Domain(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Busy-period LST `pi(omega)` of an M/G/1 queue with service LST `beta` and
/// arrival rate `lambda`: the minimal root of
/// `pi = beta(omega + lambda * (1 - pi))`.
///
/// Picard iteration from 0 converges monotonically to the minimal root for
/// `omega >= 0` whenever `lambda * E(B) < 1`. For `omega >= 0` the iteration
/// is accelerated with guarded Aitken extrapolation, clamped to stay inside
/// the basin of the minimal root.
pub fn busy_period_lst<F>(
    beta: F,
    lambda: f64,
    omega: f64,
    cfg: &FixedPointConfig,
) -> Result<f64, TransformError>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    if lambda == 0.0 {
        return Ok(beta(omega));
    }
    let step = |p: f64| beta(omega + lambda * (1.0 - p));
    let mut prev = 0.0f64;
    let mut cur = step(prev);
    let mut iterations = 1usize;
    while (cur - prev).abs() >= cfg.tolerance {
        if iterations >= cfg.max_iterations {
            return Err(TransformError::IterationLimit {
                max_iterations: cfg.max_iterations,
                last_iterate: cur,
                gap: (cur - prev).abs(),
            });
        }
        let next = step(cur);
        // Aitken delta-squared step; for omega >= 0 the minimal root lies in
        // [0, 1] and the clamp keeps the extrapolant inside its basin.
        if omega >= 0.0 && iterations.is_multiple_of(3) {
            let d1 = cur - prev;
            let d2 = next - cur;
            let denom = d2 - d1;
            if denom.abs() > f64::EPSILON {
                let accel = (prev - d1 * d1 / denom).clamp(cur.min(next), 1.0);
                if accel.is_finite() {
                    prev = next;
                    cur = step(accel);
                    iterations += 2;
                    continue;
                }
            }
        }
        prev = cur;
        cur = next;
        iterations += 1;
    }
    Ok(cur)
}

/// Residual-lifetime LST `(1 - X(omega)) / (omega * E(X))` of a nonnegative
/// random variable with transform `x_lst` and mean `mean_x`.
///
/// The ratio is 0/0 at the origin; evaluation near zero goes through
/// [`safe_ratio`] with threshold `1e-6 / mean_x`.
pub fn residual_lst<F>(x_lst: F, mean_x: f64, omega: f64) -> Result<f64, TransformError>
where
    F: Fn(f64) -> f64,
{
    if mean_x.is_nan() || mean_x <= 0.0 {
        return Err(TransformError::Domain(format!(
            "residual lifetime needs a positive mean, got {mean_x}"
        )));
    }
    if omega == 0.0 {
        return Ok(1.0);
    }
    safe_ratio(|w| 1.0 - x_lst(w), |w| w * mean_x, omega, 1e-6 / mean_x)
}

/// Evaluates `num(omega) / den(omega)` where both vanish at the origin.
///
/// Away from zero (`|omega| >= threshold`) this is the plain quotient. Below
/// the threshold the removable singularity is resolved with centred
/// finite-difference derivatives at 0, keeping the leading linear term so the
/// value crosses the threshold continuously:
///
/// ```text
/// num(w)/den(w) ~ (num'(0) + w num''(0)/2) / (den'(0) + w den''(0)/2)
/// ```
///
/// The finite-difference step is `300 * threshold`, i.e. `3e-4` of the
/// characteristic transform scale for the default threshold choice
/// `1e-6 * scale`.
pub fn safe_ratio<N, D>(num: N, den: D, omega: f64, threshold: f64) -> Result<f64, TransformError>
where
    N: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(TransformError::Domain(format!(
            "safe_ratio threshold must be positive, got {threshold}"
        )));
    }
    if omega.abs() >= threshold {
        let d = den(omega);
        if d == 0.0 {
            return Err(TransformError::Evaluation(format!(
                "denominator vanished at omega = {omega} above the singularity threshold"
            )));
        }
        return Ok(num(omega) / d);
    }
    let u = 300.0 * threshold;
    let (np, nm, n0) = (num(u), num(-u), num(0.0));
    let (dp, dm, d0) = (den(u), den(-u), den(0.0));
    let n1 = (np - nm) / (2.0 * u);
    let n2 = (np - 2.0 * n0 + nm) / (u * u);
    let d1 = (dp - dm) / (2.0 * u);
    let d2 = (dp - 2.0 * d0 + dm) / (u * u);
    let denom = d1 + 0.5 * d2 * omega;
    if denom == 0.0 {
        return Err(TransformError::Evaluation(
            "derivative of denominator vanished at the origin".into(),
        ));
    }
    Ok((n1 + 0.5 * n2 * omega) / denom)
}

/// Request for moments of a transform around the origin.
#[derive(Debug, Clone, Copy)]
pub struct MomentRequest {
    /// Highest moment order, between 1 and 3.
    pub order: usize,
    /// Relative agreement required between successive Richardson extrapolants.
    pub target_relative_error: f64,
}

impl MomentRequest {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            target_relative_error: 1e-8,
        }
    }

    pub fn with_target(order: usize, target_relative_error: f64) -> Self {
        Self {
            order,
            target_relative_error,
        }
    }

    fn validate(&self) -> Result<(), TransformError> {
        if !(1..=3).contains(&self.order) {
            return Err(TransformError::Domain(format!(
                "moment order must be 1, 2 or 3, got {}",
                self.order
            )));
        }
        if self.target_relative_error.is_nan() || self.target_relative_error <= 0.0 {
            return Err(TransformError::Domain(
                "target relative error must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Moments `m_k = (-1)^k f^(k)(0)`, `k = 1..=order`, of an LST `f` by central
/// finite differences with Richardson extrapolation.
///
/// The initial step is `1e-2` of the characteristic scale `1/m1_estimate`;
/// the step is halved (table depth at most 6) until successive extrapolants
/// agree to the requested relative error. An LST of a nonnegative random
/// variable is nonnegative-moment generating, so each `m_k` is positive; no
/// sign bookkeeping is exposed to callers.
pub fn lst_moments<F>(f: F, req: &MomentRequest) -> Result<Vec<f64>, TransformError>
where
    F: Fn(f64) -> f64,
{
    req.validate()?;
    let scale = first_moment_scale(&f);
    let h0 = 2e-2 / scale;
    let f0 = f(0.0);
    let mut out = Vec::with_capacity(req.order);
    for k in 1..=req.order {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let deriv =
            derivative_with_step_search(&f, f0, k, h0, req.target_relative_error).map_err(|e| {
                match e {
                    TransformError::Accuracy {
                        order,
                        best,
                        achieved,
                        target,
                    } => TransformError::Accuracy {
                        order,
                        best: sign * best,
                        achieved,
                        target,
                    },
                    other => other,
                }
            })?;
        out.push(sign * deriv);
    }
    Ok(out)
}

/// Tries the base step first, then a 4x larger one (better against the
/// evaluation noise floor of product-built transforms), then a 4x smaller
/// one (for transforms whose analyticity radius sits close to the origin,
/// like near-critical busy periods). Keeps the best estimate across
/// attempts; attempts that leave the evaluable domain are skipped.
fn derivative_with_step_search<F: Fn(f64) -> f64>(
    f: &F,
    f0: f64,
    order: usize,
    h0: f64,
    target: f64,
) -> Result<f64, TransformError> {
    let mut best = f64::NAN;
    let mut best_err = f64::INFINITY;
    let mut last_eval_error = None;
    for step in [h0, 4.0 * h0, 0.25 * h0] {
        match richardson_derivative(f, f0, order, step, target) {
            Ok(v) => return Ok(v),
            Err(TransformError::Accuracy {
                best: b, achieved, ..
            }) => {
                if achieved < best_err {
                    best_err = achieved;
                    best = b;
                }
            }
            Err(e @ TransformError::Evaluation(_)) => last_eval_error = Some(e),
            Err(e) => return Err(e),
        }
    }
    if best.is_finite() {
        Err(TransformError::Accuracy {
            order,
            best,
            achieved: best_err,
            target,
        })
    } else {
        Err(last_eval_error
            .unwrap_or_else(|| TransformError::Evaluation("no usable differentiation step".into())))
    }
}

/// Crude first-moment estimate used only to pick a differentiation step:
/// finds `s` with `f(s)` close to 1 and refines the secant `(1 - f(s)) / s`
/// at `s / 8`, where its convexity bias is a few percent.
fn first_moment_scale<F: Fn(f64) -> f64>(f: &F) -> f64 {
    let mut s = 1.0f64;
    let mut halved = false;
    for _ in 0..200 {
        let v = f(s);
        if !v.is_finite() || v < 0.6 {
            s *= 0.5;
            halved = true;
        } else if v > 0.9 {
            if halved {
                break;
            }
            s *= 2.0;
        } else {
            break;
        }
    }
    let refined = s / 8.0;
    let slope = (1.0 - f(refined)) / refined;
    if slope.is_finite() && slope > 1e-300 {
        return slope;
    }
    let slope = (1.0 - f(s)) / s;
    if slope.is_finite() && slope > 1e-300 {
        slope
    } else {
        1.0
    }
}

const RICHARDSON_DEPTH: usize = 6;
/// Step refinement ratio. sqrt(2) keeps more table rows inside the window
/// where truncation has decayed but subtractive cancellation has not yet
/// taken over; the stencils' error series are in h^2, so each extrapolation
/// level still gains a factor (ratio^2)^m = 2^m.
const REFINE: f64 = std::f64::consts::SQRT_2;

fn central_difference<F: Fn(f64) -> f64>(f: &F, f0: f64, order: usize, h: f64) -> f64 {
    match order {
        1 => (f(h) - f(-h)) / (2.0 * h),
        2 => (f(h) - 2.0 * f0 + f(-h)) / (h * h),
        3 => (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h),
        _ => unreachable!("order validated to 1..=3"),
    }
}

/// Romberg-style table over step refinement with convergence detection on
/// the diagonal.
fn richardson_derivative<F: Fn(f64) -> f64>(
    f: &F,
    f0: f64,
    order: usize,
    h0: f64,
    target: f64,
) -> Result<f64, TransformError> {
    let mut table = [[0.0f64; RICHARDSON_DEPTH + 1]; RICHARDSON_DEPTH + 1];
    let mut best = f64::NAN;
    let mut best_err = f64::INFINITY;
    for j in 0..=RICHARDSON_DEPTH {
        let h = h0 / REFINE.powi(j as i32);
        table[j][0] = central_difference(f, f0, order, h);
        if !table[j][0].is_finite() {
            return Err(TransformError::Evaluation(format!(
                "transform evaluation produced a non-finite value near the origin (step {h:e})"
            )));
        }
        for m in 1..=j {
            let pow = (2.0f64).powi(m as i32);
            table[j][m] = (pow * table[j][m - 1] - table[j - 1][m - 1]) / (pow - 1.0);
        }
        if j > 0 {
            let cur = table[j][j];
            let prev = table[j - 1][j - 1];
            let denom = cur.abs().max(f64::MIN_POSITIVE);
            let rel = (cur - prev).abs() / denom;
            if rel < best_err {
                best_err = rel;
                best = cur;
            }
            if rel <= target {
                return Ok(cur);
            }
        }
    }
    Err(TransformError::Accuracy {
        order,
        best,
        achieved: best_err,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_lst(rate: f64) -> impl Fn(f64) -> f64 {
        move |w| rate / (rate + w)
    }

    /// Closed-form minimal root of the M/M/1 busy-period equation.
    fn mm1_busy_root(lambda: f64, mu: f64, omega: f64) -> f64 {
        let a = lambda + mu + omega;
        (a - (a * a - 4.0 * lambda * mu).sqrt()) / (2.0 * lambda)
    }

    #[test]
    fn busy_period_at_zero_is_one_when_stable() {
        let cfg = FixedPointConfig::default();
        let pi = busy_period_lst(exp_lst(1.0), 0.6, 0.0, &cfg).unwrap();
        assert!((pi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn busy_period_matches_mm1_closed_form() {
        let cfg = FixedPointConfig::default();
        for &omega in &[0.05, 0.2, 1.0, 3.0, 10.0] {
            let pi = busy_period_lst(exp_lst(1.0), 0.6, omega, &cfg).unwrap();
            let oracle = mm1_busy_root(0.6, 1.0, omega);
            assert!(
                (pi - oracle).abs() < 1e-12,
                "omega={omega}: {pi} vs {oracle}"
            );
        }
        // Frozen closed-form value at omega = 1.
        let pi1 = busy_period_lst(exp_lst(1.0), 0.6, 1.0, &cfg).unwrap();
        assert!((pi1 - 0.4266155818482415).abs() < 1e-12);
    }

    #[test]
    fn busy_period_mean_is_service_mean_over_one_minus_rho() {
        let cfg = FixedPointConfig::default();
        let pi = |w: f64| busy_period_lst(exp_lst(1.0), 0.6, w, &cfg).unwrap();
        let m = lst_moments(pi, &MomentRequest::new(1)).unwrap();
        assert!((m[0] - 2.5).abs() < 1e-7, "mean busy period {}", m[0]);
    }

    #[test]
    fn busy_period_fixed_point_residual_small() {
        let cfg = FixedPointConfig::default();
        for &lambda in &[0.1, 0.4, 0.8] {
            for &omega in &[0.0, 0.3, 2.0, 7.5] {
                let beta = exp_lst(1.0);
                let pi = busy_period_lst(&beta, lambda, omega, &cfg).unwrap();
                let residual = (pi - beta(omega + lambda * (1.0 - pi))).abs();
                assert!(residual < 10.0 * cfg.tolerance, "residual {residual}");
            }
        }
    }

    #[test]
    fn busy_period_nonincreasing_in_omega() {
        let cfg = FixedPointConfig::default();
        let mut last = f64::INFINITY;
        for i in 0..=50 {
            let omega = 10.0 * i as f64 / 50.0;
            let pi = busy_period_lst(exp_lst(1.0), 0.6, omega, &cfg).unwrap();
            assert!(pi <= last + 1e-13);
            last = pi;
        }
    }

    #[test]
    fn busy_period_iteration_limit_reports_state() {
        let cfg = FixedPointConfig {
            tolerance: 1e-14,
            max_iterations: 3,
        };
        let err = busy_period_lst(exp_lst(1.0), 0.9, 0.01, &cfg).unwrap_err();
        match err {
            TransformError::IterationLimit {
                max_iterations,
                last_iterate,
                gap,
            } => {
                assert_eq!(max_iterations, 3);
                assert!(last_iterate > 0.0 && last_iterate < 1.0);
                assert!(gap > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn residual_of_exponential_is_exponential() {
        let r = residual_lst(exp_lst(1.0), 1.0, 1.0).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn residual_of_deterministic_matches_integration() {
        // X = 2 deterministic: residual density uniform on [0, 2],
        // LST = (1 - e^{-2w}) / (2w).
        let lst = |w: f64| (-2.0 * w).exp();
        let r = residual_lst(lst, 2.0, 1.0).unwrap();
        let oracle = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((r - oracle).abs() < 1e-12);
    }

    #[test]
    fn residual_at_zero_is_one() {
        assert_eq!(residual_lst(exp_lst(3.0), 1.0 / 3.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn residual_rejects_nonpositive_mean() {
        assert!(matches!(
            residual_lst(exp_lst(1.0), 0.0, 1.0),
            Err(TransformError::Domain(_))
        ));
    }

    #[test]
    fn residual_is_completely_monotone_on_grid() {
        // Alternating signs of finite differences up to order 3.
        let r = |w: f64| residual_lst(exp_lst(1.0), 1.0, w).unwrap();
        let h = 0.05;
        for i in 0..60 {
            let w = 0.1 + i as f64 * h;
            let v: Vec<f64> = (0..4).map(|k| r(w + k as f64 * h)).collect();
            assert!(v[0] >= 0.0 && v[0] <= 1.0);
            assert!(v[1] - v[0] <= 1e-12, "first difference sign at {w}");
            assert!(
                v[2] - 2.0 * v[1] + v[0] >= -1e-12,
                "second difference at {w}"
            );
            assert!(
                v[3] - 3.0 * v[2] + 3.0 * v[1] - v[0] <= 1e-12,
                "third difference at {w}"
            );
        }
    }

    #[test]
    fn safe_ratio_plain_region_equals_direct_quotient() {
        let num = |w: f64| 1.0 - exp_lst(1.0)(w);
        let den = |w: f64| w;
        let v = safe_ratio(num, den, 0.5, 1e-7).unwrap();
        assert!((v - num(0.5) / 0.5).abs() < 1e-14);
    }

    #[test]
    fn safe_ratio_is_continuous_across_threshold() {
        let num = |w: f64| 1.0 - exp_lst(0.1)(w); // mean 10
        let den = |w: f64| 10.0 * w;
        let tau = 1e-7;
        let eps = tau * 1e-3;
        let below = safe_ratio(num, den, tau - eps, tau).unwrap();
        let above = safe_ratio(num, den, tau + eps, tau).unwrap();
        assert!(
            (below - above).abs() < 1e-6,
            "gap {}",
            (below - above).abs()
        );
    }

    #[test]
    fn safe_ratio_reports_vanishing_denominator() {
        let err = safe_ratio(|w| w, |_| 0.0, 1.0, 1e-7).unwrap_err();
        assert!(matches!(err, TransformError::Evaluation(_)));
    }

    #[test]
    fn moments_of_exponential() {
        let m = lst_moments(exp_lst(1.0), &MomentRequest::new(3)).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-8);
        assert!((m[1] - 2.0).abs() / 2.0 < 1e-8);
        assert!((m[2] - 6.0).abs() / 6.0 < 1e-8);
    }

    #[test]
    fn moments_of_point_mass() {
        let m = lst_moments(|w| (-3.0 * w).exp(), &MomentRequest::new(2)).unwrap();
        assert!((m[0] - 3.0).abs() / 3.0 < 1e-10);
        assert!((m[1] - 9.0).abs() / 9.0 < 1e-10);
    }

    #[test]
    fn moments_error_carries_best_estimate() {
        let req = MomentRequest::with_target(2, 1e-30);
        let err = lst_moments(exp_lst(1.0), &req).unwrap_err();
        match err {
            TransformError::Accuracy {
                order,
                best,
                achieved,
                target,
            } => {
                assert_eq!(order, 1);
                assert!((best - 1.0).abs() < 1e-6);
                assert!(achieved > target);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn busy_period_fixed_point_everywhere(
                lambda in 0.05f64..0.9,
                omega in 0.0f64..10.0,
            ) {
                let cfg = FixedPointConfig::default();
                let beta = exp_lst(1.0);
                let pi = busy_period_lst(&beta, lambda, omega, &cfg).unwrap();
                prop_assert!((0.0..=1.0).contains(&pi));
                let residual = (pi - beta(omega + lambda * (1.0 - pi))).abs();
                prop_assert!(residual < 10.0 * cfg.tolerance);
                let pi0 = busy_period_lst(&beta, lambda, 0.0, &cfg).unwrap();
                prop_assert!((pi0 - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn moment_request_rejects_bad_order() {
        assert!(lst_moments(exp_lst(1.0), &MomentRequest::new(4)).is_err());
        assert!(lst_moments(exp_lst(1.0), &MomentRequest::new(0)).is_err());
    }
}
