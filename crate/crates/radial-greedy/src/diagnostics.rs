//! Executable convergence theory: O(1/m) rate fits, the quadratic-decrement
//! sequence oracle, residual bound probes, reference solves, and the sampled
//! inequality checks used by the invariant report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{line_search_scale, Dictionary};
use crate::error::{Error, Result};
use crate::functional::{EllipticityCertificate, Functional};
use crate::solver::RunResult;
use crate::space::{pairing, Vector};

/// Outcome of fitting gaps against the `c/m` envelope on a window.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Smallest `c` with `gap_m <= c/m` on the window, i.e. `max m * gap_m`.
    pub c_fit: f64,
    /// Least-squares slope of `log gap` against `log m`.
    pub loglog_slope: f64,
    pub window: (usize, usize),
    /// `min (gap_m - gap_{m+1}) / gap_m^2` over consecutive pairs in the window.
    pub mu_hat: f64,
    pub passed: bool,
}

/// Fit the recorded gaps (`gaps[i]` is the gap at iteration `m = i + 1`)
/// against the `O(1/m)` envelope on the inclusive window `[m_lo, m_hi]`.
/// Gaps must be strictly positive there; trim converged tails first, e.g.
/// with [`positive_window`].
pub fn rate_fit(gaps: &[f64], window: (usize, usize)) -> Result<RateReport> {
    let (lo, hi) = window;
    if lo < 1 || hi < lo {
        return Err(Error::EmptyWindow);
    }
    if hi > gaps.len() {
        return Err(Error::InvalidParameter(format!(
            "window [{lo}, {hi}] exceeds the {} recorded gaps",
            gaps.len()
        )));
    }
    let gap = |m: usize| gaps[m - 1];
    for m in lo..=hi {
        if !(gap(m) > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gap at m = {m} is not strictly positive"
            )));
        }
    }

    let mut c_fit = 0.0f64;
    for m in lo..=hi {
        c_fit = c_fit.max(m as f64 * gap(m));
    }

    let loglog_slope = if hi == lo {
        0.0
    } else {
        let pts: Vec<(f64, f64)> = (lo..=hi).map(|m| ((m as f64).ln(), gap(m).ln())).collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };

    let mut mu_hat = f64::INFINITY;
    for m in lo..hi {
        mu_hat = mu_hat.min((gap(m) - gap(m + 1)) / (gap(m) * gap(m)));
    }

    let passed = c_fit.is_finite() && (loglog_slope <= -0.95 || gap(hi) <= 1e-12);
    Ok(RateReport {
        c_fit,
        loglog_slope,
        window,
        mu_hat,
        passed,
    })
}

/// The window `[m_lo, last m with a strictly positive gap]`, or `None` when
/// no such window exists. Gaps of convergent runs are non-increasing, so this
/// trims exactly the converged tail.
pub fn positive_window(gaps: &[f64], m_lo: usize) -> Option<(usize, usize)> {
    let hi = gaps.iter().rposition(|&g| g > 0.0)? + 1;
    let lo = m_lo.max(1);
    if hi < lo {
        return None;
    }
    (lo..=hi).all(|m| gaps[m - 1] > 0.0).then_some((lo, hi))
}

/// Generate the extremal quadratic-decrement sequence
/// `l_{m+1} = l_m - mu * l_m^2` and return `max m * l_m` for `m <= n`.
/// The documented bound is `2 * max(l_1, 1/mu)`; any sequence whose
/// decrements dominate `mu * l_m^2` decays at least this fast.
pub fn rate2_sequence_oracle(mu: f64, lambda_1: f64, n: usize) -> Result<f64> {
    if !(mu > 0.0) || !(lambda_1 > 0.0) {
        return Err(Error::InvalidParameter(
            "the decrement oracle needs mu > 0 and lambda_1 > 0".into(),
        ));
    }
    if !(mu * lambda_1 < 1.0) {
        return Err(Error::InvalidParameter(
            "mu * lambda_1 < 1 is required to keep the sequence positive".into(),
        ));
    }
    if n < 1 {
        return Err(Error::InvalidParameter("need at least one term".into()));
    }
    let mut lambda = lambda_1;
    let mut bound = 0.0f64;
    for m in 1..=n {
        bound = bound.max(m as f64 * lambda);
        lambda -= mu * lambda * lambda;
        debug_assert!(lambda > 0.0);
    }
    Ok(bound)
}

/// Per-iteration residual bound data: at iteration `m`, the largest probe
/// pairing `max_z |<E'(u_{m-1}), z>|` over unit-norm dictionary realizations
/// and the smallest constant with
/// `|<E'(u_{m-1}), z>| <= C |u_m - u_{m-1}|^2 |z|`.
#[derive(Debug, Clone)]
pub struct ResidualBoundReport {
    /// `(m, max probe pairing, C_m)` per recorded iteration.
    pub per_iteration: Vec<(usize, f64, f64)>,
    pub c_max: f64,
    /// True when some later `C_m` exceeds an earlier one by more than 10x.
    pub growth_flag: bool,
    pub probes: usize,
}

pub fn residual_bound_check(
    run: &RunResult,
    e: &Functional,
    dict: &Dictionary,
    n_probe: usize,
    seed: u64,
) -> Result<ResidualBoundReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(n_probe);
    let mut guard = 0;
    while probes.len() < n_probe {
        let atom = dict.random_atom(&mut rng);
        let z = dict.realize(&atom)?;
        let n = z.norm();
        if n > 1e-12 {
            probes.push(z.scaled(1.0 / n));
        }
        guard += 1;
        if guard > 100 * n_probe.max(1) {
            return Err(Error::NumericalFailure(
                "could not sample non-degenerate probe realizations".into(),
            ));
        }
    }

    let mut per_iteration = Vec::with_capacity(run.records.len());
    let mut c_max = 0.0f64;
    let mut running_min = f64::INFINITY;
    let mut growth_flag = false;
    let mut u_prev = e.space().zeros();
    for (record, step) in run.records.iter().zip(&run.steps) {
        let grad = e.gradient(&u_prev)?;
        let mut lhs = 0.0f64;
        for z in &probes {
            lhs = lhs.max(pairing(&grad, z)?.abs());
        }
        let c_m = if record.step_norm > 0.0 {
            lhs / (record.step_norm * record.step_norm)
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if c_m.is_finite() {
            c_max = c_max.max(c_m);
            if c_m > 10.0 * running_min {
                growth_flag = true;
            }
            running_min = running_min.min(c_m);
        } else {
            growth_flag = true;
        }
        per_iteration.push((record.m, lhs, c_m));
        u_prev = u_prev.add(step);
    }
    Ok(ResidualBoundReport {
        per_iteration,
        c_max,
        growth_flag,
        probes: probes.len(),
    })
}

const REFERENCE_BUDGET: usize = 200_000;

/// Full-space reference minimizer by gradient descent with exact line
/// searches, run until the euclidean norm of the gradient coefficients falls
/// to `tol`. Used as the `u*` surrogate when no closed form exists.
pub fn reference_minimize(e: &Functional, tol: f64) -> Result<Vector> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("reference tolerance must be positive".into()));
    }
    let space = e.space();
    let mut u = space.zeros();
    for _ in 0..REFERENCE_BUDGET {
        let grad = e.gradient(&u)?;
        let gn = grad.coeffs().iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn <= tol {
            return Ok(u);
        }
        let direction = space.vector(grad.coeffs().iter().map(|g| -g / gn).collect())?;
        let lambda = line_search_scale(e, &u, &direction)?;
        if lambda == 0.0 {
            return Ok(u);
        }
        u = u.axpy(lambda, &direction);
    }
    Err(Error::BudgetExceeded(format!(
        "reference solve did not reach gradient norm {tol} within {REFERENCE_BUDGET} iterations"
    )))
}

/// Minimum slack of a sampled inequality; non-negative means the inequality
/// held on every sample.
#[derive(Debug, Clone)]
pub struct SampleReport {
    pub samples: usize,
    pub min_slack: f64,
}

/// Midpoint convexity: `1/2 E(x) + 1/2 E(y) - E((x+y)/2)` over random pairs.
pub fn convexity_slack(e: &Functional, samples: usize, seed: u64) -> Result<SampleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = e.space();
    let mut min_slack = f64::INFINITY;
    for _ in 0..samples {
        let x = space.random_vector(&mut rng);
        let y = space.random_vector(&mut rng);
        let mid = x.add(&y).scaled(0.5);
        let slack = 0.5 * e.evaluate(&x)? + 0.5 * e.evaluate(&y)? - e.evaluate(&mid)?;
        min_slack = min_slack.min(slack);
    }
    Ok(SampleReport { samples, min_slack })
}

/// Ellipticity: `<E'(x) - E'(y), x - y> - alpha |x - y|^s` over random pairs.
pub fn ellipticity_slack(
    e: &Functional,
    cert: &EllipticityCertificate,
    samples: usize,
    seed: u64,
) -> Result<SampleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = e.space();
    let mut min_slack = f64::INFINITY;
    for _ in 0..samples {
        let x = space.random_vector(&mut rng);
        let y = space.random_vector(&mut rng);
        let d = x.sub(&y);
        let gx = e.gradient(&x)?;
        let gy = e.gradient(&y)?;
        let lhs = pairing(&gx, &d)? - pairing(&gy, &d)?;
        min_slack = min_slack.min(lhs - cert.alpha * d.norm().powf(cert.s));
    }
    Ok(SampleReport { samples, min_slack })
}

/// The strong-convexity lower bound
/// `E(x) - E(y) - <E'(y), x - y> - (alpha/s) |x - y|^s` over random pairs.
pub fn lower_bound_slack(
    e: &Functional,
    cert: &EllipticityCertificate,
    samples: usize,
    seed: u64,
) -> Result<SampleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = e.space();
    let mut min_slack = f64::INFINITY;
    for _ in 0..samples {
        let x = space.random_vector(&mut rng);
        let y = space.random_vector(&mut rng);
        let d = x.sub(&y);
        let gy = e.gradient(&y)?;
        let slack = e.evaluate(&x)? - e.evaluate(&y)?
            - pairing(&gy, &d)?
            - cert.alpha / cert.s * d.norm().powf(cert.s);
        min_slack = min_slack.min(slack);
    }
    Ok(SampleReport { samples, min_slack })
}

/// Worst absolute and norm-relative deviation between the analytic gradient
/// and the central-difference oracle over random points.
pub fn gradient_check(
    e: &Functional,
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = e.space();
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for _ in 0..samples {
        let u = space.random_vector(&mut rng);
        let g = e.gradient(&u)?;
        let fd = e.finite_difference_gradient(&u, step)?;
        let scale = g.coeffs().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in g.coeffs().iter().zip(fd.coeffs()) {
            let err = (a - b).abs();
            max_abs = max_abs.max(err);
            max_rel = max_rel.max(err / (1.0 + scale));
        }
    }
    Ok((max_abs, max_rel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::BasisCone;
    use crate::functional::{PDirichlet, Quadratic, QuadraticMatrix};
    use crate::solver::{progressive_learning, SolverConfig};
    use crate::space::{Grid, Space};
    use nalgebra::DMatrix;

    #[test]
    fn rate_fit_harmonic_sequence_exact_values() {
        let gaps: Vec<f64> = (1..=100).map(|m| 1.0 / m as f64).collect();
        let r = rate_fit(&gaps, (1, 100)).unwrap();
        assert!((r.c_fit - 1.0).abs() <= 1e-12);
        assert!((r.loglog_slope + 1.0).abs() <= 1e-12);
        assert!((r.mu_hat - 0.5).abs() <= 1e-12);
        assert!(!r.passed || r.loglog_slope <= -0.95);
        assert!(r.passed);
    }

    #[test]
    fn rate_fit_geometric_passes_and_constant_fails() {
        let geo: Vec<f64> = (1..=60).map(|m| 0.5f64.powi(m)).collect();
        let r = rate_fit(&geo, (1, 60)).unwrap();
        assert!(r.loglog_slope < -1.0);
        assert!(r.passed);

        let flat = vec![0.25; 50];
        let r = rate_fit(&flat, (5, 50)).unwrap();
        assert!(r.loglog_slope.abs() <= 1e-12);
        assert!(!r.passed);
    }

    #[test]
    fn rate_fit_window_errors() {
        let gaps = vec![1.0, 0.5, 0.0];
        assert!(matches!(rate_fit(&gaps, (2, 1)), Err(Error::EmptyWindow)));
        assert!(rate_fit(&gaps, (1, 3)).is_err()); // zero gap inside
        assert!(rate_fit(&gaps, (1, 4)).is_err()); // beyond the data
    }

    #[test]
    fn positive_window_trims_converged_tail() {
        let gaps = vec![1.0, 0.1, 1e-3, 0.0, 0.0];
        assert_eq!(positive_window(&gaps, 1), Some((1, 3)));
        assert_eq!(positive_window(&gaps, 5), None);
        assert_eq!(positive_window(&[0.0, 0.0], 1), None);
    }

    #[test]
    fn rate2_oracle_hand_sequences() {
        // mu = 1, l1 = 0.5: 0.5, 0.25, 0.1875, ...
        let b = rate2_sequence_oracle(1.0, 0.5, 3).unwrap();
        assert!((b - 3.0 * 0.1875).abs() <= 1e-15);

        let b = rate2_sequence_oracle(0.5, 1.0, 1000).unwrap();
        assert!(b.is_finite());
        assert!(b <= 4.0, "bound {b} exceeds 2 * max(1, 2)");

        // scaling limit: tiny lambda_1 gives a tiny bound
        let b = rate2_sequence_oracle(0.5, 1e-12, 1000).unwrap();
        assert!(b <= 2e-9);
    }

    #[test]
    fn rate2_oracle_domain_checks() {
        assert!(rate2_sequence_oracle(0.0, 0.5, 10).is_err());
        assert!(rate2_sequence_oracle(2.0, 1.0, 10).is_err());
        assert!(rate2_sequence_oracle(0.5, 0.0, 10).is_err());
    }

    #[test]
    fn rate2_bound_holds_over_admissible_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        use rand::Rng;
        for _ in 0..100 {
            let mu: f64 = rng.gen_range(1e-3..10.0);
            let lambda_1: f64 = rng.gen_range(1e-6..0.99 / mu);
            let b = rate2_sequence_oracle(mu, lambda_1, 10_000).unwrap();
            assert!(b <= 2.0 * lambda_1.max(1.0 / mu) * (1.0 + 1e-12));
        }
    }

    fn diag_quadratic(diag: &[f64], b: &[f64]) -> Functional {
        let n = diag.len();
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 });
        let s = Space::euclidean(n).unwrap();
        Functional::Quadratic(
            Quadratic::new(QuadraticMatrix::Dense(a), s.vector(b.to_vec()).unwrap()).unwrap(),
        )
    }

    #[test]
    fn residual_bound_on_two_step_trace() {
        let e = diag_quadratic(&[2.0, 1.0], &[2.0, 1.0]);
        let dict = Dictionary::Basis(BasisCone::coordinate(e.space()).unwrap());
        let run = progressive_learning(&e, &dict, &SolverConfig::default(), None).unwrap();
        let report = residual_bound_check(&run, &e, &dict, 10, 3).unwrap();
        // finite constants on the productive steps; the trailing fixpoint
        // record has a zero step and zero gradient
        assert!(report.c_max.is_finite());
        assert!(report.per_iteration.iter().take(2).all(|(_, _, c)| c.is_finite()));
        let last = report.per_iteration.last().unwrap();
        assert_eq!(last.2, 0.0);
    }

    #[test]
    fn residual_bound_probe_values_match_hand_formula() {
        let e = diag_quadratic(&[2.0, 1.0], &[2.0, 1.0]);
        let dict = Dictionary::Basis(BasisCone::coordinate(e.space()).unwrap());
        let run = progressive_learning(&e, &dict, &SolverConfig::default(), None).unwrap();
        let report = residual_bound_check(&run, &e, &dict, 50, 3).unwrap();
        // at m = 1 the gradient at u_0 = 0 is -b; unit probes are +-e_i, so
        // the max pairing is max |b_i| = 2 and C_1 = 2 / step^2 = 2
        let (m1, lhs1, c1) = report.per_iteration[0];
        assert_eq!(m1, 1);
        assert!((lhs1 - 2.0).abs() <= 1e-12);
        assert!((c1 - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn reference_minimize_agrees_with_exact_solve() {
        let e = diag_quadratic(&[3.0, 1.0, 0.5], &[1.0, -1.0, 0.25]);
        let u_star = e.exact_minimizer().unwrap().unwrap();
        let u_ref = reference_minimize(&e, 1e-10).unwrap();
        assert!(u_ref.sub(&u_star).norm() <= 1e-8);
    }

    #[test]
    fn reference_minimize_pdirichlet_zero_load() {
        let space = Space::discrete_w1p(3.0, Grid::line(5).unwrap()).unwrap();
        let phi = space.dual(vec![0.0; 5]).unwrap();
        let e = Functional::PDirichlet(PDirichlet::new(3.0, phi).unwrap());
        let u = reference_minimize(&e, 1e-9).unwrap();
        assert!(u.norm() <= 1e-9);
    }

    #[test]
    fn reference_minimize_is_idempotent_to_tolerance() {
        let space = Space::discrete_w1p(3.0, Grid::line(5).unwrap()).unwrap();
        let phi = space.dual(vec![0.3, -0.1, 0.2, 0.0, 0.4]).unwrap();
        let e = Functional::PDirichlet(PDirichlet::new(3.0, phi).unwrap());
        let u1 = reference_minimize(&e, 1e-8).unwrap();
        // restarting from the solution must not move far: the gradient there
        // is already below tolerance
        let g = e.gradient(&u1).unwrap();
        let gn = g.coeffs().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(gn <= 1e-8);
    }

    #[test]
    fn sampled_inequalities_hold_for_quadratic() {
        let e = diag_quadratic(&[4.0, 2.0, 1.0], &[1.0, 0.0, -1.0]);
        let cert = e.ellipticity_certificate(0, 0).unwrap();
        let conv = convexity_slack(&e, 300, 5).unwrap();
        assert!(conv.min_slack >= -1e-12);
        let ell = ellipticity_slack(&e, 300, 6).unwrap();
        assert!(ell.min_slack >= -1e-10);
        let low = lower_bound_slack(&e, &cert, 300, 7).unwrap();
        assert!(low.min_slack >= -1e-10);
    }

    #[test]
    fn gradient_check_quadratic_absolute_accuracy() {
        let e = diag_quadratic(&[2.0, 1.0, 0.5], &[1.0, 2.0, 3.0]);
        let (max_abs, _) = gradient_check(&e, 50, 1e-5, 8).unwrap();
        assert!(max_abs <= 1e-8);
    }

    fn ellipticity_slack(
        e: &Functional,
        samples: usize,
        seed: u64,
    ) -> Result<SampleReport> {
        let cert = e.ellipticity_certificate(2000, 77)?;
        super::ellipticity_slack(e, &cert, samples, seed)
    }
}
