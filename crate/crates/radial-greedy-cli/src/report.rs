//! Plain-text invariant reports for `run` and the full `check` suite.
//!
//! Every line is `PASS <name> (measured ...)` or `FAIL <name> (...)`; the
//! caller maps any FAIL to exit code 2.

use radial_greedy::{
    convexity_slack, ellipticity_slack, lower_bound_slack, positive_window, rate2_sequence_oracle,
    rate_fit, residual_bound_check, CertificateOrigin, Dictionary, Functional, NormKind,
    RunResult, SolverConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Report {
    pub lines: Vec<String>,
    pub failed: usize,
}

impl Report {
    fn new() -> Self {
        Report {
            lines: Vec::new(),
            failed: 0,
        }
    }

    fn note(&mut self, text: String) {
        self.lines.push(text);
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        if passed {
            self.lines.push(format!("PASS {name} ({detail})"));
        } else {
            self.failed += 1;
            self.lines.push(format!("FAIL {name} ({detail})"));
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn text(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

/// Exact inner solves: enumerations / closed-form scales on energies with
/// quadratic structure. The stationarity identity is asserted only there.
fn is_exact_inner(e: &Functional, dict: &Dictionary) -> bool {
    let family_ok = matches!(
        dict,
        Dictionary::Basis(_) | Dictionary::Monomial(_) | Dictionary::Rank1(_)
    );
    let energy_ok = matches!(e, Functional::Quadratic(_) | Functional::OperatorLsq(_));
    family_ok && energy_ok
}

/// Runtime invariants of one finished run.
pub fn run_report(
    e: &Functional,
    dict: &Dictionary,
    result: &RunResult,
    reference_is_surrogate: bool,
) -> Report {
    let mut rep = Report::new();
    rep.note(format!(
        "termination: {} after {} iterations",
        result.termination,
        result.records.len()
    ));
    if let Some(last) = result.records.last() {
        rep.note(format!("final energy: {:.16e}", last.energy));
        if let Some(gap) = last.gap {
            let kind = if reference_is_surrogate {
                "reference-solve surrogate"
            } else {
                "exact minimizer"
            };
            rep.note(format!("final gap: {gap:.16e} (vs {kind})"));
        }
    }
    if matches!(e.space().norm_kind(), NormKind::DiscreteW1p { .. }) {
        rep.note(
            "note: grad_dual_norm column uses the W1p surrogate dual norm (report-only)".into(),
        );
    }

    // monotone energies and the per-record decrease bound
    let mut worst_mono = f64::INFINITY;
    let mut prev = e.evaluate(&e.space().zeros()).unwrap_or(0.0);
    for r in &result.records {
        let bound = 1e-12 * (1.0 + prev.abs());
        worst_mono = worst_mono.min(prev - r.energy + bound);
        prev = r.energy;
    }
    rep.check(
        "monotone-energy",
        worst_mono >= 0.0,
        format!("min slack {worst_mono:.3e}"),
    );
    let worst_rec = result
        .records
        .iter()
        .map(|r| r.decrease + 1e-12 * (1.0 + r.energy.abs()))
        .fold(f64::INFINITY, f64::min);
    rep.check(
        "decrease-nonnegative",
        worst_rec >= 0.0,
        format!("min slack {worst_rec:.3e}"),
    );

    // stack identity (progressive learning only)
    if !result.atoms.is_empty() {
        let mut sum = e.space().zeros();
        for atom in &result.atoms {
            match dict.realize(atom) {
                Ok(z) => sum = sum.add(&z),
                Err(err) => {
                    rep.check("stack-identity", false, format!("realize failed: {err}"));
                    break;
                }
            }
        }
        let dev = sum.sub(&result.final_iterate).norm();
        let tol = 1e-10 * (1.0 + result.final_iterate.norm());
        rep.check(
            "stack-identity",
            dev <= tol,
            format!("deviation {dev:.3e} tol {tol:.3e}"),
        );
    }

    // stationarity identity away from the gradient rounding floor
    if is_exact_inner(e, dict) {
        let scale = result
            .records
            .iter()
            .filter_map(|r| r.grad_dual_norm)
            .fold(0.0f64, f64::max);
        let floor = 1e-7 * scale;
        let mut worst: f64 = 0.0;
        let mut skipped = 0usize;
        for r in &result.records {
            let (Some(g), true) = (r.grad_dual_norm, r.step_norm > 0.0) else {
                continue;
            };
            if g < floor {
                skipped += 1;
                continue;
            }
            worst = worst.max(r.stationarity.abs() / (g * r.step_norm));
        }
        rep.check(
            "stationarity-identity",
            worst <= 1e-8,
            format!("max |<E'(u_m), step>| / (|E'|_* |step|) = {worst:.3e}, {skipped} records below the rounding floor unasserted"),
        );
    }

    // summability and the closed-form gap bound need an exact s = 2 certificate
    if let Ok(cert) = e.ellipticity_certificate(0, 0) {
        if cert.origin == CertificateOrigin::ExactEigen && is_exact_inner(e, dict) {
            let sum_sq: f64 = result.records.iter().map(|r| r.step_norm * r.step_norm).sum();
            let e_zero = e.evaluate(&e.space().zeros()).unwrap_or(0.0);
            let e_final = result.records.last().map_or(e_zero, |r| r.energy);
            let bound = (2.0 / cert.alpha) * (e_zero - e_final) + 1e-8;
            rep.check(
                "step-summability",
                sum_sq <= bound,
                format!("sum |step|^2 = {sum_sq:.6e} bound {bound:.6e}"),
            );
            if matches!(e, Functional::Quadratic(_)) {
                let mut worst: f64 = f64::NEG_INFINITY;
                let mut checked = false;
                for r in &result.records {
                    if let (Some(gap), Some(g)) = (r.gap, r.grad_dual_norm) {
                        checked = true;
                        let bound = g * g / (2.0 * cert.alpha);
                        worst = worst.max(gap - bound - 1e-10 * (1.0 + gap.abs()));
                    }
                }
                if checked {
                    rep.check(
                        "gap-dual-bound",
                        worst <= 0.0,
                        format!("max excess over |E'|^2/(2 alpha): {worst:.3e}"),
                    );
                }
            }
        }
    }

    // rate fit on [5, end] where gaps allow it
    if let Some(gaps) = result.gaps() {
        if let Some(window) = positive_window(&gaps, 5) {
            match rate_fit(&gaps, window) {
                Ok(r) => rep.note(format!(
                    "rate fit on [{}, {}]: c_fit {:.6e}, slope {:.3}, mu_hat {:.3e}, passed {}",
                    window.0, window.1, r.c_fit, r.loglog_slope, r.mu_hat, r.passed
                )),
                Err(err) => rep.note(format!("rate fit unavailable: {err}")),
            }
        }
        // empirical ratio gap/|E'|_* for families without the closed form
        if !matches!(e, Functional::Quadratic(_)) {
            let ratios: Vec<f64> = result
                .records
                .iter()
                .filter_map(|r| match (r.gap, r.grad_dual_norm) {
                    (Some(gap), Some(g)) if g > 0.0 && gap > 0.0 => Some(gap / g),
                    _ => None,
                })
                .collect();
            if let (Some(first), Some(last)) = (ratios.first(), ratios.last()) {
                rep.note(format!(
                    "empirical gap/|E'|_* ratio (unasserted): first {first:.3e}, last {last:.3e}"
                ));
            }
        }
    }

    // probe-pairing trend: should decay, no hard threshold
    if !result.atoms.is_empty() {
        if let Ok(probe) = residual_bound_check(result, e, dict, 20, 0xABCD) {
            let vals: Vec<f64> = probe.per_iteration.iter().map(|p| p.1).collect();
            if vals.len() >= 2 {
                let mid = vals[vals.len() / 2];
                rep.note(format!(
                    "probe pairing max_z |<E'(u_m), z>| trend: start {:.3e}, middle {mid:.3e}, end {:.3e}",
                    vals.first().unwrap(),
                    vals.last().unwrap()
                ));
            }
        }
    }

    rep
}

/// The `check` subcommand: sampled module invariants against the configured
/// problem. `inject_gradient_fault` perturbs the analytic gradient before the
/// finite-difference comparison (a fault-injection fixture).
pub fn check_suite(
    e: &Functional,
    dict: &Dictionary,
    solver: &SolverConfig,
    inject_gradient_fault: bool,
) -> Report {
    let mut rep = Report::new();

    // gradient vs central differences, 100 random points
    {
        let quadratic = matches!(e, Functional::Quadratic(_));
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        let mut failed = None;
        for _ in 0..100 {
            let u = e.space().random_vector(&mut rng);
            let g = match e.gradient(&u) {
                Ok(g) => g,
                Err(err) => {
                    failed = Some(err.to_string());
                    break;
                }
            };
            let fd = match e.finite_difference_gradient(&u, 1e-5) {
                Ok(fd) => fd,
                Err(err) => {
                    failed = Some(err.to_string());
                    break;
                }
            };
            let scale = g.coeffs().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (i, (a, b)) in g.coeffs().iter().zip(fd.coeffs()).enumerate() {
                let mut a = *a;
                if inject_gradient_fault && i == 0 {
                    a += 1e-3;
                }
                let err = (a - b).abs();
                max_abs = max_abs.max(err);
                max_rel = max_rel.max(err / (1.0 + scale));
            }
        }
        match failed {
            Some(err) => rep.check("gradient-fd", false, err),
            None => {
                let (measured, tol, what) = if quadratic {
                    (max_abs, 1e-8, "abs")
                } else {
                    (max_rel, 1e-5, "rel")
                };
                rep.check(
                    "gradient-fd",
                    measured <= tol,
                    format!("max {what} error {measured:.3e} tol {tol:.1e}"),
                );
            }
        }
    }

    let cert = match e.ellipticity_certificate(2000, 77) {
        Ok(c) => c,
        Err(err) => {
            rep.check("ellipticity-certificate", false, err.to_string());
            return rep;
        }
    };
    rep.note(format!(
        "certificate: alpha {:.6e}, s {}, origin {:?}",
        cert.alpha, cert.s, cert.origin
    ));

    match convexity_slack(e, 1000, 11) {
        Ok(r) => rep.check(
            "convexity-midpoint",
            r.min_slack >= -1e-10,
            format!("min slack {:.3e} over {} pairs", r.min_slack, r.samples),
        ),
        Err(err) => rep.check("convexity-midpoint", false, err.to_string()),
    }
    match ellipticity_slack(e, &cert, 1000, 12) {
        Ok(r) => rep.check(
            "ellipticity-lower-bound",
            r.min_slack >= -1e-10,
            format!("min slack {:.3e} over {} pairs", r.min_slack, r.samples),
        ),
        Err(err) => rep.check("ellipticity-lower-bound", false, err.to_string()),
    }
    if cert.origin == CertificateOrigin::ExactEigen && matches!(e, Functional::Quadratic(_)) {
        match lower_bound_slack(e, &cert, 1000, 13) {
            Ok(r) => rep.check(
                "strong-convexity-lower-bound",
                r.min_slack >= -1e-10,
                format!("min slack {:.3e} over {} pairs", r.min_slack, r.samples),
            ),
            Err(err) => rep.check("strong-convexity-lower-bound", false, err.to_string()),
        }
    }

    match e.exact_minimizer() {
        Ok(Some(u_star)) => {
            let data_norm = match e {
                Functional::Quadratic(q) => q.rhs().norm(),
                Functional::OperatorLsq(l) => l.data().iter().map(|x| x * x).sum::<f64>().sqrt(),
                Functional::PDirichlet(_) => 0.0,
            };
            match e.gradient(&u_star) {
                Ok(g) => {
                    let gn = g.dual_norm();
                    let tol = 1e-10 * (1.0 + data_norm);
                    rep.check(
                        "first-order-optimality",
                        gn <= tol,
                        format!("|E'(u*)|_* = {gn:.3e} tol {tol:.3e}"),
                    );
                }
                Err(err) => rep.check("first-order-optimality", false, err.to_string()),
            }
        }
        Ok(None) => rep.note("first-order-optimality: no closed-form minimizer (skipped)".into()),
        Err(err) => rep.check("first-order-optimality", false, err.to_string()),
    }

    match dict.cone_check(200, 21) {
        Ok(r) => rep.check(
            "cone-law",
            r.passed,
            format!("max relative deviation {:.3e} over {} atoms", r.max_rel_deviation, r.samples),
        ),
        Err(err) => rep.check("cone-law", false, err.to_string()),
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut worst = f64::INFINITY;
        let mut failed = None;
        for _ in 0..20 {
            let u = e.space().random_vector(&mut rng);
            let e_u = match e.evaluate(&u) {
                Ok(v) => v,
                Err(err) => {
                    failed = Some(err.to_string());
                    break;
                }
            };
            match dict.inner_minimize(e, &u, &solver.inner) {
                Ok(sol) => worst = worst.min(e_u - sol.value + 1e-12 * (1.0 + e_u.abs())),
                Err(err) => {
                    failed = Some(err.to_string());
                    break;
                }
            }
        }
        match failed {
            Some(err) => rep.check("inner-no-increase", false, err),
            None => rep.check(
                "inner-no-increase",
                worst >= 0.0,
                format!("min slack {worst:.3e} over 20 points"),
            ),
        }
    }

    {
        let mut short = solver.clone();
        short.max_iters = short.max_iters.min(60);
        match radial_greedy::progressive_learning(e, dict, &short, None) {
            Ok(run) => {
                let mut prev = 0.0;
                let mut worst = f64::INFINITY;
                for r in &run.records {
                    worst = worst.min(prev - r.energy + 1e-12 * (1.0 + prev.abs()));
                    prev = r.energy;
                }
                rep.check(
                    "short-run-monotone",
                    worst >= 0.0,
                    format!("min slack {worst:.3e} over {} iterations", run.records.len()),
                );
            }
            Err(err) => rep.check("short-run-monotone", false, err.to_string()),
        }
    }

    {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut worst = f64::NEG_INFINITY;
        let mut ok = true;
        for _ in 0..100 {
            let mu: f64 = rand::Rng::gen_range(&mut rng, 1e-3..10.0);
            let lambda_1: f64 = rand::Rng::gen_range(&mut rng, 1e-6..0.99 / mu);
            match rate2_sequence_oracle(mu, lambda_1, 10_000) {
                Ok(b) => worst = worst.max(b - 2.0 * lambda_1.max(1.0 / mu)),
                Err(_) => ok = false,
            }
        }
        rep.check(
            "rate2-oracle-bound",
            ok && worst <= 1e-12,
            format!("max excess over 2 max(l1, 1/mu): {worst:.3e}"),
        );
    }

    rep
}

/// The two-method comparison needs the steepest-descent baseline; report why
/// it is unavailable otherwise.
pub fn baseline_applicable(e: &Functional) -> Result<(), String> {
    if e.space().is_inner_product() {
        Ok(())
    } else {
        Err(format!(
            "steepest descent needs an inner-product norm; the configured space uses {:?}",
            e.space().norm_kind()
        ))
    }
}
