//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use wprox_core::barenblatt::BarenblattParams;
use wprox_core::flow::{exp_formula_probe, exponential_decay_check, rescaled_flow, run_paired_flow, FlowOptions, FlowStart};
use wprox_core::functionals::{lambda_tau, moreau_yosida, moreau_yosida_numeric, FunctionalSpec};
use wprox_core::measure::Measure;
use wprox_core::proximal::{jko_step, prox_barenblatt, theta_residual, theta_tau, SolverOptions};
use wprox_core::random::{random_atomic, random_quantile, suite_rng};
use wprox_core::transport::{pushforward_affine, w2_distance};
use wprox_core::verify::{
    banach_linf_counterexample, generalized_convexity_check, hwi_check, quadratic_contraction_value, random_gronwall_suite,
    talagrand_check, PairStep, Tolerances,
};

const SEED: u64 = 20240607;

type Outcome = Result<String, String>;

/// Name, check, and wall-clock limit.
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quadratic_sharp_contraction() -> Outcome {
    let mut rng = suite_rng(SEED, 1);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..1000 {
        let mu = Measure::Atomic(random_atomic(&mut rng, 6, 5.0));
        let nu = Measure::Atomic(random_atomic(&mut rng, 6, 5.0));
        for lambda in [-0.5, 0.0, 1.0, 2.0] {
            let tau: f64 = rng.random_range(0.01..1.99);
            let step = PairStep::quadratic(lambda, &mu, &nu, tau).map_err(|e| e.to_string())?;
            let (before, after) = (step.lambda_before(), step.lambda_after());
            let expected =
                quadratic_contraction_value(lambda, tau, step.w_mu_nu.powi(2), step.energy_mu, step.energy_nu);
            let scale = before.abs() + after.abs();
            for side in [after - before, step.full_rhs()] {
                worst = worst.max((side - expected).abs() / scale.max(f64::MIN_POSITIVE));
            }
            cases += 1;
        }
    }
    ensure(
        worst <= Tolerances::CLOSED_FORM,
        format!("{cases} pairs, max |side - closed form| / (L_before + L_after) = {worst:.2e} (tol 1e-10)"),
    )
}

fn moreau_yosida_closed_form() -> Outcome {
    let mut rng = suite_rng(SEED, 2);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..10 {
        let mu = random_quantile(&mut rng, 512, 1.0);
        for lambda in [-0.5, 0.0, 1.0, 2.0] {
            let tau = rng.random_range(0.05..1.5);
            let f = FunctionalSpec::quadratic(lambda).map_err(|e| e.to_string())?;
            let closed = moreau_yosida(&f, &Measure::Quantile(mu.clone()), tau, &opts).map_err(|e| e.to_string())?;
            let numeric = moreau_yosida_numeric(&f, &mu, tau, &opts).map_err(|e| e.to_string())?;
            let err = (numeric - closed).abs();
            let rel = if closed == 0.0 { err } else { err / closed.abs() };
            worst = worst.max(rel);
            cases += 1;
        }
    }
    ensure(worst <= 1e-8, format!("{cases} envelopes on n = 512, max relative error {worst:.2e} (tol 1e-8)"))
}

fn sharp_convexity() -> Outcome {
    let mut rng = suite_rng(SEED, 3);
    let alphas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut worst: f64 = 0.0;
    let mut sharper_max: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let mu = Measure::Atomic(random_atomic(&mut rng, 6, 5.0));
        let lambda = rng.random_range(0.1..3.0);
        let tau = rng.random_range(0.01..2.0);
        let f = FunctionalSpec::quadratic(lambda).map_err(|e| e.to_string())?;
        for r in generalized_convexity_check(&f, &mu, tau, &alphas, None).map_err(|e| e.to_string())? {
            if !r.passed() {
                return Err(format!("{} residual {:.2e} exceeds {:.2e}", r.name, r.residual, r.tolerance));
            }
            worst = worst.max(r.residual.abs());
        }
        let sharper = lambda_tau(lambda, tau).map_err(|e| e.to_string())? * (1.0 + 1e-3);
        for r in generalized_convexity_check(&f, &mu, tau, &alphas, Some(sharper)).map_err(|e| e.to_string())? {
            if r.residual >= -r.tolerance {
                return Err(format!("{} with lambda_tau (1 + 1e-3): residual {:.2e} not below -tol", r.name, r.residual));
            }
            sharper_max = sharper_max.max(r.residual + r.tolerance);
        }
    }
    ensure(
        true,
        format!("max |residual| {worst:.2e}; with lambda_tau (1 + 1e-3) every residual < -tol (max residual + tol {sharper_max:.2e})"),
    )
}

fn talagrand_hwi_equalities() -> Outcome {
    let mut rng = suite_rng(SEED, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mu = Measure::Atomic(random_atomic(&mut rng, 6, 5.0));
        let lambda = rng.random_range(0.05..3.0);
        let tau = rng.random_range(0.01..2.0);
        let f = FunctionalSpec::quadratic(lambda).map_err(|e| e.to_string())?;
        for r in [talagrand_check(&f, &mu, tau), hwi_check(&f, &mu, tau)] {
            let r = r.map_err(|e| e.to_string())?;
            let scale = (r.lhs.abs() + r.rhs.abs()).max(1.0);
            if r.residual.abs() > Tolerances::CLOSED_FORM * scale {
                return Err(format!("{}: residual {:.2e}", r.name, r.residual));
            }
            worst = worst.max(r.residual.abs() / scale);
        }
    }
    ensure(true, format!("1000 instances, max |residual| / max(|lhs| + |rhs|, 1) = {worst:.2e} (tol 1e-10)"))
}

fn barenblatt_invariance() -> Outcome {
    let opts = SolverOptions::default();
    let n = 512;
    let mut parts = Vec::new();
    let mut ok = true;
    for p in [0.6, 1.0, 2.0] {
        let start = Instant::now();
        let params = BarenblattParams::new(p).map_err(|e| e.to_string())?;
        let sigma = params.profile(1.0, n).map_err(|e| e.to_string())?;
        let f = FunctionalSpec::renyi(p).map_err(|e| e.to_string())?;
        let numeric = jko_step(&f, &sigma, 0.05, &opts).map_err(|e| e.to_string())?;
        let exact = prox_barenblatt(&params, 1.0, 0.05, n).map_err(|e| e.to_string())?;
        let d = w2_distance(&numeric.prox_point, &exact.prox_point);
        let elapsed = start.elapsed();
        ok &= d <= 10.0 / n as f64 && elapsed < Duration::from_secs(60);
        parts.push(format!("p = {p}: W2 = {d:.2e} in {elapsed:.2?}"));
    }
    ensure(ok, format!("{} (bound 10/n = {:.4})", parts.join(", "), 10.0 / n as f64))
}

fn theta_bounds() -> Outcome {
    let mut rng = suite_rng(SEED, 6);
    let mut worst_residual: f64 = 0.0;
    for _ in 0..10_000 {
        let r = rng.random_range(1e-3..10.0);
        let t = r + rng.random_range(0.0..10.0);
        let tau = rng.random_range(1e-4..2.0);
        let beta = rng.random_range(0.01..0.99);
        let theta = theta_tau(t, beta, tau).map_err(|e| e.to_string())?;
        let shift = theta - t;
        // Subtracting `t` costs a few ulps of `theta`.
        let slack = 4.0 * f64::EPSILON * theta;
        let lower = r / (r + tau) * tau;
        if !(lower <= shift + slack && shift <= tau + slack) {
            return Err(format!("r = {r}, t = {t}, tau = {tau}, beta = {beta}: shift {shift} outside [{lower}, {tau}]"));
        }
        worst_residual = worst_residual.max(theta_residual(t, beta, tau, theta));
    }
    ensure(
        worst_residual <= Tolerances::THETA,
        format!("10^4 cases within bounds, max root residual {worst_residual:.2e} (tol 1e-13)"),
    )
}

fn discrete_gronwall() -> Outcome {
    let mut rng = suite_rng(SEED, 7);
    let summary = random_gronwall_suite(1000, &mut rng).map_err(|e| e.to_string())?;
    ensure(
        summary.n_failed == 0,
        format!("{} sequences, {} violations, max violation {:.2e}", summary.n_checked, summary.n_failed, summary.max_violation),
    )
}

fn banach_counterexample() -> Outcome {
    let r = banach_linf_counterexample();
    let ok = r.checks.iter().all(|c| c.passed()) && r.distance_before < r.distance_after && !r.is_contraction;
    ensure(
        ok,
        format!(
            "J(a) = ({:.10}, {:.10}), J(b) = ({:.10}, {:.10}), {} < {}",
            r.j_a[0], r.j_a[1], r.j_b[0], r.j_b[1], r.distance_before, r.distance_after
        ),
    )
}

fn rescaled_flow_convergence() -> Outcome {
    let (p, tau, steps, n) = (2.0, 0.02, 300, 512);
    let opts = FlowOptions::default();
    let params = BarenblattParams::new(p).map_err(|e| e.to_string())?;
    let nu0 = params.profile(1.0, n).and_then(|q| q.affine(1.0, 0.5)).map_err(|e| e.to_string())?;
    let trace = rescaled_flow(p, &nu0, 1.0, tau, steps, &opts).map_err(|e| e.to_string())?;
    if let Some(f) = &trace.trace.failure {
        return Err(format!("flow failed: {f}"));
    }
    let tol = Tolerances::SOLVER_FACTOR * opts.solver.tolerance(n);
    let records = &trace.records;
    let max_increase = records.windows(2).map(|w| w[1].w2_to_profile - w[0].w2_to_profile).fold(f64::NEG_INFINITY, f64::max);
    let k = trace.constant.k;
    let first = records[0].scaled_distance;
    let budget = first + tau.sqrt() * k;
    let max_scaled = records.iter().map(|r| r.scaled_distance).fold(0.0, f64::max);
    let bound_holds = records.iter().all(|r| r.w2_to_profile.powi(2) <= r.bound_sq);
    ensure(
        records.len() == steps && max_increase <= tol && max_scaled <= budget && bound_holds,
        format!(
            "max step increase {max_increase:.2e} (tol {tol:.2e}); scaled distance max {max_scaled:.7} <= {first:.7} + sqrt(tau) K = {budget:.7}; K = {k:.4} (A = {:.4} from {}, B = {:.4}); squared bound holds: {bound_holds}",
            trace.constant.a, trace.constant.a_source, trace.constant.b
        ),
    )
}

fn translation_dichotomy() -> Outcome {
    let (tau, steps, n, x0) = (0.02, 60, 256, 0.5);
    let opts = FlowOptions { force_numeric: true, ..FlowOptions::default() };
    let mut parts = Vec::new();
    for p in [0.6, 1.0, 2.0] {
        let f = FunctionalSpec::renyi(p).map_err(|e| e.to_string())?;
        let mu = Measure::Quantile(BarenblattParams::new(p).and_then(|b| b.profile(1.0, n)).map_err(|e| e.to_string())?);
        let nu = pushforward_affine(&mu, 1.0, x0).map_err(|e| e.to_string())?;
        let trace = run_paired_flow(&f, &FlowStart::Measure(mu), &FlowStart::Measure(nu), tau, steps, &opts)
            .map_err(|e| e.to_string())?;
        if let Some(e) = &trace.failure {
            return Err(format!("p = {p}: {e}"));
        }
        let dev = trace.records.iter().map(|r| (r.w2_ref.unwrap() - x0).abs()).fold(0.0, f64::max);
        let lam: Vec<f64> = trace.records.iter().map(|r| r.lambda_tau_pair.unwrap()).collect();
        let strict = lam[1..].windows(2).all(|w| w[1] < w[0]);
        if dev > 1e-6 || !strict {
            return Err(format!("p = {p}: W2 deviation {dev:.2e}, Lambda strictly decreasing: {strict}"));
        }
        parts.push(format!("p = {p}: W2 deviation {dev:.1e}"));
    }
    ensure(true, format!("{steps} steps, Lambda strictly decreasing from step 1; {}", parts.join(", ")))
}

fn exponential_decay() -> Outcome {
    let f = FunctionalSpec::quadratic(1.0).map_err(|e| e.to_string())?;
    let r = exponential_decay_check(&f, &Measure::dirac(1.0), &Measure::dirac(2.0), 0.1, 100, &FlowOptions::default())
        .map_err(|e| e.to_string())?;
    let failed = r.step_checks.iter().chain(&r.decay_checks).filter(|c| !c.passed()).count();
    ensure(failed == 0, format!("{} checks, {failed} violations", r.n_checked))
}

fn exponential_formula() -> Outcome {
    let f = FunctionalSpec::quadratic(1.0).map_err(|e| e.to_string())?;
    let ns: Vec<usize> = (0..=10).map(|k| 1 << k).collect();
    let r = exp_formula_probe(&f, &Measure::dirac(1.0), 1.0, &ns, &FlowOptions::default()).map_err(|e| e.to_string())?;
    let limit = (-1.0f64).exp();
    let mut worst: f64 = 0.0;
    for row in r.rows.iter().filter(|row| row.n >= 8) {
        let gap = (row.scale.unwrap() - limit).abs();
        if gap > 1.0 / row.n as f64 {
            return Err(format!("n = {}: gap {gap:.3e} > 1/n", row.n));
        }
        worst = worst.max(gap * row.n as f64);
    }
    let last = r.rows.last().unwrap();
    ensure(
        true,
        format!("n = {}: scale {:.9} vs e^-1 = {limit:.9}; max n |gap| = {worst:.4}", last.n, last.scale.unwrap()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("quadratic sharp contraction", quadratic_sharp_contraction, Some(Duration::from_secs(5))),
        ("Moreau-Yosida closed form", moreau_yosida_closed_form, Some(Duration::from_secs(30))),
        ("sharp lambda_tau-convexity", sharp_convexity, None),
        ("Talagrand and HWI equalities", talagrand_hwi_equalities, None),
        ("Barenblatt invariance", barenblatt_invariance, Some(Duration::from_secs(180))),
        ("time shift bounds", theta_bounds, None),
        ("discrete Gronwall", discrete_gronwall, None),
        ("Banach counterexample", banach_counterexample, None),
        ("rescaled-flow convergence", rescaled_flow_convergence, Some(Duration::from_secs(600))),
        ("translation dichotomy", translation_dichotomy, None),
        ("exponential decay", exponential_decay, None),
        ("exponential formula", exponential_formula, None),
    ];
    let mut failures = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(d), Some(l)) if elapsed > *l => Err(format!("{d}; exceeded time limit {l:?}")),
            (o, _) => o,
        };
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{status} #{} {name}: {detail} ({elapsed:.2?})", i + 1);
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
