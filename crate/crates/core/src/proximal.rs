//! Proximal (JKO) steps `mu -> mu_tau = argmin { W2^2(mu, nu) / (2 tau) + E(nu) }`.

use serde::Serialize;

use crate::barenblatt::BarenblattParams;
use crate::error::{out_of_range, Error, Result};
use crate::functionals::{
    coercivity_constant, energy, gradient_norm_slope, internal_energy, internal_energy_gradient,
    internal_energy_hessian, FunctionalSpec, SlopeValue,
};
use crate::measure::{Measure, QuantileMeasure};
use crate::numerics::isotonic::{pav, project_min_gap};
use crate::numerics::roots::{bisect, newton_bracketed};
use crate::numerics::tridiag;
use crate::transport::{optimal_map, pushforward_affine, w2_distance, w2_quantile};

/// Relative residual accepted for the proximal time shift.
pub const THETA_RESIDUAL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Stopping tolerance on the Euclidean norm of the projected gradient; `None` means
    /// `1e-10 * sqrt(n)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: None, max_iter: 500 }
    }
}

impl SolverOptions {
    pub fn tolerance(&self, n: usize) -> f64 {
        self.tol.unwrap_or(1e-10 * (n as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SolverMethod {
    ClosedFormQuadratic,
    ClosedFormBarenblatt { time: f64 },
    Isotonic,
    Indicator,
    Newton,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverInfo {
    #[serde(flatten)]
    pub method: SolverMethod,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxResult {
    pub prox_point: Measure,
    /// `W2(mu, mu_tau)`.
    pub w2_move: f64,
    pub energy_at_prox: f64,
    pub slope_at_prox: SlopeValue,
    pub solver: SolverInfo,
}

/// Proximal map of `lambda x^2 / 2`: the dilation `x -> x / (1 + lambda tau)`.
pub fn prox_quadratic(mu: &Measure, lambda: f64, tau: f64) -> Result<ProxResult> {
    let spec = FunctionalSpec::quadratic(lambda)?;
    spec.check_step(tau)?;
    let a = 1.0 / (1.0 + lambda * tau);
    let prox_point = pushforward_affine(mu, a, 0.0)?;
    let m2 = prox_point.second_moment();
    Ok(ProxResult {
        w2_move: (1.0 - a).abs() * mu.second_moment().sqrt(),
        energy_at_prox: 0.5 * lambda * m2,
        slope_at_prox: SlopeValue::closed_form(lambda.abs() * m2.sqrt()),
        prox_point,
        solver: SolverInfo { method: SolverMethod::ClosedFormQuadratic, iterations: 0, kkt_residual: 0.0 },
    })
}

/// Proximal time shift: the unique `s > tau beta` with `r^beta = s^beta - tau beta s^(beta-1)`.
pub fn theta_tau(r: f64, beta: f64, tau: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(out_of_range("r", format!("must be positive, got {r}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(out_of_range("beta", format!("must lie in (0, 1), got {beta}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(out_of_range("tau", format!("must be positive, got {tau}")));
    }
    // g(s) = beta ln(s/r) + ln(1 - tau beta / s) is increasing and changes sign on
    // (max(r, tau beta), r + tau].
    let g = |s: f64| beta * (s / r).ln() + (-tau * beta / s).ln_1p();
    let dg = |s: f64| beta / s + tau * beta / (s * (s - tau * beta));
    let lo = r.max(tau * beta);
    let hi = r + tau;
    if hi <= lo {
        return Ok(hi);
    }
    let rough = bisect(g, lo, hi, 60)?;
    let s = newton_bracketed(g, dg, lo, hi, rough, 0.0, 100)?;
    let residual = theta_residual(r, beta, tau, s);
    if residual > THETA_RESIDUAL_TOL {
        return Err(Error::Root(format!("time shift residual {residual:e} at s = {s}")));
    }
    Ok(s)
}

/// `|(s/r)^beta (1 - tau beta / s) - 1|`, the relative residual of the time-shift equation.
pub fn theta_residual(r: f64, beta: f64, tau: f64, s: f64) -> f64 {
    ((beta * (s / r).ln() + (-tau * beta / s).ln_1p()).exp_m1()).abs()
}

/// Closed-form proximal step of the Renyi energy from `sigma_p(r, .)`.
pub fn prox_barenblatt(params: &BarenblattParams, r: f64, tau: f64, n: usize) -> Result<ProxResult> {
    let s = theta_tau(r, params.beta, tau)?;
    let prox_point = Measure::Quantile(params.profile(s, n)?);
    Ok(ProxResult {
        prox_point,
        w2_move: tau * params.beta / s * params.second_moment(s).sqrt(),
        energy_at_prox: params.energy(s),
        slope_at_prox: SlopeValue::closed_form(params.slope(s)),
        solver: SolverInfo {
            method: SolverMethod::ClosedFormBarenblatt { time: s },
            iterations: 0,
            kkt_residual: theta_residual(r, params.beta, tau, s),
        },
    })
}

/// Numeric proximal step on quantile measures: minimizes
/// `(1/(2 tau)) (1/n) sum (q_i - p_i)^2 + E(q)` over nondecreasing `q`.
pub fn jko_step(spec: &FunctionalSpec, mu: &QuantileMeasure, tau: f64, opts: &SolverOptions) -> Result<ProxResult> {
    spec.check_step(tau)?;
    match spec {
        FunctionalSpec::Quadratic { lambda } => {
            let a = 1.0 / (1.0 + lambda * tau);
            let q = pav(&mu.q().iter().map(|x| a * x).collect::<Vec<_>>());
            let grad: Vec<f64> = q.iter().zip(mu.q()).map(|(x, p)| (x - p) / tau + lambda * x).collect();
            let kkt = projected_residual(&q, &grad, tau);
            finish(spec, mu, q, SolverInfo { method: SolverMethod::Isotonic, iterations: 1, kkt_residual: kkt })
        }
        FunctionalSpec::Indicator { reference, .. } => {
            let prox_point = (**reference).clone();
            Ok(ProxResult {
                w2_move: w2_distance(&Measure::Quantile(mu.clone()), &prox_point),
                energy_at_prox: 0.0,
                slope_at_prox: SlopeValue::closed_form(0.0),
                prox_point,
                solver: SolverInfo { method: SolverMethod::Indicator, iterations: 0, kkt_residual: 0.0 },
            })
        }
        FunctionalSpec::Renyi { .. } | FunctionalSpec::Entropy => {
            let p = spec.exponent().unwrap();
            let (q, info) = solve_internal(p, mu.q(), tau, opts)?;
            finish(spec, mu, q, info)
        }
    }
}

/// Proximal step of `spec` from any supported measure: closed forms for the quadratic potential
/// and the indicator, the numeric solver for internal energies on quantile measures.
pub fn prox_step(spec: &FunctionalSpec, mu: &Measure, tau: f64, opts: &SolverOptions) -> Result<ProxResult> {
    spec.check_step(tau)?;
    match (spec, mu) {
        (FunctionalSpec::Quadratic { lambda }, _) => prox_quadratic(mu, *lambda, tau),
        (FunctionalSpec::Indicator { reference, .. }, _) => Ok(ProxResult {
            w2_move: w2_distance(mu, reference),
            energy_at_prox: 0.0,
            slope_at_prox: SlopeValue::closed_form(0.0),
            prox_point: (**reference).clone(),
            solver: SolverInfo { method: SolverMethod::Indicator, iterations: 0, kkt_residual: 0.0 },
        }),
        (_, Measure::Quantile(q)) => jko_step(spec, q, tau, opts),
        (_, Measure::Atomic(_)) => Err(Error::Unsupported(format!("no proximal solver for `{spec}` on an atomic measure"))),
    }
}

fn finish(spec: &FunctionalSpec, mu: &QuantileMeasure, q: Vec<f64>, solver: SolverInfo) -> Result<ProxResult> {
    let prox = QuantileMeasure::new(q)?;
    let prox_point = Measure::Quantile(prox.clone());
    Ok(ProxResult {
        w2_move: w2_quantile(mu, &prox),
        energy_at_prox: energy(spec, &prox_point),
        slope_at_prox: gradient_norm_slope(spec, &prox),
        prox_point,
        solver,
    })
}

/// `|q - P(q - gamma g)| / gamma` with `P` the projection onto nondecreasing vectors.
fn projected_residual(q: &[f64], g: &[f64], gamma: f64) -> f64 {
    let trial: Vec<f64> = q.iter().zip(g).map(|(x, d)| x - gamma * d).collect();
    let proj = pav(&trial);
    (q.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sqrt() / gamma
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Objective<'a> {
    p: f64,
    data: &'a [f64],
    tau: f64,
}

impl Objective<'_> {
    /// `n` times the proximal objective.
    fn value(&self, q: &[f64]) -> f64 {
        let fit: f64 = q.iter().zip(self.data).map(|(x, y)| (x - y).powi(2)).sum();
        fit / (2.0 * self.tau) + q.len() as f64 * internal_energy(self.p, q)
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let mut g = internal_energy_gradient(self.p, q);
        for ((gi, x), y) in g.iter_mut().zip(q).zip(self.data) {
            *gi += (x - y) / self.tau;
        }
        g
    }
}

fn min_gap(q: &[f64]) -> f64 {
    q.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn solve_internal(p: f64, data: &[f64], tau: f64, opts: &SolverOptions) -> Result<(Vec<f64>, SolverInfo)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Unsupported("internal energies need at least two quantile samples".into()));
    }
    let tol = opts.tolerance(n);
    let range = data[n - 1] - data[0];
    let spread = 0.1 * range.max(tau.sqrt()) / n as f64;
    let mut q = if min_gap(data) >= spread { data.to_vec() } else { project_min_gap(data, spread) };
    let floor = 1e-14 * (q[n - 1] - q[0]);
    let obj = Objective { p, data, tau };

    let mut method = SolverMethod::Newton;
    let mut phi = obj.value(&q);
    let mut g = obj.gradient(&q);
    let mut gnorm = norm(&g);
    let mut best = (gnorm, q.clone());
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if gnorm <= tol {
            break;
        }
        iterations += 1;
        let direction = {
            let (mut diag, off) = internal_energy_hessian(p, &q);
            diag.iter_mut().for_each(|d| *d += 1.0 / tau);
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            tridiag::solve(&off, &diag, &off, &rhs)
        };
        let accepted = direction.and_then(|d| line_search(&obj, &q, phi, &g, gnorm, &d, floor));
        let (next, next_phi, next_g) = match accepted {
            Some(step) => step,
            None => {
                method = SolverMethod::ProjectedGradient;
                match projected_gradient_step(&obj, &q, phi, &g, floor) {
                    Some(step) => step,
                    None => break,
                }
            }
        };
        q = next;
        phi = next_phi;
        g = next_g;
        gnorm = norm(&g);
        if gnorm < best.0 {
            best = (gnorm, q.clone());
        }
    }
    let kkt = projected_residual(&best.1, &obj.gradient(&best.1), tau);
    if best.0 > tol {
        return Err(Error::NotConverged {
            iterations,
            residual: kkt,
            best: Box::new(QuantileMeasure::new(best.1)?),
        });
    }
    Ok((best.1, SolverInfo { method, iterations, kkt_residual: kkt }))
}

type Step = (Vec<f64>, f64, Vec<f64>);

fn line_search(obj: &Objective<'_>, q: &[f64], phi: f64, g: &[f64], gnorm: f64, d: &[f64], floor: f64) -> Option<Step> {
    let slope: f64 = g.iter().zip(d).map(|(a, b)| a * b).sum();
    if !(slope < 0.0) {
        return None;
    }
    let slack = 1e-14 * (phi.abs() + 1.0);
    let mut t = 1.0;
    while t > 1e-16 {
        let cand: Vec<f64> = q.iter().zip(d).map(|(x, dx)| x + t * dx).collect();
        if min_gap(&cand) > floor {
            let value = obj.value(&cand);
            if value.is_finite() {
                let cg = obj.gradient(&cand);
                if value <= phi + 1e-4 * t * slope + slack || norm(&cg) < gnorm {
                    return Some((cand, value, cg));
                }
            }
        }
        t *= 0.5;
    }
    None
}

fn projected_gradient_step(obj: &Objective<'_>, q: &[f64], phi: f64, g: &[f64], floor: f64) -> Option<Step> {
    let mut gamma = obj.tau;
    while gamma > 1e-300 {
        let trial: Vec<f64> = q.iter().zip(g).map(|(x, d)| x - gamma * d).collect();
        let cand = project_min_gap(&trial, 2.0 * floor);
        let value = obj.value(&cand);
        let moved: f64 = cand.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
        if value.is_finite() && value <= phi - 1e-4 * moved / gamma {
            let cg = obj.gradient(&cand);
            return Some((cand, value, cg));
        }
        gamma *= 0.5;
    }
    None
}

/// Sup-norm defect of the Euler-Lagrange equation `T(x) = x + tau grad(dE/drho)(mu_tau)(x)`
/// with `T` the optimal map from `mu_tau` back to `mu`.
pub fn euler_lagrange_residual(spec: &FunctionalSpec, mu: &Measure, prox: &ProxResult, tau: f64) -> Result<f64> {
    let plan = optimal_map(&prox.prox_point, mu);
    let defect = |g: &dyn Fn(usize, f64) -> f64| -> f64 {
        plan.pieces
            .iter()
            .enumerate()
            .map(|(i, piece)| (piece.target - piece.source - tau * g(i, piece.source)).abs())
            .fold(0.0, f64::max)
    };
    match (spec, prox.solver.method) {
        (FunctionalSpec::Quadratic { lambda }, _) => Ok(defect(&|_, x| lambda * x)),
        (FunctionalSpec::Renyi { .. } | FunctionalSpec::Entropy, SolverMethod::ClosedFormBarenblatt { time }) => {
            let beta = 1.0 / (1.0 + spec.exponent().unwrap());
            Ok(defect(&|_, x| -beta * x / time))
        }
        (FunctionalSpec::Renyi { .. } | FunctionalSpec::Entropy, _) => {
            let (Some(q), Some(base)) = (prox.prox_point.as_quantile(), mu.as_quantile()) else {
                return Err(Error::Unsupported("Euler-Lagrange check needs quantile measures".into()));
            };
            if q.n() != base.n() || !q.is_strict() {
                return Err(Error::Unsupported(
                    "Euler-Lagrange check needs a strictly increasing proximal point on the input grid".into(),
                ));
            }
            let g = internal_energy_gradient(spec.exponent().unwrap(), q.q());
            Ok(defect(&|i, _| g[i]))
        }
        (FunctionalSpec::Indicator { .. }, _) => {
            Err(Error::Unsupported("the indicator functional has no Euler-Lagrange equation".into()))
        }
    }
}

/// Upper bound `2 tau (E_p(mu) + C_p M(mu)) / (1 - 4 p C_p tau)` on `W2^2(mu, mu_tau)`,
/// `M(mu) = 1 + 2 int |x|^2 d mu`, for `1/3 < p < 1`.
pub fn prox_distance_bound(p: f64, mu: &Measure, tau: f64) -> Result<f64> {
    let e = match mu {
        Measure::Quantile(q) => internal_energy(p, q.q()),
        Measure::Atomic(_) => f64::INFINITY,
    };
    if !e.is_finite() {
        return Err(Error::Hypothesis("the distance bound needs a measure of finite energy".into()));
    }
    prox_distance_bound_from(p, e, mu.second_moment(), tau)
}

/// The distance bound from the energy and second moment of `mu`.
pub fn prox_distance_bound_from(p: f64, energy: f64, second_moment: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(out_of_range("tau", format!("must be positive, got {tau}")));
    }
    let c = coercivity_constant(p, 1)?;
    let denom = 1.0 - 4.0 * p * c * tau;
    if denom <= 0.0 {
        return Err(out_of_range(
            "tau",
            format!("the simple distance bound needs 4 p C_p tau < 1, got {}", 4.0 * p * c * tau),
        ));
    }
    Ok(2.0 * tau * (energy + c * (1.0 + 2.0 * second_moment)) / denom)
}
