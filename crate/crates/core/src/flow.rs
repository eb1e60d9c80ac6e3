//! Discrete gradient flows `mu_n = (mu_{n-1})_tau`, their rescalings, and trace output.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::barenblatt::{BarenblattParams, BarenblattProfile};
use crate::error::{out_of_range, Error, Result};
use crate::functionals::{coercivity_constant, energy, metric_slope, FunctionalSpec};
use crate::measure::{Measure, QuantileMeasure};
use crate::proximal::{jko_step, prox_quadratic, theta_tau, SolverOptions};
use crate::transport::{pushforward_affine, w2_distance, w2_quantile};
use crate::verify::{capital_lambda_from, IneqReport, Tolerances};

/// Initial condition of a flow.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowStart {
    Measure(Measure),
    /// The Barenblatt density `sigma_p(r, .)` of the flow's own exponent.
    Barenblatt { r: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub solver: SolverOptions,
    /// Grid size used when a Barenblatt state has to be materialized.
    pub resolution: usize,
    /// Use the numeric proximal solver even where a closed form is available.
    pub force_numeric: bool,
    /// Measure to which `w2_ref` is reported in single flows.
    pub reference: Option<Measure>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), resolution: 512, force_numeric: false, reference: None }
    }
}

/// One row of a flow trace. Paired flows fill the `*_nu` columns and report in `w2_ref`
/// the distance between the two flows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRecord {
    pub n: usize,
    pub tau: f64,
    pub energy: f64,
    pub w2_move: Option<f64>,
    pub w2_ref: Option<f64>,
    pub slope: Option<f64>,
    pub lambda_tau_pair: Option<f64>,
    pub energy_nu: Option<f64>,
    pub w2_move_nu: Option<f64>,
    pub slope_nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrace {
    pub functional: String,
    pub tau: f64,
    pub n_steps: usize,
    pub resolution: Option<usize>,
    pub paired: bool,
    pub records: Vec<FlowRecord>,
    /// Set when a proximal step failed; the trace stops at the last completed step.
    pub failure: Option<String>,
    #[serde(skip)]
    pub final_state: Option<Measure>,
    #[serde(skip)]
    pub final_partner: Option<Measure>,
}

impl FlowTrace {
    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn column(&self, pick: impl Fn(&FlowRecord) -> Option<f64>) -> Vec<Option<f64>> {
        self.records.iter().map(pick).collect()
    }
}

#[derive(Debug, Clone)]
enum State {
    Generic(Measure),
    Barenblatt { time: f64, profile: std::rc::Rc<BarenblattProfile> },
}

impl State {
    fn measure(&self) -> Measure {
        match self {
            State::Generic(m) => m.clone(),
            State::Barenblatt { time, profile } => Measure::Quantile(profile.at(*time)),
        }
    }

    fn resolution(&self) -> Option<usize> {
        match self {
            State::Generic(Measure::Quantile(q)) => Some(q.n()),
            State::Generic(Measure::Atomic(_)) => None,
            State::Barenblatt { profile, .. } => Some(profile.n()),
        }
    }
}

struct Snapshot {
    energy: f64,
    slope: f64,
}

struct StepOutcome {
    state: State,
    w2_move: f64,
    energy: f64,
    slope: f64,
}

fn initial_state(spec: &FunctionalSpec, start: &FlowStart, opts: &FlowOptions) -> Result<State> {
    match start {
        FlowStart::Measure(m) => Ok(State::Generic(m.clone())),
        FlowStart::Barenblatt { r } => {
            let p = spec
                .exponent()
                .ok_or_else(|| Error::Unsupported("Barenblatt initial data needs a Renyi or entropy functional".into()))?;
            if !(*r > 0.0 && r.is_finite()) {
                return Err(out_of_range("r", format!("must be positive, got {r}")));
            }
            let profile = BarenblattProfile::new(BarenblattParams::new(p)?, opts.resolution)?;
            if opts.force_numeric {
                Ok(State::Generic(Measure::Quantile(profile.at(*r))))
            } else {
                Ok(State::Barenblatt { time: *r, profile: std::rc::Rc::new(profile) })
            }
        }
    }
}

fn snapshot(spec: &FunctionalSpec, state: &State) -> Snapshot {
    match state {
        State::Barenblatt { time, profile } => {
            Snapshot { energy: profile.params.energy(*time), slope: profile.params.slope(*time) }
        }
        State::Generic(m) => Snapshot { energy: energy(spec, m), slope: metric_slope(spec, m).value },
    }
}

fn advance(spec: &FunctionalSpec, state: &State, tau: f64, opts: &FlowOptions) -> Result<StepOutcome> {
    match (spec, state) {
        (_, State::Barenblatt { time, profile }) => {
            let params = &profile.params;
            let s = theta_tau(*time, params.beta, tau)?;
            Ok(StepOutcome {
                w2_move: params.w2_between(*time, s),
                energy: params.energy(s),
                slope: params.slope(s),
                state: State::Barenblatt { time: s, profile: profile.clone() },
            })
        }
        (FunctionalSpec::Quadratic { lambda }, State::Generic(m)) if !opts.force_numeric => {
            let r = prox_quadratic(m, *lambda, tau)?;
            Ok(StepOutcome {
                w2_move: r.w2_move,
                energy: r.energy_at_prox,
                slope: r.slope_at_prox.value,
                state: State::Generic(r.prox_point),
            })
        }
        (FunctionalSpec::Indicator { reference, .. }, State::Generic(m)) if !opts.force_numeric => {
            Ok(StepOutcome {
                w2_move: w2_distance(m, reference),
                energy: 0.0,
                slope: 0.0,
                state: State::Generic((**reference).clone()),
            })
        }
        (_, State::Generic(Measure::Quantile(q))) => {
            let r = jko_step(spec, q, tau, &opts.solver)?;
            Ok(StepOutcome {
                w2_move: r.w2_move,
                energy: r.energy_at_prox,
                slope: r.slope_at_prox.value,
                state: State::Generic(r.prox_point),
            })
        }
        (_, State::Generic(Measure::Atomic(_))) => Err(Error::Unsupported(format!(
            "no proximal solver for `{spec}` on an atomic measure"
        ))),
    }
}

fn validate(spec: &FunctionalSpec, tau: f64, steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(out_of_range("steps", "at least one step is required"));
    }
    spec.check_step(tau)
}

fn record(n: usize, tau: f64, energy: f64) -> FlowRecord {
    FlowRecord {
        n,
        tau,
        energy,
        w2_move: None,
        w2_ref: None,
        slope: None,
        lambda_tau_pair: None,
        energy_nu: None,
        w2_move_nu: None,
        slope_nu: None,
    }
}

/// Runs `steps` proximal steps from `start`. Closed forms are used for the quadratic potential,
/// the indicator, and Barenblatt initial data unless `opts.force_numeric` is set. Solver
/// failures end the trace early and are recorded in `failure`.
pub fn run_flow(spec: &FunctionalSpec, start: &FlowStart, tau: f64, steps: usize, opts: &FlowOptions) -> Result<FlowTrace> {
    validate(spec, tau, steps)?;
    let mut state = initial_state(spec, start, opts)?;
    let mut trace = FlowTrace {
        functional: spec.to_string(),
        tau,
        n_steps: steps,
        resolution: state.resolution(),
        paired: false,
        records: Vec::with_capacity(steps + 1),
        failure: None,
        final_state: None,
        final_partner: None,
    };
    let reference_distance = |s: &State| opts.reference.as_ref().map(|r| w2_distance(&s.measure(), r));
    let snap = snapshot(spec, &state);
    let mut first = record(0, tau, snap.energy);
    first.slope = Some(snap.slope);
    first.w2_ref = reference_distance(&state);
    trace.records.push(first);
    for n in 1..=steps {
        match advance(spec, &state, tau, opts) {
            Ok(step) => {
                state = step.state;
                let mut row = record(n, tau, step.energy);
                row.w2_move = Some(step.w2_move);
                row.slope = Some(step.slope);
                row.w2_ref = reference_distance(&state);
                trace.records.push(row);
            }
            Err(e) => {
                trace.failure = Some(format!("step {n}: {e}"));
                break;
            }
        }
    }
    trace.final_state = Some(state.measure());
    Ok(trace)
}

fn pair_distance(a: &State, b: &State) -> f64 {
    match (a, b) {
        (State::Barenblatt { time: s, profile }, State::Barenblatt { time: t, profile: other })
            if profile.params == other.params =>
        {
            profile.params.w2_between(*s, *t)
        }
        _ => w2_distance(&a.measure(), &b.measure()),
    }
}

/// Runs two flows of the same functional side by side and records `Lambda_tau` between them.
pub fn run_paired_flow(
    spec: &FunctionalSpec,
    start_mu: &FlowStart,
    start_nu: &FlowStart,
    tau: f64,
    steps: usize,
    opts: &FlowOptions,
) -> Result<FlowTrace> {
    validate(spec, tau, steps)?;
    let mut mu = initial_state(spec, start_mu, opts)?;
    let mut nu = initial_state(spec, start_nu, opts)?;
    let mut trace = FlowTrace {
        functional: spec.to_string(),
        tau,
        n_steps: steps,
        resolution: mu.resolution(),
        paired: true,
        records: Vec::with_capacity(steps + 1),
        failure: None,
        final_state: None,
        final_partner: None,
    };
    let (a, b) = (snapshot(spec, &mu), snapshot(spec, &nu));
    let d = pair_distance(&mu, &nu);
    let mut first = record(0, tau, a.energy);
    first.slope = Some(a.slope);
    first.energy_nu = Some(b.energy);
    first.slope_nu = Some(b.slope);
    first.w2_ref = Some(d);
    first.lambda_tau_pair = Some(capital_lambda_from(d, a.slope, b.slope, tau));
    trace.records.push(first);
    for n in 1..=steps {
        let stepped = advance(spec, &mu, tau, opts).and_then(|x| Ok((x, advance(spec, &nu, tau, opts)?)));
        match stepped {
            Ok((x, y)) => {
                mu = x.state;
                nu = y.state;
                let d = pair_distance(&mu, &nu);
                let mut row = record(n, tau, x.energy);
                row.w2_move = Some(x.w2_move);
                row.slope = Some(x.slope);
                row.energy_nu = Some(y.energy);
                row.w2_move_nu = Some(y.w2_move);
                row.slope_nu = Some(y.slope);
                row.w2_ref = Some(d);
                row.lambda_tau_pair = Some(capital_lambda_from(d, x.slope, y.slope, tau));
                trace.records.push(row);
            }
            Err(e) => {
                trace.failure = Some(format!("step {n}: {e}"));
                break;
            }
        }
    }
    trace.final_state = Some(mu.measure());
    trace.final_partner = Some(nu.measure());
    Ok(trace)
}

/// Constituents of the implementation-derived constant `K` in the rescaled-flow bound
/// `W2^2(nu~_n, h_p) <= theta_n^(-2 beta) [W (W + sqrt(tau) K) + tau K]`, `W = W2(nu, sigma_p(r))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaleConstant {
    pub k: f64,
    /// Coefficient of `sqrt(tau) W`: `2 (sqrt(2A) + B)`.
    pub k_linear: f64,
    /// Coefficient of `tau`: `5A + 5B^2/2`.
    pub k_constant: f64,
    /// Bound `W2^2(nu, nu_tau) <= 2 tau A`.
    pub a: f64,
    /// `B = (beta / r) (int |x|^2 sigma_p(r, x) dx)^(1/2)`, so that `W2(mu, mu_tau) = tau B`.
    pub b: f64,
    pub energy_nu: f64,
    pub m_nu: f64,
    pub c_p: Option<f64>,
    /// How `A` was obtained: `lower_bound` (p > 1), `distance_bound` (p < 1) or `measured` (p = 1).
    pub a_source: String,
    pub w2_initial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledRecord {
    pub n: usize,
    pub theta: f64,
    /// `W2(nu~_n, h_p)`.
    pub w2_to_profile: f64,
    /// `W2(nu~_n, h_p) theta_n^beta`, i.e. `W2(nu_n, sigma_p(theta_n))`.
    pub scaled_distance: f64,
    /// Right-hand side of the squared bound.
    pub bound_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledTrace {
    pub p: f64,
    pub r: f64,
    pub beta: f64,
    pub constant: RescaleConstant,
    pub records: Vec<RescaledRecord>,
    pub trace: FlowTrace,
}

/// Runs the Renyi/entropy flow from `nu0` and rescales each iterate by `theta_tau^n(r)^(-beta)`.
pub fn rescaled_flow(p: f64, nu0: &QuantileMeasure, r: f64, tau: f64, steps: usize, opts: &FlowOptions) -> Result<RescaledTrace> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(out_of_range("tau", format!("rescaled flows need 0 < tau <= 1, got {tau}")));
    }
    if !(r > 0.0) {
        return Err(out_of_range("r", format!("must be positive, got {r}")));
    }
    let spec = FunctionalSpec::renyi(p)?;
    validate(&spec, tau, steps)?;
    let params = BarenblattParams::new(p)?;
    let beta = params.beta;
    let profile = BarenblattProfile::new(params.clone(), nu0.n())?;
    let h = profile.at(1.0);
    let sigma_r = profile.at(r);
    let w = w2_quantile(nu0, &sigma_r);

    let mut numeric = opts.clone();
    numeric.force_numeric = true;
    numeric.reference = None;
    let energy_nu = energy(&spec, &Measure::Quantile(nu0.clone()));
    let m_nu = 1.0 + 2.0 * nu0.second_moment();
    let b = beta / r * params.second_moment(r).sqrt();

    let mut state = State::Generic(Measure::Quantile(nu0.clone()));
    let mut trace = FlowTrace {
        functional: spec.to_string(),
        tau,
        n_steps: steps,
        resolution: Some(nu0.n()),
        paired: false,
        records: Vec::with_capacity(steps + 1),
        failure: None,
        final_state: None,
        final_partner: None,
    };
    let snap = snapshot(&spec, &state);
    let mut first = record(0, tau, snap.energy);
    first.slope = Some(snap.slope);
    first.w2_ref = Some(w2_quantile(&nu0.affine(r.powf(-beta), 0.0)?, &h));
    trace.records.push(first);

    let mut thetas = Vec::with_capacity(steps);
    let mut distances = Vec::with_capacity(steps);
    let mut theta = r;
    let mut first_move = None;
    for n in 1..=steps {
        let step = match advance(&spec, &state, tau, &numeric) {
            Ok(s) => s,
            Err(e) => {
                trace.failure = Some(format!("step {n}: {e}"));
                break;
            }
        };
        theta = theta_tau(theta, beta, tau)?;
        first_move.get_or_insert(step.w2_move);
        state = step.state;
        let rescaled = pushforward_affine(&state.measure(), theta.powf(-beta), 0.0)?;
        let d = w2_distance(&rescaled, &Measure::Quantile(h.clone()));
        let mut row = record(n, tau, step.energy);
        row.w2_move = Some(step.w2_move);
        row.slope = Some(step.slope);
        row.w2_ref = Some(d);
        trace.records.push(row);
        thetas.push(theta);
        distances.push(d);
    }
    trace.final_state = Some(state.measure());

    let (a, a_source, c_p) = if p > 1.0 {
        (energy_nu + 1.0 / (p - 1.0), "lower_bound", None)
    } else if p < 1.0 {
        let c = coercivity_constant(p, 1)?;
        let denom = 1.0 - 4.0 * p * c * tau;
        if denom <= 0.0 {
            return Err(Error::Hypothesis(format!("4 p C_p tau = {} must be below 1", 4.0 * p * c * tau)));
        }
        ((energy_nu + c * m_nu) / denom, "distance_bound", Some(c))
    } else {
        let mv = first_move.unwrap_or(0.0);
        (mv * mv / (2.0 * tau), "measured", None)
    };
    let k_linear = 2.0 * ((2.0 * a).max(0.0).sqrt() + b);
    let k_constant = 5.0 * a + 2.5 * b * b;
    let k = k_linear.max(k_constant);
    let constant = RescaleConstant {
        k,
        k_linear,
        k_constant,
        a,
        b,
        energy_nu,
        m_nu,
        c_p,
        a_source: a_source.to_string(),
        w2_initial: w,
    };
    let records = thetas
        .iter()
        .zip(&distances)
        .enumerate()
        .map(|(i, (&th, &d))| RescaledRecord {
            n: i + 1,
            theta: th,
            w2_to_profile: d,
            scaled_distance: d * th.powf(beta),
            bound_sq: th.powf(-2.0 * beta) * (w * (w + tau.sqrt() * k) + tau * k),
        })
        .collect();
    Ok(RescaledTrace { p, r, beta, constant, records, trace })
}

/// Discrete Gronwall bound `(1+lambda tau)^(-n) a0^(1/2) + sqrt(tau/(2 lambda)) (1+lambda tau) (sum_{k<=n} b_k^2)^(1/2)`
/// for `n = 0..=b.len()`.
pub fn gronwall_bound(a0: f64, b: &[f64], lambda: f64, tau: f64) -> Result<Vec<f64>> {
    if !(a0 >= 0.0) || b.iter().any(|v| !(*v >= 0.0)) {
        return Err(out_of_range("a0/b", "sequences must be nonnegative"));
    }
    if !(lambda > 0.0) || !(tau > 0.0) {
        return Err(out_of_range("lambda/tau", "must be positive"));
    }
    let k = 1.0 + lambda * tau;
    let c = (tau / (2.0 * lambda)).sqrt() * k;
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(b.len() + 1);
    out.push(a0.sqrt());
    for (i, bk) in b.iter().enumerate() {
        sum += bk * bk;
        out.push(k.powi(-(i as i32 + 1)) * a0.sqrt() + c * sum.sqrt());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// Per-step one-step inequality `(1+tau lambda) L_{n} <= (1-tau lambda) L_{n-1} + ...`.
    pub step_checks: Vec<IneqReport>,
    /// Per-step closed-form decay bound on `L_n^(1/2)`.
    pub decay_checks: Vec<IneqReport>,
    pub max_violation: f64,
    pub n_checked: usize,
    pub tolerance: f64,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.max_violation == 0.0
    }
}

/// Follows paired flows of a `lambda`-convex functional (`lambda > 0`, `lambda tau <= 1`) and
/// checks both the one-step corollary inequality and the exponential decay bound.
pub fn exponential_decay_check(
    spec: &FunctionalSpec,
    mu0: &Measure,
    nu0: &Measure,
    tau: f64,
    steps: usize,
    opts: &FlowOptions,
) -> Result<DecayReport> {
    let lambda = spec.lambda_convexity();
    if !(lambda > 0.0) {
        return Err(Error::Hypothesis(format!("exponential decay needs lambda > 0, got {lambda}")));
    }
    if lambda * tau > 1.0 {
        return Err(Error::Hypothesis(format!("exponential decay needs lambda tau <= 1, got {}", lambda * tau)));
    }
    let trace = run_paired_flow(
        spec,
        &FlowStart::Measure(mu0.clone()),
        &FlowStart::Measure(nu0.clone()),
        tau,
        steps,
        opts,
    )?;
    if let Some(f) = &trace.failure {
        return Err(Error::Unsupported(format!("flow failed: {f}")));
    }
    let e0 = trace.records[0].energy + trace.records[0].energy_nu.unwrap();
    if e0 < 0.0 {
        return Err(Error::Hypothesis("energies must be nonnegative".into()));
    }
    let l0 = trace.records[0].lambda_tau_pair.unwrap();
    let k = 1.0 + lambda * tau;
    let offset = lambda * tau * 6.0 * k / (2.0 * lambda).sqrt() * e0.sqrt();
    let rel = Tolerances::CLOSED_FORM;
    let mut step_checks = Vec::with_capacity(steps);
    let mut decay_checks = Vec::with_capacity(steps);
    for w in trace.records.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let l_prev = prev.lambda_tau_pair.unwrap();
        let l_cur = cur.lambda_tau_pair.unwrap();
        let moves = cur.w2_move.unwrap() + cur.w2_move_nu.unwrap();
        let lhs = k * l_cur;
        let rhs = (1.0 - lambda * tau) * l_prev + 3.0 * lambda * tau * l_prev.sqrt() * moves;
        step_checks.push(IneqReport::new(
            format!("corollary-step-{}", cur.n),
            lhs,
            rhs,
            rel * (lhs.abs() + rhs.abs()).max(1.0),
            &[cur.n as f64, tau, lambda],
        ));
        let lhs = l_cur.sqrt();
        let rhs = k.powi(-(cur.n as i32)) * l0.sqrt() + offset;
        decay_checks.push(IneqReport::new(
            format!("decay-{}", cur.n),
            lhs,
            rhs,
            rel * rhs.abs().max(1.0),
            &[cur.n as f64, tau, lambda],
        ));
    }
    let max_violation = step_checks.iter().chain(&decay_checks).map(IneqReport::violation).fold(0.0, f64::max);
    Ok(DecayReport {
        n_checked: step_checks.len() + decay_checks.len(),
        step_checks,
        decay_checks,
        max_violation,
        tolerance: rel,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpFormulaRow {
    pub n: usize,
    pub tau: f64,
    /// `(int x^2 d mu_n / int x^2 d mu_0)^(1/2)`; the dilation factor on the quadratic family.
    pub scale: Option<f64>,
    pub w2_to_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpFormulaReport {
    pub t: f64,
    pub rows: Vec<ExpFormulaRow>,
    /// `W2` between results for consecutive entries of the step-count list.
    pub gaps: Vec<f64>,
    /// Gaps shrink monotonically along the list.
    pub cauchy: bool,
    /// Whether `w2_to_limit` refers to the exact limit (quadratic family) or the finest run.
    pub exact_limit: bool,
}

/// Computes `(J_{t/n})^n(mu0)` for each `n` in `ns`.
pub fn exp_formula_probe(spec: &FunctionalSpec, mu0: &Measure, t: f64, ns: &[usize], opts: &FlowOptions) -> Result<ExpFormulaReport> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(out_of_range("t", format!("must be nonnegative, got {t}")));
    }
    if ns.is_empty() || ns.contains(&0) {
        return Err(out_of_range("ns", "step counts must be positive"));
    }
    let m0 = mu0.second_moment();
    let mut finals = Vec::with_capacity(ns.len());
    for &n in ns {
        let state = if t == 0.0 {
            mu0.clone()
        } else {
            let trace = run_flow(spec, &FlowStart::Measure(mu0.clone()), t / n as f64, n, opts)?;
            if let Some(f) = trace.failure {
                return Err(Error::Unsupported(format!("n = {n}: {f}")));
            }
            trace.final_state.unwrap()
        };
        finals.push(state);
    }
    let exact = match spec {
        FunctionalSpec::Quadratic { lambda } => Some(pushforward_affine(mu0, (-lambda * t).exp(), 0.0)?),
        _ => None,
    };
    let limit = exact.clone().unwrap_or_else(|| finals.last().unwrap().clone());
    let rows = ns
        .iter()
        .zip(&finals)
        .map(|(&n, m)| ExpFormulaRow {
            n,
            tau: t / n as f64,
            scale: (m0 > 0.0).then(|| (m.second_moment() / m0).sqrt()),
            w2_to_limit: w2_distance(m, &limit),
        })
        .collect();
    let gaps: Vec<f64> = finals.windows(2).map(|w| w2_distance(&w[0], &w[1])).collect();
    let cauchy = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    Ok(ExpFormulaReport { t, rows, gaps, cauchy, exact_limit: exact.is_some() })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trace as CSV: `n,tau,energy,w2_move,w2_ref,slope,lambda_tau_pair`, plus
/// `energy_nu,w2_move_nu,slope_nu` for paired flows. A solver failure is appended as a comment.
pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut out = String::from("n,tau,energy,w2_move,w2_ref,slope,lambda_tau_pair");
    if trace.paired {
        out.push_str(",energy_nu,w2_move_nu,slope_nu");
    }
    out.push('\n');
    for r in &trace.records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            r.tau,
            r.energy,
            opt(r.w2_move),
            opt(r.w2_ref),
            opt(r.slope),
            opt(r.lambda_tau_pair)
        );
        if trace.paired {
            let _ = write!(out, ",{},{},{}", opt(r.energy_nu), opt(r.w2_move_nu), opt(r.slope_nu));
        }
        out.push('\n');
    }
    if let Some(f) = &trace.failure {
        let _ = writeln!(out, "# failure: {f}");
    }
    out
}

pub fn write_trace_csv(trace: &FlowTrace, mut w: impl Write) -> Result<()> {
    w.write_all(trace_csv(trace).as_bytes())?;
    Ok(())
}

/// Exponential-formula probe as CSV: `n,tau,scale,w2_to_limit`.
pub fn exp_formula_csv(report: &ExpFormulaReport) -> String {
    let mut out = String::from("n,tau,scale,w2_to_limit\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{},{}", r.n, r.tau, opt(r.scale), r.w2_to_limit);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_flow_halves_the_atom() {
        let f = FunctionalSpec::quadratic(1.0).unwrap();
        let trace = run_flow(&f, &FlowStart::Measure(Measure::dirac(2.0)), 1.0, 3, &FlowOptions::default()).unwrap();
        assert_eq!(trace.final_state, Some(Measure::dirac(0.25)));
        let energies = trace.energies();
        assert_eq!(energies, vec![2.0, 0.5, 0.125, 0.03125]);
    }

    #[test]
    fn zero_steps_rejected() {
        let f = FunctionalSpec::quadratic(1.0).unwrap();
        assert!(run_flow(&f, &FlowStart::Measure(Measure::dirac(2.0)), 1.0, 0, &FlowOptions::default()).is_err());
    }

    #[test]
    fn barenblatt_flow_follows_time_shift() {
        let f = FunctionalSpec::Entropy;
        let opts = FlowOptions { resolution: 64, ..FlowOptions::default() };
        let trace = run_flow(&f, &FlowStart::Barenblatt { r: 1.0 }, 0.1, 2, &opts).unwrap();
        let s1 = theta_tau(1.0, 0.5, 0.1).unwrap();
        let s2 = theta_tau(s1, 0.5, 0.1).unwrap();
        let params = BarenblattParams::new(1.0).unwrap();
        let expect = Measure::Quantile(params.profile(s2, 64).unwrap());
        assert!(w2_distance(trace.final_state.as_ref().unwrap(), &expect) < 1e-12);
    }

    #[test]
    fn gronwall_examples() {
        let b = gronwall_bound(4.0, &[0.0, 0.0], 1.0, 0.5).unwrap();
        assert_eq!(b, vec![2.0, 2.0 / 1.5, 2.0 / 2.25]);
        let b = gronwall_bound(0.0, &[2.0, 0.0, 0.0], 1.0, 0.5).unwrap();
        let c = (0.25f64).sqrt() * 1.5 * 2.0;
        for v in &b[1..] {
            assert!((v - c).abs() < 1e-15);
        }
    }

    #[test]
    fn trace_csv_has_expected_columns() {
        let f = FunctionalSpec::quadratic(1.0).unwrap();
        let trace = run_flow(&f, &FlowStart::Measure(Measure::dirac(2.0)), 1.0, 1, &FlowOptions::default()).unwrap();
        let csv = trace_csv(&trace);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n,tau,energy,w2_move,w2_ref,slope,lambda_tau_pair"));
        assert_eq!(lines.next(), Some("0,1,2,,,2,"));
        assert_eq!(lines.next(), Some("1,1,0.5,1,,1,"));
    }

    #[test]
    fn exp_formula_for_t_zero_is_identity() {
        let f = FunctionalSpec::quadratic(1.0).unwrap();
        let r = exp_formula_probe(&f, &Measure::dirac(1.0), 0.0, &[1, 2, 4], &FlowOptions::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.scale == Some(1.0) && row.w2_to_limit == 0.0));
    }
}
