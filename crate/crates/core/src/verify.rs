//! Inequality harness: `Lambda_tau`, contraction and convexity residuals, sharpness
//! identities for the quadratic potential, and the l-infinity projection fixture.

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::barenblatt::BarenblattParams;
use crate::error::{out_of_range, Error, Result};
use crate::flow::gronwall_bound;
use crate::functionals::{energy, gradient_norm_slope, lambda_tau, metric_slope, moreau_yosida, FunctionalSpec};
use crate::measure::{Measure, QuantileMeasure};
use crate::proximal::{jko_step, prox_quadratic, theta_tau, ProxResult, SolverOptions};
use crate::random::{random_atomic, random_quantile, SuiteRng};
use crate::transport::{geodesic_point, w2_distance, w2_squared};

/// Tolerance table shared by every check.
pub struct Tolerances;

impl Tolerances {
    /// Relative tolerance for identities between closed-form quantities.
    pub const CLOSED_FORM: f64 = 1e-10;
    /// Relative tolerance when quadrature constants enter.
    pub const QUADRATURE: f64 = 1e-6;
    /// Multiple of the solver's KKT residual allowed for solver-backed checks.
    pub const SOLVER_FACTOR: f64 = 10.0;
    /// Root residual of the proximal time shift.
    pub const THETA: f64 = 1e-13;
    /// Coordinates of the l-infinity projections.
    pub const BANACH: f64 = 1e-9;
    /// Absolute tolerance on transport identities between exact couplings.
    pub const TRANSPORT: f64 = 1e-12;
    /// Absolute tolerance of the variational inequality for closed-form proximal points.
    pub const VARIATIONAL: f64 = 1e-8;

    /// Tolerance for a check backed by a proximal solve with the given KKT residual.
    pub fn solver(kkt: f64, scale: f64) -> f64 {
        Self::SOLVER_FACTOR * kkt * scale.max(1.0) + 1e-12 * scale.max(1.0)
    }
}

/// One evaluated inequality `lhs <= rhs` (or `lhs = rhs` when `two_sided`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IneqReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; nonnegative means satisfied.
    pub residual: f64,
    pub tolerance: f64,
    pub two_sided: bool,
    /// SHA-256 of the check name and the bit patterns of its inputs.
    pub digest: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl IneqReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, inputs: &[f64]) -> Self {
        let name = name.into();
        let digest = digest(&name, inputs);
        Self { lhs, rhs, residual: rhs - lhs, tolerance, two_sided: false, digest, notes: Vec::new(), name }
    }

    pub fn equality(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, inputs: &[f64]) -> Self {
        Self { two_sided: true, ..Self::new(name, lhs, rhs, tolerance, inputs) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Amount by which the residual exceeds its tolerance; zero when satisfied.
    pub fn violation(&self) -> f64 {
        let excess = if self.two_sided { self.residual.abs() } else { -self.residual };
        if excess.is_nan() {
            return f64::INFINITY;
        }
        (excess - self.tolerance).max(0.0)
    }

    pub fn passed(&self) -> bool {
        self.violation() == 0.0
    }
}

fn digest(name: &str, inputs: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    for x in inputs {
        h.update(x.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn measure_inputs(m: &Measure) -> Vec<f64> {
    m.steps().into_iter().flat_map(|(a, b)| [a, b]).collect()
}

/// `W2^2 + (tau^2/2)(s_mu^2 + s_nu^2)` from precomputed quantities; `+inf` when a slope is.
pub fn capital_lambda_from(w2: f64, slope_mu: f64, slope_nu: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return w2 * w2;
    }
    if !slope_mu.is_finite() || !slope_nu.is_finite() {
        return f64::INFINITY;
    }
    w2 * w2 + 0.5 * tau * tau * (slope_mu * slope_mu + slope_nu * slope_nu)
}

/// `Lambda_tau(mu, nu)` with metric slopes from [`metric_slope`].
pub fn capital_lambda(spec: &FunctionalSpec, mu: &Measure, nu: &Measure, tau: f64) -> f64 {
    let w = w2_distance(mu, nu);
    if tau == 0.0 {
        return w * w;
    }
    capital_lambda_from(w, metric_slope(spec, mu).value, metric_slope(spec, nu).value, tau)
}

/// `Lambda~_tau = W2^2 + tau E(mu) + tau E(nu)`.
pub fn modified_lambda(spec: &FunctionalSpec, mu: &Measure, nu: &Measure, tau: f64) -> f64 {
    w2_squared(mu, nu) + tau * (energy(spec, mu) + energy(spec, nu))
}

/// Every distance, slope and energy entering the contraction inequality for one pair step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStep {
    pub tau: f64,
    pub lambda: f64,
    pub w_mu_nu: f64,
    pub w_mutau_nutau: f64,
    pub w_mu_nutau: f64,
    pub w_nu_mutau: f64,
    pub w_mu_mutau: f64,
    pub w_nu_nutau: f64,
    pub slope_mu: f64,
    pub slope_nu: f64,
    pub slope_mu_tau: f64,
    pub slope_nu_tau: f64,
    pub energy_mu: f64,
    pub energy_nu: f64,
    pub energy_mu_tau: f64,
    pub energy_nu_tau: f64,
    /// Largest KKT residual of the proximal solves (zero for closed forms).
    pub kkt: f64,
    /// Relative tolerance class of the ingredients.
    pub relative_tol: f64,
    #[serde(skip)]
    pub states: Option<[Measure; 4]>,
}

impl PairStep {
    pub fn lambda_before(&self) -> f64 {
        capital_lambda_from(self.w_mu_nu, self.slope_mu, self.slope_nu, self.tau)
    }

    pub fn lambda_after(&self) -> f64 {
        capital_lambda_from(self.w_mutau_nutau, self.slope_mu_tau, self.slope_nu_tau, self.tau)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_states(
        spec: &FunctionalSpec,
        mu: Measure,
        nu: Measure,
        a: ProxResult,
        b: ProxResult,
        tau: f64,
        slopes: (f64, f64),
        relative_tol: f64,
    ) -> Self {
        let (mt, nt) = (a.prox_point, b.prox_point);
        Self {
            tau,
            lambda: spec.lambda_convexity(),
            w_mu_nu: w2_distance(&mu, &nu),
            w_mutau_nutau: w2_distance(&mt, &nt),
            w_mu_nutau: w2_distance(&mu, &nt),
            w_nu_mutau: w2_distance(&nu, &mt),
            w_mu_mutau: a.w2_move,
            w_nu_nutau: b.w2_move,
            slope_mu: slopes.0,
            slope_nu: slopes.1,
            slope_mu_tau: a.slope_at_prox.value,
            slope_nu_tau: b.slope_at_prox.value,
            energy_mu: energy(spec, &mu),
            energy_nu: energy(spec, &nu),
            energy_mu_tau: a.energy_at_prox,
            energy_nu_tau: b.energy_at_prox,
            kkt: a.solver.kkt_residual.max(b.solver.kkt_residual),
            relative_tol,
            states: Some([mu, nu, mt, nt]),
        }
    }

    /// Closed-form step of `lambda x^2 / 2`.
    pub fn quadratic(lambda: f64, mu: &Measure, nu: &Measure, tau: f64) -> Result<Self> {
        let spec = FunctionalSpec::quadratic(lambda)?;
        let a = prox_quadratic(mu, lambda, tau)?;
        let b = prox_quadratic(nu, lambda, tau)?;
        let slopes = (metric_slope(&spec, mu).value, metric_slope(&spec, nu).value);
        Ok(Self::from_states(&spec, mu.clone(), nu.clone(), a, b, tau, slopes, Tolerances::CLOSED_FORM))
    }

    /// Closed-form step between Barenblatt states `sigma_p(s, .)` and `sigma_p(t, .)`.
    pub fn barenblatt(params: &BarenblattParams, s: f64, t: f64, tau: f64) -> Result<Self> {
        let (s1, t1) = (theta_tau(s, params.beta, tau)?, theta_tau(t, params.beta, tau)?);
        let w = |a: f64, b: f64| params.w2_between(a, b);
        Ok(Self {
            tau,
            lambda: 0.0,
            w_mu_nu: w(s, t),
            w_mutau_nutau: w(s1, t1),
            w_mu_nutau: w(s, t1),
            w_nu_mutau: w(t, s1),
            w_mu_mutau: w(s, s1),
            w_nu_nutau: w(t, t1),
            slope_mu: params.slope(s),
            slope_nu: params.slope(t),
            slope_mu_tau: params.slope(s1),
            slope_nu_tau: params.slope(t1),
            energy_mu: params.energy(s),
            energy_nu: params.energy(t),
            energy_mu_tau: params.energy(s1),
            energy_nu_tau: params.energy(t1),
            kkt: 0.0,
            relative_tol: Tolerances::QUADRATURE,
            states: None,
        })
    }

    /// Step through the numeric proximal solver. Slopes are norms of the discrete energy
    /// gradient, the metric slope of the discretized energy.
    pub fn numeric(spec: &FunctionalSpec, mu: &QuantileMeasure, nu: &QuantileMeasure, tau: f64, opts: &SolverOptions) -> Result<Self> {
        let a = jko_step(spec, mu, tau, opts)?;
        let b = jko_step(spec, nu, tau, opts)?;
        let slopes = (gradient_norm_slope(spec, mu).value, gradient_norm_slope(spec, nu).value);
        Ok(Self::from_states(
            spec,
            Measure::Quantile(mu.clone()),
            Measure::Quantile(nu.clone()),
            a,
            b,
            tau,
            slopes,
            Tolerances::CLOSED_FORM,
        ))
    }

    /// Best available step: closed forms for the quadratic potential, the solver otherwise.
    pub fn compute(spec: &FunctionalSpec, mu: &Measure, nu: &Measure, tau: f64, opts: &SolverOptions) -> Result<Self> {
        spec.check_step(tau)?;
        match (spec, mu, nu) {
            (FunctionalSpec::Quadratic { lambda }, _, _) => Self::quadratic(*lambda, mu, nu, tau),
            (_, Measure::Quantile(a), Measure::Quantile(b)) => Self::numeric(spec, a, b, tau, opts),
            _ => Err(Error::Unsupported(format!("`{spec}` needs quantile measures for a proximal solve"))),
        }
    }

    /// Step from the proximal points of this step.
    pub fn next(&self, spec: &FunctionalSpec, opts: &SolverOptions) -> Result<Self> {
        let Some([_, _, mt, nt]) = &self.states else {
            return Err(Error::Unsupported("closed-form pair steps carry no states".into()));
        };
        Self::compute(spec, mt, nt, self.tau, opts)
    }

    fn scale(&self) -> f64 {
        let before = self.lambda_before();
        let after = self.lambda_after();
        before.abs() + after.abs()
    }

    fn tolerance(&self) -> f64 {
        let scale = self.scale();
        let solver = if self.kkt > 0.0 { Tolerances::solver(self.kkt, scale) } else { 0.0 };
        self.relative_tol * scale.max(1.0) + solver
    }

    fn inputs(&self) -> Vec<f64> {
        vec![
            self.tau,
            self.lambda,
            self.w_mu_nu,
            self.w_mutau_nutau,
            self.slope_mu,
            self.slope_nu,
            self.energy_mu,
            self.energy_nu,
        ]
    }

    /// Right-hand side of the full contraction inequality.
    pub fn full_rhs(&self) -> f64 {
        let t = self.tau;
        let sq = |x: f64| x * x;
        -0.5 * sq(t * self.slope_nu - self.w_nu_nutau) - 0.5 * sq(t * self.slope_mu - self.w_mu_mutau)
            - 0.5 * self.lambda * t
                * (2.0 * sq(self.w_mutau_nutau)
                    + sq(self.w_mu_nutau)
                    + sq(self.w_nu_mutau)
                    + sq(self.w_nu_nutau)
                    + sq(self.w_mu_mutau))
    }
}

/// `-((2 lambda tau + lambda^2 tau^2) / (1 + lambda tau)^2) [W2^2 + lambda tau^2 (E(mu) + E(nu))]`,
/// the common value of both sides of the full contraction inequality for `lambda x^2 / 2`.
pub fn quadratic_contraction_value(lambda: f64, tau: f64, w2_sq: f64, energy_mu: f64, energy_nu: f64) -> f64 {
    let lt = lambda * tau;
    -((2.0 * lt + lt * lt) / (1.0 + lt).powi(2)) * (w2_sq + lambda * tau * tau * (energy_mu + energy_nu))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    /// `Lambda_tau(mu_tau, nu_tau) <= Lambda_tau(mu, nu)`; only for `lambda >= 0`.
    pub simple: Option<IneqReport>,
    /// Full inequality with the correction terms; two-sided on the quadratic family.
    pub full: IneqReport,
    /// The comparison started one step later because a slope at the inputs was infinite.
    pub shifted: bool,
}

impl ContractionReport {
    pub fn reports(&self) -> impl Iterator<Item = &IneqReport> {
        self.simple.iter().chain(std::iter::once(&self.full))
    }

    pub fn passed(&self) -> bool {
        self.reports().all(IneqReport::passed)
    }
}

/// Evaluates the contraction inequalities on a computed pair step.
pub fn contraction_from_step(step: &PairStep, sharp: bool) -> ContractionReport {
    let before = step.lambda_before();
    let after = step.lambda_after();
    let tol = step.tolerance();
    let inputs = step.inputs();
    let simple = (step.lambda >= 0.0).then(|| IneqReport::new("contraction", after, before, tol, &inputs));
    let lhs = after - before;
    let rhs = step.full_rhs();
    let full = if sharp {
        IneqReport::equality("contraction-full", lhs, rhs, tol, &inputs)
    } else {
        IneqReport::new("contraction-full", lhs, rhs, tol, &inputs)
    };
    ContractionReport { simple, full, shifted: false }
}

/// Contraction of the proximal map in `Lambda_tau`. When a slope at the inputs is infinite the
/// comparison is made one step later, between the first and second proximal points.
pub fn contraction_check(spec: &FunctionalSpec, mu: &Measure, nu: &Measure, tau: f64, opts: &SolverOptions) -> Result<ContractionReport> {
    let mut step = PairStep::compute(spec, mu, nu, tau, opts)?;
    let mut shifted = false;
    if !step.lambda_before().is_finite() {
        step = step.next(spec, opts)?;
        shifted = true;
        if !step.lambda_before().is_finite() {
            return Err(Error::Hypothesis("slopes remain infinite after one proximal step".into()));
        }
    }
    let sharp = matches!(spec, FunctionalSpec::Quadratic { .. });
    let mut report = contraction_from_step(&step, sharp);
    report.shifted = shifted;
    if shifted {
        report.full = report.full.with_note("compared from the first proximal step");
    }
    Ok(report)
}

/// `(1 + tau lambda) Lambda(mu_tau, nu_tau) <= (1 - tau lambda) Lambda(mu, nu) + 3 lambda tau Lambda^(1/2) [W2(mu, mu_tau) + W2(nu, nu_tau)]`.
pub fn corollary_poslam_check(spec: &FunctionalSpec, mu: &Measure, nu: &Measure, tau: f64, opts: &SolverOptions) -> Result<IneqReport> {
    let lambda = spec.lambda_convexity();
    if !(lambda > 0.0) {
        return Err(Error::Hypothesis(format!("needs lambda > 0, got {lambda}")));
    }
    if lambda * tau > 1.0 {
        return Err(Error::Hypothesis(format!("needs lambda tau <= 1, got {}", lambda * tau)));
    }
    let step = PairStep::compute(spec, mu, nu, tau, opts)?;
    let before = step.lambda_before();
    if !before.is_finite() {
        return Err(Error::Hypothesis("Lambda_tau(mu, nu) is infinite".into()));
    }
    let lt = lambda * tau;
    let lhs = (1.0 + lt) * step.lambda_after();
    let rhs = (1.0 - lt) * before + 3.0 * lt * before.sqrt() * (step.w_mu_mutau + step.w_nu_nutau);
    Ok(IneqReport::new("corollary-poslam", lhs, rhs, step.tolerance(), &step.inputs()))
}

/// `Lambda~_tau(mu_tau, nu_tau) <= Lambda~_tau(mu, nu)` for convex functionals.
pub fn modified_lambda_check(spec: &FunctionalSpec, mu: &Measure, nu: &Measure, tau: f64, opts: &SolverOptions) -> Result<IneqReport> {
    if spec.lambda_convexity() < 0.0 {
        return Err(Error::Hypothesis("the modified functional needs lambda >= 0".into()));
    }
    let step = PairStep::compute(spec, mu, nu, tau, opts)?;
    let before = step.w_mu_nu.powi(2) + tau * (step.energy_mu + step.energy_nu);
    let after = step.w_mutau_nutau.powi(2) + tau * (step.energy_mu_tau + step.energy_nu_tau);
    let scale = before.abs() + after.abs();
    let tol = Tolerances::CLOSED_FORM * scale.max(1.0) + Tolerances::solver(step.kkt, scale);
    Ok(IneqReport::new("modified-lambda", after, before, tol, &step.inputs()))
}

/// Envelope `E_tau` and the modulus it is tested against.
struct Envelope<'a> {
    spec: &'a FunctionalSpec,
    tau: f64,
    lambda_tau: f64,
    minimizer: Measure,
    opts: SolverOptions,
}

impl<'a> Envelope<'a> {
    fn new(spec: &'a FunctionalSpec, tau: f64, lambda_override: Option<f64>) -> Result<Self> {
        spec.check_step(tau)?;
        let minimizer = spec
            .minimizer()
            .ok_or_else(|| Error::Hypothesis(format!("`{spec}` has no minimizer over the whole space")))?;
        let lambda_tau = match (lambda_override, spec) {
            (Some(l), _) => l,
            (None, FunctionalSpec::Indicator { .. }) => 1.0 / tau,
            (None, _) => lambda_tau(spec.lambda_convexity(), tau)?,
        };
        Ok(Self { spec, tau, lambda_tau, minimizer, opts: SolverOptions::default() })
    }

    fn value(&self, mu: &Measure) -> Result<f64> {
        moreau_yosida(self.spec, mu, self.tau, &self.opts)
    }

    /// `|grad_W E_tau|(mu)`, available in closed form for both functionals with a minimizer.
    fn slope(&self, mu: &Measure) -> Result<f64> {
        match self.spec {
            FunctionalSpec::Quadratic { lambda } => Ok(lambda_tau(*lambda, self.tau)?.abs() * mu.second_moment().sqrt()),
            FunctionalSpec::Indicator { reference, .. } => Ok(w2_distance(mu, reference) / self.tau),
            _ => Err(Error::Unsupported(format!("no slope of the envelope of `{}`", self.spec))),
        }
    }

    fn vacuous(&self) -> bool {
        self.lambda_tau == 0.0
    }
}

/// Convexity of `E_tau` along the geodesic from the minimizer to `mu`, one report per `alpha`.
/// `lambda_override` replaces the modulus `lambda_tau`.
pub fn generalized_convexity_check(
    spec: &FunctionalSpec,
    mu: &Measure,
    tau: f64,
    alphas: &[f64],
    lambda_override: Option<f64>,
) -> Result<Vec<IneqReport>> {
    let env = Envelope::new(spec, tau, lambda_override)?;
    let bar = &env.minimizer;
    let e_bar = env.value(bar)?;
    let e_mu = env.value(mu)?;
    let d2 = w2_squared(bar, mu);
    let mut inputs = measure_inputs(mu);
    inputs.extend([tau, env.lambda_tau]);
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(out_of_range("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        let point = geodesic_point(bar, mu, alpha)?;
        let lhs = env.value(&point)?;
        let rhs = (1.0 - alpha) * e_bar + alpha * e_mu - alpha * (1.0 - alpha) * env.lambda_tau / 2.0 * d2;
        let tol = Tolerances::CLOSED_FORM * (lhs.abs() + rhs.abs()).max(1.0);
        let mut args = inputs.clone();
        args.push(alpha);
        let mut r = IneqReport::equality(format!("convexity-alpha-{alpha}"), lhs, rhs, tol, &args);
        r.two_sided = lambda_override.is_none();
        if env.vacuous() {
            r = r.with_note("vacuous: lambda_tau = 0");
        }
        out.push(r);
    }
    Ok(out)
}

/// `E_tau(mu) - E_tau(bar mu) >= (lambda_tau / 2) W2^2(mu, bar mu)`.
pub fn talagrand_check(spec: &FunctionalSpec, mu: &Measure, tau: f64) -> Result<IneqReport> {
    let env = Envelope::new(spec, tau, None)?;
    let d2 = w2_squared(mu, &env.minimizer);
    let lhs = env.lambda_tau / 2.0 * d2;
    let rhs = env.value(mu)? - env.value(&env.minimizer)?;
    let tol = Tolerances::CLOSED_FORM * (lhs.abs() + rhs.abs()).max(1.0);
    let mut inputs = measure_inputs(mu);
    inputs.push(tau);
    let r = IneqReport::new("talagrand", lhs, rhs, tol, &inputs);
    Ok(if env.vacuous() { r.with_note("vacuous: lambda_tau = 0") } else { r })
}

/// `E_tau(mu) - E_tau(bar mu) <= |grad_W E_tau|(mu) W2(mu, bar mu) - (lambda_tau / 2) W2^2(mu, bar mu)`.
pub fn hwi_check(spec: &FunctionalSpec, mu: &Measure, tau: f64) -> Result<IneqReport> {
    let env = Envelope::new(spec, tau, None)?;
    let w = w2_distance(mu, &env.minimizer);
    let lhs = env.value(mu)? - env.value(&env.minimizer)?;
    let rhs = env.slope(mu)? * w - env.lambda_tau / 2.0 * w * w;
    let tol = Tolerances::CLOSED_FORM * (lhs.abs() + rhs.abs()).max(1.0);
    let mut inputs = measure_inputs(mu);
    inputs.push(tau);
    let r = IneqReport::new("hwi", lhs, rhs, tol, &inputs);
    Ok(if env.vacuous() { r.with_note("vacuous: lambda_tau = 0") } else { r })
}

/// Dilation identities of the quadratic proximal map:
/// `W2^2(mu_tau, nu_tau) = W2^2(mu, nu) / (1 + lambda tau)^2` and
/// `W2^2(mu, nu_tau) = [W2^2(mu, nu) + 2 tau (E(mu) - E(nu) / (1 + lambda tau))] / (1 + lambda tau)`.
pub fn rok_identities_check(lambda: f64, tau: f64, mu: &Measure, nu: &Measure) -> Result<Vec<IneqReport>> {
    let spec = FunctionalSpec::quadratic(lambda)?;
    spec.check_step(tau)?;
    let k = 1.0 + lambda * tau;
    let mt = prox_quadratic(mu, lambda, tau)?.prox_point;
    let nt = prox_quadratic(nu, lambda, tau)?.prox_point;
    let d2 = w2_squared(mu, nu);
    let (e_mu, e_nu) = (energy(&spec, mu), energy(&spec, nu));
    let mut inputs = measure_inputs(mu);
    inputs.extend(measure_inputs(nu));
    inputs.extend([lambda, tau]);
    let rel = |a: f64, b: f64| Tolerances::CLOSED_FORM * (a.abs() + b.abs()).max(Tolerances::TRANSPORT);
    let lhs2 = w2_squared(&mt, &nt);
    let rhs2 = d2 / (k * k);
    let lhs1 = w2_squared(mu, &nt);
    let rhs1 = (d2 + 2.0 * tau * (e_mu - e_nu / k)) / k;
    let lhs0 = w2_squared(mu, &mt);
    let rhs0 = 2.0 * lambda * tau * tau * energy(&spec, &mt);
    Ok(vec![
        IneqReport::equality("rok-scaled-distance", lhs2, rhs2, rel(lhs2, rhs2), &inputs),
        IneqReport::equality("rok-cross-distance", lhs1, rhs1, rel(lhs1, rhs1), &inputs),
        IneqReport::equality("rok-self-distance", lhs0, rhs0, rel(lhs0, rhs0), &inputs),
    ])
}

/// Variational inequality at a proximal point `mu_tau` against a test measure `nu`:
/// `(W2^2(mu_tau, nu) - W2^2(mu, nu)) / (2 tau) + (lambda/2) W2^2(mu_tau, nu) <= E(nu) - E(mu_tau) - W2^2(mu, mu_tau) / (2 tau)`.
pub fn variational_inequality_check(
    spec: &FunctionalSpec,
    mu: &Measure,
    prox: &ProxResult,
    nu: &Measure,
    tau: f64,
) -> Result<IneqReport> {
    spec.check_step(tau)?;
    let lambda = spec.lambda_convexity();
    let mt = &prox.prox_point;
    let d_t = w2_squared(mt, nu);
    let lhs = (d_t - w2_squared(mu, nu)) / (2.0 * tau) + lambda / 2.0 * d_t;
    let rhs = energy(spec, nu) - prox.energy_at_prox - prox.w2_move * prox.w2_move / (2.0 * tau);
    let scale = lhs.abs() + rhs.abs();
    let tol = if prox.solver.kkt_residual == 0.0 {
        Tolerances::VARIATIONAL * scale.max(1.0)
    } else {
        Tolerances::solver(prox.solver.kkt_residual, d_t.sqrt().max(scale))
    };
    let mut inputs = measure_inputs(mu);
    inputs.extend(measure_inputs(nu));
    inputs.push(tau);
    Ok(IneqReport::new("variational-inequality", lhs, rhs, tol, &inputs))
}

/// One-step energy descent `W2^2(mu, mu_tau) <= 2 tau (E(mu) - E(mu_tau))`.
pub fn energy_descent_check(spec: &FunctionalSpec, mu: &Measure, prox: &ProxResult, tau: f64) -> IneqReport {
    let lhs = prox.w2_move * prox.w2_move;
    let rhs = 2.0 * tau * (energy(spec, mu) - prox.energy_at_prox);
    let scale = lhs.abs() + rhs.abs();
    let tol = Tolerances::CLOSED_FORM * scale.max(1.0) + Tolerances::solver(prox.solver.kkt_residual, scale) * tau;
    let mut inputs = measure_inputs(mu);
    inputs.push(tau);
    IneqReport::new("energy-descent", lhs, rhs, tol, &inputs)
}

/// Result of the projection example in `(R^2, l-infinity)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanachReport {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub j_a: [f64; 2],
    pub j_b: [f64; 2],
    /// `|a - b|_inf`.
    pub distance_before: f64,
    /// `|J(a) - J(b)|_inf`.
    pub distance_after: f64,
    pub is_contraction: bool,
    pub checks: Vec<IneqReport>,
}

fn linf(x: [f64; 2], y: [f64; 2]) -> f64 {
    (x[0] - y[0]).abs().max((x[1] - y[1]).abs())
}

/// Nearest point of the half-plane `3 x2 <= x1 - 4` to `y` in the l-infinity norm. For `y`
/// outside the set, minimizers lie on the boundary line `x1 = 4 + 3 x2`; the convex distance
/// along the line is scanned on a grid and refined by golden-section search.
fn linf_projection(y: [f64; 2]) -> [f64; 2] {
    let point = |t: f64| [4.0 + 3.0 * t, t];
    if 3.0 * y[1] <= y[0] - 4.0 {
        return y;
    }
    let f = |t: f64| linf(point(t), y);
    let (lo, hi, steps) = (-20.0, 20.0, 4000);
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps).map(|i| lo + i as f64 * h).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    let (mut a, mut b) = (best - h, best + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    point((a + b) / 2.0)
}

/// Projections of `a = (0,0)` and `b = (1,1)` onto the half-plane in the l-infinity norm; the
/// proximal map of the indicator is this projection for every `tau`.
pub fn banach_linf_counterexample() -> BanachReport {
    let (a, b) = ([0.0, 0.0], [1.0, 1.0]);
    let (j_a, j_b) = (linf_projection(a), linf_projection(b));
    let before = linf(a, b);
    let after = linf(j_a, j_b);
    let t = Tolerances::BANACH;
    let checks = vec![
        IneqReport::equality("banach-j-a-x1", j_a[0], 1.0, t, &[0.0]),
        IneqReport::equality("banach-j-a-x2", j_a[1], -1.0, t, &[0.0]),
        IneqReport::equality("banach-j-b-x1", j_b[0], 2.5, t, &[1.0]),
        IneqReport::equality("banach-j-b-x2", j_b[1], -0.5, t, &[1.0]),
        IneqReport::equality("banach-distance-after", after, 1.5, t, &[]),
        IneqReport::new("banach-expansion", before, after, 0.0, &[]),
    ];
    BanachReport {
        a,
        b,
        j_a,
        j_b,
        distance_before: before,
        distance_after: after,
        is_contraction: after <= before,
        checks,
    }
}

/// Largest sequence allowed by `(1 + tau lambda) a_n <= (1 - tau lambda) a_{n-1} + tau a_{n-1}^(1/2) b_n`.
pub fn gronwall_recursion(a0: f64, b: &[f64], lambda: f64, tau: f64) -> Vec<f64> {
    let mut a = Vec::with_capacity(b.len() + 1);
    a.push(a0);
    for bn in b {
        let prev = *a.last().unwrap();
        let next = ((1.0 - tau * lambda) * prev + tau * prev.sqrt() * bn) / (1.0 + tau * lambda);
        a.push(next.max(0.0));
    }
    a
}

/// Compares the maximal recursive sequence with the Gronwall bound; reports the tightest index.
pub fn gronwall_check(a0: f64, b: &[f64], lambda: f64, tau: f64) -> Result<IneqReport> {
    if lambda * tau > 1.0 {
        return Err(Error::Hypothesis(format!("needs lambda tau <= 1, got {}", lambda * tau)));
    }
    let a = gronwall_recursion(a0, b, lambda, tau);
    let bound = gronwall_bound(a0, b, lambda, tau)?;
    let (lhs, rhs) = a
        .iter()
        .zip(&bound)
        .map(|(x, y)| (x.sqrt(), *y))
        .min_by(|p, q| (p.1 - p.0).total_cmp(&(q.1 - q.0)))
        .unwrap();
    let mut inputs = vec![a0, lambda, tau];
    inputs.extend_from_slice(b);
    Ok(IneqReport::new("gronwall", lhs, rhs, Tolerances::CLOSED_FORM * rhs.abs().max(1.0), &inputs))
}

fn margin(r: &IneqReport) -> f64 {
    if r.two_sided {
        r.tolerance - r.residual.abs()
    } else {
        r.residual + r.tolerance
    }
}

/// Summary of a randomized suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub max_violation: f64,
    pub n_checked: usize,
    pub n_failed: usize,
    pub tolerance: f64,
    pub worst: Option<IneqReport>,
    /// Every report, in generation order.
    #[serde(skip)]
    pub reports: Vec<IneqReport>,
}

impl SuiteSummary {
    pub fn from_reports(suite: impl Into<String>, reports: impl IntoIterator<Item = IneqReport>) -> Self {
        let mut summary = Self {
            suite: suite.into(),
            max_violation: 0.0,
            n_checked: 0,
            n_failed: 0,
            tolerance: 0.0,
            worst: None,
            reports: Vec::new(),
        };
        for r in reports {
            summary.absorb(r);
        }
        summary
    }

    fn absorb(&mut self, r: IneqReport) {
        self.n_checked += 1;
        self.tolerance = self.tolerance.max(r.tolerance);
        let v = r.violation();
        if v > 0.0 {
            self.n_failed += 1;
        }
        self.max_violation = self.max_violation.max(v);
        self.keep_worst(r.clone());
        self.reports.push(r);
    }

    fn keep_worst(&mut self, r: IneqReport) {
        if self.worst.as_ref().is_none_or(|w| margin(&r) < margin(w)) {
            self.worst = Some(r);
        }
    }

    /// Combines the summaries of two shards of the same suite.
    pub fn merge(mut self, other: SuiteSummary) -> Self {
        self.n_checked += other.n_checked;
        self.n_failed += other.n_failed;
        self.tolerance = self.tolerance.max(other.tolerance);
        self.max_violation = self.max_violation.max(other.max_violation);
        if let Some(w) = other.worst {
            self.keep_worst(w);
        }
        self.reports.extend(other.reports);
        self
    }

    pub fn passed(&self) -> bool {
        self.n_failed == 0
    }
}

/// Random contraction checks for `spec`: atomic pairs for the quadratic potential, quantile
/// pairs on a common grid of size `n` otherwise.
pub fn random_contraction_suite(spec: &FunctionalSpec, count: usize, tau: f64, n: usize, rng: &mut SuiteRng) -> Result<SuiteSummary> {
    let opts = SolverOptions::default();
    let mut reports = Vec::with_capacity(2 * count);
    for _ in 0..count {
        let (mu, nu) = random_pair(spec, n, rng);
        let r = contraction_check(spec, &mu, &nu, tau, &opts)?;
        reports.extend(r.reports().cloned());
    }
    Ok(SuiteSummary::from_reports("contraction", reports))
}

fn random_pair(spec: &FunctionalSpec, n: usize, rng: &mut SuiteRng) -> (Measure, Measure) {
    match spec {
        FunctionalSpec::Quadratic { .. } => (
            Measure::Atomic(random_atomic(rng, 6, 3.0)),
            Measure::Atomic(random_atomic(rng, 6, 3.0)),
        ),
        _ => (
            Measure::Quantile(random_quantile(rng, n, 0.5)),
            Measure::Quantile(random_quantile(rng, n, 0.5)),
        ),
    }
}

/// Random checks that `W2^2 + tau (E(mu) + E(nu))` does not increase under paired proximal steps.
pub fn random_modified_suite(spec: &FunctionalSpec, count: usize, tau: f64, n: usize, rng: &mut SuiteRng) -> Result<SuiteSummary> {
    let opts = SolverOptions::default();
    let mut reports = Vec::with_capacity(count);
    for _ in 0..count {
        let (mu, nu) = random_pair(spec, n, rng);
        reports.push(modified_lambda_check(spec, &mu, &nu, tau, &opts)?);
    }
    Ok(SuiteSummary::from_reports("modified-lambda", reports))
}

/// Random Gronwall instances with `lambda tau <= 1`.
pub fn random_gronwall_suite(count: usize, rng: &mut SuiteRng) -> Result<SuiteSummary> {
    let mut reports = Vec::with_capacity(count);
    for _ in 0..count {
        let lambda = rng.random_range(0.01..5.0);
        let tau: f64 = rng.random_range(1e-6..=1.0 / lambda);
        let a0 = rng.random_range(0.0..10.0);
        let len = rng.random_range(1..=100);
        let b: Vec<f64> = (0..len)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..5.0) })
            .collect();
        reports.push(gronwall_check(a0, &b, lambda, tau)?);
    }
    Ok(SuiteSummary::from_reports("gronwall", reports))
}

/// Random corollary checks for `lambda x^2 / 2`, `lambda > 0`, `lambda tau <= 1`.
pub fn random_poslam_suite(lambda: f64, count: usize, rng: &mut SuiteRng) -> Result<SuiteSummary> {
    let spec = FunctionalSpec::quadratic(lambda)?;
    let opts = SolverOptions::default();
    let mut reports = Vec::with_capacity(count);
    for _ in 0..count {
        let tau = rng.random_range(1e-3..=1.0 / lambda);
        let (mu, nu) = random_pair(&spec, 0, rng);
        reports.push(corollary_poslam_check(&spec, &mu, &nu, tau, &opts)?);
    }
    Ok(SuiteSummary::from_reports("corollary-poslam", reports))
}

/// Random convexity, Talagrand and HWI checks for `lambda x^2 / 2`.
pub fn random_envelope_suite(lambda: f64, count: usize, rng: &mut SuiteRng) -> Result<SuiteSummary> {
    let spec = FunctionalSpec::quadratic(lambda)?;
    let alphas: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let mut reports = Vec::new();
    for _ in 0..count {
        let tau = rng.random_range(1e-3..2.0);
        let mu = Measure::Atomic(random_atomic(rng, 6, 3.0));
        reports.extend(generalized_convexity_check(&spec, &mu, tau, &alphas, None)?);
        reports.push(talagrand_check(&spec, &mu, tau)?);
        reports.push(hwi_check(&spec, &mu, tau)?);
    }
    Ok(SuiteSummary::from_reports("envelope", reports))
}

/// Random dilation identities for `lambda x^2 / 2`.
pub fn random_rok_suite(count: usize, rng: &mut SuiteRng) -> Result<SuiteSummary> {
    let mut reports = Vec::new();
    for _ in 0..count {
        let lambda = rng.random_range(-0.9..3.0);
        let tau = rng.random_range(1e-3..1.0);
        let mu = Measure::Atomic(random_atomic(rng, 6, 3.0));
        let nu = Measure::Atomic(random_atomic(rng, 6, 3.0));
        reports.extend(rok_identities_check(lambda, tau, &mu, &nu)?);
    }
    Ok(SuiteSummary::from_reports("rok", reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capital_lambda_example() {
        let f = FunctionalSpec::quadratic(1.0).unwrap();
        let v = capital_lambda(&f, &Measure::dirac(1.0), &Measure::dirac(2.0), 1.0);
        assert!((v - 3.5).abs() < 1e-15);
        assert_eq!(capital_lambda(&f, &Measure::dirac(1.0), &Measure::dirac(2.0), 0.0), 1.0);
        assert_eq!(capital_lambda(&f, &Measure::dirac(0.0), &Measure::dirac(0.0), 1.0), 0.0);
    }

    #[test]
    fn infinite_slope_gives_infinite_lambda() {
        assert_eq!(capital_lambda_from(1.0, f64::INFINITY, 0.0, 0.1), f64::INFINITY);
    }

    #[test]
    fn quadratic_contraction_is_sharp() {
        let mu = Measure::dirac(1.0);
        let nu = Measure::dirac(-2.0);
        for lambda in [-0.5, 0.0, 1.0, 2.0] {
            let f = FunctionalSpec::quadratic(lambda).unwrap();
            let r = contraction_check(&f, &mu, &nu, 0.7, &SolverOptions::default()).unwrap();
            assert!(r.passed(), "{r:?}");
            assert!(r.full.residual.abs() < 1e-12);
            let expect = quadratic_contraction_value(lambda, 0.7, 9.0, lambda * 0.5, lambda * 2.0);
            assert!((r.full.lhs - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn poslam_boundary() {
        let f = FunctionalSpec::quadratic(1.0).unwrap();
        let opts = SolverOptions::default();
        let r = corollary_poslam_check(&f, &Measure::dirac(0.0), &Measure::dirac(1.0), 0.5, &opts).unwrap();
        assert!(r.passed() && r.residual > 0.0);
        assert!(corollary_poslam_check(&f, &Measure::dirac(0.0), &Measure::dirac(1.0), 1.0, &opts).unwrap().passed());
        assert!(corollary_poslam_check(&f, &Measure::dirac(0.0), &Measure::dirac(1.0), 1.5, &opts).is_err());
    }

    #[test]
    fn rok_examples() {
        let r = rok_identities_check(1.0, 1.0, &Measure::dirac(0.0), &Measure::dirac(2.0)).unwrap();
        assert!((r[0].lhs - 1.0).abs() < 1e-15);
        assert!(r.iter().all(IneqReport::passed));
    }

    #[test]
    fn convexity_and_envelope_inequalities_are_equalities() {
        let f = FunctionalSpec::quadratic(1.0).unwrap();
        let mu = Measure::Atomic(crate::AtomicMeasure::new(vec![-1.0, 3.0], vec![0.5, 0.5]).unwrap());
        let alphas = [0.0, 0.3, 1.0];
        for r in generalized_convexity_check(&f, &mu, 0.4, &alphas, None).unwrap() {
            assert!(r.passed() && r.residual.abs() < 1e-12, "{r:?}");
        }
        assert!(talagrand_check(&f, &mu, 0.4).unwrap().residual.abs() < 1e-12);
        assert!(hwi_check(&f, &mu, 0.4).unwrap().residual.abs() < 1e-12);
        assert!(generalized_convexity_check(&FunctionalSpec::Entropy, &mu, 0.4, &alphas, None).is_err());
    }

    #[test]
    fn indicator_envelope_is_one_over_tau_convex() {
        let reference = Measure::Quantile(QuantileMeasure::uniform(0.0, 1.0, 16).unwrap());
        let f = FunctionalSpec::indicator(reference);
        let mu = Measure::Quantile(QuantileMeasure::uniform(-2.0, 3.0, 16).unwrap());
        for r in generalized_convexity_check(&f, &mu, 0.5, &[0.25, 0.5, 0.75], None).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
        assert!(hwi_check(&f, &mu, 0.5).unwrap().passed());
    }

    #[test]
    fn banach_fixture() {
        let r = banach_linf_counterexample();
        assert!(r.checks.iter().all(IneqReport::passed), "{r:?}");
        assert!(!r.is_contraction);
    }

    #[test]
    fn gronwall_recursion_obeys_bound() {
        let r = gronwall_check(2.0, &[1.0, 0.0, 3.0, 0.5], 1.0, 0.5).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn digests_are_stable() {
        let a = IneqReport::new("x", 1.0, 2.0, 0.0, &[1.0, 2.0]);
        let b = IneqReport::new("x", 1.0, 2.0, 0.0, &[1.0, 2.0]);
        let c = IneqReport::new("x", 1.0, 2.0, 0.0, &[1.0, 2.5]);
        assert_eq!(a.digest, b.digest);
        assert_ne!(a.digest, c.digest);
        assert_eq!(a.digest.len(), 64);
    }
}
