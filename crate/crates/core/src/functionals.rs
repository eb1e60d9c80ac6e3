//! Energy functionals on measures: quadratic potential, Renyi/Boltzmann internal energies,
//! and the indicator of a single measure.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{out_of_range, Error, Result};
use crate::measure::{Measure, QuantileMeasure};
use crate::numerics::quadrature::{integrate, DEFAULT_ABS_TOL};
use crate::proximal::{jko_step, SolverOptions};
use crate::transport::{w2_distance, w2_squared};

/// Smallest admissible Renyi exponent on the line (coercivity threshold).
pub const MIN_EXPONENT: f64 = 1.0 / 3.0;
/// Two measures closer than this in W2 are treated as equal by the indicator functional.
pub const INDICATOR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalSpec {
    /// `E(mu) = int lambda x^2 / 2 d mu`.
    Quadratic { lambda: f64 },
    /// `E(mu) = int (f^p - f) / (p - 1) dx`, `p != 1`.
    Renyi { p: f64 },
    /// `E(mu) = int f log f dx`.
    Entropy,
    /// Zero at `reference`, `+inf` elsewhere.
    Indicator { reference: Box<Measure>, source: Option<PathBuf> },
}

impl FunctionalSpec {
    pub fn quadratic(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(out_of_range("lambda", "must be finite"));
        }
        Ok(FunctionalSpec::Quadratic { lambda })
    }

    /// Renyi energy with exponent `p`; `p = 1` yields [`FunctionalSpec::Entropy`].
    pub fn renyi(p: f64) -> Result<Self> {
        if !(p > MIN_EXPONENT && p.is_finite()) {
            return Err(out_of_range("p", format!("Renyi exponent must exceed 1/3 on the line, got {p}")));
        }
        Ok(if p == 1.0 { FunctionalSpec::Entropy } else { FunctionalSpec::Renyi { p } })
    }

    pub fn indicator(reference: Measure) -> Self {
        FunctionalSpec::Indicator { reference: Box::new(reference), source: None }
    }

    /// Exponent of the internal energy (1 for the entropy), `None` otherwise.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            FunctionalSpec::Renyi { p } => Some(*p),
            FunctionalSpec::Entropy => Some(1.0),
            _ => None,
        }
    }

    pub fn is_internal(&self) -> bool {
        self.exponent().is_some()
    }

    /// Modulus of convexity along generalized geodesics.
    pub fn lambda_convexity(&self) -> f64 {
        match self {
            FunctionalSpec::Quadratic { lambda } => *lambda,
            _ => 0.0,
        }
    }

    /// A minimizer over the whole space, when one exists.
    pub fn minimizer(&self) -> Option<Measure> {
        match self {
            FunctionalSpec::Quadratic { lambda } if *lambda >= 0.0 => Some(Measure::dirac(0.0)),
            FunctionalSpec::Indicator { reference, .. } => Some((**reference).clone()),
            _ => None,
        }
    }

    /// Rejects step sizes with `1 + lambda tau <= 0`.
    pub fn check_step(&self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(out_of_range("tau", format!("must be positive and finite, got {tau}")));
        }
        let k = 1.0 + self.lambda_convexity() * tau;
        if k <= 0.0 {
            return Err(Error::StepSize(k));
        }
        Ok(())
    }
}

impl fmt::Display for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalSpec::Quadratic { lambda } => write!(f, "quad:lambda={lambda}"),
            FunctionalSpec::Renyi { p } => write!(f, "renyi:p={p}"),
            FunctionalSpec::Entropy => write!(f, "entropy"),
            FunctionalSpec::Indicator { source: Some(path), .. } => write!(f, "indicator:file={}", path.display()),
            FunctionalSpec::Indicator { source: None, .. } => write!(f, "indicator:inline"),
        }
    }
}

impl FromStr for FunctionalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        let mut params: Vec<(String, String)> = Vec::new();
        for item in tail.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{item}`")))?;
            params.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        let get = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let number = |key: &str| -> Result<f64> {
            let raw = get(key).ok_or_else(|| Error::Parse(format!("`{head}` needs `{key}=`")))?;
            raw.parse::<f64>().map_err(|e| Error::Parse(format!("{key}=`{raw}`: {e}")))
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::Parse(format!("unknown parameter `{k}` for `{head}`"))),
                None => Ok(()),
            }
        };
        let check_dim = || -> Result<()> {
            match get("d") {
                None | Some("1") => Ok(()),
                Some(d) => Err(Error::Unsupported(format!("dimension d={d}; only d=1 is implemented"))),
            }
        };
        match head.to_ascii_lowercase().as_str() {
            "quad" | "quadratic" => {
                allow(&["lambda"])?;
                FunctionalSpec::quadratic(number("lambda")?)
            }
            "renyi" => {
                allow(&["p", "d"])?;
                check_dim()?;
                FunctionalSpec::renyi(number("p")?)
            }
            "entropy" => {
                allow(&["d"])?;
                check_dim()?;
                Ok(FunctionalSpec::Entropy)
            }
            "indicator" => {
                allow(&["file"])?;
                let path = PathBuf::from(get("file").ok_or_else(|| Error::Parse("indicator needs `file=`".into()))?);
                let reference = crate::io::read_measure(&path)?;
                Ok(FunctionalSpec::Indicator { reference: Box::new(reference), source: Some(path) })
            }
            other => Err(Error::Parse(format!(
                "unknown functional `{other}`; expected quad, renyi, entropy or indicator"
            ))),
        }
    }
}

/// Weight of quantile gap `j` (of `n - 1`) in the discrete internal energy: `1/n`, with an
/// extra `1/(2n)` on the two outermost gaps so that the weights sum to one.
fn gap_weight(j: usize, n: usize) -> f64 {
    let gaps = n - 1;
    let mut w = 1.0 / n as f64;
    if j == 0 {
        w += 0.5 / n as f64;
    }
    if j + 1 == gaps {
        w += 0.5 / n as f64;
    }
    w
}

/// `U(f) / f` written in terms of `v = 1/f`.
fn u_tilde(p: f64, v: f64) -> f64 {
    if p == 1.0 {
        -v.ln()
    } else {
        (v.powf(1.0 - p) - 1.0) / (p - 1.0)
    }
}

/// Discrete internal energy of a quantile vector; `+inf` when a gap vanishes or `n < 2`.
pub fn internal_energy(p: f64, q: &[f64]) -> f64 {
    let n = q.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let mut e = 0.0;
    for j in 0..n - 1 {
        let gap = q[j + 1] - q[j];
        if !(gap > 0.0) {
            return f64::INFINITY;
        }
        e += gap_weight(j, n) * u_tilde(p, nf * gap);
    }
    e
}

/// Gradient of the discrete internal energy in the `L^2(0,1)` metric on quantiles,
/// i.e. `n * dE/dq_i`. Requires strictly increasing `q`.
pub fn internal_energy_gradient(p: f64, q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let nf = n as f64;
    let mut g = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        // w_j * n^2 * f_j^p with f_j = 1 / (n gap_j)
        let f = 1.0 / (nf * (q[j + 1] - q[j]));
        let t = gap_weight(j, n) * nf * nf * f.powf(p);
        g[j] += t;
        g[j + 1] -= t;
    }
    g
}

/// Tridiagonal Hessian of the discrete internal energy in the same metric as
/// [`internal_energy_gradient`]: returns `(diag, off)` with `off[j]` coupling `j` and `j+1`.
pub(crate) fn internal_energy_hessian(p: f64, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = q.len();
    let nf = n as f64;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for j in 0..n.saturating_sub(1) {
        let v = nf * (q[j + 1] - q[j]);
        let h = gap_weight(j, n) * nf * nf * nf * p * v.powf(-p - 1.0);
        diag[j] += h;
        diag[j + 1] += h;
        off[j] = -h;
    }
    (diag, off)
}

/// `E(mu)`; `+inf` outside the domain.
pub fn energy(spec: &FunctionalSpec, mu: &Measure) -> f64 {
    match spec {
        FunctionalSpec::Quadratic { lambda } => 0.5 * lambda * mu.second_moment(),
        FunctionalSpec::Renyi { .. } | FunctionalSpec::Entropy => {
            let p = spec.exponent().unwrap();
            match mu {
                Measure::Quantile(q) => internal_energy(p, q.q()),
                Measure::Atomic(_) => f64::INFINITY,
            }
        }
        FunctionalSpec::Indicator { reference, .. } => {
            if w2_distance(mu, reference) <= INDICATOR_TOL {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Explanation for an infinite energy, if any.
pub fn energy_diagnostic(spec: &FunctionalSpec, mu: &Measure) -> Option<&'static str> {
    if energy(spec, mu).is_finite() {
        return None;
    }
    Some(match (spec, mu) {
        (FunctionalSpec::Indicator { .. }, _) => "measure differs from the indicator's reference",
        (_, Measure::Atomic(_)) => "internal energy is infinite on measures with atoms",
        (_, Measure::Quantile(q)) if q.n() < 2 => "internal energy needs at least two quantile samples",
        _ => "tied quantiles imply a singular density",
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeMethod {
    ClosedForm,
    DensityFiniteDifference,
    EulerLagrangeProxy,
}

/// Metric slope `|grad_W E|(mu)` with the method that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeValue {
    pub value: f64,
    pub method: SlopeMethod,
}

impl SlopeValue {
    pub fn closed_form(value: f64) -> Self {
        Self { value, method: SlopeMethod::ClosedForm }
    }

    pub fn infinite() -> Self {
        Self { value: f64::INFINITY, method: SlopeMethod::ClosedForm }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Metric slope. Closed forms for the quadratic potential and the indicator; for internal
/// energies on quantile measures, a finite-difference evaluation of
/// `(int |p f^(p-2) f'|^2 f dx)^(1/2)` on the implied density.
pub fn metric_slope(spec: &FunctionalSpec, mu: &Measure) -> SlopeValue {
    match spec {
        FunctionalSpec::Quadratic { lambda } => SlopeValue::closed_form(lambda.abs() * mu.second_moment().sqrt()),
        FunctionalSpec::Indicator { reference, .. } => {
            if w2_distance(mu, reference) <= INDICATOR_TOL {
                SlopeValue::closed_form(0.0)
            } else {
                SlopeValue::infinite()
            }
        }
        FunctionalSpec::Renyi { .. } | FunctionalSpec::Entropy => match mu {
            Measure::Quantile(q) if q.is_strict() && q.n() >= 3 => SlopeValue {
                value: density_slope(spec.exponent().unwrap(), q.q()),
                method: SlopeMethod::DensityFiniteDifference,
            },
            _ => SlopeValue::infinite(),
        },
    }
}

/// Nodal values of `grad (dE/drho) = p f^(p-2) f'` from quantile gaps. Interior nodes use the
/// centered quotient `n (f_j^p - f_{j-1}^p)`; edge nodes are extrapolated linearly in `x`
/// (for `p > 1` also the nodes adjacent to the outermost gaps, where the density may vanish).
pub fn density_gradient_nodes(p: f64, q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let nf = n as f64;
    let fp: Vec<f64> = q.windows(2).map(|w| (1.0 / (nf * (w[1] - w[0]))).powf(p)).collect();
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        g[i] = nf * (fp[i] - fp[i - 1]);
    }
    let skip = if p > 1.0 { 2 } else { 1 };
    if n >= 2 * skip + 2 {
        let extrapolate = |g: &[f64], a: usize, b: usize, at: usize| {
            let slope = (g[b] - g[a]) / (q[b] - q[a]);
            g[a] + slope * (q[at] - q[a])
        };
        for at in 0..skip {
            g[at] = extrapolate(&g, skip, skip + 1, at);
            g[n - 1 - at] = extrapolate(&g, n - 1 - skip, n - 2 - skip, n - 1 - at);
        }
    } else {
        g[0] = g.get(1).copied().unwrap_or(0.0);
        g[n - 1] = g[n - 2];
    }
    g
}

fn density_slope(p: f64, q: &[f64]) -> f64 {
    let g = density_gradient_nodes(p, q);
    (g.iter().map(|v| v * v).sum::<f64>() / q.len() as f64).sqrt()
}

/// Norm of the discrete energy gradient in the quantile metric. At a proximal point this
/// equals `W2(mu, mu_tau) / tau` (discrete Euler-Lagrange equation).
pub fn gradient_norm_slope(spec: &FunctionalSpec, q: &QuantileMeasure) -> SlopeValue {
    match spec {
        FunctionalSpec::Quadratic { lambda } => SlopeValue::closed_form(lambda.abs() * q.second_moment().sqrt()),
        FunctionalSpec::Indicator { .. } => metric_slope(spec, &Measure::Quantile(q.clone())),
        FunctionalSpec::Renyi { .. } | FunctionalSpec::Entropy => {
            if !q.is_strict() || q.n() < 2 {
                return SlopeValue { value: f64::INFINITY, method: SlopeMethod::EulerLagrangeProxy };
            }
            let g = internal_energy_gradient(spec.exponent().unwrap(), q.q());
            SlopeValue {
                value: (g.iter().map(|v| v * v).sum::<f64>() / q.n() as f64).sqrt(),
                method: SlopeMethod::EulerLagrangeProxy,
            }
        }
    }
}

/// `lambda_tau = lambda / (1 + lambda tau)`.
pub fn lambda_tau(lambda: f64, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(out_of_range("tau", format!("must be nonnegative, got {tau}")));
    }
    let k = 1.0 + lambda * tau;
    if k <= 0.0 {
        return Err(Error::StepSize(k));
    }
    Ok(lambda / k)
}

/// `C_p = (1/(1-p)) (int (1+|x|^2)^(-p/(1-p)) dx)^(1-p)` for `1/3 < p < 1` on the line.
pub fn coercivity_constant(p: f64, d: u32) -> Result<f64> {
    if d != 1 {
        return Err(Error::Unsupported(format!("coercivity constant in dimension {d}")));
    }
    if !(p > MIN_EXPONENT && p < 1.0) {
        return Err(out_of_range("p", format!("C_p is defined for 1/3 < p < 1, got {p}")));
    }
    let e = -p / (1.0 - p);
    let half = integrate(|x| (1.0 + x * x).powf(e), 0.0, f64::INFINITY, 0.5 * DEFAULT_ABS_TOL)?;
    Ok((2.0 * half).powf(1.0 - p) / (1.0 - p))
}

/// Moreau-Yosida envelope `E_tau(mu)`. Closed forms for the quadratic potential and the
/// indicator; internal energies go through a proximal solve.
pub fn moreau_yosida(spec: &FunctionalSpec, mu: &Measure, tau: f64, opts: &SolverOptions) -> Result<f64> {
    spec.check_step(tau)?;
    match spec {
        FunctionalSpec::Quadratic { lambda } => Ok(energy(spec, mu) / (1.0 + lambda * tau)),
        FunctionalSpec::Indicator { reference, .. } => {
            let d2 = w2_squared(mu, reference);
            Ok(if d2.sqrt() <= INDICATOR_TOL { 0.0 } else { d2 / (2.0 * tau) })
        }
        FunctionalSpec::Renyi { .. } | FunctionalSpec::Entropy => match mu {
            Measure::Quantile(q) => moreau_yosida_numeric(spec, q, tau, opts),
            Measure::Atomic(_) => Err(Error::Unsupported(
                "numeric Moreau-Yosida envelope needs a quantile measure".into(),
            )),
        },
    }
}

/// `E_tau(mu)` evaluated through the numeric proximal solver for every functional.
pub fn moreau_yosida_numeric(spec: &FunctionalSpec, mu: &QuantileMeasure, tau: f64, opts: &SolverOptions) -> Result<f64> {
    let prox = jko_step(spec, mu, tau, opts)?;
    Ok(prox.w2_move * prox.w2_move / (2.0 * tau) + prox.energy_at_prox)
}
