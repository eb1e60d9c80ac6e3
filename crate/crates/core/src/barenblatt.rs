//! Self-similar Barenblatt profiles `sigma_p(t, x) = t^(-beta) h_p(x / t^beta)` on the line.

use serde::Serialize;

use crate::error::{out_of_range, Result};
use crate::functionals::MIN_EXPONENT;
use crate::measure::{grid_point, QuantileMeasure};
use crate::numerics::quadrature::integrate;
use crate::numerics::roots::newton_bracketed;

const QUAD_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarenblattParams {
    pub p: f64,
    pub d: u32,
    /// `beta = 1 / (2 + d (p - 1))`.
    pub beta: f64,
    /// Normalizing constant `lambda(d, p)` of `h_p`.
    pub lam_norm: f64,
    /// `int |x|^2 h_p dx`.
    pub second_moment_h: f64,
    /// `int h_p^p dx` for `p != 1`, `int h_p log h_p dx` for `p = 1`.
    pub energy_integral: f64,
    /// Coefficient of `|x|^2` inside the profile, `(1-p)/p * beta/2`.
    coef: f64,
}

impl BarenblattParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > MIN_EXPONENT && p.is_finite()) {
            return Err(out_of_range("p", format!("Barenblatt profiles on the line need p > 1/3, got {p}")));
        }
        let beta = 1.0 / (2.0 + (p - 1.0));
        let coef = (1.0 - p) / p * beta / 2.0;
        let lam_norm = if p == 1.0 {
            (beta / (2.0 * std::f64::consts::PI)).sqrt()
        } else {
            let k = 1.0 / (p - 1.0);
            let half = if p > 1.0 {
                integrate(|y| (1.0 - y * y).max(0.0).powf(k), 0.0, 1.0, QUAD_TOL)?
            } else {
                integrate(|y| (1.0 + y * y).powf(k), 0.0, f64::INFINITY, QUAD_TOL)?
            };
            (coef.abs().sqrt() / (2.0 * half)).powf(1.0 / (k + 0.5))
        };
        let mut params = Self {
            p,
            d: 1,
            beta,
            lam_norm,
            second_moment_h: 0.0,
            energy_integral: 0.0,
            coef,
        };
        let upper = params.support_radius().unwrap_or(f64::INFINITY);
        params.second_moment_h = 2.0 * integrate(|x| x * x * params.h(x), 0.0, upper, QUAD_TOL)?;
        params.energy_integral = if p == 1.0 {
            lam_norm.ln() - beta * params.second_moment_h / 2.0
        } else {
            2.0 * integrate(|x| params.h(x).powf(p), 0.0, upper, QUAD_TOL)?
        };
        Ok(params)
    }

    /// The profile `h_p(x)`.
    pub fn h(&self, x: f64) -> f64 {
        if self.p == 1.0 {
            return self.lam_norm * (-self.beta * x * x / 2.0).exp();
        }
        let base = self.lam_norm + self.coef * x * x;
        if base <= 0.0 {
            0.0
        } else {
            base.powf(1.0 / (self.p - 1.0))
        }
    }

    /// Density `sigma_p(t, x)`.
    pub fn density(&self, t: f64, x: f64) -> f64 {
        let scale = t.powf(self.beta);
        self.h(x / scale) / scale
    }

    /// Half-width of the support of `h_p` for `p > 1`.
    pub fn support_radius(&self) -> Option<f64> {
        (self.p > 1.0).then(|| (self.lam_norm / self.coef.abs()).sqrt())
    }

    /// `int |x|^2 sigma_p(t, x) dx`.
    pub fn second_moment(&self, t: f64) -> f64 {
        t.powf(2.0 * self.beta) * self.second_moment_h
    }

    /// `E_p(sigma_p(t, .))`.
    pub fn energy(&self, t: f64) -> f64 {
        if self.p == 1.0 {
            self.energy_integral - self.beta * t.ln()
        } else {
            (t.powf(self.beta * (1.0 - self.p)) * self.energy_integral - 1.0) / (self.p - 1.0)
        }
    }

    /// `|grad_W E_p|(sigma_p(t, .)) = (beta / t) (int |x|^2 sigma_p(t, x) dx)^(1/2)`.
    pub fn slope(&self, t: f64) -> f64 {
        self.beta / t * self.second_moment(t).sqrt()
    }

    /// `W2(sigma_p(a, .), sigma_p(b, .)) = |a^beta - b^beta| (int |x|^2 h_p)^(1/2)`.
    pub fn w2_between(&self, a: f64, b: f64) -> f64 {
        (a.powf(self.beta) - b.powf(self.beta)).abs() * self.second_moment_h.sqrt()
    }

    /// Quantiles of `h_p` on the midpoint grid of size `n`.
    pub fn base_quantiles(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(out_of_range("n", "resolution must be positive"));
        }
        let mut q = vec![0.0; n];
        let upper = self.support_radius();
        let mut x_prev = 0.0;
        let mut mass_prev = 0.0;
        for (i, slot) in q.iter_mut().enumerate().skip(n / 2) {
            let target = grid_point(i, n) - 0.5;
            if target <= 0.0 {
                continue;
            }
            let need = target - mass_prev;
            let f = |x: f64| -> f64 {
                mass_prev + integrate(|y| self.h(y), x_prev, x, 1e-16).unwrap_or(f64::NAN) - target
            };
            let hi = match upper {
                Some(r) => r,
                None => {
                    let mut step = (need / self.h(x_prev).max(1e-300)).clamp(1e-3, 1.0);
                    let mut hi = x_prev + step;
                    while f(hi) < 0.0 {
                        step *= 2.0;
                        hi = x_prev + step;
                    }
                    hi
                }
            };
            let guess = x_prev + need / self.h(x_prev).max(1e-300);
            let x = newton_bracketed(f, |x| self.h(x), x_prev, hi, guess, 1e-17, 200)?;
            *slot = x;
            x_prev = x;
            mass_prev = target;
        }
        for i in 0..n / 2 {
            q[i] = -q[n - 1 - i];
        }
        Ok(q)
    }

    /// Quantile discretization of `sigma_p(t, .)`.
    pub fn profile(&self, t: f64, n: usize) -> Result<QuantileMeasure> {
        Ok(BarenblattProfile::new(self.clone(), n)?.at(t))
    }
}

/// Quantiles of `h_p` at a fixed resolution, reused across times.
#[derive(Debug, Clone)]
pub struct BarenblattProfile {
    pub params: BarenblattParams,
    base: Vec<f64>,
}

impl BarenblattProfile {
    pub fn new(params: BarenblattParams, n: usize) -> Result<Self> {
        let base = params.base_quantiles(n)?;
        Ok(Self { params, base })
    }

    pub fn n(&self) -> usize {
        self.base.len()
    }

    /// `sigma_p(t, .)` as a quantile measure: `t^beta` times the base quantiles.
    pub fn at(&self, t: f64) -> QuantileMeasure {
        let scale = t.powf(self.params.beta);
        QuantileMeasure::new(self.base.iter().map(|x| scale * x).collect())
            .expect("scaled base quantiles stay sorted")
    }
}

/// Quantile discretization of the Barenblatt density at time `t`.
pub fn barenblatt_profile(params: &BarenblattParams, t: f64, n: usize) -> Result<QuantileMeasure> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(out_of_range("t", format!("must be positive, got {t}")));
    }
    params.profile(t, n)
}
