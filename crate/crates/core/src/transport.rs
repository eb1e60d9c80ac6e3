//! One-dimensional quadratic optimal transport through quantile functions.

use serde::Serialize;

use crate::error::{out_of_range, Result};
use crate::measure::{AtomicMeasure, Measure, QuantileMeasure};

/// Piece of the monotone coupling: mass carried from `source` to `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingPiece {
    pub mass: f64,
    pub source: f64,
    pub target: f64,
}

/// Monotone (comonotone) coupling of two measures.
///
/// Two quantile measures are compared on the finer of their grids; any pair involving an
/// atomic measure is coupled exactly on the merged breakpoints of the step quantile functions.
pub fn monotone_coupling(mu: &Measure, nu: &Measure) -> Vec<CouplingPiece> {
    match (mu, nu) {
        (Measure::Quantile(a), Measure::Quantile(b)) => {
            let n = a.n().max(b.n());
            let a = resampled(a, n);
            let b = resampled(b, n);
            let m = 1.0 / n as f64;
            a.q()
                .iter()
                .zip(b.q())
                .map(|(&x, &y)| CouplingPiece { mass: m, source: x, target: y })
                .collect()
        }
        _ => merge_steps(&mu.steps(), &nu.steps()),
    }
}

fn resampled(q: &QuantileMeasure, n: usize) -> std::borrow::Cow<'_, QuantileMeasure> {
    if q.n() == n {
        std::borrow::Cow::Borrowed(q)
    } else {
        std::borrow::Cow::Owned(q.resample(n).expect("resampling a valid measure stays monotone"))
    }
}

fn cumulative(steps: &[(f64, f64)]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = steps
        .iter()
        .map(|(m, _)| {
            acc += m;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn merge_steps(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<CouplingPiece> {
    let ca = cumulative(a);
    let cb = cumulative(b);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut left = 0.0;
    while i < a.len() && j < b.len() {
        let right = ca[i].min(cb[j]);
        let mass = right - left;
        if mass > 0.0 {
            out.push(CouplingPiece { mass, source: a[i].1, target: b[j].1 });
        }
        left = right;
        if ca[i] <= right {
            i += 1;
        }
        if cb[j] <= right {
            j += 1;
        }
    }
    out
}

/// Squared 2-Wasserstein distance.
pub fn w2_squared(mu: &Measure, nu: &Measure) -> f64 {
    if let (Measure::Quantile(a), Measure::Quantile(b)) = (mu, nu) {
        if a.n() == b.n() {
            return w2_squared_quantile(a, b);
        }
    }
    monotone_coupling(mu, nu)
        .iter()
        .map(|p| p.mass * (p.source - p.target).powi(2))
        .sum()
}

/// 2-Wasserstein distance `(int_0^1 |Q_mu - Q_nu|^2 ds)^(1/2)`.
pub fn w2_distance(mu: &Measure, nu: &Measure) -> f64 {
    w2_squared(mu, nu).sqrt()
}

/// Squared distance between two quantile measures (resampling to the finer grid if needed).
pub fn w2_squared_quantile(a: &QuantileMeasure, b: &QuantileMeasure) -> f64 {
    if a.n() != b.n() {
        return w2_squared(&Measure::Quantile(a.clone()), &Measure::Quantile(b.clone()));
    }
    a.q().iter().zip(b.q()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.n() as f64
}

pub fn w2_quantile(a: &QuantileMeasure, b: &QuantileMeasure) -> f64 {
    w2_squared_quantile(a, b).sqrt()
}

/// Monotone transport plan from `source` to `target`, expressed as paired quantile samples.
#[derive(Debug, Clone, Serialize)]
pub struct TransportPlanView {
    pub pieces: Vec<CouplingPiece>,
}

impl TransportPlanView {
    /// Evaluates the map at `x`: barycentric target of pieces sharing a source value,
    /// linear interpolation in between and linear extrapolation outside.
    pub fn apply(&self, x: f64) -> f64 {
        let nodes = self.nodes();
        if nodes.len() == 1 {
            return nodes[0].1 + (x - nodes[0].0);
        }
        let k = match nodes.binary_search_by(|n| n.0.total_cmp(&x)) {
            Ok(k) => return nodes[k].1,
            Err(k) => k.clamp(1, nodes.len() - 1),
        };
        let (x0, y0) = nodes[k - 1];
        let (x1, y1) = nodes[k];
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        let mut nodes: Vec<(f64, f64, f64)> = Vec::new();
        for p in &self.pieces {
            match nodes.last_mut() {
                Some(last) if last.0 == p.source => {
                    last.1 += p.mass * p.target;
                    last.2 += p.mass;
                }
                _ => nodes.push((p.source, p.mass * p.target, p.mass)),
            }
        }
        nodes.into_iter().map(|(x, my, m)| (x, my / m)).collect()
    }

    /// Transport cost `sum mass * |target - source|^2`.
    pub fn cost(&self) -> f64 {
        self.pieces.iter().map(|p| p.mass * (p.target - p.source).powi(2)).sum()
    }

    /// The map is nondecreasing along the coupling.
    pub fn is_monotone(&self) -> bool {
        self.pieces.windows(2).all(|w| w[0].source <= w[1].source && w[0].target <= w[1].target)
    }

    /// Largest displacement `|T(x) - x|` over the coupling.
    pub fn max_displacement(&self) -> f64 {
        self.pieces.iter().map(|p| (p.target - p.source).abs()).fold(0.0, f64::max)
    }
}

/// Optimal (monotone) transport plan from `mu` to `nu`.
pub fn optimal_map(mu: &Measure, nu: &Measure) -> TransportPlanView {
    TransportPlanView { pieces: monotone_coupling(mu, nu) }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(out_of_range("alpha", format!("must lie in [0, 1], got {alpha}")))
    }
}

fn measure_from_coupling(pieces: &[CouplingPiece], f: impl Fn(&CouplingPiece) -> f64) -> Result<Measure> {
    let xs = pieces.iter().map(&f).collect();
    let ws = pieces.iter().map(|p| p.mass).collect();
    Ok(Measure::Atomic(AtomicMeasure::new(xs, ws)?))
}

/// Point `alpha` along the displacement geodesic from `mu` to `nu`: quantiles `(1-alpha) Q_mu + alpha Q_nu`.
pub fn geodesic_point(mu: &Measure, nu: &Measure, alpha: f64) -> Result<Measure> {
    check_alpha(alpha)?;
    let pieces = monotone_coupling(mu, nu);
    let blend = |p: &CouplingPiece| (1.0 - alpha) * p.source + alpha * p.target;
    match (mu, nu) {
        (Measure::Quantile(_), Measure::Quantile(_)) => {
            Ok(Measure::Quantile(QuantileMeasure::new(pieces.iter().map(blend).collect())?))
        }
        _ => measure_from_coupling(&pieces, blend),
    }
}

/// Generalized geodesic from `mu2` to `mu3` with base `base`.
///
/// On the line every optimal plan from an absolutely continuous base is monotone, so the
/// three-plan is comonotone and the curve coincides with the geodesic from `mu2` to `mu3`;
/// a quantile base fixes the grid resolution of the result.
pub fn generalized_geodesic_point(base: &Measure, mu2: &Measure, mu3: &Measure, alpha: f64) -> Result<Measure> {
    check_alpha(alpha)?;
    match (base, mu2, mu3) {
        (Measure::Quantile(b), Measure::Quantile(q2), Measure::Quantile(q3)) => {
            let n = b.n().max(q2.n()).max(q3.n());
            let q2 = resampled(q2, n);
            let q3 = resampled(q3, n);
            let q = q2.q().iter().zip(q3.q()).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect();
            Ok(Measure::Quantile(QuantileMeasure::new(q)?))
        }
        _ => geodesic_point(mu2, mu3, alpha),
    }
}

/// Pushforward by the monotone affine map `x -> a x + b` (`a > 0`).
pub fn pushforward_affine(mu: &Measure, a: f64, b: f64) -> Result<Measure> {
    if !(a > 0.0 && a.is_finite()) || !b.is_finite() {
        return Err(out_of_range("a", format!("affine pushforward needs finite a > 0, got a={a}, b={b}")));
    }
    match mu {
        Measure::Quantile(q) => Ok(Measure::Quantile(q.affine(a, b)?)),
        Measure::Atomic(m) => {
            let xs = m.positions().iter().map(|x| a * x + b).collect();
            Ok(Measure::Atomic(AtomicMeasure::new(xs, m.weights().to_vec())?))
        }
    }
}

/// `int |x|^2 d mu`, equal to `W2(mu, delta_0)^2`.
pub fn second_moment(mu: &Measure) -> f64 {
    mu.second_moment()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(a: f64, b: f64, n: usize) -> Measure {
        Measure::Quantile(QuantileMeasure::uniform(a, b, n).unwrap())
    }

    #[test]
    fn diracs_at_unit_distance() {
        assert_eq!(w2_distance(&Measure::dirac(0.0), &Measure::dirac(1.0)), 1.0);
    }

    #[test]
    fn uniform_pair_matches_midpoint_rule() {
        let n = 4096;
        let d = w2_distance(&u(0.0, 1.0, n), &u(0.0, 2.0, n));
        let exact = (1.0 / 3.0 - 1.0 / (12.0 * (n * n) as f64)).sqrt();
        assert!((d - exact).abs() < 1e-14);
        assert!((d - 1.0 / 3f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn mixed_pair_uses_exact_breakpoints() {
        // Two atoms vs a two-point quantile measure with the same masses: exact match.
        let a = Measure::Atomic(AtomicMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap());
        let q = Measure::Quantile(QuantileMeasure::new(vec![-1.0, 1.0]).unwrap());
        assert_eq!(w2_distance(&a, &q), 0.0);
        // Uneven masses force a split piece.
        let b = Measure::Atomic(AtomicMeasure::new(vec![0.0, 3.0], vec![0.25, 0.75]).unwrap());
        let expect = (0.25f64 * 1.0 + 0.25 * 16.0 + 0.5 * 4.0).sqrt();
        assert!((w2_distance(&a, &b) - expect).abs() < 1e-15);
    }

    #[test]
    fn optimal_map_doubles_uniform() {
        let plan = optimal_map(&u(0.0, 1.0, 64), &u(0.0, 2.0, 64));
        assert!(plan.is_monotone());
        for x in [0.1, 0.5, 0.93] {
            assert!((plan.apply(x) - 2.0 * x).abs() < 1e-14);
        }
    }

    #[test]
    fn geodesic_midpoint_of_diracs() {
        let m = geodesic_point(&Measure::dirac(0.0), &Measure::dirac(2.0), 0.5).unwrap();
        assert_eq!(m, Measure::dirac(1.0));
        assert!(geodesic_point(&Measure::dirac(0.0), &Measure::dirac(2.0), 1.5).is_err());
    }

    #[test]
    fn generalized_geodesic_example() {
        let n = 128;
        let g = generalized_geodesic_point(&u(0.0, 1.0, n), &u(1.0, 2.0, n), &u(0.0, 2.0, n), 0.5).unwrap();
        let g = g.as_quantile().unwrap();
        for (i, &x) in g.q().iter().enumerate() {
            let s = crate::measure::grid_point(i, n);
            assert!((x - (0.5 * (1.0 + s) + 0.5 * 2.0 * s)).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_pushforward() {
        assert_eq!(pushforward_affine(&Measure::dirac(1.0), 2.0, 3.0).unwrap(), Measure::dirac(5.0));
        assert!(pushforward_affine(&Measure::dirac(1.0), 0.0, 3.0).is_err());
    }

    #[test]
    fn second_moment_of_dirac() {
        assert_eq!(second_moment(&Measure::dirac(3.0)), 9.0);
        assert_eq!(second_moment(&Measure::dirac(0.0)), 0.0);
    }
}
