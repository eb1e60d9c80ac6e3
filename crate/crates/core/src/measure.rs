//! Probability measures on the line: finitely supported (atomic) and quantile-sampled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::isotonic::is_nondecreasing;

/// Atoms closer than this are merged during canonicalization.
pub const MERGE_TOL: f64 = 1e-14;
/// Accepted deviation of the input weight sum from one; weights are renormalized afterwards.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Finitely supported probability measure with strictly increasing positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    /// Sorts, merges coincident atoms and renormalizes.
    pub fn new(positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidMeasure("atomic measure needs at least one atom".into()));
        }
        if positions.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if let Some(x) = positions.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite position {x}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidMeasure(format!("weights must be positive, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, expected 1")));
        }
        let mut atoms: Vec<(f64, f64)> = positions.into_iter().zip(weights).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut xs: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut ws: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match xs.last() {
                Some(&last) if x - last < MERGE_TOL => *ws.last_mut().unwrap() += w,
                _ => {
                    xs.push(x);
                    ws.push(w);
                }
            }
        }
        let total: f64 = ws.iter().sum();
        ws.iter_mut().for_each(|w| *w /= total);
        Ok(Self { positions: xs, weights: ws })
    }

    pub fn dirac(x: f64) -> Self {
        Self { positions: vec![x], weights: vec![1.0] }
    }

    /// Equal-weight atoms at the given positions.
    pub fn uniform(positions: Vec<f64>) -> Result<Self> {
        let n = positions.len().max(1);
        let w = vec![1.0 / n as f64; positions.len()];
        Self::new(positions, w)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn second_moment(&self) -> f64 {
        self.positions.iter().zip(&self.weights).map(|(x, w)| w * x * x).sum()
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().zip(&self.weights).map(|(x, w)| w * x).sum()
    }

    /// Left-continuous quantile function at level `s` in `(0, 1)`.
    pub fn quantile(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.positions.iter().zip(&self.weights) {
            acc += w;
            if s <= acc {
                return *x;
            }
        }
        *self.positions.last().unwrap()
    }
}

/// Absolutely continuous measure sampled by its quantile function at the midpoints
/// `s_i = (i - 1/2) / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMeasure {
    q: Vec<f64>,
}

impl QuantileMeasure {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidMeasure("quantile measure needs n >= 1".into()));
        }
        if let Some(x) = q.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite quantile {x}")));
        }
        if !is_nondecreasing(&q) {
            return Err(Error::InvalidMeasure("quantiles must be nondecreasing".into()));
        }
        Ok(Self { q })
    }

    /// Samples a quantile function on the midpoint grid.
    pub fn from_fn<F: Fn(f64) -> f64>(n: usize, quantile: F) -> Result<Self> {
        Self::new((0..n).map(|i| quantile(grid_point(i, n))).collect())
    }

    /// Uniform distribution on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(b > a) {
            return Err(Error::InvalidMeasure(format!("uniform needs a < b, got [{a}, {b}]")));
        }
        Self::from_fn(n, |s| a + (b - a) * s)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }

    /// Strictly increasing quantiles (no ties), as required by internal energies.
    pub fn is_strict(&self) -> bool {
        self.q.windows(2).all(|w| w[0] < w[1])
    }

    pub fn second_moment(&self) -> f64 {
        self.q.iter().map(|x| x * x).sum::<f64>() / self.n() as f64
    }

    pub fn mean(&self) -> f64 {
        self.q.iter().sum::<f64>() / self.n() as f64
    }

    /// Quantile at level `s`, interpolating linearly between grid points and
    /// extrapolating linearly beyond the outermost midpoints.
    pub fn interpolate(&self, s: f64) -> f64 {
        let n = self.n();
        if n == 1 {
            return self.q[0];
        }
        let pos = s * n as f64 - 0.5;
        let i = (pos.floor() as isize).clamp(0, n as isize - 2) as usize;
        let frac = pos - i as f64;
        self.q[i] + frac * (self.q[i + 1] - self.q[i])
    }

    /// Resamples onto a grid with `m` points.
    pub fn resample(&self, m: usize) -> Result<Self> {
        if m == self.n() {
            return Ok(self.clone());
        }
        Self::from_fn(m, |s| self.interpolate(s))
    }

    /// `x -> a x + b` applied to every quantile (monotone for `a > 0`).
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(crate::error::out_of_range("a", format!("affine scale must be positive, got {a}")));
        }
        Self::new(self.q.iter().map(|x| a * x + b).collect())
    }
}

/// Midpoint grid level `s_i = (i + 1/2) / n` for zero-based `i`.
pub fn grid_point(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// A measure in either representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Measure {
    Atomic(AtomicMeasure),
    Quantile(QuantileMeasure),
}

impl Measure {
    pub fn dirac(x: f64) -> Self {
        Measure::Atomic(AtomicMeasure::dirac(x))
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Measure::Atomic(a) => a.second_moment(),
            Measure::Quantile(q) => q.second_moment(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Measure::Atomic(a) => a.mean(),
            Measure::Quantile(q) => q.mean(),
        }
    }

    pub fn as_quantile(&self) -> Option<&QuantileMeasure> {
        match self {
            Measure::Quantile(q) => Some(q),
            Measure::Atomic(_) => None,
        }
    }

    pub fn as_atomic(&self) -> Option<&AtomicMeasure> {
        match self {
            Measure::Atomic(a) => Some(a),
            Measure::Quantile(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Measure::Atomic(_) => "atomic",
            Measure::Quantile(_) => "quantile",
        }
    }

    /// Step representation of the quantile function: consecutive `(mass, value)` pieces
    /// partitioning `(0, 1)`. Quantile measures contribute `n` pieces of mass `1/n`.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        match self {
            Measure::Atomic(a) => a.weights().iter().copied().zip(a.positions().iter().copied()).collect(),
            Measure::Quantile(q) => {
                let m = 1.0 / q.n() as f64;
                q.q().iter().map(|&x| (m, x)).collect()
            }
        }
    }
}

impl From<AtomicMeasure> for Measure {
    fn from(a: AtomicMeasure) -> Self {
        Measure::Atomic(a)
    }
}

impl From<QuantileMeasure> for Measure {
    fn from(q: QuantileMeasure) -> Self {
        Measure::Quantile(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalization_merges_and_sorts() {
        let m = AtomicMeasure::new(vec![2.0, 0.0, 2.0 + 1e-16], vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(m.positions(), &[0.0, 2.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(AtomicMeasure::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(AtomicMeasure::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(AtomicMeasure::new(vec![0.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn quantile_rejects_decreasing() {
        assert!(QuantileMeasure::new(vec![0.0, -1.0]).is_err());
        let tied = QuantileMeasure::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(!tied.is_strict());
    }

    #[test]
    fn uniform_second_moment_converges() {
        let u = QuantileMeasure::uniform(0.0, 1.0, 1000).unwrap();
        // midpoint rule: 1/3 - 1/(12 n^2)
        assert!((u.second_moment() - (1.0 / 3.0 - 1.0 / 12e6)).abs() < 1e-15);
    }

    #[test]
    fn interpolation_reproduces_linear_quantiles() {
        let u = QuantileMeasure::uniform(-1.0, 3.0, 7).unwrap();
        for s in [0.01, 0.3, 0.5, 0.99] {
            assert!((u.interpolate(s) - (-1.0 + 4.0 * s)).abs() < 1e-14);
        }
    }

    #[test]
    fn atomic_quantile_is_left_continuous() {
        let m = AtomicMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.quantile(0.5), 0.0);
        assert_eq!(m.quantile(0.5000001), 1.0);
    }
}
