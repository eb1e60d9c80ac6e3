//! Seeded generators for randomized checks. Every suite draws from one ChaCha stream per
//! shard, so results depend only on `(seed, shard)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::measure::{AtomicMeasure, Measure, QuantileMeasure};

pub type SuiteRng = ChaCha8Rng;

pub fn suite_rng(seed: u64, shard: u64) -> SuiteRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Atomic measure with 1..=`max_atoms` atoms in `[-spread, spread]` and random positive weights.
pub fn random_atomic(rng: &mut impl Rng, max_atoms: usize, spread: f64) -> AtomicMeasure {
    let k = rng.random_range(1..=max_atoms.max(1));
    let positions: Vec<f64> = (0..k).map(|_| rng.random_range(-spread..=spread)).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    AtomicMeasure::new(positions, weights).expect("random weights are positive and normalized")
}

/// Strictly increasing quantile vector on `n` midpoints: a random center and width with gaps
/// that vary by at most a factor `1 + roughness` around a smooth profile.
pub fn random_quantile(rng: &mut impl Rng, n: usize, roughness: f64) -> QuantileMeasure {
    let center = rng.random_range(-1.0..1.0);
    let width = rng.random_range(0.5..3.0);
    let skew = rng.random_range(-0.5..0.5);
    let mut gaps: Vec<f64> = (0..n.saturating_sub(1))
        .map(|i| {
            let s = (i as f64 + 1.0) / n as f64;
            let shape = 1.0 + skew * (2.0 * s - 1.0);
            shape * (1.0 + roughness * rng.random::<f64>())
        })
        .collect();
    let total: f64 = gaps.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    for g in &mut gaps {
        *g *= width / total;
    }
    let mut q = Vec::with_capacity(n);
    let mut x = center - width / 2.0;
    q.push(x);
    for g in gaps {
        x += g;
        q.push(x);
    }
    QuantileMeasure::new(q).expect("cumulative positive gaps are sorted")
}

/// Either kind of measure, with equal probability.
pub fn random_measure(rng: &mut impl Rng, max_atoms: usize, n: usize, spread: f64) -> Measure {
    if rng.random_bool(0.5) {
        Measure::Atomic(random_atomic(rng, max_atoms, spread))
    } else {
        Measure::Quantile(random_quantile(rng, n, 0.5).affine(1.0, rng.random_range(-spread..=spread) / 2.0).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shards_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| suite_rng(7, 0).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| suite_rng(7, 0).random()).collect();
        assert_eq!(a, b);
        let x: u64 = suite_rng(7, 0).random();
        let y: u64 = suite_rng(7, 1).random();
        assert_ne!(x, y);
    }

    #[test]
    fn random_quantiles_are_strict() {
        let mut rng = suite_rng(1, 0);
        for _ in 0..20 {
            assert!(random_quantile(&mut rng, 64, 1.0).is_strict());
        }
    }
}
