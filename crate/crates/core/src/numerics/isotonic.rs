//! Euclidean projections onto monotone cones via pool-adjacent-violators.

/// Least-squares projection of `y` onto nondecreasing vectors.
pub fn pav(y: &[f64]) -> Vec<f64> {
    // Blocks of (mean, size).
    let mut means: Vec<f64> = Vec::with_capacity(y.len());
    let mut sizes: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        means.push(v);
        sizes.push(1);
        while means.len() > 1 {
            let k = means.len();
            if means[k - 2] <= means[k - 1] {
                break;
            }
            let (m2, s2) = (means.pop().unwrap(), sizes.pop().unwrap());
            let (m1, s1) = (means[k - 2], sizes[k - 2]);
            let s = s1 + s2;
            means[k - 2] = (m1 * s1 as f64 + m2 * s2 as f64) / s as f64;
            sizes[k - 2] = s;
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (m, s) in means.into_iter().zip(sizes) {
        out.extend(std::iter::repeat_n(m, s));
    }
    out
}

/// Projection onto `{q : q[i+1] - q[i] >= delta}`.
pub fn project_min_gap(y: &[f64], delta: f64) -> Vec<f64> {
    let shifted: Vec<f64> = y.iter().enumerate().map(|(i, &v)| v - i as f64 * delta).collect();
    pav(&shifted)
        .into_iter()
        .enumerate()
        .map(|(i, v)| v + i as f64 * delta)
        .collect()
}

/// True when `q` is nondecreasing.
pub fn is_nondecreasing(q: &[f64]) -> bool {
    q.windows(2).all(|w| w[0] <= w[1])
}
