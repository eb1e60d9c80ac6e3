//! Randomized verification suites split into fixed-size shards. Shard `k` always draws from
//! `suite_rng(seed, k)`, so results are identical for any number of worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;
use wprox_core::random::{suite_rng, SuiteRng};
use wprox_core::verify::{
    random_contraction_suite, random_envelope_suite, random_gronwall_suite, random_modified_suite, random_poslam_suite,
    random_rok_suite, IneqReport, SuiteSummary,
};
use wprox_core::FunctionalSpec;

pub const SHARD_SIZE: usize = 100;

/// Randomized suites available from the command line.
pub const RANDOM_SUITES: [&str; 6] = ["contraction", "poslam", "modified", "envelope", "rok", "gronwall"];

#[derive(Debug, Clone)]
pub struct SuiteParams {
    pub spec: Option<FunctionalSpec>,
    pub count: usize,
    pub seed: u64,
    pub jobs: usize,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub n: usize,
}

/// One summary line per suite.
#[derive(Debug, Serialize)]
pub struct SuiteOutput {
    pub suite: String,
    pub functional: Option<String>,
    pub seed: u64,
    pub instances: usize,
    pub passed: bool,
    pub n_checked: usize,
    pub n_failed: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub worst: Option<IneqReport>,
}

impl SuiteOutput {
    pub fn new(summary: &SuiteSummary, functional: Option<&FunctionalSpec>, seed: u64, instances: usize) -> Self {
        Self {
            suite: summary.suite.clone(),
            functional: functional.map(ToString::to_string),
            seed,
            instances,
            passed: summary.passed(),
            n_checked: summary.n_checked,
            n_failed: summary.n_failed,
            max_violation: summary.max_violation,
            tolerance: summary.tolerance,
            worst: summary.worst.clone(),
        }
    }
}

/// Runs `count` instances in shards of `SHARD_SIZE` on `jobs` threads and merges the shard
/// summaries in shard order.
pub fn run_sharded<F>(count: usize, seed: u64, jobs: usize, shard: F) -> Result<SuiteSummary>
where
    F: Fn(usize, &mut SuiteRng) -> wprox_core::Result<SuiteSummary> + Sync,
{
    if count == 0 {
        bail!("--random must be positive");
    }
    let shards = count.div_ceil(SHARD_SIZE);
    let results: Vec<Mutex<Option<wprox_core::Result<SuiteSummary>>>> = (0..shards).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, shards) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= shards {
                    break;
                }
                let size = SHARD_SIZE.min(count - k * SHARD_SIZE);
                let mut rng = suite_rng(seed, k as u64);
                *results[k].lock().unwrap() = Some(shard(size, &mut rng));
            });
        }
    });
    let mut merged: Option<SuiteSummary> = None;
    for slot in results {
        let summary = slot.into_inner().unwrap().expect("every shard ran")?;
        merged = Some(match merged {
            None => summary,
            Some(m) => m.merge(summary),
        });
    }
    Ok(merged.expect("at least one shard"))
}

/// Default functional for suites that take one: the quadratic potential with `lambda`.
fn spec_or_quadratic(p: &SuiteParams) -> Result<FunctionalSpec> {
    match &p.spec {
        Some(s) => Ok(s.clone()),
        None => Ok(FunctionalSpec::quadratic(p.lambda.unwrap_or(1.0))?),
    }
}

fn default_tau(spec: &FunctionalSpec) -> f64 {
    if spec.is_internal() {
        0.05
    } else {
        0.5
    }
}

pub fn run_random(name: &str, p: &SuiteParams) -> Result<(SuiteSummary, Option<FunctionalSpec>)> {
    let lambda = p.lambda.unwrap_or(1.0);
    match name {
        "contraction" => {
            let spec = spec_or_quadratic(p)?;
            let tau = p.tau.unwrap_or_else(|| default_tau(&spec));
            let s = run_sharded(p.count, p.seed, p.jobs, |k, rng| random_contraction_suite(&spec, k, tau, p.n, rng))?;
            Ok((s, Some(spec)))
        }
        "modified" => {
            let spec = match &p.spec {
                Some(s) => s.clone(),
                None => FunctionalSpec::Entropy,
            };
            let tau = p.tau.unwrap_or_else(|| default_tau(&spec));
            let s = run_sharded(p.count, p.seed, p.jobs, |k, rng| random_modified_suite(&spec, k, tau, p.n, rng))?;
            Ok((s, Some(spec)))
        }
        "poslam" => {
            let s = run_sharded(p.count, p.seed, p.jobs, |k, rng| random_poslam_suite(lambda, k, rng))?;
            Ok((s, Some(FunctionalSpec::quadratic(lambda)?)))
        }
        "envelope" => {
            let s = run_sharded(p.count, p.seed, p.jobs, |k, rng| random_envelope_suite(lambda, k, rng))?;
            Ok((s, Some(FunctionalSpec::quadratic(lambda)?)))
        }
        "rok" => Ok((run_sharded(p.count, p.seed, p.jobs, random_rok_suite)?, None)),
        "gronwall" => Ok((run_sharded(p.count, p.seed, p.jobs, random_gronwall_suite)?, None)),
        other => Err(anyhow!("unknown random suite `{other}`")),
    }
}
