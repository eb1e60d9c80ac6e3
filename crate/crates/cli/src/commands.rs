use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use wprox_core::flow::{exp_formula_csv, trace_csv, FlowTrace, RescaledTrace};
use wprox_core::io::{read_measure, write_measure};
use wprox_core::verify::{
    banach_linf_counterexample, contraction_check, corollary_poslam_check, modified_lambda_check, IneqReport,
    SuiteSummary,
};
use wprox_core::{
    exp_formula_probe, exponential_decay_check, optimal_map, prox_barenblatt, prox_step, rescaled_flow, run_flow,
    run_paired_flow, w2_distance, BarenblattParams, FlowOptions, FlowStart, FunctionalSpec, Measure, QuantileMeasure,
    SolverInfo, SolverMethod, SolverOptions,
};

use crate::config::ExperimentConfig;
use crate::suites::{run_random, SuiteOutput, SuiteParams, RANDOM_SUITES};
use crate::{DistArgs, FlowArgs, ProxArgs, RunArgs, SolverArgs, Status, VerifyArgs};

fn solver_options(a: &SolverArgs) -> SolverOptions {
    SolverOptions { tol: a.tol, max_iter: a.max_iter }
}

fn parse_functional(s: &str) -> Result<FunctionalSpec> {
    s.parse().with_context(|| format!("functional `{s}`"))
}

/// Value of `key` in a `key=value[,key=value]` list.
fn param(list: &str, key: &str) -> Result<f64> {
    for item in list.split(',') {
        if let Some((k, v)) = item.split_once('=') {
            if k.trim() == key {
                return v.trim().parse().with_context(|| format!("`{key}` in `{list}`"));
            }
        }
    }
    bail!("expected `{key}=<value>` in `{list}`")
}

/// Initial measure from `kind:params`: `barenblatt:r=R`, `dirac:x=X` or `uniform:a=A,b=B`.
fn parse_init(init: &str, p: Option<f64>, n: usize) -> Result<FlowStart> {
    let (kind, rest) = init.split_once(':').unwrap_or((init, ""));
    match kind.trim() {
        "barenblatt" => {
            if p.is_none() {
                bail!("a Barenblatt start needs a renyi or entropy functional");
            }
            Ok(FlowStart::Barenblatt { r: param(rest, "r")? })
        }
        "dirac" => Ok(FlowStart::Measure(Measure::dirac(param(rest, "x")?))),
        "uniform" => Ok(FlowStart::Measure(Measure::Quantile(QuantileMeasure::uniform(
            param(rest, "a")?,
            param(rest, "b")?,
            n,
        )?))),
        other => bail!("unknown initial measure `{other}`; expected barenblatt, dirac or uniform"),
    }
}

fn start_measure(start: &FlowStart, spec: &FunctionalSpec, n: usize) -> Result<Measure> {
    match start {
        FlowStart::Measure(m) => Ok(m.clone()),
        FlowStart::Barenblatt { r } => {
            let p = spec.exponent().ok_or_else(|| anyhow!("a Barenblatt start needs a renyi or entropy functional"))?;
            Ok(Measure::Quantile(BarenblattParams::new(p)?.profile(*r, n)?))
        }
    }
}

fn output_path(out: &Path, name: &Path) -> Result<PathBuf> {
    let path = if name.is_absolute() { name.to_path_buf() } else { out.join(name) };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json_line(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("report types serialize")
}

fn with_extension(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Serialize)]
struct DistOutput {
    w2: f64,
    w2_squared: f64,
    pieces: usize,
    mean_displacement: f64,
    max_displacement: f64,
}

pub fn dist(a: &DistArgs) -> Result<Status> {
    let mu = read_measure(&a.mu).with_context(|| format!("reading {}", a.mu.display()))?;
    let nu = read_measure(&a.nu).with_context(|| format!("reading {}", a.nu.display()))?;
    let w2 = w2_distance(&mu, &nu);
    let plan = optimal_map(&mu, &nu);
    let out = DistOutput {
        w2,
        w2_squared: w2 * w2,
        pieces: plan.pieces.len(),
        mean_displacement: plan.pieces.iter().map(|p| p.mass * (p.target - p.source)).sum(),
        max_displacement: plan.pieces.iter().map(|p| (p.target - p.source).abs()).fold(0.0, f64::max),
    };
    if a.json {
        println!("{}", json_line(&out));
    } else {
        println!("{w2:.7}");
        println!(
            "optimal map: {} pieces, mean displacement {:.7}, max |T(x) - x| {:.7}",
            out.pieces, out.mean_displacement, out.max_displacement
        );
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ProxOutput {
    functional: String,
    tau: f64,
    w2_move: f64,
    energy_at_prox: f64,
    slope_at_prox: f64,
    solver: SolverInfo,
    /// Barenblatt time of the proximal point, for Barenblatt starts.
    theta: Option<f64>,
    kind: &'static str,
    mean: f64,
    second_moment: f64,
    measure_file: String,
}

pub fn prox(a: &ProxArgs, out: &Path) -> Result<Status> {
    let spec = parse_functional(&a.functional)?;
    let opts = solver_options(&a.solver);
    let result = match (&a.barenblatt, &a.mu) {
        (Some(b), _) => {
            let p = spec.exponent().ok_or_else(|| anyhow!("--barenblatt needs a renyi or entropy functional"))?;
            spec.check_step(a.tau)?;
            prox_barenblatt(&BarenblattParams::new(p)?, param(b, "r")?, a.tau, a.solver.n)?
        }
        (None, Some(path)) => {
            let mu = read_measure(path).with_context(|| format!("reading {}", path.display()))?;
            prox_step(&spec, &mu, a.tau, &opts)?
        }
        (None, None) => bail!("prox needs --mu or --barenblatt"),
    };
    let measure_path = output_path(out, Path::new(&format!("{}.csv", a.name)))?;
    write_measure(&measure_path, &result.prox_point)?;
    let theta = match result.solver.method {
        SolverMethod::ClosedFormBarenblatt { time } => Some(time),
        _ => None,
    };
    let summary = ProxOutput {
        functional: spec.to_string(),
        tau: a.tau,
        w2_move: result.w2_move,
        energy_at_prox: result.energy_at_prox,
        slope_at_prox: result.slope_at_prox.value,
        solver: result.solver,
        theta,
        kind: result.prox_point.kind(),
        mean: result.prox_point.mean(),
        second_moment: result.prox_point.second_moment(),
        measure_file: measure_path.display().to_string(),
    };
    let line = json_line(&summary);
    write_text(&output_path(out, Path::new(&format!("{}.json", a.name)))?, &format!("{line}\n"))?;
    println!("{line}");
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct FlowMeta<'a> {
    functional: &'a str,
    tau: f64,
    n_steps: usize,
    resolution: Option<usize>,
    paired: bool,
    failure: &'a Option<String>,
    final_energy: Option<f64>,
    trace_file: String,
}

impl<'a> FlowMeta<'a> {
    fn new(trace: &'a FlowTrace, path: &Path) -> Self {
        Self {
            functional: &trace.functional,
            tau: trace.tau,
            n_steps: trace.n_steps,
            resolution: trace.resolution,
            paired: trace.paired,
            failure: &trace.failure,
            final_energy: trace.records.last().map(|r| r.energy),
            trace_file: path.display().to_string(),
        }
    }
}

fn rescaled_csv(trace: &RescaledTrace) -> String {
    let mut s = String::from("n,theta,w2_to_profile,scaled_distance,bound_sq\n");
    for r in &trace.records {
        s.push_str(&format!("{},{},{},{},{}\n", r.n, r.theta, r.w2_to_profile, r.scaled_distance, r.bound_sq));
    }
    s
}

pub fn flow(a: &FlowArgs, out: &Path) -> Result<Status> {
    let spec = parse_functional(&a.functional)?;
    let n = a.solver.n;
    let reference = a.reference.as_ref().map(read_measure).transpose()?;
    let opts = FlowOptions {
        solver: solver_options(&a.solver),
        resolution: n,
        force_numeric: a.force_numeric,
        reference,
    };
    let start = match (&a.mu, &a.init) {
        (Some(path), _) => Some(FlowStart::Measure(read_measure(path).with_context(|| format!("reading {}", path.display()))?)),
        (None, Some(init)) => Some(parse_init(init, spec.exponent(), n)?),
        (None, None) => None,
    };
    let path = output_path(out, &a.output)?;

    if let Some(e) = &a.expformula {
        let t = param(e, "t")?;
        let mu0 = match &start {
            Some(s) => start_measure(s, &spec, n)?,
            None => Measure::dirac(1.0),
        };
        let report = exp_formula_probe(&spec, &mu0, t, &a.ns, &opts)?;
        write_text(&path, &exp_formula_csv(&report))?;
        println!("{}", json_line(&report));
        return Ok(Status::Ok);
    }

    let (tau, steps) = (a.tau.expect("clap requires --tau"), a.steps.expect("clap requires --steps"));
    let start = start.ok_or_else(|| anyhow!("flow needs --mu or --init"))?;
    if a.rescale {
        let p = spec.exponent().ok_or_else(|| anyhow!("--rescale needs a renyi or entropy functional"))?;
        let (nu0, r) = match &start {
            FlowStart::Barenblatt { r } => (BarenblattParams::new(p)?.profile(*r, n)?, *r),
            FlowStart::Measure(Measure::Quantile(q)) => (q.clone(), 1.0),
            FlowStart::Measure(Measure::Atomic(_)) => bail!("--rescale needs a quantile initial measure"),
        };
        let rescaled = rescaled_flow(p, &nu0, r, tau, steps, &opts)?;
        write_text(&path, &trace_csv(&rescaled.trace))?;
        write_text(&with_extension(&path, "-rescaled.csv"), &rescaled_csv(&rescaled))?;
        let c = &rescaled.constant;
        eprintln!("K = {} (A = {} from {}, B = {})", c.k, c.a, c.a_source, c.b);
        println!("{}", json_line(&serde_json::json!({ "flow": FlowMeta::new(&rescaled.trace, &path), "constant": c })));
        return Ok(if rescaled.trace.failure.is_some() { Status::Violation } else { Status::Ok });
    }

    let trace = match &a.nu {
        Some(nu) => {
            let nu = read_measure(nu).with_context(|| format!("reading {}", nu.display()))?;
            run_paired_flow(&spec, &start, &FlowStart::Measure(nu), tau, steps, &opts)?
        }
        None => run_flow(&spec, &start, tau, steps, &opts)?,
    };
    write_text(&path, &trace_csv(&trace))?;
    if let Some(f) = &trace.failure {
        eprintln!("flow stopped early: {f}");
    }
    println!("{}", json_line(&FlowMeta::new(&trace, &path)));
    Ok(if trace.failure.is_some() { Status::Violation } else { Status::Ok })
}

/// Outcome of one named suite: stdout lines, the individual reports, and the verdict.
struct SuiteRun {
    lines: Vec<String>,
    reports: Vec<IneqReport>,
    passed: bool,
}

impl SuiteRun {
    fn from_reports(summary_name: &str, functional: Option<&FunctionalSpec>, seed: u64, reports: Vec<IneqReport>) -> Self {
        let mut lines: Vec<String> = reports.iter().map(json_line).collect();
        let summary = SuiteSummary::from_reports(summary_name, reports);
        lines.push(json_line(&SuiteOutput::new(&summary, functional, seed, 1)));
        Self { lines, passed: summary.passed(), reports: summary.reports }
    }
}

struct Request<'a> {
    params: SuiteParams,
    pair: Option<(Measure, Measure)>,
    steps: usize,
    solver: &'a SolverOptions,
}

fn run_suite(name: &str, req: &Request) -> Result<SuiteRun> {
    let p = &req.params;
    let quadratic = |lambda: Option<f64>| -> Result<FunctionalSpec> {
        match &p.spec {
            Some(s) => Ok(s.clone()),
            None => Ok(FunctionalSpec::quadratic(lambda.unwrap_or(1.0))?),
        }
    };
    match (name, &req.pair) {
        ("banach", _) => {
            let r = banach_linf_counterexample();
            let mut lines = vec![json_line(&serde_json::json!({
                "suite": "banach",
                "a": r.a,
                "b": r.b,
                "j_a": r.j_a,
                "j_b": r.j_b,
                "distance_before": r.distance_before,
                "distance_after": r.distance_after,
                "is_contraction": r.is_contraction,
            }))];
            let run = SuiteRun::from_reports("banach", None, p.seed, r.checks);
            lines.extend(run.lines);
            Ok(SuiteRun { lines, ..run })
        }
        ("decay", _) => {
            let spec = quadratic(p.lambda)?;
            let (mu, nu) = req.pair.clone().unwrap_or((Measure::dirac(1.0), Measure::dirac(2.0)));
            let opts = FlowOptions { solver: *req.solver, resolution: p.n, ..FlowOptions::default() };
            let r = exponential_decay_check(&spec, &mu, &nu, p.tau.unwrap_or(0.1), req.steps, &opts)?;
            let reports = r.step_checks.into_iter().chain(r.decay_checks).collect();
            Ok(SuiteRun::from_reports("decay", Some(&spec), p.seed, reports))
        }
        ("contraction", Some((mu, nu))) => {
            let spec = quadratic(p.lambda)?;
            let tau = p.tau.unwrap_or(if spec.is_internal() { 0.05 } else { 0.5 });
            let r = contraction_check(&spec, mu, nu, tau, req.solver)?;
            Ok(SuiteRun::from_reports("contraction", Some(&spec), p.seed, r.reports().cloned().collect()))
        }
        ("poslam", Some((mu, nu))) => {
            let spec = quadratic(p.lambda)?;
            let lambda = spec.lambda_convexity();
            let r = corollary_poslam_check(&spec, mu, nu, p.tau.unwrap_or(1.0 / lambda), req.solver)?;
            Ok(SuiteRun::from_reports("corollary-poslam", Some(&spec), p.seed, vec![r]))
        }
        ("modified", Some((mu, nu))) => {
            let spec = p.spec.clone().unwrap_or(FunctionalSpec::Entropy);
            let tau = p.tau.unwrap_or(if spec.is_internal() { 0.05 } else { 0.5 });
            let r = modified_lambda_check(&spec, mu, nu, tau, req.solver)?;
            Ok(SuiteRun::from_reports("modified-lambda", Some(&spec), p.seed, vec![r]))
        }
        (_, Some(_)) => bail!("suite `{name}` does not take --mu/--nu"),
        (_, None) => {
            let (summary, spec) = run_random(name, p)?;
            let line = json_line(&SuiteOutput::new(&summary, spec.as_ref(), p.seed, p.count));
            Ok(SuiteRun { lines: vec![line], passed: summary.passed(), reports: summary.reports })
        }
    }
}

fn suite_names(name: &str) -> Result<Vec<&str>> {
    match name {
        "all" => Ok(RANDOM_SUITES.iter().copied().chain(["banach", "decay"]).collect()),
        n if RANDOM_SUITES.contains(&n) || n == "banach" || n == "decay" => Ok(vec![n]),
        other => bail!(
            "unknown suite `{other}`; expected one of {}, banach, decay, all",
            RANDOM_SUITES.join(", ")
        ),
    }
}

fn write_reports(out: &Path, name: &str, reports: &[IneqReport]) -> Result<()> {
    let text: String = reports.iter().map(|r| json_line(r) + "\n").collect();
    write_text(&output_path(out, Path::new(&format!("{name}-reports.jsonl")))?, &text)
}

pub fn verify(a: &VerifyArgs, out: &Path) -> Result<Status> {
    let names = suite_names(&a.suite)?;
    let spec = a.functional.as_deref().map(parse_functional).transpose()?;
    let pair = match (&a.mu, &a.nu) {
        (Some(m), Some(n)) => Some((read_measure(m)?, read_measure(n)?)),
        _ => None,
    };
    let solver = solver_options(&a.solver);
    let req = Request {
        params: SuiteParams {
            spec,
            count: a.random,
            seed: a.seed,
            jobs: a.jobs,
            tau: a.tau,
            lambda: a.lambda,
            n: a.solver.n,
        },
        pair,
        steps: a.steps,
        solver: &solver,
    };
    let mut status = Status::Ok;
    for name in names {
        let run = run_suite(name, &req)?;
        for line in &run.lines {
            println!("{line}");
        }
        if a.reports {
            write_reports(out, name, &run.reports)?;
        }
        if !run.passed {
            status = Status::Violation;
        }
    }
    Ok(status)
}

pub fn run(a: &RunArgs, out: &Path) -> Result<Status> {
    let config = ExperimentConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let out = match &config.output {
        Some(dir) if dir.is_absolute() => dir.clone(),
        Some(dir) => base.join(dir),
        None => out.to_path_buf(),
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join("config.toml"), &config.to_toml())?;

    let spec = parse_functional(&config.functional)?;
    let solver = SolverOptions::default();
    let mut status = Status::Ok;
    if config.steps > 0 {
        let start = match (&config.input, &config.init) {
            (Some(path), _) => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                FlowStart::Measure(read_measure(&path).with_context(|| format!("reading {}", path.display()))?)
            }
            (None, Some(init)) => parse_init(init, spec.exponent(), config.n)?,
            (None, None) => unreachable!("validated config"),
        };
        let opts = FlowOptions { solver, resolution: config.n, ..FlowOptions::default() };
        let trace = run_flow(&spec, &start, config.tau, config.steps, &opts)?;
        let path = out.join("trace.csv");
        write_text(&path, &trace_csv(&trace))?;
        println!("{}", json_line(&FlowMeta::new(&trace, &path)));
        if trace.failure.is_some() {
            status = Status::Violation;
        }
    }

    let lambda = match spec {
        FunctionalSpec::Quadratic { lambda } => Some(lambda),
        _ => None,
    };
    let req = Request {
        params: SuiteParams {
            spec: Some(spec),
            count: config.random,
            seed: config.seed,
            jobs: 1,
            tau: Some(config.tau),
            lambda,
            n: config.n,
        },
        pair: None,
        steps: config.steps.max(1),
        solver: &solver,
    };
    let mut lines = String::new();
    for check in &config.checks {
        for name in suite_names(check)? {
            let run = run_suite(name, &req).with_context(|| format!("check `{name}`"))?;
            for line in &run.lines {
                println!("{line}");
                lines.push_str(line);
                lines.push('\n');
            }
            if !run.passed {
                status = Status::Violation;
            }
        }
    }
    if !config.checks.is_empty() {
        write_text(&out.join("checks.jsonl"), &lines)?;
    }
    Ok(status)
}
