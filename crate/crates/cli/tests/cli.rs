use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wprox(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wprox"))
        .current_dir(dir)
        .env_remove("WPROX_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn uniform_file(dir: &Path, name: &str, b: f64) {
    let n = 4096;
    let mut s = String::from("s,q\n");
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        s.push_str(&format!("{u},{}\n", b * u));
    }
    fs::write(dir.join(name), s).unwrap();
}

fn json(line: &str) -> serde_json::Value {
    serde_json::from_str(line).unwrap()
}

fn csv_column(text: &str, column: &str) -> Vec<f64> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == column).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn dist_prints_distance() {
    let dir = TempDir::new().unwrap();
    uniform_file(dir.path(), "u01.csv", 1.0);
    uniform_file(dir.path(), "u02.csv", 2.0);
    let o = wprox(dir.path(), &["dist", "--mu", "u01.csv", "--nu", "u02.csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next(), Some("0.5773503"));
    let o = wprox(dir.path(), &["dist", "--mu", "u01.csv", "--nu", "u01.csv", "--json"]);
    assert_eq!(json(stdout(&o).trim())["w2"], 0.0);
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.csv"), "x,w\n1,0.3\n").unwrap();
    fs::write(dir.path().join("d.csv"), "x,w\n2,1\n").unwrap();
    for args in [
        &["dist", "--mu", "missing.csv", "--nu", "missing.csv"][..],
        &["dist", "--mu", "bad.csv", "--nu", "d.csv"],
        &["prox", "--f", "quad:lambda=-1", "--tau", "1", "--mu", "d.csv"],
        &["prox", "--f", "quad:lambda=-2", "--tau", "1", "--mu", "d.csv"],
        &["prox", "--f", "bogus", "--tau", "1", "--mu", "d.csv"],
        &["flow", "--f", "quad:lambda=1", "--tau", "1", "--steps", "0", "--init", "dirac:x=1"],
        &["verify", "nonsense"],
        &["flow", "--f", "quad:lambda=1"],
    ] {
        assert_eq!(wprox(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn prox_of_quadratic_halves_a_dirac() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("delta2.csv"), "x,w\n2,1\n").unwrap();
    let o = wprox(dir.path(), &["--out", "out", "prox", "--f", "quad:lambda=1", "--tau", "1", "--mu", "delta2.csv"]);
    assert!(o.status.success());
    let summary = json(stdout(&o).trim());
    assert_eq!(summary["mean"], 1.0);
    assert_eq!(summary["w2_move"], 1.0);
    let measure = fs::read_to_string(dir.path().join("out/prox.csv")).unwrap();
    assert!(measure.contains("x,w\n1e0,1e0"));
    assert!(dir.path().join("out/prox.json").exists());
}

#[test]
fn prox_from_barenblatt_reports_time_shift() {
    let dir = TempDir::new().unwrap();
    let o = wprox(dir.path(), &["prox", "--f", "renyi:p=1", "--tau", "0.1", "--barenblatt", "r=1"]);
    assert!(o.status.success());
    let theta = json(stdout(&o).trim())["theta"].as_f64().unwrap();
    assert!((theta - 1.0977226).abs() < 5e-8, "{theta}");
}

#[test]
fn rescaled_barenblatt_flow_stays_on_profile() {
    let dir = TempDir::new().unwrap();
    let o = wprox(
        dir.path(),
        &["flow", "--f", "renyi:p=2", "--tau", "0.01", "--steps", "500", "--init", "barenblatt:r=1", "--rescale"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    let w2 = csv_column(&trace, "w2_ref");
    assert_eq!(w2.len(), 501);
    assert!(w2.iter().all(|&d| d <= 10.0 / 512.0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("K = "));
    assert!(dir.path().join("flow-rescaled.csv").exists());
}

#[test]
fn exponential_formula_scale_approaches_limit() {
    let dir = TempDir::new().unwrap();
    let o = wprox(
        dir.path(),
        &["flow", "--f", "quad:lambda=1", "--expformula", "t=1", "--ns", "1,2,4,8,16,32,64,128,256,512,1024"],
    );
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    let ns = csv_column(&text, "n");
    let scales = csv_column(&text, "scale");
    for (n, s) in ns.iter().zip(&scales) {
        if *n >= 8.0 {
            assert!((s - (-1.0f64).exp()).abs() <= 1.0 / n);
        }
    }
}

#[test]
fn paired_flow_writes_partner_columns() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("b.csv"), "x,w\n2,1\n").unwrap();
    let o = wprox(
        dir.path(),
        &["flow", "--f", "quad:lambda=1", "--tau", "0.1", "--steps", "5", "--init", "dirac:x=1", "--nu", "b.csv"],
    );
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    assert!(text.starts_with("n,tau,energy,w2_move,w2_ref,slope,lambda_tau_pair,energy_nu,w2_move_nu,slope_nu\n"));
    let w = csv_column(&text, "w2_ref");
    assert!((w[5] - 1.1f64.powi(-5)).abs() < 1e-14);
}

#[test]
fn solver_failure_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let o = wprox(
        dir.path(),
        &[
            "flow", "--f", "renyi:p=2", "--tau", "0.05", "--steps", "3", "--init", "barenblatt:r=1", "--force-numeric",
            "--max-iter", "1",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let trace = fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    assert!(trace.contains("# failure: step 1"));
}

#[test]
fn verify_suites_pass() {
    let dir = TempDir::new().unwrap();
    let o = wprox(dir.path(), &["verify", "contraction", "--f", "quad:lambda=1", "--random", "1000", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let summary = json(stdout(&o).trim());
    assert_eq!(summary["n_failed"], 0);
    assert_eq!(summary["instances"], 1000);
    let o = wprox(dir.path(), &["verify", "gronwall", "--random", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let o = wprox(dir.path(), &["verify", "banach"]);
    assert_eq!(o.status.code(), Some(0));
    let first = json(stdout(&o).lines().next().unwrap());
    let close = |v: &serde_json::Value, x: f64| (v.as_f64().unwrap() - x).abs() < 1e-9;
    assert!(close(&first["j_a"][0], 1.0) && close(&first["j_a"][1], -1.0));
    assert!(close(&first["j_b"][0], 2.5) && close(&first["j_b"][1], -0.5));
    assert_eq!(first["is_contraction"], false);
}

#[test]
fn verify_explicit_pair() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.csv"), "x,w\n1,1\n").unwrap();
    fs::write(dir.path().join("b.csv"), "x,w\n-1,0.5\n2,0.5\n").unwrap();
    let o = wprox(dir.path(), &["verify", "contraction", "--mu", "a.csv", "--nu", "b.csv", "--tau", "0.3"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(json(&lines[1])["two_sided"], true);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |jobs: &str| {
        stdout(&wprox(
            dir.path(),
            &["verify", "all", "--random", "250", "--seed", "11", "--jobs", jobs, "--n", "32", "--reports"],
        ))
    };
    let a = run("1");
    let reports = fs::read(dir.path().join("contraction-reports.jsonl")).unwrap();
    assert_eq!(a, run("1"));
    assert_eq!(a, run("4"));
    assert_eq!(reports, fs::read(dir.path().join("contraction-reports.jsonl")).unwrap());

    let flow = |name: &str| {
        let o = wprox(
            dir.path(),
            &["flow", "--f", "entropy", "--tau", "0.05", "--steps", "4", "--init", "uniform:a=0,b=1", "--n", "64", "--output", name],
        );
        assert!(o.status.success());
        fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(flow("a.csv"), flow("b.csv"));
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("d.csv"), "x,w\n2,1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wprox"))
        .current_dir(dir.path())
        .env("WPROX_OUT", "results")
        .args(["prox", "--f", "quad:lambda=1", "--tau", "1", "--mu", "d.csv"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("results/prox.csv").exists());
}

#[test]
fn run_executes_experiment_file() {
    let dir = TempDir::new().unwrap();
    let config = "functional = \"renyi:p=2\"\ntau = 0.02\nsteps = 10\nn = 128\ninit = \"barenblatt:r=1\"\noutput = \"exp\"\nseed = 5\nchecks = [\"contraction\", \"gronwall\"]\nrandom = 20\n";
    fs::write(dir.path().join("exp.toml"), config).unwrap();
    let o = wprox(dir.path(), &["run", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("exp/trace.csv")).unwrap();
    assert_eq!(csv_column(&trace, "n").len(), 11);
    let checks = fs::read_to_string(dir.path().join("exp/checks.jsonl")).unwrap();
    assert_eq!(checks.lines().count(), 2);
    let echoed = fs::read_to_string(dir.path().join("exp/config.toml")).unwrap();
    assert!(echoed.contains("functional = \"renyi:p=2\""));

    fs::write(dir.path().join("bad.toml"), "functional = \"entropy\"\ntau = -1\nsteps = 1\ninit = \"dirac:x=0\"\n").unwrap();
    assert_eq!(wprox(dir.path(), &["run", "--config", "bad.toml"]).status.code(), Some(2));
}
