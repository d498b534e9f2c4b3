use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pama(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pama")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn generate(dir: &Path) {
    let out = pama(&[
        "generate",
        "--n",
        "30",
        "--m",
        "25",
        "--r-star",
        "2",
        "--sample-rate",
        "0.5",
        "--seed",
        "4",
        "--output",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
}

#[test]
fn generate_then_solve_with_both_solvers() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let obs = dir.path().join("observations.txt");
    assert!(fs::read_to_string(&obs).unwrap().starts_with("30 25\n375\n"));
    for solver in ["pama", "palm"] {
        let out_dir = dir.path().join(solver);
        let out = pama(&[
            "solve",
            "--loss",
            "logistic",
            "--observations",
            obs.to_str().unwrap(),
            "--c-lambda",
            "0.3",
            "--rank",
            "4",
            "--theta",
            "theta3",
            "--solver",
            solver,
            "--output",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        assert!(text(&out.stdout).starts_with("lambda="));
        let u = fs::read_to_string(out_dir.join("u.csv")).unwrap();
        assert_eq!(u.lines().count(), 30);
        assert!(u.lines().all(|l| l.split(',').count() == 4));
        assert_eq!(fs::read_to_string(out_dir.join("v.csv")).unwrap().lines().count(), 25);
        assert!(fs::read_to_string(out_dir.join("trace.csv")).unwrap().starts_with("k,"));
    }
}

#[test]
fn scad_theta_parses_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let out = pama(&[
        "solve",
        "--loss",
        "laplace",
        "--observations",
        dir.path().join("observations.txt").to_str().unwrap(),
        "--lambda",
        "1.5",
        "--rank",
        "3",
        "--theta",
        "theta6(a=3,rho=1.5)",
        "--max-iter",
        "20",
        "--output",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
}

#[test]
fn sweep_reads_a_partial_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    fs::write(
        &config,
        "n = 24\nm = 20\nr_star = 2\ninstances = 2\nc_lambda_grid = [0.2, 2.0]\nmax_iter = 30\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = pama(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    // 2 solvers × 2 values × 2 instances.
    assert_eq!(runs.lines().count(), 1 + 8);
    let averages = fs::read_to_string(out_dir.join("averages.csv")).unwrap();
    assert_eq!(averages.lines().count(), 1 + 4);
    assert_eq!(text(&out.stdout), averages);
    assert!(fs::read_to_string(out_dir.join("manifest.txt"))
        .unwrap()
        .contains("n = 24"));
}

#[test]
fn check_suites_pass() {
    let out = pama(&["check", "--suite", "prox"]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    assert!(text(&out.stdout).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn bad_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("bad.txt");
    fs::write(&obs, "2 2\n1\n5 0 1\n").unwrap();
    let out = pama(&[
        "solve",
        "--loss",
        "logistic",
        "--observations",
        obs.to_str().unwrap(),
        "--lambda",
        "1",
        "--rank",
        "2",
        "--output",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).starts_with("error:"));

    let config = dir.path().join("typo.toml");
    fs::write(&config, "smaple_rate = 0.3\n").unwrap();
    let out = pama(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
