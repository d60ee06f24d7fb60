use std::path::Path;
use std::process::{Command, Output};

fn nacart(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nacart")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = nacart(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], dir: &Path) -> i32 {
    nacart(args, dir).status.code().unwrap()
}

fn simulate(dir: &Path, n: &str, extra: &[&str]) {
    let mut args = vec!["simulate", "--model", "quadratic", "--d", "3", "--n", n, "--seed", "4", "--out", "x.csv"];
    args.extend_from_slice(extra);
    ok(&args, dir);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&["--help"], d), 0);
    assert_eq!(code(&["frobnicate"], d), 2);
    assert_eq!(code(&["bench", "--reps", "x"], d), 2);
    assert_eq!(code(&["bench", "--rho", "1.5"], d), 2);
    assert_eq!(code(&["bench", "--methods", "knn"], d), 2);
    assert_eq!(code(&["theory", "--p-grid", "0:2:0.5"], d), 2);
    assert_eq!(code(&["fit", "--train", "missing.csv", "--target", "missing.y.csv"], d), 3);
    std::fs::write(d.join("bad.csv"), "x1,x2\n1,abc\n").unwrap();
    assert_eq!(code(&["em", "--in", "bad.csv"], d), 3);
    std::fs::write(d.join("c.txt"), "reps 3\n").unwrap();
    assert_eq!(code(&["--config", "c.txt", "bench"], d), 2);
}

#[test]
fn simulate_writes_features_and_response() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "200", &["--pattern", "mcar", "--p", "0.3", "--cols", "1,2"]);
    let x = std::fs::read_to_string(d.join("x.csv")).unwrap();
    let y = std::fs::read_to_string(d.join("x.y.csv")).unwrap();
    assert_eq!(x.lines().next(), Some("x1,x2,x3"));
    assert_eq!(x.lines().count(), 201);
    assert_eq!(y.lines().count(), 201);
    // third column is never masked
    assert!(x.lines().skip(1).all(|l| !l.ends_with("NA")));
    assert!(x.contains("NA"));
    simulate(d, "200", &["--pattern", "mcar", "--p", "0.3", "--cols", "1,2"]);
    assert_eq!(std::fs::read_to_string(d.join("x.csv")).unwrap(), x);
}

#[test]
fn ampute_and_impute() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "100", &[]);
    ok(&["ampute", "--in", "x.csv", "--pattern", "mnar", "--p", "0.2", "--cols", "1", "--out", "a.csv"], d);
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a.matches("NA").count(), 20);
    for method in ["mean", "oor", "gaussian"] {
        let out = ok(&["impute", "--method", method, "--mask", "--train", "a.csv", "--apply", "a.csv"], d);
        assert_eq!(out.lines().next(), Some("x1,x2,x3,x1_missing,x2_missing,x3_missing"));
        assert!(!out.contains("NA"));
        let ones = out.lines().skip(1).filter(|l| l.split(',').nth(3) == Some("1")).count();
        assert_eq!(ones, 20, "{method}");
    }
    let plain = ok(&["impute", "--method", "mean", "--mask", "--no-mask", "--train", "a.csv"], d);
    assert_eq!(plain.lines().next(), Some("x1,x2,x3"));
}

#[test]
fn em_dump_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "500", &["--pattern", "mcar", "--p", "0.2"]);
    let out = ok(&["em", "--in", "x.csv", "--max-iter", "200", "--tol", "1e-10"], d);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    for l in &lines {
        let v: Vec<f64> = l.split(' ').map(|t| t.parse().unwrap()).collect();
        assert_eq!(v.len(), 3);
    }
    // means near 1 for the simulated design
    let mu: Vec<f64> = lines[0].split(' ').map(|t| t.parse().unwrap()).collect();
    assert!(mu.iter().all(|m| (m - 1.0).abs() < 0.2), "{mu:?}");
}

#[test]
fn fit_dump_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "300", &["--pattern", "mcar", "--p", "0.2"]);
    for strategy in ["mia", "surrogate", "prob", "block"] {
        ok(&["fit", "--strategy", strategy, "--max-depth", "3", "--train", "x.csv", "--target", "x.y.csv", "--dump", "t.txt"], d);
        let dump = std::fs::read_to_string(d.join("t.txt")).unwrap();
        let first = dump.lines().next().unwrap();
        assert!(first.starts_with("j=") && first.contains(" z=") && first.contains(" miss=") && first.contains(" n=300 "), "{first}");
        assert!(dump.lines().all(|l| l.len() - l.trim_start().len() <= 6));
    }
    for learner in [["--learner", "forest", "--trees", "3"], ["--learner", "boost", "--rounds", "3"]] {
        let mut args = vec!["fit", "--train", "x.csv", "--target", "x.y.csv", "--predict", "x.csv", "--dump", "e.txt"];
        args.extend_from_slice(&learner);
        let out = ok(&args, d);
        assert_eq!(out.lines().count(), 301);
        assert_eq!(std::fs::read_to_string(d.join("e.txt")).unwrap().matches("# tree").count(), 3);
    }
}

#[test]
fn theory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["theory", "--p-grid", "0:0.95:0.01", "--eta", "0.2,0.5,0.8"], dir.path());
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("p,eta,s_star_L,risk_mia,risk_block,risk_block_cf,risk_prob,risk_surr"));
    assert_eq!(lines.count(), 96 * 3);
    let mc = ok(&["theory", "--p-grid", "0.5", "--eta", "0.5", "--mc-check", "--mc-n", "500", "--mc-reps", "2"], dir.path());
    assert!(mc.lines().next().unwrap().ends_with("mc_surr,mc_surr_se"));
    ok(&["theory", "--format", "svg", "--out", "t.svg"], dir.path());
    assert!(std::fs::read_to_string(dir.path().join("t.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn bench_is_deterministic_and_honours_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base =
        ["bench", "--n", "150", "--d", "3", "--pattern", "mcar", "--p", "0.2", "--methods", "mia,prob,impute_gaussian", "--seed", "8"];
    let mut one = base.to_vec();
    one.extend(["--reps", "3", "--threads", "1"]);
    let mut three = base.to_vec();
    three.extend(["--reps", "3", "--threads", "3"]);
    let a = ok(&one, d);
    assert_eq!(a, ok(&three, d));
    assert_eq!(a.lines().next(), Some("rep,method,learner,model,pattern,p,rho,n_train,n_test,r2,fit_ms,predict_ms"));
    assert_eq!(a.lines().count(), 10);

    std::fs::write(d.join("c.txt"), "# small run\nreps = 3\nthreads = 2\nseed = 8\n").unwrap();
    let mut cfg = vec!["--config", "c.txt"];
    cfg.extend_from_slice(&base);
    assert_eq!(ok(&cfg, d), a);
    cfg.extend(["--reps", "1"]);
    assert_eq!(ok(&cfg, d).lines().count(), 4);

    let mut svg = base.to_vec();
    svg.extend(["--reps", "2", "--format", "svg", "--out", "b.svg"]);
    ok(&svg, d);
    assert!(std::fs::read_to_string(d.join("b.svg")).unwrap().contains("</svg>"));
}

#[test]
fn selectfreq_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["selectfreq", "--p-grid", "0,0.5", "--n-grid", "50,100", "--reps", "20"], dir.path());
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "p,n,missing_on,reps,x1_count,no_split,frequency");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,50,x1,20,"));
}
