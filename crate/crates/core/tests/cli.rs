use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use inflap_fb::ScalarField;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inflap-fb")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr))
    })
}

#[test]
fn barrier_exit_codes() {
    let ok = run(&["barrier", "--K", "100", "--a", "4", "--b", "144"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let r = report(&ok);
    assert_eq!(r["results"]["choice"]["lbar"].as_f64(), Some(864.0));

    let forced = run(&["barrier", "--K", "100", "--a", "4", "--b", "144", "--L", "1"]);
    assert_eq!(code(&forced), 1);
    assert!(String::from_utf8_lossy(&forced.stderr).contains("FAIL keq_uniform_samples"));

    assert_eq!(code(&run(&["barrier", "--K", "100"])), 2);
    assert_eq!(code(&run(&["barrier", "--K", "100", "--a", "4", "--b", "144", "--kappa", "0.3"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn command_flag_is_an_alias() {
    let a = run(&["barrier", "--K", "10", "--a", "4", "--b", "1"]);
    let b = run(&["--command", "barrier", "--K", "10", "--a", "4", "--b", "1"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn report_schema() {
    let out = run(&["lipschitz", "--m", "17"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let keys: Vec<usize> =
        ["\"config\"", "\"ledger\"", "\"results\"", "\"checks\""].iter().map(|k| text.find(k).unwrap()).collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]), "top-level keys out of order");

    let r = report(&out);
    assert_eq!(r.as_object().unwrap().len(), 4);
    assert_eq!(r["config"]["command"], "lipschitz");
    for c in r["checks"].as_array().unwrap() {
        let obj = c.as_object().unwrap();
        let mut names: Vec<&str> = obj.keys().map(String::as_str).collect();
        names.sort_unstable();
        assert_eq!(names, ["lhs", "name", "pass", "rhs", "slack"]);
    }
    // every float carries 17 significant digits
    let h = text.lines().find(|l| l.contains("\"sup_quotient\"")).unwrap();
    let mantissa = h.split(':').nth(1).unwrap().trim().trim_end_matches(',').split('e').next().unwrap().to_owned();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{h}");
}

#[test]
fn solve_then_inspect_the_written_grid() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("u.csv");
    let rep = dir.path().join("solve.json");
    let g = grid.to_str().unwrap();
    let out = run(&["solve", "--m", "17", "--n", "2", "--grid-out", g, "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    let header = std::fs::read_to_string(&grid).unwrap().lines().next().unwrap().to_owned();
    let fields: Vec<&str> = header.split(',').collect();
    assert_eq!(fields[0], "17");
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.125);
    assert_eq!(fields[2], "2");
    let u = ScalarField::load_csv(Path::new(&grid)).unwrap();
    assert_eq!(u.points_per_axis(), 17);

    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert!(saved["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));

    let v = run(&["viscosity", "--grid-in", g]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn malformed_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "17,0.5,2\n1,2,3\n").unwrap();
    let out = run(&["lipschitz", "--grid-in", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed grid"));
}

#[test]
fn non_convergence_has_its_own_exit_code() {
    let out = run(&["solve", "--m", "17", "--max-iters", "2"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn counterexample_fails_certify() {
    let out = run(&["certify", "--profile", "linear", "--slope", "50", "--Lambda", "0.1", "--L", "5", "--m", "33"]);
    assert_eq!(code(&out), 1);
    let r = report(&out);
    assert_eq!(r["results"]["ledger_rules_hold"], false);
    assert!(r["results"]["certificate"].is_object());
}

#[test]
fn thread_count_does_not_change_reports() {
    let with = |n: &str| {
        Command::new(env!("CARGO_BIN_EXE_inflap-fb"))
            .args(["certify", "--m", "17"])
            .env("INFLAP_FB_THREADS", n)
            .output()
            .unwrap()
    };
    let (one, four) = (with("1"), with("4"));
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
}
