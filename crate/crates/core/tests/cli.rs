use std::path::Path;
use std::process::{Command, Output};

use filtermax::cli::CSV_HEADER;

fn filtermax(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filtermax")).args(args).current_dir(dir).env_remove("FILTERMAX_ATOM_BUDGET").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const ALL_ONES: &str = r#"{
  "masses": [0.25, 0.25, 0.25, 0.25],
  "levels": [[[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]]]
}"#;

const WORKED: &str = r#"{
  "masses": [0.25, 0.25, 0.25, 0.25],
  "levels": [[[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]]],
  "tests": [[[1, 0, 0, 0], [1, 0, 0, 0]]]
}"#;

#[test]
fn gen_writes_four_point_instance() {
    let dir = tempfile::tempdir().unwrap();
    let o = filtermax(dir.path(), &["gen", "--seed", "1", "--depth", "2", "--branching", "2", "--model", "product", "--out", "a.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("points 4, atoms 7, window L = 2"), "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    let inst = filtermax::verify::Instance::from_json(&text).unwrap();
    assert_eq!(inst.space.n_points(), 4);
    assert!(inst.product_weight);
}

#[test]
fn gen_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let o = filtermax(dir.path(), &["gen", "--seed", "9", "--depth", "3", "--branching", "3", "--model", "lognormal(0.5)", "--out", name]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(dir.path().join("a.json")).unwrap(), std::fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn gen_rejects_huge_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let o = filtermax(dir.path(), &["gen", "--depth", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("atom budget exceeded"));
}

#[test]
fn usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(filtermax(dir.path(), &["verify", "--suite", "nope", "x.json"]).status.code(), Some(2));
    assert_eq!(filtermax(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(filtermax(dir.path(), &["verify", "missing.json"]).status.code(), Some(3));
    let o = filtermax(dir.path(), &["gen", "--out", "no/such/dir/x.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn invalid_instance_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"masses": [0.5, 0.5], "levels": [[[0, 1]], [[0]]]}"#).unwrap();
    let o = filtermax(dir.path(), &["verify", "bad.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("invalid instance"));
    assert_eq!(filtermax(dir.path(), &["constants", "bad.json"]).status.code(), Some(4));
}

#[test]
fn all_ones_constants_are_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ones.json"), ALL_ONES).unwrap();
    let o = filtermax(dir.path(), &["constants", "ones.json", "--which", "all"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let names: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["A", "RH", "S", "B", "Winf"]);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert!((cols[1].parse::<f64>().unwrap() - 1.0).abs() <= 1e-12, "{r}");
        assert_eq!(cols[2], "exact");
    }
}

#[test]
fn heuristic_rows_are_lower_bounds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ones.json"), ALL_ONES).unwrap();
    let o = filtermax(dir.path(), &["constants", "ones.json", "--mode", "heuristic", "--which", "rh"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().nth(1).unwrap().contains(",lower-bound,"));
}

#[test]
fn exact_mode_guard_and_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let o = filtermax(dir.path(), &["gen", "--seed", "2", "--depth", "3", "--branching", "3", "--out", "big.json"]);
    assert_eq!(o.status.code(), Some(0));
    let o = filtermax(dir.path(), &["constants", "big.json"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("enumeration infeasible"));
    let o = filtermax(dir.path(), &["constants", "big.json", "--fallback"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lower-bound"));
    assert_eq!(filtermax(dir.path(), &["constants", "big.json", "--which", "a"]).status.code(), Some(0));
    assert_eq!(filtermax(dir.path(), &["verify", "big.json", "--suite", "thm12"]).status.code(), Some(5));
    assert_eq!(filtermax(dir.path(), &["verify", "big.json", "--suite", "thm12", "--fallback"]).status.code(), Some(0));
}

#[test]
fn budget_env_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ones.json"), ALL_ONES).unwrap();
    let run = |budget: &str| {
        Command::new(env!("CARGO_BIN_EXE_filtermax"))
            .args(["constants", "ones.json", "--which", "rh"])
            .current_dir(dir.path())
            .env("FILTERMAX_ATOM_BUDGET", budget)
            .output()
            .unwrap()
    };
    assert_eq!(run("7").status.code(), Some(0));
    let o = run("6");
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("budget 6"));
    assert_eq!(run("many").status.code(), Some(2));
}

#[test]
fn sparse_row_on_worked_instance() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.json"), WORKED).unwrap();
    let o = filtermax(dir.path(), &["verify", "w.json", "--suite", "sparse"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "theorem,seed,lhs,rhs,slack,mode,status\nsparse,0,0.25,0.25,0,exact,pass\n");
    let o = filtermax(dir.path(), &["verify", "w.json", "--suite", "sparse", "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["witness"], "point 1");
    assert_eq!(rows[0]["lhs"], 0.25);
}

#[test]
fn csv_header_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = filtermax(dir.path(), &["verify", "--ensemble", "3", "2", "--suite", "thm14", "--out", "r.csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "theorem,seed,lhs,rhs,slack,mode,status");
    assert_eq!(CSV_HEADER.join(","), "theorem,seed,lhs,rhs,slack,mode,status");
    assert_eq!(text.lines().count(), 1 + 2 * 5);
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').count(), 7);
        assert!(line.starts_with("thm14,"));
        assert!(line.ends_with(",exact,pass"));
    }
}

#[test]
fn ensemble_row_count_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = filtermax(dir.path(), &["verify", "--ensemble", "7", "6", "--suite", "all", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let keys: Vec<(u64, String)> = out
        .lines()
        .skip(1)
        .map(|l| {
            let mut c = l.split(',');
            let th = c.next().unwrap().to_string();
            (c.next().unwrap().parse().unwrap(), th)
        })
        .collect();
    // 5 pairs: thm11 5 + cor53 + converse, thm12 1 + 5, thm14 5, thm15 5,
    // sparse 5, carleson 10, props 5
    assert_eq!(keys.len(), 6 * 43);
    assert!(keys.windows(2).all(|w| w[0] <= w[1]));
}
