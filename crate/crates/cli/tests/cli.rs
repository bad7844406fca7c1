use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otfair::TestReport;
use tempfile::TempDir;

fn otfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Equal score distributions in both groups for both labels.
const ZERO_GAP: &str = "a,y,x1\n1,1,1.0\n0,1,1.0\n1,1,0.2\n0,1,0.2\n1,0,-2.0\n0,0,-2.0\n1,0,-1.0\n0,0,-1.0\n";

/// Positives in group 1 score far higher than positives in group 0.
fn unfair(dir: &TempDir) -> PathBuf {
    let mut text = String::from("a,y,x1\n");
    for i in 0..40 {
        let jitter = i as f64 / 40.0;
        text += &format!("1,1,{}\n0,1,{}\n1,0,{}\n0,0,{}\n", 2.0 + jitter, -2.0 + jitter, jitter, jitter);
    }
    write(dir, "unfair.csv", &text)
}

#[test]
fn zero_gap_audit_does_not_reject() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "zero.csv", ZERO_GAP);
    for criterion in ["opp", "odd"] {
        let out = otfair(&[
            "audit", "--data", s(&data), "--beta", "0.7", "--criterion", criterion, "--alpha", "0.05", "--seed", "1",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let report = TestReport::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert!(!report.reject);
    }
}

#[test]
fn alpha_outside_unit_interval_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "zero.csv", ZERO_GAP);
    let out = otfair(&["audit", "--data", s(&data), "--beta", "1", "--criterion", "opp", "--alpha", "1.5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--alpha"), "{}", stderr(&out));
}

#[test]
fn unknown_flags_and_missing_seeds_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "zero.csv", ZERO_GAP);
    let base = ["audit", "--data", s(&data), "--beta", "1", "--alpha", "0.05"];
    let out = otfair(&[&base[..], &["--criterion", "opp", "--verbose"]].concat());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--verbose"));
    let out = otfair(&[&base[..], &["--criterion", "odd"]].concat());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--seed"));
    let out = otfair(&["gen", "mixture", "--n", "10", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--seed"));
    let out = otfair(&["audit", "--data", s(&data), "--criterion", "opp", "--alpha", "0.05"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--beta"));
}

#[test]
fn bad_data_names_the_row() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "a,y,x1\n1,1,0.5\n2,1,0.5\n0,0,1\n1,0,1\n");
    let out = otfair(&["audit", "--data", s(&data), "--beta", "1", "--criterion", "opp", "--alpha", "0.05"]);
    assert_eq!(code(&out), 3);
    let msg = stderr(&out);
    assert!(msg.contains("row 2"), "{msg}");
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");

    let data = write(&dir, "zero.csv", ZERO_GAP);
    let out = otfair(&["audit", "--data", s(&data), "--beta", "1,2", "--criterion", "opp", "--alpha", "0.05"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("dimension"));
}

#[test]
fn exit_on_reject() {
    let dir = TempDir::new().unwrap();
    let data = unfair(&dir);
    let args = ["audit", "--data", s(&data), "--beta", "1.5", "--criterion", "opp", "--alpha", "0.05"];
    let out = otfair(&args);
    assert_eq!(code(&out), 0);
    let report = TestReport::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(report.reject);
    assert_eq!(code(&otfair(&[&args[..], &["--exit-on-reject"]].concat())), 1);
}

#[test]
fn reports_reproduce_field_for_field() {
    let dir = TempDir::new().unwrap();
    let data = unfair(&dir);
    let mut reports = Vec::new();
    for name in ["r1.json", "r2.json"] {
        let path = dir.path().join(name);
        let out = otfair(&[
            "audit", "--data", s(&data), "--beta", "0.3", "--intercept", "-0.2", "--criterion", "odd", "--alpha", "0.1",
            "--seed", "77", "--mc-samples", "2000", "--report", s(&path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        reports.push(std::fs::read_to_string(path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report = TestReport::from_json(&reports[0]).unwrap();
    assert_eq!(report.seed, Some(77));
    assert_eq!(report.mc_samples, Some(2000));
    assert_eq!(TestReport::from_json(&report.to_json()).unwrap(), report);
}

#[test]
fn generate_train_audit_pipeline() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("mix.csv");
    let again = dir.path().join("mix_again.csv");
    let other = dir.path().join("mix_other.csv");
    for (path, seed) in [(&data, "5"), (&again, "5"), (&other, "6")] {
        assert_eq!(code(&otfair(&["gen", "mixture", "--n", "300", "--seed", seed, "--out", s(path)])), 0);
    }
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("a,y,x1,x2\n"));
    assert_eq!(text.lines().count(), 301);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
    assert_ne!(text, std::fs::read_to_string(&other).unwrap());

    let model = dir.path().join("model.json");
    let out = otfair(&["train", "--data", s(&data), "--l2", "0.01", "--out", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = otfair(&["audit", "--data", s(&data), "--model", s(&model), "--criterion", "opp", "--alpha", "0.05"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = TestReport::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report.n, 300);
}

#[test]
fn mfd_exports_plan() {
    let dir = TempDir::new().unwrap();
    let data = unfair(&dir);
    let plan = dir.path().join("plan.csv");
    let out = otfair(&["mfd", "--data", s(&data), "--beta", "1.5", "--criterion", "odd", "--out", s(&plan)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&plan).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,dest_x1,a,y,norm,weight");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() >= 160);
    let mass: f64 = rows.iter().map(|r| r[5]).sum();
    assert!((mass - 160.0).abs() < 1e-9);
    for r in &rows {
        assert!(((r[0] - r[1]).abs() - r[4]).abs() < 1e-9);
    }
}

#[test]
fn experiment_tables() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("t.csv");
    let args = [
        "simulate", "null-rejection", "--n", "80,120", "--reps", "30", "--alpha", "0.5,0.05", "--seed", "3", "--out",
        s(&table),
    ];
    assert_eq!(code(&otfair(&args)), 0);
    let first = std::fs::read_to_string(&table).unwrap();
    assert_eq!(first.lines().next().unwrap(), "n,alpha,rate,skipped");
    assert_eq!(first.lines().count(), 5);
    assert_eq!(code(&otfair(&args)), 0);
    assert_eq!(first, std::fs::read_to_string(&table).unwrap());

    let hist = dir.path().join("h.csv");
    let out = otfair(&[
        "simulate", "limit-hist", "--n", "50", "--reps", "12", "--oracle-n", "5000", "--seed", "4", "--out", s(&hist),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&hist).unwrap();
    assert_eq!(text.lines().next().unwrap(), "rep,statistic");
    assert_eq!(text.lines().count(), 13);

    let grid = dir.path().join("g.csv");
    let out = otfair(&["landscape", "--grid", "-2:2:5", "--n", "400", "--seed", "8", "--out", s(&grid)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&grid).unwrap();
    assert_eq!(text.lines().next().unwrap(), "beta1,beta2,gap_thr,gap_prob");
    assert_eq!(text.lines().count(), 26);

    let out = otfair(&["landscape", "--grid", "0:1", "--n", "10", "--seed", "1", "--out", s(&grid)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--grid"));
}

#[test]
fn sweep_table() {
    let dir = TempDir::new().unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    otfair(&["gen", "mixture", "--n", "300", "--seed", "1", "--out", s(&train)]);
    otfair(&["gen", "mixture", "--n", "300", "--seed", "2", "--out", s(&test)]);
    let table = dir.path().join("w.csv");
    let out = otfair(&[
        "sweep", "--train", s(&train), "--test", s(&test), "--l2-range", "0:2:3", "--alpha", "0.05", "--out", s(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lambda,statistic,quantile,accuracy,reject,converged");
    assert_eq!(text.lines().count(), 4);
    let out = otfair(&[
        "sweep", "--train", s(&train), "--test", s(&test), "--alpha", "0.05", "--criterion", "odd", "--out", s(&table),
    ]);
    assert_eq!(code(&out), 2);
}

const HELP_PAGES: &[&[&str]] = &[
    &[],
    &["audit"],
    &["mfd"],
    &["gen"],
    &["gen", "mixture"],
    &["gen", "landscape"],
    &["train"],
    &["simulate"],
    &["simulate", "null-rejection"],
    &["simulate", "limit-hist"],
    &["landscape"],
    &["sweep"],
];

/// Set `OTFAIR_UPDATE_GOLDEN=1` to rewrite the expected pages.
#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("OTFAIR_UPDATE_GOLDEN").is_some();
    for page in HELP_PAGES {
        let out = otfair(&[*page, &["--help"]].concat());
        assert_eq!(code(&out), 0);
        let text = String::from_utf8(out.stdout).unwrap();
        let name = if page.is_empty() { "otfair".to_string() } else { page.join("_") };
        let path = golden.join(format!("{name}.txt"));
        if update {
            std::fs::create_dir_all(&golden).unwrap();
            std::fs::write(&path, &text).unwrap();
        } else {
            let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(text, expected, "help for {name:?} changed");
        }
    }
}

#[test]
fn audit_help_lists_every_flag() {
    let text = String::from_utf8(otfair(&["audit", "--help"]).stdout).unwrap();
    for flag in [
        "--data", "--beta", "--intercept", "--model", "--criterion", "--alpha", "--mc-samples", "--seed", "--report",
        "--exit-on-reject", "--help",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
}
