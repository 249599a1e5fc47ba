use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn eqd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqd"))
        .args(args)
        .env_remove("EQD_SEED")
        .output()
        .expect("running eqd")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn simulate(dir: &TempDir, case: &str, seed: &str) -> PathBuf {
    let p = dir.path().join(format!("{case}-{seed}.csv"));
    stdout(&eqd(&["simulate", case, "--seed", seed, "-o", p.to_str().unwrap()]));
    p
}

fn values(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_cases() {
    let dir = TempDir::new().unwrap();
    let c1 = values(&simulate(&dir, "case1", "5"));
    assert_eq!(c1.len(), 1200);
    let c4 = values(&simulate(&dir, "case4", "5"));
    assert_eq!(c4.len(), 1000);
    assert_eq!(c4.iter().filter(|&&v| v > 1.0).count(), 279);

    let a = stdout(&eqd(&["simulate", "case2", "--seed", "9"]));
    let b = stdout(&eqd(&["simulate", "case2", "--seed", "9"]));
    assert_eq!(a, b);
    let c = Command::new(env!("CARGO_BIN_EXE_eqd"))
        .args(["simulate", "case2"])
        .env("EQD_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(stdout(&c), a);
    assert_ne!(stdout(&eqd(&["simulate", "case2", "--seed", "10"])), a);

    let g = stdout(&eqd(&["simulate", "gaussian", "--n", "300"]));
    assert_eq!(g.lines().count(), 301);
}

#[test]
fn select_reports_candidates() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "case1", "1");
    let out = stdout(&eqd(&[
        "select",
        data.to_str().unwrap(),
        "--b",
        "10",
        "--m",
        "100",
        "--grid",
        "0(10)90",
    ]));
    let r = rows(&out);
    assert_eq!(r[0][..4], ["index", "threshold", "level", "status"]);
    assert_eq!(r.len(), 11);
    assert_eq!(r.iter().filter(|row| row[3] == "chosen").count(), 1);

    let single = stdout(&eqd(&["select", data.to_str().unwrap(), "--b", "5", "--grid", "@1.25"]));
    let r = rows(&single);
    assert_eq!((r[1][1].as_str(), r[1][3].as_str()), ("1.25", "chosen"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "case2", "2");
    let d = data.to_str().unwrap();
    let empty = write(&dir, "empty.csv", "value\n\n");
    let bad = write(&dir, "bad.csv", "1\n2\nthree\n");

    assert_eq!(eqd(&["select", empty.to_str().unwrap()]).status.code(), Some(2));
    let o = eqd(&["select", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert_eq!(eqd(&["select", "/no/such/file"]).status.code(), Some(2));
    assert_eq!(eqd(&["select", d, "--grid", "90(5)10"]).status.code(), Some(4));
    assert_eq!(eqd(&["select", d, "--grid", "@1e9"]).status.code(), Some(3));
    assert_eq!(eqd(&["fit", d, "-u", "1e9"]).status.code(), Some(4));
}

#[test]
fn header_and_blank_lines_accepted() {
    let dir = TempDir::new().unwrap();
    let data = values(&simulate(&dir, "case0", "3"));
    let mut text = String::from("flow\n");
    for v in &data {
        text.push_str(&format!("{v}\n\n"));
    }
    let p = write(&dir, "padded.csv", &text);
    let out = stdout(&eqd(&["fit", p.to_str().unwrap(), "-u", "1"]));
    let r = rows(&out);
    assert_eq!(r[1][1], "1000");
}

#[test]
fn json_and_csv_agree() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "case1", "4");
    let d = data.to_str().unwrap();
    let csv = stdout(&eqd(&["fit", d, "-u", "1.05"]));
    let json = stdout(&eqd(&["fit", d, "-u", "1.05", "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let r = rows(&csv);
    let col = |name: &str| -> f64 {
        let k = r[0].iter().position(|h| h == name).unwrap();
        r[1][k].parse().unwrap()
    };
    assert_eq!(col("threshold"), v["threshold"].as_f64().unwrap());
    assert_eq!(col("exceed_prob"), v["exceed_prob"].as_f64().unwrap());
    assert_eq!(col("scale"), v["params"]["scale"].as_f64().unwrap());
    assert_eq!(col("shape"), v["params"]["shape"].as_f64().unwrap());
    assert_eq!(col("neg_log_lik"), v["neg_log_lik"].as_f64().unwrap());
}

#[test]
fn return_levels() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "case1", "6");
    let d = data.to_str().unwrap();
    let one = stdout(&eqd(&[
        "rl", d, "-u", "1", "--periods", "10,100", "--obs-per-year", "12", "--b1", "1",
    ]));
    for row in rows(&one).iter().skip(1) {
        assert_eq!(row[6], row[7], "single replicate gives a point interval");
    }
    let out = stdout(&eqd(&[
        "rl", d, "--alg", "1,1b,2", "--probs", "0.001", "--level", "0.8,0.95", "--b1", "20",
        "--b2", "4", "--b", "5", "--m", "50", "--grid", "0(20)80",
    ]));
    let r = rows(&out);
    assert_eq!(r.len(), 1 + 3 * 2);
    for row in &r[1..] {
        let (point, lo, hi): (f64, f64, f64) =
            (row[4].parse().unwrap(), row[6].parse().unwrap(), row[7].parse().unwrap());
        assert!(lo <= hi && point > 1.0);
    }
    assert_eq!(eqd(&["rl", d, "-u", "1"]).status.code(), Some(2));
    assert_ne!(eqd(&["rl", d, "-u", "1", "--alg", "2", "--probs", "0.01"]).status.code(), Some(0));
}

#[test]
fn diagnostics() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&dir, "case2", "7");
    let d = data.to_str().unwrap();
    let st = stdout(&eqd(&["diag", d, "--kind", "stability", "--b1", "20"]));
    assert_eq!(rows(&st).len(), 21);

    let qq = stdout(&eqd(&["diag", d, "--kind", "qq", "-u", "1", "--n-sim", "50"]));
    let r = rows(&qq);
    assert_eq!(r[0], ["model_q", "empirical_q", "tol_lo", "tol_hi"]);
    let col = |k: usize| -> Vec<f64> { r[1..].iter().map(|x| x[k].parse().unwrap()).collect() };
    for k in 0..4 {
        assert!(col(k).windows(2).all(|w| w[0] <= w[1]));
    }
    assert_eq!(
        eqd(&["diag", d, "--kind", "qq", "-u", "1", "--n-sim", "10"]).status.code(),
        Some(4)
    );

    let rl = stdout(&eqd(&[
        "diag", d, "--kind", "rl-curve", "--b", "5", "--m", "50", "--grid", "0(25)75", "--b1",
        "20", "--b2", "3", "--n-points", "5", "--t-min", "10",
    ]));
    let pts: Vec<f64> = rows(&rl)[1..].iter().map(|x| x[1].parse().unwrap()).collect();
    assert_eq!(pts.len(), 5);
    assert!(pts.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn study_reports_table_and_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("study.csv");
    let o = eqd(&[
        "study", "case2", "--reps", "3", "--no-coverage", "-o", out.to_str().unwrap(),
    ]);
    let table = stdout(&o);
    assert!(table.contains("threshold"));
    let r = rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(r.len(), 1 + 4);
    for row in &r[1..] {
        let rmse: f64 = row[7].parse().unwrap();
        let bias: f64 = row[8].parse().unwrap();
        let var: f64 = row[9].parse().unwrap();
        assert!((rmse * rmse - bias * bias - var).abs() <= 1e-9 * (rmse * rmse).max(1e-12));
    }
}
