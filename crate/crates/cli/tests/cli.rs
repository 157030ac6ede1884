use std::fs;
use std::process::{Command, Output};

fn zigzag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zigzag"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
n_ions = 12
n_central = 6
eta = 20.0
tau_q_grid = [2.0, 4.0]
realizations = 3
master_seed = 99
workers = 2
"#;

#[test]
fn ground_state_json() {
    let o = zigzag(&["ground-state", "--n_ions", "5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let xs = v["positions"].as_array().unwrap();
    assert_eq!(xs.len(), 5);
    assert!(xs[2].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "not_a_key = 1\n").unwrap();
    let o = zigzag(&["predict", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = zigzag(&["predict", "--n_central", "80"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_reports_regime() {
    let o = zigzag(&["predict", "--tau_q", "20", "--eta", "100"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("regime") && l.ends_with("overdamped")));
    assert!(text.lines().any(|l| l.starts_with("exponent") && l.contains("1.000000")));
}

#[test]
fn quench_is_reproducible_and_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let snap = dir.path().join("snap.txt");
    let args = [
        "quench",
        "-c",
        cfg.to_str().unwrap(),
        "--tau_q",
        "3",
        "--realization",
        "1",
        "--snapshot_stride",
        "500",
    ];
    let a = zigzag(&[&args[..], &["--out", snap.to_str().unwrap()]].concat());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = zigzag(&args);
    let va: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    let vb: serde_json::Value = serde_json::from_str(&stdout(&b)).unwrap();
    assert_eq!(va["census"], vb["census"]);
    assert_eq!(va["steps"], vb["steps"]);
    let text = fs::read_to_string(&snap).unwrap();
    assert!(text.starts_with("# zigzag ion-snapshot v1 n=12"));
    assert!(text.lines().count() > 2);
}

#[test]
fn sweep_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let o = zigzag(&["sweep", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(
        matches!(o.status.code(), Some(0) | Some(3)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in ["raw.csv", "aggregate.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let raw = fs::read_to_string(out.join("raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.get("config").is_some());

    let agg = out.join("aggregate.csv");
    let o = zigzag(&["fit", agg.to_str().unwrap()]);
    let text = stdout(&o);
    if o.status.success() {
        assert!(text.contains("exponent"));
    } else {
        assert_eq!(o.status.code(), Some(1));
    }
}

#[test]
fn sweep_without_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = zigzag(&[
        "sweep",
        "--tau_q_grid",
        "2,4",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
