use std::path::Path;
use std::process::{Command, Output};

fn sac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sac"))
        .args(args)
        .output()
        .expect("sac runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn wave_prints_the_sidecar_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("wave.csv");
    let o = sac(&["wave", "--delta", "0", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let side: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(side["c"].as_f64().unwrap().abs() < 1e-8);

    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z,m,m_z"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - (v[0] / std::f64::consts::SQRT_2).tanh()).abs() < 1e-6);
    }
}

#[test]
fn wave_accepts_a_negative_shift() {
    let o = sac(&["wave", "--delta", "-0.01"]);
    assert!(o.status.success());
    let side: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((side["c"].as_f64().unwrap() - 0.0212).abs() < 1e-3);
}

#[test]
fn wave_outside_the_bistable_range_is_an_error() {
    let o = sac(&["wave", "--delta", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn config_prints_parseable_toml() {
    for args in [&["config"][..], &["config", "--smoke"][..]] {
        let o = sac(args);
        assert!(o.status.success());
        let text = stdout(&o);
        assert!(text.contains("[run]") && text.contains("[sweep]"));
    }
    assert_ne!(
        stdout(&sac(&["config"])),
        stdout(&sac(&["config", "--smoke"]))
    );
}

#[test]
fn unknown_suite_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = sac(&[
        "validate",
        "--suite",
        "nope",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let o = sac(&[
        "run",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_quick_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let o = sac(&[
        "validate",
        "--suite",
        "1,2,3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.starts_with("PASS")));
}

fn status_lines(out: &str) -> Vec<&str> {
    out.lines()
        .filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL "))
        .collect()
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("smoke.toml");
    let out = dir.path().join("out");
    std::fs::write(&cfg, stdout(&sac(&["config", "--smoke"]))).unwrap();
    // Keep the run short: two experiments.
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .lines()
        .map(|l| {
            if l.starts_with("experiments =") {
                "experiments = [\"generation\", \"noise_bounds\"]".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&cfg, text).unwrap();

    let run = sac(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(matches!(run.status.code(), Some(0 | 1)));
    let run_out = stdout(&run);
    assert_eq!(status_lines(&run_out).len(), 2);
    for name in ["generation", "noise_bounds"] {
        assert!(Path::new(&out).join(format!("{name}.csv")).exists());
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out.join(format!("{name}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["master_seed"], 5);
    }

    let report = sac(&["report", "--dir", out.to_str().unwrap()]);
    assert_eq!(report.status.code(), run.status.code());
    assert_eq!(stdout(&report), run_out);
}
