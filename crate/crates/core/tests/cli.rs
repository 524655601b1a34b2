use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pprm::io::{read_stream, trace_csv};

fn pprm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pprm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn constant_source(n: usize, loss: f64) -> String {
    (1..=n)
        .map(|t| format!("{{\"t\":{t},\"labeled\":[{{\"true\":{loss},\"synth\":{loss}}}],\"unlabeled\":[{loss},{loss}]}}\n"))
        .collect()
}

const SMALL: &str = "\
[scenario]
horizon = 100
source_labeled = 100
source_unlabeled = 1500
[scenario.schedule]
kind = \"constant\"
p = 0.3
[experiment]
replications = 2
base_seed = 5
methods = [\"srm\", \"pprm_adaptive\"]
";

#[test]
fn hoeffding_calibration_of_constant_losses() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "source.jsonl", &constant_source(100, 0.1));
    let o = pprm(
        dir.path(),
        &["calibrate", "source.jsonl", "--method", "hoeffding"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ub = v["upper_bound"].as_f64().unwrap();
    // 0.1 + sqrt(ln 20 / 200)
    assert!((ub - 0.222_387_341_534_040_8).abs() < 1e-12, "{ub}");
    assert_eq!(v["method"], "hoeffding_labeled_only");
    assert_eq!(v["n0"], 100);
    assert_eq!(v["N0"], 200);

    let o = pprm(
        dir.path(),
        &["calibrate", "source.jsonl", "--method", "betting"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["upper_bound"].as_f64().unwrap() >= 0.1);
    assert_eq!(v["eta0"], 1.0);
}

#[test]
fn out_of_range_loss_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = constant_source(5, 0.1);
    text.push_str("{\"t\":6,\"labeled\":[{\"true\":1.5,\"synth\":0.1}],\"unlabeled\":[]}\n");
    write(dir.path(), "source.jsonl", &text);
    let o = pprm(
        dir.path(),
        &["calibrate", "source.jsonl", "--method", "hoeffding"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));
}

#[test]
fn empty_source_fails() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "source.jsonl", "");
    let o = pprm(dir.path(), &["calibrate", "source.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no labeled samples"), "{}", stderr(&o));
}

#[test]
fn simulate_is_deterministic_and_shaped() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    for out in ["a", "b"] {
        let o = pprm(
            dir.path(),
            &["--config", "c.toml", "simulate", "--output-dir", out],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["stream.jsonl", "source.jsonl"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let text = fs::read_to_string(dir.path().join("a/stream.jsonl")).unwrap();
    let batches = read_stream(text.as_bytes()).unwrap();
    assert_eq!(batches.len(), 100);
    assert!(batches
        .iter()
        .all(|b| b.labeled.len() == 1 && b.unlabeled_synth.len() == 15));

    // a different seed changes the stream
    let o = pprm(
        dir.path(),
        &[
            "--config",
            "c.toml",
            "--seed",
            "99",
            "simulate",
            "--output-dir",
            "c",
        ],
    );
    assert!(o.status.success());
    assert_ne!(
        text,
        fs::read_to_string(dir.path().join("c/stream.jsonl")).unwrap()
    );
}

#[test]
fn perfect_agreement_copies_labels() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        &SMALL.replace("[scenario]\n", "[scenario]\nagreement = 1.0\n"),
    );
    let o = pprm(
        dir.path(),
        &["--config", "c.toml", "simulate", "--output-dir", "out"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/stream.jsonl")).unwrap();
    for b in read_stream(text.as_bytes()).unwrap() {
        assert!(b.labeled.iter().all(|p| p.true_loss == p.synth_loss));
    }
}

#[test]
fn horizon_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let o = pprm(
        dir.path(),
        &[
            "--config",
            "c.toml",
            "--horizon",
            "7",
            "simulate",
            "--output-dir",
            "o",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/stream.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 7);
}

fn monitor_alarm_fixture(dir: &Path) {
    // source bound 0.2, then a stream of all-ones losses
    fs::write(
        dir.join("calib.json"),
        "{\"method\":\"hoeffding_labeled_only\",\"estimate\":0.1,\"upper_bound\":0.2,\"n0\":100,\"N0\":0,\"eta0\":0.0}",
    )
    .unwrap();
    let stream: String = (1..=60)
        .map(|t| format!("{{\"t\":{t},\"labeled\":[{{\"true\":1.0,\"synth\":1.0}}],\"unlabeled\":[1.0,1.0]}}\n"))
        .collect();
    fs::write(dir.join("stream.jsonl"), stream).unwrap();
}

#[test]
fn monitor_exit_status_and_latching() {
    let dir = tempfile::tempdir().unwrap();
    monitor_alarm_fixture(dir.path());
    for method in ["srm", "pprm-fixed", "pprm-adaptive"] {
        let o = pprm(
            dir.path(),
            &[
                "monitor",
                "stream.jsonl",
                "--calibration",
                "calib.json",
                "--method",
                method,
                "-o",
                "trace.csv",
            ],
        );
        assert_eq!(o.status.code(), Some(3), "{method}: {}", stderr(&o));
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let k = summary["alarm_time"].as_u64().unwrap();
        let rows = trace_csv::read_trace(
            fs::read_to_string(dir.path().join("trace.csv"))
                .unwrap()
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(rows.len(), 60);
        for r in &rows {
            assert_eq!(r.alarm, r.t >= k, "{method} row {}", r.t);
        }
    }
}

#[test]
fn monitor_censored_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    monitor_alarm_fixture(dir.path());
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = pprm(
        dir.path(),
        &["monitor", "empty.jsonl", "--calibration", "calib.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        String::from_utf8_lossy(&o.stdout),
        format!("{}\n", trace_csv::HEADER)
    );
    assert!(stderr(&o).contains("\"censored\":true"));
}

#[test]
fn monitor_rejects_t_regression() {
    let dir = tempfile::tempdir().unwrap();
    monitor_alarm_fixture(dir.path());
    let text = "{\"t\":1,\"labeled\":[{\"true\":0.1,\"synth\":0.1}],\"unlabeled\":[]}\n\
                {\"t\":1,\"labeled\":[{\"true\":0.1,\"synth\":0.1}],\"unlabeled\":[]}\n";
    write(dir.path(), "bad.jsonl", text);
    let o = pprm(
        dir.path(),
        &[
            "monitor",
            "bad.jsonl",
            "--calibration",
            "calib.json",
            "-o",
            "t.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("out-of-order"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[monitor]\ndelta_tt = 0.1\n");
    let o = pprm(dir.path(), &["--config", "c.toml", "experiment"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delta_tt"), "{}", stderr(&o));
}

#[test]
fn experiment_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let a = pprm(dir.path(), &["--config", "c.toml", "experiment"]);
    let b = pprm(dir.path(), &["--config", "c.toml", "experiment"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let o = pprm(
        dir.path(),
        &["--config", "c.toml", "experiment", "--output-dir", "exp"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read(dir.path().join("exp/summary.json")).unwrap();
    assert_eq!(summary, a.stdout);
    assert!(dir
        .path()
        .join("exp/traces/rep1_pprm_adaptive.csv")
        .exists());
}

#[test]
fn example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("config.example.toml");
    let o = pprm(
        Path::new(env!("CARGO_MANIFEST_DIR")),
        &["--config", path.to_str().unwrap(), "show-config"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}
