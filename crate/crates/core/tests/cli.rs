use std::path::Path;
use std::process::{Command, Output};

use dualqte::experiments::ExperimentConfig;

fn qte(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qte"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("QTE_THREADS", t),
        None => cmd.env_remove("QTE_THREADS"),
    };
    cmd.output().expect("qte runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{ "experiment": "evolve_imag", "system": { "n": 3, "topology": "chain" },
    "ansatz": { "n_qubits": 3, "reps": 1 }, "t_final": 0.05, "shots": 64, "replicas": 2,
    "k0": 5, "k_warm": 2 }"#;

/// Every output file; the summary's echo of the output directory is blanked.
fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().to_string_lossy().into_owned();
            let mut bytes = std::fs::read(e.path()).unwrap();
            if name == "summary.json" {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v["config"]["output_path"] = serde_json::Value::Null;
                bytes = serde_json::to_vec(&v).unwrap();
            }
            (name, bytes)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn list_names_every_experiment() {
    let out = qte(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["evolve_imag", "evolve_real", "qmetts", "size_scaling", "illustrative_1q"] {
        assert!(text.contains(name), "{name} missing from list");
    }
}

#[test]
fn runs_are_byte_identical_and_thread_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "small.json", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, threads) in [(&a, None), (&b, None), (&c, Some("1"))] {
        let out = qte(&["run", &config, "--out", dir.to_str().unwrap(), "--seed", "11"], threads);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = files(&a);
    assert!(fa.iter().any(|(n, _)| n == "trajectory_r1.csv"));
    assert!(fa.iter().any(|(n, _)| n == "summary.json"));
    assert_eq!(fa, files(&b));
    assert_eq!(fa, files(&c));

    let other = tmp.path().join("d");
    qte(&["run", &config, "--out", other.to_str().unwrap(), "--seed", "12"], None);
    assert_ne!(fa, files(&other));
}

#[test]
fn summary_config_round_trips_and_overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "small.json", SMALL);
    let dir = tmp.path().join("out");
    let out =
        qte(&["run", &config, "--out", dir.to_str().unwrap(), "--seed", "3", "--repeat", "1", "--exact-shots"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    let resolved = ExperimentConfig::from_json_str(&summary["config"].to_string()).unwrap();
    assert_eq!(resolved.seed, 3);
    assert_eq!(resolved.replicas, 1);
    assert_eq!(resolved.shots, None);
    assert_eq!(resolved.system.n, 3);
    assert!(!dir.join("trajectory_r1.csv").exists());

    // The resolved config reproduces the run on its own.
    let again = tmp.path().join("again");
    let replay = write_config(tmp.path(), "replay.json", &resolved.to_json_string());
    assert!(qte(&["run", &replay, "--out", again.to_str().unwrap()], None).status.success());
    assert_eq!(
        std::fs::read(dir.join("trajectory_r0.csv")).unwrap(),
        std::fs::read(again.join("trajectory_r0.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out_dir = out_dir.to_str().unwrap();
    let cases = [
        r#"{ "experiment": "no_such_experiment" }"#,
        r#"{ "experiment": "evolve_imag", "unknown_field": 1 }"#,
        r#"{ "experiment": "evolve_imag", "dt": -0.1 }"#,
        r#"{ "experiment": "evolve_imag", "system": { "n": 4 }, "ansatz": { "n_qubits": 3 } }"#,
        "not json",
    ];
    for (i, json) in cases.iter().enumerate() {
        let config = write_config(tmp.path(), &format!("bad{i}.json"), json);
        let out = qte(&["run", &config, "--out", out_dir], None);
        assert_eq!(out.status.code(), Some(2), "case {json}");
    }
    let missing = tmp.path().join("missing.json");
    assert_eq!(qte(&["run", missing.to_str().unwrap()], None).status.code(), Some(2));
}

#[test]
fn numerical_abort_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "diverge.json",
        r#"{ "experiment": "evolve_imag", "system": { "n": 2, "topology": "chain" },
            "ansatz": { "n_qubits": 2, "reps": 1 }, "t_final": 0.02, "shots": null, "replicas": 1,
            "eta": 1e308 }"#,
    );
    let dir = tmp.path().join("out");
    let out = qte(&["run", &config, "--out", dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("summary.json").exists());
}
