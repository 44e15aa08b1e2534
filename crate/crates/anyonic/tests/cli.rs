use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn anyonic(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anyonic"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: [&str; 6] = ["--L", "8", "--n-states", "6", "--sizes", "6,8,10"];

#[test]
fn verify_writes_consistency_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = anyonic(&["verify", "--model", "yang-lee"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.path().join("consistency.json"));
    assert_eq!(doc["passed"], Value::Bool(true));
    let checks: Vec<&str> = doc["checks"].as_array().unwrap().iter().map(|c| c["check"].as_str().unwrap()).collect();
    for name in ["pentagon", "involution", "hexagon"] {
        assert!(checks.iter().any(|c| c.contains(name)), "{checks:?}");
    }
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "verify");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.ends_with("consistency.json")));
}

#[test]
fn non_modular_full_category_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = anyonic(&["verify", "--model", "su2k", "--k", "5", "--p", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not modular"));
}

#[test]
fn tubes_lists_five_idempotents() {
    let dir = tempfile::tempdir().unwrap();
    let out = anyonic(&["tubes"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.path().join("idempotents.json"));
    assert_eq!(doc["tubes"].as_array().unwrap().len(), 7);
    let idems = doc["idempotents"].as_array().unwrap();
    assert_eq!(idems.len(), 5);
    assert_eq!(doc["seed"], "0x5eed");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model": "yang-lee", "L": 6, "n-states": 4, "sizes": [6, 8, 10], "flux": "tau", "format": "json"}"#).unwrap();
    let out = anyonic(&["spectrum", "--config", cfg.to_str().unwrap(), "--L", "8"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["settings"]["L"], 8);
    assert_eq!(manifest["settings"]["n_states"], 4);
    let spec = json(&dir.path().join("spectrum.json"));
    assert_eq!(spec["L"], 8);
    assert_eq!(spec["flux"], "τ");
    assert!(!dir.path().join("spectrum.csv").exists());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"modle": "yang-lee"}"#).unwrap();
    let out = anyonic(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = anyonic(&["spectrum", "--L", "7"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = anyonic(&["verify", "--model", "su2k", "--k", "4", "--p", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = anyonic(&["verify", "--seed", "xyz"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_is_identical_across_thread_counts() {
    let runs: Vec<String> = ["1", "3", "8"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let out = Command::new(env!("CARGO_BIN_EXE_anyonic"))
                .env("RAYON_NUM_THREADS", threads)
                .args(["spectrum", "--flux", "tau"])
                .args(SMALL)
                .arg("--out")
                .arg(dir.path())
                .output()
                .unwrap();
            assert_eq!(out.status.code(), Some(0));
            std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn su2k_level_three_matches_yang_lee_at_printed_precision() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = vec!["spectrum", "--flux", "tau"];
    args.extend(SMALL);
    let ya = anyonic(&[&args[..], &["--model", "yang-lee"]].concat(), a.path());
    let yb = anyonic(&[&args[..], &["--model", "su2k", "--k", "3", "--p", "2"]].concat(), b.path());
    assert_eq!(ya.status.code(), Some(0));
    assert_eq!(yb.status.code(), Some(0), "{}", String::from_utf8_lossy(&yb.stderr));
    let rows = |dir: &Path| -> Vec<csv::StringRecord> {
        let mut rd = csv::Reader::from_path(dir.join("spectrum.csv")).unwrap();
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>().join(","), anyonic::spectra::CSV_HEADER);
        rd.records().map(Result::unwrap).collect()
    };
    let (ra, rb) = (rows(a.path()), rows(b.path()));
    assert_eq!(ra.len(), rb.len());
    for (fa, fb) in ra.iter().zip(&rb) {
        // index, Δ, spin, sector, weight and flag are printed to 6 decimals and must agree
        for i in [0, 1, 2, 3, 4, 7] {
            assert_eq!(fa[i], fb[i]);
        }
        let re = |f: &csv::StringRecord| f[5].parse::<f64>().unwrap();
        assert!((re(fa) - re(fb)).abs() < 1e-9 * re(fa).abs());
    }
}

#[test]
fn default_run_emits_the_whole_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model": "yang-lee", "L": 12, "flux": "1"}"#).unwrap();
    let out = anyonic(&["spectrum", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rd = csv::Reader::from_path(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(rd.into_records().count(), 322);
}

#[test]
fn restrict_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model": "su2k", "k": 3, "p": 2, "restrict": "integer"}"#).unwrap();
    let out = anyonic(&["tubes", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(&cfg, r#"{"model": "su2k", "k": 3, "p": 2, "restrict": "none"}"#).unwrap();
    let out = anyonic(&["tubes", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
