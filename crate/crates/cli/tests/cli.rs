use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_floquet-holonomy"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fh-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn builtin_run_writes_report_and_traces() {
    let dir = scratch("builtin");
    let out = bin()
        .args(["run", "--builtin", "spin1-precessing", "--format", "both", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let subspaces = report["subspaces"].as_array().unwrap();
    let mixed: Vec<_> = subspaces.iter().filter(|s| s["multiplicity"] == 2).collect();
    assert_eq!(mixed.len(), 2);
    for s in mixed {
        let mut phases: Vec<f64> = s["holonomy_phases"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
        phases.sort_by(f64::total_cmp);
        assert!(phases[0].abs() < 1e-6);
        assert!((phases[1] - 0.8 * std::f64::consts::PI).abs() < 1e-6);
    }
    for f in ["propagator.csv", "floquet_z.csv"] {
        let text = fs::read_to_string(dir.join(f)).unwrap();
        assert!(text.starts_with("k,t,"));
        assert_eq!(text.lines().count(), 514);
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn reports_are_byte_stable_apart_from_timings() {
    let (a, b) = (scratch("stable-a"), scratch("stable-b"));
    for dir in [&a, &b] {
        let out = bin().args(["run", "--builtin", "spin1-precessing", "--steps", "128", "--out"]).arg(dir).output().unwrap();
        assert_eq!(code(&out), 1, "N = 128 misses the tight bounds");
    }
    let strip = |dir: &PathBuf| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v.to_string()
    };
    assert_eq!(strip(&a), strip(&b));
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn unnormalized_frame_exits_2() {
    let dir = scratch("norm");
    let cfg = write_config(
        &dir,
        r#"{"model": {"precessing": {"omega": 0.4, "big_omega": 1.0}},
            "invariant": {"spectral": [{"lambda": 1, "basis": [0, 1]}, {"lambda": -1, "basis": [2]}]},
            "frame": {"xi": [0.8, 0], "zeta": [0.8, 0]}}"#,
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("|xi|^2 + |zeta|^2"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn resonant_drive_exits_3_with_error_report() {
    let dir = scratch("resonant");
    let cfg = write_config(&dir, r#"{"model": {"precessing": {"omega": 0.5, "big_omega": 1.0}}}"#);
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(code(&out), 3);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["error"]["exit_code"], 3);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn vanishing_field_exits_4() {
    let dir = scratch("crossing");
    let cfg = write_config(
        &dir,
        r#"{"model": {"custom_field": {"j": 1, "period": 6.283185307179586,
            "path": {"harmonic": {"cos": [[1, 0, 0]]}}}}}"#,
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(code(&out), 4);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_flags_exit_2() {
    let out = bin().args(["run", "--builtin", "spin1-precessing", "--steps", "100", "--out"]).arg(scratch("flags")).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().args(["run", "--builtin", "spin1-precessing", "--order", "3"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().args(["run", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn show_prints_loadable_config() {
    let out = bin().args(["show", "spin1-precessing"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let dir = scratch("show");
    let cfg = write_config(&dir, &String::from_utf8(out.stdout).unwrap());
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--steps", "512", "--gauge", "aligned", "--order", "4", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["subspaces"].as_array().unwrap().iter().all(|s| s["gauge"] == "aligned"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn check_passes_and_sign_flip_fails() {
    let out = bin().arg("check").output().unwrap();
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{table}");
    assert!(table.contains("12/12 criteria passed"));

    let out = bin().args(["check", "--invert-transport-sign"]).output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn thread_cap_is_honoured() {
    let dir = scratch("threads");
    let out = bin()
        .env("FLOQUET_HOLONOMY_THREADS", "1")
        .args(["run", "--builtin", "spin1-precessing", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let out = bin().env("FLOQUET_HOLONOMY_THREADS", "many").args(["check"]).output().unwrap();
    assert_eq!(code(&out), 2);
    fs::remove_dir_all(&dir).unwrap();
}
