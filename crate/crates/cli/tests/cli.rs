use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn laguerre(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laguerre"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn write_model(dir: &Path, json: &str) -> String {
    let path = dir.join("model.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn generate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let model = write_model(tmp.path(), r#"{"family":"power","beta":5,"interval":{"kind":"right_half_line","a":0}}"#);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = laguerre(dir, &["generate", "--model", &model, "--seed", "9"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["sites.jsonl", "dual.json", "diagram.json", "tessellation.svg", "generate.json"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty(), "{name} is empty");
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let svg = fs::read_to_string(a.join("tessellation.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polygon"));
}

#[test]
fn one_dimensional_generate_writes_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let out = laguerre(tmp.path(), &["generate", "--d", "1"]);
    assert!(out.status.success());
    let dump: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("intervals.json")).unwrap()).unwrap();
    assert!(!dump["intervals"].as_array().unwrap().is_empty());
}

#[test]
fn bounded_custom_model_generates() {
    let tmp = tempfile::tempdir().unwrap();
    let model = write_model(
        tmp.path(),
        r#"{"family":"custom","name":"box","params":{"lo":0,"hi":1},"interval":{"kind":"right_half_line","a":0}}"#,
    );
    let out = laguerre(tmp.path(), &["generate", "--model", &model]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn moments_battery_passes_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    let out = laguerre(tmp.path(), &["verify", "--battery", "moments", "--replicates", "200"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Moments: PASS"), "{stdout}");
    let csv = fs::read_to_string(tmp.path().join("moments.csv")).unwrap();
    assert!(csv.starts_with("label,estimate,std_error,target,z_score,n_samples,method,pass"));
}

#[test]
fn failing_model_still_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let model = write_model(tmp.path(), r#"{"family":"negpower","beta":1.5,"scale":1,"interval":{"kind":"left_open_half_line","b":0}}"#);
    let out = laguerre(tmp.path(), &["verify", "--battery", "admissible", "--model", &model]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Admissible: FAIL"));
}

#[test]
fn inadmissible_model_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let model = write_model(tmp.path(), r#"{"family":"negpower","beta":1.55,"interval":{"kind":"left_open_half_line","b":0}}"#);
    for cmd in ["generate", "section"] {
        let out = laguerre(tmp.path(), &[cmd, "--model", &model]);
        assert_eq!(out.status.code(), Some(1), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("not admissible"));
    }
}

#[test]
fn section_writes_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let out = laguerre(tmp.path(), &["section", "--seed", "3"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("section_lengths.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("section,")));
    assert!(csv.lines().any(|l| l.starts_with("direct,")));
    assert!(tmp.path().join("section.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"gamma":1,"x":2}"#).unwrap();
    let config = config.to_string_lossy().into_owned();
    let cases: [&[&str]; 5] = [
        &["generate", "--window=0,0,0,1"],
        &["verify", "--battery", "nonsense"],
        &["verify"],
        &["generate", "--config", &config],
        &["explode"],
    ];
    for args in cases {
        let out = laguerre(tmp.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn empty_harvest_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = laguerre(tmp.path(), &["verify", "--battery", "moments", "--window=-1e-4,-1e-4,1e-4,1e-4", "--replicates", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no cells included"));
}
