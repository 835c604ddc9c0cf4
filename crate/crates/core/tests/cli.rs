use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn haagerup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haagerup"))
        .args(args)
        .env_remove("HAAGERUP_SCRATCH_DIR")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn zero_kernel_passes() {
    let dir = tempfile::tempdir().unwrap();
    let k = write(
        dir.path(),
        "k.json",
        r#"{"labels":["a","b","c"],"matrix":[[0,0,0],[0,0,0],[0,0,0]]}"#,
    );
    let out = haagerup(&["cnd-test", "--kernel", &k]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["verdict"], "CND");
    assert_eq!(r["defaults"]["cnd_tolerance"], 1e-9);
}

#[test]
fn cubic_kernel_fails_with_witness() {
    let out = haagerup(&["cnd-test", "--line-points", "0,1,2,3", "--exponent", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["result"]["verdict"], "not-CND");
    let w: Vec<f64> = serde_json::from_value(r["result"]["witness"].clone()).unwrap();
    for (a, b) in w.iter().zip([0.5, -0.5, -0.5, 0.5]) {
        assert!((a - b).abs() < 1e-9, "{w:?}");
    }
}

#[test]
fn usage_and_input_errors_exit_two() {
    let out = haagerup(&["cnd-test", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(haagerup(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        haagerup(&["cnd-test", "--kernel", "/nonexistent/k.json"]).status.code(),
        Some(2)
    );
    assert_eq!(
        haagerup(&["power", "--line-points", "0,1,2", "--alpha", "1.5"]).status.code(),
        Some(2)
    );
    let out = haagerup(&["construct", "--group", "F2"]);
    assert_eq!(out.status.code(), Some(2));
    // Targets unreachable within the box budget.
    let out = haagerup(&["construct", "--eps", "1e-6", "--n-max", "51"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best bound"));
}

#[test]
fn power_and_exp_tests() {
    let out = haagerup(&["power", "--line-points", "0,1,2,5", "--exponent", "2", "--alpha", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["cnd"]["verdict"], "CND");
    let out = haagerup(&["power", "--line-points", "0,1", "--alpha", "1", "--allow-identity"]);
    assert_eq!(out.status.code(), Some(0));
    let out = haagerup(&["exp-test", "--line-points", "0,1,2,5", "--exponent", "1", "--t", "0.1,1,10"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn frullani_csv() {
    let out = haagerup(&["frullani", "--x", "0.1,1,4,10", "--alpha", "0.25,0.5,0.75", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,alpha,c_alpha,value,exact,relative_error"));
    assert_eq!(lines.count(), 12);
}

#[test]
fn mazur_modes() {
    let dir = tempfile::tempdir().unwrap();
    let v = write(
        dir.path(),
        "v.json",
        r#"{"weights":[0.5,0.5],"values":[1.0,-1.0],"p":2.0}"#,
    );
    let out = haagerup(&["mazur", "--vector", &v, "--p-to", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["image"]["values"], serde_json::json!([1.0, -1.0]));
    let out = haagerup(&[
        "mazur", "--p-from", "2", "--p-to", "1", "--samples", "50", "--atoms", "6", "--seed", "3",
        "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("input_dist,output_dist\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn gns_reports_non_cnd_input() {
    let out = haagerup(&["gns", "--line-points", "0,1,3", "--exponent", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let out = haagerup(&["gns", "--line-points", "0,1,2,3", "--exponent", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["result"]["witness"].as_array().unwrap().len(), 4);
}

#[test]
fn escape_profiles() {
    let out = haagerup(&["escape", "--group", "F2", "--psi", "word-length", "--radius", "5", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "radius,min_psi\n0,0\n1,1\n2,2\n3,3\n4,4\n5,5\n");

    let dir = tempfile::tempdir().unwrap();
    let psi = write(
        dir.path(),
        "psi.json",
        r#"{"group":"Z","values":{"0":0,"1":1,"-1":1,"2":1,"-2":1}}"#,
    );
    let out = haagerup(&["escape", "--group", "Z", "--psi", &psi, "--radius", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let flat = write(
        dir.path(),
        "flat.json",
        r#"{"group":"Z","values":{"0":0,"1":0,"-1":0,"2":0,"-2":0}}"#,
    );
    let out = haagerup(&["escape", "--group", "Z", "--psi", &flat, "--radius", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tree_action_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.json");
    let p = path.to_str().unwrap();
    let out = haagerup(&["tree-action", "--rank", "2", "--p", "1.5", "--radius", "3", "--out", p]);
    assert_eq!(out.status.code(), Some(0));
    // Only the artifact remains; the temporary file was renamed into place.
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("tree.json")]);

    let out = haagerup(&["verify", "--action", p]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["cocycle"]["passed"], true);

    let out = haagerup(&["profile", "--action", p, "--radius", "3", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("radius,min_gauge\n1,1\n"));
    assert_eq!(haagerup(&["profile", "--action", p, "--radius", "4"]).status.code(), Some(2));

    // Breaking the cocycle makes verify fail with exit 1.
    let mut bundle: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let cocycle = bundle["blocks"][0]["cocycle"].as_object_mut().unwrap();
    let a = cocycle.get_mut("a").unwrap().as_array_mut().unwrap();
    a[0] = Value::from(a[0].as_f64().unwrap() + 0.5);
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, serde_json::to_string(&bundle).unwrap()).unwrap();
    let out = haagerup(&["verify", "--action", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn construct_certifies_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = haagerup(&[
            "construct", "--group", "Z", "--p", "1.5", "--radius", "4", "--eps", "0.1,0.05,0.02",
            "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let r: Value = serde_json::from_slice(&text).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["result"]["blocks"][0]["majority_mass"], "1/2");
    assert_eq!(r["result"]["profile"]["strictly_increasing"], true);
    assert_eq!(r["result"]["cnd"]["verdict"], "CND");
}

#[test]
fn construct_flat_profile_fails() {
    let out = haagerup(&["construct", "--radius", "3", "--sides", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    let checks = r["result"]["checks"].as_array().unwrap();
    let prof = checks.iter().find(|c| c["name"] == "properness_profile").unwrap();
    assert_eq!(prof["passed"], false);
    assert!(prof["detail"].as_str().unwrap().contains("flat profile"));
}

#[test]
fn suite_writes_to_scratch_dir_and_catches_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_haagerup"))
        .arg("suite")
        .env("HAAGERUP_SCRATCH_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r: Value = serde_json::from_slice(&std::fs::read(dir.path().join("suite_report.json")).unwrap()).unwrap();
    assert_eq!(r["criteria"].as_array().unwrap().len(), 10);
    assert_eq!(r["config"]["seed"], 20_240_601);
    assert_eq!(r["config"]["tolerances"]["mazur_transfer"], 1e-12);
    assert!(dir.path().join("suite_timings.json").exists());

    let mutated = tempfile::tempdir().unwrap();
    let out = haagerup(&[
        "suite", "--inject-mazur-sign-flip", "--out-dir", mutated.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value =
        serde_json::from_slice(&std::fs::read(mutated.path().join("suite_report.json")).unwrap()).unwrap();
    let failed: Vec<u64> = r["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["id"].as_u64().unwrap())
        .collect();
    assert_eq!(failed, vec![5]);
}
