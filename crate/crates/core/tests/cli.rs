//! The `wco` binary: exit codes, output contents and determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use wco_centered::tree::TreeSpec;

fn wco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wco"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn tmp(name: &str, contents: &str) -> PathBuf {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn status_of<'a>(report: &'a Value, tag: &str) -> &'a str {
    report["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["tag"] == tag)
        .and_then(|c| c["status"].as_str())
        .unwrap_or("missing")
}

#[test]
fn binary_check_is_centered() {
    let out = wco(&["check", "--builtin", "binary", "--depth", "8", "--n-max", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["verdict"], "CENTERED");
    for c in r["conditions"].as_array().unwrap() {
        assert_eq!(c["status"], "PASS", "{c}");
    }
    assert_eq!(r["window"]["base"], "c0");
    assert!(r["oracle"]["max_commutator"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn blackblack_check_fails_with_pair() {
    let out = wco(&["check", "--builtin", "blackblack", "--n-max", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json(&out);
    assert_eq!(status_of(&r, "weak"), "PASS");
    assert_eq!(status_of(&r, "D"), "FAIL");
    let g = r["conditions"].as_array().unwrap().iter().find(|c| c["tag"] == "generation").unwrap();
    assert_eq!(g["witness"]["point"], "(2,1)");
    assert_eq!(g["witness"]["other"], "(2,2)");
}

#[test]
fn exit_codes_for_every_builtin() {
    let expected = [
        ("binary", 0),
        ("y_tree", 0),
        ("z_minus", 0),
        ("blackblack", 1),
        ("zplus_path", 0),
        ("rooted_full_binary_d3", 0),
        ("halfline", 64),
        ("linear_gauss", 64),
    ];
    for (name, code) in expected {
        let out = wco(&["check", "--builtin", name, "--depth", "6", "--no-oracle"]);
        assert_eq!(out.status.code(), Some(code), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["halfline", "linear_gauss"] {
        let out = wco(&["continuous", "--builtin", name]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn usage_and_parse_errors() {
    assert_eq!(wco(&["examples", "nosuch"]).status.code(), Some(64));
    assert_eq!(wco(&["check"]).status.code(), Some(64));
    assert_eq!(wco(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(wco(&["check", "--builtin", "binary", "--depth", "4"]).status.code(), Some(64));
    assert_eq!(wco(&["check", "--builtin", "binary", "--base", "nowhere"]).status.code(), Some(64));
    assert_eq!(wco(&["--help"]).status.code(), Some(0));

    let cycle = tmp("cycle.tree", "vertex a\nvertex b\nvertex c\nedge a b 1\nedge b c 1\nedge c a 1\n");
    let out = wco(&["check", "--input", cycle.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(65));
    assert!(!out.stderr.is_empty());
    let garbage = tmp("garbage.tree", "vertex a\nedge a\n");
    assert_eq!(wco(&["check", "--input", garbage.to_str().unwrap()]).status.code(), Some(65));
    let missing = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("absent.tree");
    assert_eq!(wco(&["check", "--input", missing.to_str().unwrap()]).status.code(), Some(65));
}

#[test]
fn examples_write_parsable_instances() {
    let out = wco(&["examples", "z_minus", "--depth", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let spec = TreeSpec::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(spec.vertices.len(), 7);
    assert!(spec.edges.iter().all(|e| e.re == 1.0 && e.im == 0.0));

    let out = wco(&["examples", "blackblack", "--depth", "6"]);
    let spec = TreeSpec::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let kids = |p: &str| -> Vec<&str> {
        spec.edges.iter().filter(|e| e.parent == p).map(|e| e.child.as_str()).collect()
    };
    assert_eq!(kids("0"), ["(1,1)", "(1,2)"]);
    assert_eq!(kids("(1,1)"), ["(2,1)"]);
    assert_eq!(kids("(1,2)"), ["(2,2)"]);
    assert_eq!(kids("(2,2)"), ["(3,2)", "(3,3)"]);

    // A written window checks like any other input: the top becomes a root.
    let out = wco(&["examples", "binary", "--depth", "5"]);
    let path = tmp("binary5.tree", &String::from_utf8(out.stdout).unwrap());
    let out = wco(&["check", "--input", path.to_str().unwrap(), "--classify"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["classification"]["label"], "III");

    let out = wco(&["examples", "halfline"]);
    let path = tmp("halfline.cfg", &String::from_utf8(out.stdout).unwrap());
    assert_eq!(wco(&["continuous", "--input", path.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn classify_builtins() {
    let label = |args: &[&str]| -> String {
        let out = wco(args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        json(&out)["classification"]["label"].as_str().unwrap().to_owned()
    };
    assert_eq!(label(&["classify", "--builtin", "z_minus"]), "II");
    assert_eq!(label(&["classify", "--builtin", "binary"]), "I");
    let out = wco(&["classify", "--builtin", "y_tree", "--depth", "10"]);
    let v = json(&out);
    assert_eq!(v["classification"]["label"], "I_plus_IV");
    let witness = v["classification"]["evidence"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["criterion"] == "iv_witness")
        .unwrap();
    assert!(witness["data"]["residual"].as_f64().unwrap() <= 1e-10);

    let out = wco(&["classify", "--builtin", "blackblack", "--depth", "6"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn continuous_linear_flags() {
    let out = wco(&["continuous", "--kappa", "1", "--rho", "poly:0,1", "--matrix", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["results"]["quadrature_residual"].as_f64().unwrap() <= 1e-6);
    for s in v["results"]["h_samples"].as_array().unwrap() {
        assert!((s["h"].as_f64().unwrap() - 0.125).abs() <= 1e-12);
    }
    // Singular maps are rejected as usage errors.
    assert_eq!(wco(&["continuous", "--kappa", "1", "--matrix", "0"]).status.code(), Some(64));
}

#[test]
fn reports_are_deterministic() {
    let args = ["check", "--builtin", "y_tree", "--depth", "10", "--classify"];
    let a = wco(&args);
    let b = wco(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    // Floats carry 17 significant digits.
    assert!(text.contains("e0"), "{text}");
    let table = wco(&["check", "--builtin", "binary", "--format", "table", "--depth", "6"]);
    assert!(String::from_utf8(table.stdout).unwrap().contains("verdict: CENTERED"));
}
