//! End-to-end tests of the binary: fixture ingestion, report values, exit
//! codes, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privmac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_json(args: &[&str]) -> (i32, serde_json::Value) {
    let out = run(args);
    let code = out.status.code().unwrap_or(-1);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad JSON from {args:?}: {e}\n{}",
            String::from_utf8_lossy(&out.stdout)
        )
    });
    (code, v)
}

fn tmp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("privmac-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn entropy_bell_fixture() {
    let (code, v) = run_json(&["entropy", "--spec", &fixture("bell_state.json")]);
    assert_eq!(code, 0);
    let report = v["report"].as_array().unwrap();
    let value_of = |q: &str| -> f64 {
        report
            .iter()
            .find(|r| r["quantity"] == q)
            .unwrap_or_else(|| panic!("missing {q}"))["value"]
            .as_f64()
            .unwrap()
    };
    assert!((value_of("conditional") + 1.0).abs() < 1e-9);
    assert!((value_of("mutual") - 2.0).abs() < 1e-9);
    assert!((value_of("coherent") - 1.0).abs() < 1e-9);
}

#[test]
fn entropy_product_fixture_has_zero_mutual_information() {
    let (code, v) = run_json(&["entropy", "--spec", &fixture("product_state.json")]);
    assert_eq!(code, 0);
    let report = v["report"].as_array().unwrap();
    let mutual = report.iter().find(|r| r["quantity"] == "mutual").unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!(mutual.abs() < 1e-9);
}

#[test]
fn entropy_cq_fixture_triple() {
    let (code, v) = run_json(&["entropy", "--spec", &fixture("cq_pointer.json")]);
    assert_eq!(code, 0);
    let report = v["report"].as_array().unwrap();
    let value_of = |q: &str| -> f64 {
        report.iter().find(|r| r["quantity"] == q).unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    assert!(value_of("h_min").abs() < 1e-9);
    assert!(value_of("h2").abs() < 1e-9);
    assert!((value_of("h_max") - 1.0).abs() < 1e-9);
    assert!(value_of("h2") >= value_of("h_min") - 1e-8);
}

#[test]
fn region_noiseless_pentagon() {
    let (code, v) = run_json(&["region", "--spec", &fixture("noiseless_mac.json")]);
    assert_eq!(code, 0);
    let bounds: Vec<f64> = v["report"]["bounds_clipped"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    for (got, expect) in bounds.iter().zip(&[0.0, 1.0, 1.0, 2.0]) {
        assert!((got - expect).abs() < 1e-9);
    }
    let vertices = v["report"]["vertices"].as_array().unwrap();
    assert!(vertices.iter().any(|c| {
        let x = c[0].as_f64().unwrap();
        let y = c[1].as_f64().unwrap();
        (x - 1.0).abs() < 1e-9 && (y - 1.0).abs() < 1e-9
    }));
    assert!(v["report"]["polygon"].as_array().unwrap().len() >= 4);
}

#[test]
fn region_trivial_bob_is_zero() {
    let (code, v) = run_json(&["region", "--spec", &fixture("b_trivial.json")]);
    assert_eq!(code, 0);
    for b in v["report"]["bounds_clipped"].as_array().unwrap() {
        assert_eq!(b.as_f64().unwrap(), 0.0);
    }
}

#[test]
fn aep_uniform_fixture_keeps_all_mass() {
    let (code, v) = run_json(&[
        "aep",
        "--pmf",
        &fixture("pmf_uniform.json"),
        "--n",
        "3",
        "--epsilon",
        "0.25",
    ]);
    assert_eq!(code, 0);
    assert!(v["report"]["v_distance"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["report"]["pass"], true);
}

#[test]
fn simulate_noiseless_cq_fixture_is_perfect() {
    let (code, v) = run_json(&[
        "simulate",
        "--spec",
        &fixture("noiseless_cq.json"),
        "--n",
        "4",
        "--hash-bits",
        "2",
        "--bin-bits",
        "0",
        "--seed",
        "7",
    ]);
    assert_eq!(code, 0);
    assert!(v["report"]["max_error"].as_f64().unwrap() < 1e-10);
    assert!(v["report"]["max_leakage"].as_f64().unwrap() < 1e-10);
}

#[test]
fn degradable_exit_codes() {
    let ok = run(&["degradable", "--spec", &fixture("degraded_eve_kraus.json")]);
    assert_eq!(ok.status.code(), Some(0));
    let no = run(&["degradable", "--spec", &fixture("b_trivial.json")]);
    assert_eq!(no.status.code(), Some(1));
}

#[test]
fn hashlemma_suite_passes() {
    let (code, v) = run_json(&["hashlemma", "--count", "8", "--seed", "4"]);
    assert_eq!(code, 0);
    assert_eq!(v["report"]["violations"], 0);
}

#[test]
fn cross_command_region_sum_matches_optimizer() {
    // The fixture's uniform ensemble attains the optimum by symmetry, so the
    // region sum bound and the maximized p objective agree.
    let (code, region) = run_json(&["region", "--spec", &fixture("degraded_eve_kraus.json")]);
    assert_eq!(code, 0);
    let sum_bound = region["report"]["bounds_clipped"].as_array().unwrap()[1]
        .as_f64()
        .unwrap();
    let (code, opt) = run_json(&[
        "optimize",
        "--spec",
        &fixture("degraded_eve_kraus.json"),
        "--objective",
        "p",
    ]);
    assert_eq!(code, 0);
    let value = opt["report"]["value"].as_f64().unwrap();
    assert!(
        (value - sum_bound).abs() < 2e-3,
        "optimizer {value} vs region sum bound {sum_bound}"
    );
}

#[test]
fn reports_are_byte_identical_for_same_seed() {
    let a = tmp_path("det_a.json");
    let b = tmp_path("det_b.json");
    for path in [&a, &b] {
        let out = run(&[
            "hashlemma",
            "--count",
            "4",
            "--seed",
            "11",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(
        bytes_a, bytes_b,
        "same seed must reproduce byte-identical reports"
    );

    // Different worker counts must not change anything either.
    let c = tmp_path("det_c.json");
    let out = Command::new(env!("CARGO_BIN_EXE_privmac"))
        .env("RAYON_NUM_THREADS", "1")
        .args([
            "hashlemma",
            "--count",
            "4",
            "--seed",
            "11",
            "--out",
            c.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(bytes_a, std::fs::read(&c).unwrap());
}

#[test]
fn csv_format_embeds_manifest() {
    let path = tmp_path("region.csv");
    let out = run(&[
        "region",
        "--spec",
        &fixture("noiseless_mac.json"),
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# tool=privmac"));
    assert!(text.contains("input="));
    assert!(text.contains("bound,3,2"));
}

#[test]
fn parse_errors_exit_nonzero() {
    let bad = tmp_path("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run(&["region", "--spec", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
}

#[test]
fn depolarizing_fixture_loads_and_reports() {
    let (code, v) = run_json(&["region", "--spec", &fixture("depolarizing_mac.json")]);
    assert_eq!(code, 0);
    // Heavy depolarizing noise with a large environment: everything clips
    // to zero at classical inputs.
    let bounds = v["report"]["bounds_clipped"].as_array().unwrap();
    for b in bounds {
        assert!(b.as_f64().unwrap() >= 0.0);
    }
}
