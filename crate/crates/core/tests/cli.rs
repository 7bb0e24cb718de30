use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use gffdisc::gff::rates::{rate_function, RateVariant};
use gffdisc::potential::equilibrium::{brownian_capacity_cube, cube_capacity};

fn gffdisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gffdisc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json_rows(o: &Output) -> Vec<Value> {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice::<Value>(&o.stdout).unwrap().as_array().unwrap().clone()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = gffdisc(&["percolate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn invalid_config_lists_every_violation() {
    let o = gffdisc(&["disconnect", "--N", "0", "--M", "0.5", "--n-mc", "0", "--d", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let listed = stderr(&o).lines().filter(|l| l.trim_start().starts_with("- ")).count();
    assert!(listed >= 4, "{}", stderr(&o));
}

#[test]
fn rows_do_not_depend_on_the_thread_count() {
    let base = ["disconnect", "--N", "1", "--alpha", "-1,0,1", "--n-mc", "300", "--seed", "7"];
    let one = gffdisc(&[&base[..], &["--threads", "1"]].concat());
    let three = gffdisc(&[&base[..], &["--threads", "3"]].concat());
    assert!(one.status.success() && three.status.success());
    assert_eq!(one.stdout, three.stdout);
    let header = stdout(&one).lines().next().unwrap().to_string();
    for key in ["n", "stderr", "seed"] {
        assert!(header.split(',').any(|k| k == key), "{header}");
    }
}

#[test]
fn disconnection_column_is_monotone_in_the_level() {
    let rows = json_rows(&gffdisc(&[
        "disconnect", "--N", "2", "--alpha", "-1,0,0.5,1,2", "--n-mc", "200", "--format", "json",
    ]));
    let p: Vec<f64> = rows.iter().map(|r| r["p_disconnect"].as_f64().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
}

#[test]
fn output_directory_gets_all_files_and_nothing_else() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gffdisc(&["sample", "--window", "2", "--n-mc", "20", "--out", out.to_str().unwrap(), "--format", "both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["sample.csv", "sample.field", "sample.json", "sample.provenance.json"]);
    let prov = read_json(&out.join("sample.provenance.json"));
    assert_eq!(prov["experiment"], "sample");
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 64);
    assert!(prov["gffdisc_version"].is_string());
    let csv = std::fs::read_to_string(out.join("sample.csv")).unwrap();
    assert!(!csv.contains("wall_time"));
}

#[test]
fn failed_write_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("taken");
    std::fs::write(&blocker, "x").unwrap();
    let o = gffdisc(&["cap", "--box", "1", "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cap.json");
    std::fs::write(&cfg, r#"{"boxes": [1, 2], "seed": 11, "n_mc": 50}"#).unwrap();
    let out = dir.path().join("out");
    let o = gffdisc(&["cap", "--config", cfg.to_str().unwrap(), "--box", "3", "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_json(&out.join("cap.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["box"], 3);
    assert_eq!(rows[0]["seed"], 11);
    let prov = read_json(&out.join("cap.provenance.json"));
    assert_eq!(prov["config"]["n_mc"], 50);
}

#[test]
fn provenance_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let o = gffdisc(&["interlace", "--mode", "vacancy", "--u", "0.5", "--n-mc", "500", "--seed", "5", "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let prov = read_json(&first.join("interlace.provenance.json"));
    let cfg = dir.path().join("replay.json");
    std::fs::write(&cfg, serde_json::to_string(&prov["config"]).unwrap()).unwrap();
    let second = dir.path().join("b");
    let o = gffdisc(&["interlace", "--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = read_json(&second.join("interlace.provenance.json"));
    assert_eq!(prov["config_hash"], again["config_hash"]);
    assert_eq!(
        std::fs::read(first.join("interlace.csv")).unwrap(),
        std::fs::read(second.join("interlace.csv")).unwrap()
    );
}

#[test]
fn config_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"experiment": "srw", "bogus_key": 1}"#).unwrap();
    let o = gffdisc(&["cap", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cap_matches_the_library() {
    let rows = json_rows(&gffdisc(&["cap", "--box", "4", "--format", "json"]));
    let cap = rows[0]["cap"].as_f64().unwrap();
    assert_eq!(cap, cube_capacity(3, 4).unwrap());
    assert_eq!(rows[0]["n"], 0);
    assert_eq!(rows[0]["stderr"], 0.0);
}

#[test]
fn rates_match_the_rate_function() {
    let rows = json_rows(&gffdisc(&[
        "rates", "--rate", "gff-contour", "--alpha", "-1,-0.5,0", "--cap-ns", "4,8", "--format", "json",
    ]));
    let cap_b = brownian_capacity_cube(3, &[4, 8]).unwrap().estimate;
    assert_eq!(rows.len(), 3);
    for r in rows {
        let x = r["level"].as_f64().unwrap();
        let want = rate_function(RateVariant::GffContour, x, 3, cap_b).unwrap();
        assert!((r["rate"].as_f64().unwrap() - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}
