use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn friable(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_friable"))
        .args(args)
        .output()
        .expect("run friable")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(name)
}

fn json(o: &Output) -> Value {
    serde_json::from_str(stdout(o).trim()).unwrap()
}

#[test]
fn alpha_closed_form() {
    let o = friable(&["alpha", "--x", "256", "--y", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("alpha 0.16992500144"));
    let o = friable(&["alpha", "--x", "2^8", "--y", "2", "--json"]);
    let v = json(&o);
    let expected = (9f64 / 8.0).log2();
    assert!((v["alpha"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!((v["w_2"].as_f64().unwrap() - (9f64 / 8.0).powi(-8)).abs() < 1e-12);
}

#[test]
fn alpha_json_dim_one() {
    let v = json(&friable(&["alpha", "--x", "3", "--y", "2", "--json"]));
    let w = 1.0 / (1.0 + 2f64.ln() / 3f64.ln());
    assert!((v["w_2"].as_f64().unwrap() - w).abs() < 1e-12);
    assert!((v["g_2"].as_f64().unwrap() - (1.0 - w)).abs() < 1e-12);
    assert!((v["alpha"].as_f64().unwrap() - 0.705_694).abs() < 1e-6);
    assert_eq!(v["h"], 1);
    assert_eq!(v["ubar"].as_f64(), Some(1.0));
    assert_eq!(v["bounds_ok"], true);
    assert!(v.as_object().unwrap().values().all(|f| !f.is_object() && !f.is_array()));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(friable(&["alpha", "--x", "2", "--y", "3"]).status.code(), Some(2));
    assert_eq!(friable(&["alpha", "--x", "abc", "--y", "3"]).status.code(), Some(2));
    assert_eq!(friable(&["alpha", "--x", "100", "--y", "3", "--tol", "1e-3"]).status.code(), Some(2));
    assert_eq!(friable(&["constant", "--x", "100", "--y", "3", "--variant", "odd"]).status.code(), Some(2));
    assert_eq!(friable(&["verify", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(friable(&["study", "--grid", "(10,3", "--no-timing"]).status.code(), Some(2));
    assert_eq!(friable(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn memo_cap_from_environment() {
    let run = |cap: &str| {
        Command::new(env!("CARGO_BIN_EXE_friable"))
            .args(["constant", "--x", "1e5", "--y", "13"])
            .env("FRIABLE_TK_MEMO_CAP", cap)
            .output()
            .unwrap()
    };
    assert_eq!(run("10").status.code(), Some(1));
    assert_eq!(run("1e8").status.code(), Some(0));
    assert_eq!(run("lots").status.code(), Some(2));
}

#[test]
fn constants_dim_one() {
    let b = json(&friable(&["constant", "--x", "3", "--y", "2", "--variant", "biased", "--json"]));
    let u = json(&friable(&["constant", "--x", "3", "--y", "2", "--variant", "unbiased", "--json"]));
    assert!((b["C"].as_f64().unwrap() - 1.76333).abs() < 1e-4);
    assert!((u["C"].as_f64().unwrap() - 1.10795).abs() < 1e-4);
    assert_eq!(b["dim"], 1);
}

#[test]
fn paths_give_same_constant() {
    for variant in ["biased", "unbiased"] {
        let c = |path: &str| {
            json(&friable(&["constant", "--x", "1e4", "--y", "7", "--variant", variant, "--path", path, "--json"]))["C"]
                .as_f64()
                .unwrap()
        };
        let (a, b) = (c("enumeration"), c("counting"));
        assert!((a - b).abs() <= 1e-9 * a);
    }
}

#[test]
fn extremal_round_trip() {
    let file = scratch("extremal_1e3_5.txt");
    let f = file.to_str().unwrap();
    let o = friable(&["constant", "--x", "1e3", "--y", "5", "--emit-extremal", f, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let c = json(&o)["C"].as_f64().unwrap();
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(text.lines().count(), 19);
    let probe = json(&friable(&["constant", "--x", "1e3", "--y", "5", "--probe", f, "--json"]));
    assert!((probe["probe_rayleigh"].as_f64().unwrap() - c).abs() <= 1e-10 * c);

    let bad = scratch("bad_fixture.txt");
    fs::write(&bad, "2 1 0.5\n7 1 1.0\n").unwrap();
    let o = friable(&["constant", "--x", "1e3", "--y", "5", "--probe", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn recorded_extremal_fixture() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/extremal_1e4_7.txt");
    let o = friable(&["constant", "--x", "1e4", "--y", "7", "--probe", fixture, "--json"]);
    let v = json(&o);
    let (c, r) = (v["C"].as_f64().unwrap(), v["probe_rayleigh"].as_f64().unwrap());
    assert!((c - 1.195_532_475).abs() < 1e-9);
    assert!((r - c).abs() <= 1e-10 * c);
}

#[test]
fn verify_is_deterministic() {
    let a = friable(&["verify", "--suite", "identities", "--grid", "(1e3,5);(1e4,7)", "--seed", "3"]);
    let b = friable(&["verify", "--suite", "identities", "--grid", "(1e3,5);(1e4,7)", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).ends_with("0 failed\n"));
}

#[test]
fn corrupted_weight_fails_bounds() {
    let o = friable(&["verify", "--suite", "bounds", "--grid", "(1e4,7)", "--corrupt-w", "3:1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL bounds (10000,7) w_p bounds"));
    assert!(text.contains("p = 3"));
    let clean = friable(&["verify", "--suite", "bounds", "--grid", "(1e4,7)"]);
    assert_eq!(clean.status.code(), Some(0));
}

#[test]
fn study_csv_parallel_equals_serial() {
    let grid = "(1e3,5);(1e4,7);(1e5,13);(2^20,3)";
    let serial = scratch("serial.csv");
    let parallel = scratch("parallel.csv");
    let run = |out: &PathBuf, n: &str| {
        friable(&["study", "--grid", grid, "--out", out.to_str().unwrap(), "--parallel", n, "--no-timing"])
    };
    assert_eq!(run(&serial, "1").status.code(), Some(0));
    assert_eq!(run(&parallel, "4").status.code(), Some(0));
    let s = fs::read(&serial).unwrap();
    assert_eq!(s, fs::read(&parallel).unwrap());
    assert_eq!(run(&serial, "1").status.code(), Some(0));
    assert_eq!(s, fs::read(&serial).unwrap());

    let text = String::from_utf8(s).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,y,h,u,ubar,alpha,psi,dim,C_biased,C_unbiased,lb_ratio,err_bound,runtime_ms"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn study_trend_matches_fixture() {
    let o = friable(&["study", "--grid", "(1e3,5);(1e5,13);(1e7,23)", "--no-timing"]);
    assert_eq!(
        stdout(&o),
        include_str!("fixtures/trend.csv"),
        "trend rows drifted from the recorded fixture"
    );
}

#[test]
fn study_json_mirrors_csv() {
    let o = friable(&["study", "--grid", "(1e3,5);(1e5,13)", "--no-timing", "--json"]);
    let rows: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let keys: Vec<&str> = rows[0].as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["x", "y", "h", "u", "ubar", "alpha", "psi", "dim", "C_biased", "C_unbiased", "lb_ratio", "err_bound"] {
        assert!(keys.contains(&k), "{k}");
    }
    assert!(rows[1]["C_unbiased"].as_f64().unwrap() < rows[0]["C_unbiased"].as_f64().unwrap());
}
