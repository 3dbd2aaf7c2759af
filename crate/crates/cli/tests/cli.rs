use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use contour_opt::reduction::varrho_lower_bound;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_contour-opt"));
    c.env_remove("CONTOUR_OPT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_ok(o: &Output) -> Value {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn result(args: &[&str]) -> Value {
    json_ok(&run(args))["result"].clone()
}

/// 400 standard-normal points written by the CLI itself.
fn dataset(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    let o = run(&["generate", "--kind", "normal", "--count", "400", "--seed", "5", "--file", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn u(v: &Value) -> usize {
    v.as_u64().expect("unsigned") as usize
}

#[test]
fn missing_dataset_exits_2() {
    let o = run(&["alpha", "--data", "/definitely/not/here.csv", "--alpha", "0.05"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset not found"), "{}", stderr(&o));
}

#[test]
fn bad_case_json_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("case.json");
    let mut v: Value = serde_json::from_str(&contour_opt::opf::GridCase::six_bus().to_json()).unwrap();
    v["branches"][2]["limit_mw"] = Value::String("wide".into());
    std::fs::write(&case, v.to_string()).unwrap();
    let o = run(&["opf", "--case", case.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("branches[2].limit_mw"), "{}", stderr(&o));
}

#[test]
fn infeasible_case_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("tight.json");
    let mut v: Value = serde_json::from_str(&contour_opt::opf::GridCase::six_bus().to_json()).unwrap();
    for b in v["branches"].as_array_mut().unwrap() {
        b["limit_mw"] = Value::from(1.0);
    }
    std::fs::write(&case, v.to_string()).unwrap();
    let data = dir.path().join("dev.csv");
    let g = run(&["generate", "--kind", "case6", "--seed", "1", "--file", data.to_str().unwrap()]);
    assert!(g.status.success(), "{}", stderr(&g));
    let o = run(&["opf", "--case", case.to_str().unwrap(), "--data", data.to_str().unwrap(), "--seed", "1", "--zeta", "2.75"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_lists_available() {
    let o = run(&["verify", "wobble", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for name in ["varrho", "phi", "omega", "scenario"] {
        assert!(e.contains(name), "{e}");
    }
}

#[test]
fn out_of_range_probability_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let o = run(&["alpha", "--data", data.to_str().unwrap(), "--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn alpha_zero_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let r = result(&["alpha", "--data", data.to_str().unwrap(), "--alpha", "0", "--zeta", "0.3"]);
    assert_eq!(u(&r["d"]), 400);
    assert_eq!(u(&r["d_alpha"]), 400);
}

#[test]
fn auto_bandwidth_reports_choice_and_keeps_a_proper_subset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let r = result(&["alpha", "--data", data.to_str().unwrap(), "--alpha", "0.05", "--zeta", "auto", "--seed", "7"]);
    let zeta = r["zeta"].as_f64().unwrap();
    assert_eq!(r["bandwidth"]["zeta"].as_f64().unwrap(), zeta);
    let d_alpha = u(&r["d_alpha"]);
    assert!(d_alpha > 0 && d_alpha < 400, "D_alpha {d_alpha}");
    assert_eq!(r["kept_indices"].as_array().unwrap().len(), d_alpha);
}

#[test]
fn reduce_sizes_follow_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    let r = result(&["reduce", "--data", d, "--zeta", "0.5", "--rho", "0.9", "--eta", "0.09", "--seed", "3"]);
    let (z, z_eta, b_bar) = (u(&r["z"]), u(&r["z_eta"]), u(&r["b_bar"]));
    let (dd, da) = (u(&r["d"]), u(&r["d_alpha"]));
    assert_eq!(b_bar, 2);
    assert!(z_eta <= z);
    // smallest z whose bound reaches rho
    assert!(varrho_lower_bound(z, b_bar, 0.05, dd, da).unwrap() >= 0.9);
    assert!(z == 1 || varrho_lower_bound(z - 1, b_bar, 0.05, dd, da).unwrap() < 0.9);

    let r0 = result(&["reduce", "--data", d, "--zeta", "0.5", "--rho", "0.9", "--eta", "0", "--seed", "3"]);
    assert_eq!(u(&r0["z_eta"]), u(&r0["z"]));
    let r1 = result(&["reduce", "--data", d, "--zeta", "0.5", "--rho", "0", "--seed", "3"]);
    assert_eq!(u(&r1["z"]), 1);
}

#[test]
fn opf_stages_and_z_only() {
    let full = result(&["opf", "--seed", "1", "--zeta", "2.75", "--no-timestamp"]);
    let stages = full["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 3);
    let obj: Vec<f64> = stages.iter().map(|s| s["objective"].as_f64().unwrap()).collect();
    assert!(obj[2] <= obj[1] * (1.0 + 1e-6) && obj[1] <= obj[0] * (1.0 + 1e-6), "{obj:?}");
    assert!(stages.iter().all(|s| s.get("wall_time_s").is_none()));

    let z_only = result(&["opf", "--seed", "1", "--zeta", "2.75", "--stage", "z-only"]);
    let names: Vec<&str> = z_only["stages"].as_array().unwrap().iter().map(|s| s["stage"].as_str().unwrap()).collect();
    assert_eq!(names, ["d_alpha", "d_alpha_z"]);
}

#[test]
fn no_timestamp_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let d = data.to_str().unwrap();
    let cases: [&[&str]; 4] = [
        &["alpha", "--data", d, "--alpha", "0.05"],
        &["reduce", "--data", d, "--eta", "0.2", "--seed", "9"],
        &["opf", "--seed", "4", "--zeta", "2.75"],
        &["verify", "omega", "--trials", "20", "--seed", "2"],
    ];
    for args in cases {
        let mut a = args.to_vec();
        a.push("--no-timestamp");
        let (x, y) = (run(&a), run(&a));
        assert!(x.status.success(), "{}", stderr(&x));
        assert_eq!(x.stdout, y.stdout, "{args:?}");
        assert!(!String::from_utf8_lossy(&x.stdout).contains("generated_at_unix"));
    }
    let stamped = json_ok(&run(&["alpha", "--data", d]));
    assert!(stamped["generated_at_unix"].is_u64());
}

#[test]
fn thread_count_does_not_change_results() {
    let one = run(&["opf", "--seed", "4", "--zeta", "2.75", "--no-timestamp", "--threads", "1"]);
    let three = run(&["opf", "--seed", "4", "--zeta", "2.75", "--no-timestamp", "--threads", "3"]);
    assert!(one.status.success());
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn out_dir_receives_json_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let o = run(&["opf", "--seed", "1", "--zeta", "2.75", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let table = std::fs::read_to_string(out.join("opf_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("opf.json")).unwrap()).unwrap();
    assert_eq!(v["command"], "opf");
}

#[test]
fn config_file_precedence_and_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let cfg = dir.path().join("run.json");
    let text = serde_json::json!({ "data": data, "alpha": 0.0, "zeta": 0.5, "rho": 0.0, "seed": 11 }).to_string();
    std::fs::write(&cfg, text).unwrap();
    let c = cfg.to_str().unwrap();

    let from_file = json_ok(&run(&["reduce", "--config", c]));
    assert_eq!(from_file["config"]["seed"], 11);
    assert_eq!(u(&from_file["result"]["d_alpha"]), 400);
    assert_eq!(u(&from_file["result"]["z"]), 1);

    let flag_wins = json_ok(&run(&["reduce", "--config", c, "--alpha", "0.05", "--seed", "12"]));
    assert_eq!(flag_wins["config"]["alpha"], 0.05);
    assert_eq!(flag_wins["config"]["seed"], 12);

    let d = data.to_str().unwrap();
    let missing = run(&["reduce", "--data", d, "--zeta", "0.5"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("CONTOUR_OPT_SEED"));
    let env = bin().args(["reduce", "--data", d, "--zeta", "0.5"]).env("CONTOUR_OPT_SEED", "13").output().unwrap();
    assert_eq!(json_ok(&env)["config"]["seed"], 13);

    std::fs::write(&cfg, r#"{"alpah": 0.1}"#).unwrap();
    assert_eq!(run(&["reduce", "--config", c]).status.code(), Some(2));
}

#[test]
fn verify_varrho_verdict_holds() {
    let r = result(&["verify", "varrho", "--trials", "10000", "--zs", "20,60", "--seed", "1", "--no-timestamp"]);
    assert_eq!(r["verdict"], true);
    let exps = r["experiments"].as_array().unwrap();
    assert_eq!(exps.len(), 2);
    // bound at z = 20 with one boundary point replicated 50 times among 500
    let ratio: f64 = (0..20).map(|i| (450 - i) as f64 / (500 - i) as f64).product();
    assert!((exps[0]["bound"].as_f64().unwrap() - (1.0 - ratio)).abs() < 1e-12);
}

#[test]
fn verify_phi_sweep_csv() {
    let o = run(&["verify", "phi", "--eta-sweep", "0.01:0.1:5", "--seed", "1", "--csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eta,z_eta,lower_bound,measured,holds");
    assert_eq!(lines.len(), 6);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let (lb, measured): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(lb <= 1.0 && measured <= 1.0 + 1e-12);
    }
}

#[test]
fn generate_json_roundtrips_through_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ints.json");
    let p = path.to_str().unwrap();
    let o = run(&["generate", "--kind", "integer", "--count", "300", "--dims", "2", "--seed", "2", "--file", p]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = result(&["alpha", "--data", p, "--integer-cols", "2", "--alpha", "0.01"]);
    assert_eq!(u(&r["d"]), 300);
    // 49 integer cells with about 6 points each, all above 3 = 0.01 * 300
    assert!(u(&r["d_alpha"]) > 250);
}
