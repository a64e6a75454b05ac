use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn uavsec(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavsec")).args(args).arg("--output-dir").arg(out).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const SMALL: &str = r#"
[scenario]
bob_xy = [600.0, 0.0]
eve_xy = [300.0, 100.0]
altitude_m = 100.0
n_slots = 12
start_xy = [0.0, -50.0]
end_xy = [600.0, -50.0]
v_max_mps = 60.0
ref_snr = "80 dB"
p_bar_s = "10 dBm"
p_bar_r = "10 mW"
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn check_on_reference_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = uavsec(&["check", configs().join("reference.toml").to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["feasible"], true);
    assert_eq!(v["mobility_feasible"], true);
    assert_eq!(v["budget_feasible"], true);
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("slot,x_m,y_m,p_s_w,p_r_w,r_relay,r_bob,r_eve\n"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn power_without_unit_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &SMALL.replace("\"10 dBm\"", "\"10\""));
    let out = uavsec(&["check", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_bar_s"));
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &SMALL.replace("altitude_m", "altitude_ft = 1.0\naltitude_m"));
    assert_eq!(uavsec(&["check", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    let cfg = write(tmp.path(), "bad2.toml", &format!("{SMALL}\n[solver]\ntolerance = 1e-6\n"));
    assert_eq!(uavsec(&["check", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn unreachable_endpoints_are_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "far.toml", &SMALL.replace("v_max_mps = 60.0", "v_max_mps = 10.0"));
    assert_eq!(uavsec(&["trajectory", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(3));
}

#[test]
fn trajectory_objectives_never_decrease() {
    let tmp = tempfile::tempdir().unwrap();
    let out = uavsec(&["trajectory", configs().join("line.toml").to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    let run = &r["run"];
    let mut objs = vec![run["initial_objective"].as_f64().unwrap()];
    objs.extend(run["iterations"].as_array().unwrap().iter().map(|it| it["objective"].as_f64().unwrap()));
    assert!(objs.len() > 2);
    assert!(objs.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{objs:?}");
    assert_eq!(r["evaluation"]["feasible"], true);
    // snapshots are on in this config, one per accepted step
    for l in 1..objs.len() {
        assert!(tmp.path().join(format!("trajectory_iter_{l}.csv")).exists());
    }
}

#[test]
fn resolved_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let out = uavsec(&["check", configs().join("reference.toml").to_str().unwrap()], &first);
    assert_eq!(out.status.code(), Some(0));
    let r1 = report(&first);
    let cfg = write(tmp.path(), "resolved.json", &serde_json::to_string(&r1["config"]).unwrap());
    let second = tmp.path().join("second");
    let out = uavsec(&["check", cfg.to_str().unwrap()], &second);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r2 = report(&second);
    assert_eq!(r1["scenario"], r2["scenario"]);
    assert_eq!(r1["config"], r2["config"]);
}

#[test]
fn identical_runs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", &format!("{SMALL}\n[run]\nsnapshots = true\n"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = uavsec(&["ao", cfg.to_str().unwrap()], dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).filter(|n| n.to_string_lossy().ends_with(".csv")).collect();
    names.sort();
    assert!(names.len() > 1);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn eval_accepts_own_output_and_rejects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let run = tmp.path().join("run");
    assert_eq!(uavsec(&["power", cfg.to_str().unwrap()], &run).status.code(), Some(0));
    let csv = run.join("trajectory.csv");
    let out = uavsec(&["eval", cfg.to_str().unwrap(), "--input", csv.to_str().unwrap()], &tmp.path().join("eval"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&run)["evaluation"]["objective"], report(&tmp.path().join("eval"))["evaluation"]["objective"]);

    // a loud relay in the second slot outruns the loaded data
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut rows: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = rows[2].split(',').map(String::from).collect();
    cells[4] = "0.05".into();
    rows[2] = cells.join(",");
    let bad = write(tmp.path(), "bad.csv", &(rows.join("\n") + "\n"));
    let out = uavsec(&["eval", cfg.to_str().unwrap(), "--input", bad.to_str().unwrap()], &tmp.path().join("bad"));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn power_on_a_trajectory_of_the_wrong_length() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.toml", SMALL);
    let traj = write(tmp.path(), "t.csv", "slot,x_m,y_m\n1,0,0\n2,50,0\n");
    let out = uavsec(&["power", cfg.to_str().unwrap(), "--trajectory", traj.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_configs_and_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: toml::Value = toml::from_str(SMALL).unwrap();
    let path = write(tmp.path(), "small.json", &serde_json::to_string(&cfg).unwrap());
    for kind in ["ferry", "static"] {
        let dir = tmp.path().join(kind);
        let out = uavsec(&["baseline", kind, path.to_str().unwrap()], &dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let r = report(&dir);
        assert_eq!(r["baseline"]["kind"], kind);
        assert_eq!(r["evaluation"]["feasible"], true);
        assert!(r["evaluation"]["objective"].as_f64().unwrap() >= 0.0);
    }
}
