use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use owc_core::scene::builtin::{builtin_scenario, reference_scenario, DEFAULT_RECEIVER_BANDWIDTH};
use owc_core::scene::Scenario;

fn owc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owc")).args(args).current_dir(cwd).env_remove("OWC_CACHE_DIR").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, s: &Scenario<f64>) -> String {
    let path = dir.join(format!("{}.json", s.name));
    fs::write(&path, s.to_canonical_json()).unwrap();
    path.display().to_string()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn line_of_sight_only_has_zero_delay_spread() {
    let dir = tempfile::tempdir().unwrap();
    let o = owc(&["simulate", "--scenario", "conference_table", "--bounces", "0", "--out", "run", "--no-cache"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = rows(&dir.path().join("run/channel.csv"));
    assert_eq!(rows.len(), 10 * 4 * 8);
    let lit: Vec<_> = rows.iter().filter(|r| r[3].parse::<f64>().unwrap() > 0.0).collect();
    assert!(!lit.is_empty());
    for r in &lit {
        assert_eq!(r[5].parse::<f64>().unwrap(), 0.0, "{r:?}");
        assert_eq!(r[4], "inf");
    }
    for r in rows.iter().filter(|r| r[3].parse::<f64>().unwrap() == 0.0) {
        assert_eq!((r[4].as_str(), r[5].as_str()), ("", ""));
    }
}

#[test]
fn exhaustive_and_exact_agree_on_three_users() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = builtin_scenario("cocktail1").unwrap();
    s.name = "three".into();
    s.users.truncate(3);
    let path = write_scenario(dir.path(), &s);
    let mut outputs = Vec::new();
    for solver in ["exact", "exhaustive"] {
        let out = format!("run_{solver}");
        let o = owc(
            &["allocate", "--scenario", &path, "--resolution", "desk", "--bounces", "1", "--solver", solver, "--out", &out],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(!dir.path().join(&out).join("vs_table2.txt").exists());
        outputs.push((
            fs::read(dir.path().join(&out).join("allocation.csv")).unwrap(),
            fs::read(dir.path().join(&out).join("objective.txt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(dir.path().join(".owc-cache").is_dir());
}

#[test]
fn more_users_than_channels_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let xy: Vec<(f64, f64)> = (0..33).map(|i| (0.3 + 0.4 * (i % 9) as f64, 0.5 + 2.0 * (i / 9) as f64)).collect();
    let path = write_scenario(dir.path(), &reference_scenario("crowd", &xy, DEFAULT_RECEIVER_BANDWIDTH));
    let o = owc(&["allocate", "--scenario", &path, "--bounces", "0", "--out", "run"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("33"));
}

#[test]
fn invalid_scenario_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"name": "bad", "users": [{"id": 1, "pos": [9, 2, 1]}, {"id": 1, "pos": [1, 2, 0.5]}]}"#).unwrap();
    let o = owc(&["simulate", "--scenario", path.to_str().unwrap(), "--out", "run"], dir.path());
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("invalid scenario"), "{err}");
    assert!(err.lines().count() >= 3, "{err}");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&owc(&["simulate", "--bogus"], dir.path())), 1);
    assert_eq!(code(&owc(&["simulate", "--scenario", "x", "--bounces", "3"], dir.path())), 1);
    assert_eq!(code(&owc(&["simulate", "--scenario", "nowhere"], dir.path())), 1);
    assert_eq!(code(&owc(&["--help"], dir.path())), 0);
    let o = owc(&["allocate", "--scenario", "cocktail1", "--kappa", "-1"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn report_names_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = owc(&["report", "--out", "empty"], dir.path());
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("channel.csv") && err.contains("allocation.csv"), "{err}");
}

#[test]
fn full_pipeline_writes_consistent_tables() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--scenario", "conference_table", "--bounces", "1", "--resolution", "desk", "--out", "run"];
    for cmd in ["simulate", "allocate"] {
        let mut args = vec![cmd];
        args.extend(common);
        let o = owc(&args, dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = owc(&["report", "--out", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = dir.path().join("run");

    let alloc = rows(&run.join("allocation.csv"));
    assert_eq!(alloc.len(), 10);
    let mut channels: Vec<(&str, &str)> = alloc.iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    channels.sort();
    channels.dedup();
    assert_eq!(channels.len(), 10);

    let fig4 = rows(&run.join("fig4_sinr.csv"));
    let fig5 = rows(&run.join("fig5_rate.csv"));
    let fig3 = rows(&run.join("fig3_bandwidth.csv"));
    for (i, a) in alloc.iter().enumerate() {
        assert_eq!(fig4[i], vec![a[0].clone(), a[4].clone(), a[5].clone()]);
        assert_eq!(fig5[i], vec![a[0].clone(), a[6].clone()]);
        assert_eq!(fig3[i][..3], [a[0].clone(), a[1].clone(), a[3].clone()]);
        let meets = a[4].parse::<f64>().unwrap() >= 15.6;
        assert_eq!(a[5], meets.to_string());
    }
    let table = fs::read_to_string(run.join("vs_table2.txt")).unwrap();
    assert!(table.contains("dominates: true"), "{table}");

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    for section in ["simulate", "allocate", "report"] {
        assert!(manifest["runs"][section].is_object(), "{section}");
    }
    assert_eq!(manifest["runs"]["allocate"]["cache"]["status"], "hit");
    assert_eq!(manifest["runs"]["simulate"]["bounce_config"]["max_order"], 1);
    let manifests = fs::read_dir(&run).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains("manifest")).count();
    assert_eq!(manifests, 1);
}

#[test]
fn rate_scales_with_kappa_only_below_configured_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = builtin_scenario("cocktail2").unwrap();
    s.name = "rates".into();
    s.users.truncate(2);
    let path = write_scenario(dir.path(), &s);
    let rate = |kappa: &str| {
        let out = format!("k{kappa}");
        let o = owc(&["allocate", "--scenario", &path, "--bounces", "0", "--kappa", kappa, "--out", &out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        rows(&dir.path().join(out).join("allocation.csv")).iter().map(|r| r[6].parse::<f64>().unwrap()).collect::<Vec<_>>()
    };
    let bw = s.noise.receiver_bandwidth;
    assert!(rate("0.5").iter().all(|&r| r == 0.5 * bw));
    assert!(rate("100").iter().all(|&r| r == s.configured_rate_bps));
}
