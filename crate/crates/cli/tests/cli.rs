use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fragsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragsim"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("FRAGSIM_SEED")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fragsim-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn bad_config_exits_with_2_and_names_the_field() {
    let d = scratch("badcfg");
    let out = fragsim(&d, &["--dust", "3", "solve-density"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`dust`"));

    let cfg = d.join("exp.toml");
    std::fs::write(&cfg, "alpha = 1.5\n").unwrap();
    let out = fragsim(&d, &["--config", cfg.to_str().unwrap(), "solve-density"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`alpha`"));
}

#[test]
fn lattice_law_limit_is_refused_outside_subsequence_mode() {
    let d = scratch("lattice");
    let out = fragsim(&d, &["--law", "kary:2", "limit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subsequence"));
    let out = fragsim(&d, &["--law", "kary:2", "--reps", "50", "limit", "--subsequence"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn same_seed_gives_identical_csv_regardless_of_threads() {
    let run = |name: &str, threads: &str| {
        let d = scratch(name);
        let out = fragsim(
            &d,
            &["--seed", "11", "--reps", "6", "--threads", threads, "limit", "--mode", "full", "--times", "0.5,1"],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(d.join("limit.csv")).unwrap()
    };
    let a = run("det-a", "1");
    let b = run("det-b", "3");
    assert_eq!(a, b);
    assert!(a.len() > 100);
}

#[test]
fn reports_embed_config_and_build_id() {
    let d = scratch("report");
    let out = fragsim(&d, &["--seed", "5", "solve-density"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("density.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 5);
    assert!(v["build"].as_str().is_some_and(|s| !s.is_empty()));
    let csv = std::fs::read_to_string(d.join("density.csv")).unwrap();
    assert!(csv.starts_with("x,f_zeta,F_zeta\n"));
}
