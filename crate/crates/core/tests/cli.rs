//! End-to-end checks of the `rclub` binary.

use std::path::Path;
use std::process::{Command, Output};

fn rclub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rclub"))
        .args(args)
        .env_remove("RCLUB_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"
[instance]
users = 8
clusters = 2
dim = 4
pool_size = 30
arms_per_round = 5
corrupted_fraction = 0.25

[corruption]
k = 100

[run]
horizon = 400
seeds = [3]
trace_points = 40

[[policy]]
kind = "rclub_wcu"
alpha = 0.3
c_bar = 2.0

[[policy]]
kind = "club"
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn help_exits_zero() {
    for args in [
        &["--help"][..],
        &["run", "--help"],
        &["svd", "--help"],
        &["diag-t0", "--help"],
    ] {
        let o = rclub(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(stdout(&o).contains("Usage"));
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = rclub(&["run", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.toml"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = rclub(&["run", "--config", "x.toml", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &CONFIG.replace("horizon = 400", "horizon = 400\nhorizn = 1"),
    );
    let o = rclub(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("horizn"));
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = rclub(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "regret.csv",
        "detection.csv",
        "detected_users.json",
        "run_meta.json",
        "regret.svg",
    ] {
        assert!(out.join("seed-3").join(f).is_file(), "{f}");
    }
    let svg = std::fs::read_to_string(out.join("seed-3/regret.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let root = dir.path().join("envroot");
    let o = Command::new(env!("CARGO_BIN_EXE_rclub"))
        .args(["run", "--config", &cfg, "--seed", "5"])
        .env("RCLUB_OUT_DIR", &root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(root.join("seed-5/regret.csv").is_file());
}

#[test]
fn diag_t0_without_corruption_drops_the_corruption_term() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("c_bar = 2.0", "c_bar = 0.0");
    let cfg = write_config(dir.path(), &text);
    let o = rclub(&["diag-t0", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("T0"));
    let term4 = text
        .lines()
        .find(|l| l.starts_with("term4"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap();
    assert_eq!(term4.parse::<f64>().unwrap(), 0.0);
}

#[test]
fn gen_instance_then_run_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let inst = dir.path().join("inst.json");
    let o = rclub(&[
        "gen-instance",
        "--config",
        &cfg,
        "--out",
        inst.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let from_file = CONFIG.replace(
        "corrupted_fraction = 0.25",
        "corrupted_fraction = 0.25\ninstance_file = \"inst.json\"",
    );
    let cfg2 = dir.path().join("exp2.toml");
    std::fs::write(&cfg2, from_file).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(
        rclub(&["run", "--config", &cfg, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    assert!(rclub(&[
        "run",
        "--config",
        cfg2.to_str().unwrap(),
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    let ra = std::fs::read(a.join("seed-3/regret.csv")).unwrap();
    let rb = std::fs::read(b.join("seed-3/regret.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn svd_subcommand_writes_features() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let mut text = String::from("user_id,item_id,rating\n");
    for u in 0..12 {
        for i in 0..9 {
            let r = 1 + (u * 7 + i * 3) % 5;
            text.push_str(&format!("{u},{i},{r}\n"));
        }
    }
    std::fs::write(&ratings, text).unwrap();
    let items = dir.path().join("items.csv");
    let users = dir.path().join("users.csv");
    let o = rclub(&[
        "svd",
        "--ratings",
        ratings.to_str().unwrap(),
        "--rank",
        "3",
        "--out",
        items.to_str().unwrap(),
        "--user-out",
        users.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let feats = rclub::ingest::load_features(&items).unwrap();
    assert_eq!(feats.rows.len(), 9);
    assert!(feats.normalized.is_empty());
    assert!(feats.rows.iter().all(|r| r.len() == 3));
    assert_eq!(rclub::ingest::load_features(&users).unwrap().rows.len(), 12);

    let o = rclub(&[
        "svd",
        "--ratings",
        ratings.to_str().unwrap(),
        "--rank",
        "20",
        "--out",
        "x.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
}
