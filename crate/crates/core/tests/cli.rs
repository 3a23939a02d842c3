use jumpsde::config::RunConfig;
use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn jumpsde(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_jumpsde")).args(args).output().unwrap()
}

fn config_arg(name: &str) -> String {
    configs().join(name).display().to_string()
}

#[test]
fn shipped_configs_round_trip() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap();
        let again = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        assert_eq!(cfg.hash(), again.hash());
    }
}

#[test]
fn check_exit_codes() {
    let ok = jumpsde(&["check", "--config", &config_arg("cbi-example.toml")]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let failed = jumpsde(&["check", "--config", &config_arg("cbi-q4.toml")]);
    assert_eq!(failed.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&failed.stdout);
    assert!(stdout.contains("1/q+1/α=0.9167<1"), "{stdout}");
    let unknown = jumpsde(&["check", "--config", &config_arg("cbi-q4.toml"), "--theorem", "no-such-id"]);
    assert_eq!(unknown.status.code(), Some(3));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "master_seed = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(jumpsde(&["check", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(jumpsde(&["check"]).status.code(), Some(1));
    assert_eq!(jumpsde(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(jumpsde(&["simulate", "--config", &config_arg("cbi-q4.toml")]).status.code(), Some(1));
    assert_eq!(jumpsde(&["--help"]).status.code(), Some(0));
}

const ZERO: &str = r#"
master_seed = 3

[systems.still]
family = "linear"
sigma_slope = 0.0
drift_slope = 0.0
brownian = false

[[experiments]]
name = "still"
kind = "simulate"
system = "still"
x0 = 0.25
cells = 20
paths = 1
"#;

#[test]
fn zero_system_path_is_constant_and_manifest_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.toml");
    std::fs::write(&cfg, ZERO).unwrap();
    let out = dir.path().join("out");
    let run = jumpsde(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "both"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));

    let csv = std::fs::read_to_string(out.join("still/path.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("0.25")), "{csv}");

    let text = std::fs::read_to_string(out.join("still/manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["kind"], "simulate");
    assert_eq!(m["master_seed"], 3);
    assert_eq!(m["config_sha256"], RunConfig::load(&cfg).unwrap().hash());
    let files = m["files"].as_array().unwrap();
    let names: Vec<&str> = files.iter().map(|f| f["file"].as_str().unwrap()).collect();
    assert_eq!(names, ["path.csv", "path.json"]);
    for f in files {
        let bytes = std::fs::read(out.join("still").join(f["file"].as_str().unwrap())).unwrap();
        use sha2::Digest;
        assert_eq!(f["sha256"], hex::encode(sha2::Sha256::digest(&bytes)));
    }
    assert!(!text.contains("threads") && !text.contains("time"), "{text}");
}

#[test]
fn yw_levels_print() {
    let run = jumpsde(&["yw", "--modulus", "power:0.5", "--levels", "2"]);
    assert_eq!(run.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("a_1 = 3.678794411715e-1"), "{stdout}");
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, ZERO.replace("sigma_slope = 0.0", "sigma_slope = 1.0").replace("brownian = false", "")).unwrap();
    let run = |seed: &str, out: &str| {
        let o = dir.path().join(out);
        let r = jumpsde(&["simulate", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap(), "--seed", seed, "--format", "csv"]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
        std::fs::read_to_string(o.join("still/path.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}

#[test]
fn documented_examples_parse() {
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("docs/config.md")).unwrap();
    let blocks: Vec<&str> = doc.split("```toml\n").skip(1).map(|b| b.split("```").next().unwrap()).collect();
    assert!(blocks.len() >= 4);
    for b in blocks {
        RunConfig::parse(b).unwrap_or_else(|e| panic!("{e}\n{b}"));
    }
}
