use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn claimgate(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_claimgate"));
    cmd.args(args)
        .env_remove("CLAIMGATE_BACKEND_URL")
        .env_remove("CLAIMGATE_BACKEND_TOKEN");
    cmd
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn stats_prints_the_table() {
    let data = fixture("dialfact_mini.jsonl");
    let out = claimgate(&["stats", "--data", data.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let golden = std::fs::read_to_string(fixture("stats_golden.txt")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn offline_tier_never_dials_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let data = fixture("dialfact_mini.jsonl");
    let out = claimgate(&["eval-fv", "--data", data.to_str().unwrap()])
        .env("CLAIMGATE_BACKEND_URL", &url)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("offline"));
    std::thread::sleep(Duration::from_millis(50));
    assert!(
        listener.accept().is_err(),
        "offline run connected to the sidecar"
    );
}

#[test]
fn live_tier_needs_a_url() {
    let data = fixture("dialfact_mini.jsonl");
    let out = claimgate(&["--tier", "live", "stats", "--data", data.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn unreachable_sidecar_is_a_backend_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let data = fixture("dialfact_mini.jsonl");
    let out = claimgate(&["--tier", "live", "stats", "--data", data.to_str().unwrap()])
        .env("CLAIMGATE_BACKEND_URL", format!("http://127.0.0.1:{port}"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    let data = fixture("dialfact_mini.jsonl");
    let d = data.to_str().unwrap();
    for args in [
        vec!["--tau", "1.5", "stats", "--data", d],
        vec!["--surface", "r9", "stats", "--data", d],
        vec!["eval-fv", "--data", d],
        vec!["no-such-command"],
    ] {
        let out = claimgate(&args).output().unwrap();
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[gate]\nalpha = 0.9\n").unwrap();
    let data = fixture("dialfact_mini.jsonl");
    let out = claimgate(&[
        "--config",
        cfg.to_str().unwrap(),
        "stats",
        "--data",
        data.to_str().unwrap(),
    ])
    .output()
    .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn data_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"not\": \"a record\"}\n").unwrap();
    let out = claimgate(&["stats", "--data", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains(":1"), "{}", stderr(&out));

    let missing = dir.path().join("missing.jsonl");
    let out = claimgate(&["stats", "--data", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 5, "{}", stderr(&out));
}

#[test]
fn stale_surfaces_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("dialfact_mini.jsonl");
    let out_dir = dir.path().join("rw");
    let out = claimgate(&[
        "rewrite",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ])
    .output()
    .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let surfaces = out_dir.join("surfaces.jsonl");
    let text = std::fs::read_to_string(&surfaces).unwrap();
    let first = text.lines().next().unwrap();
    std::fs::write(&surfaces, format!("{first}\n")).unwrap();
    let out = claimgate(&[
        "eval-fv",
        "--data",
        data.to_str().unwrap(),
        "--surfaces",
        surfaces.to_str().unwrap(),
        "--out",
        dir.path().join("fv").to_str().unwrap(),
    ])
    .output()
    .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn manifest_records_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("dialfact_mini.jsonl");
    let out_dir = dir.path().join("fv");
    let out = claimgate(&[
        "--surface",
        "r1",
        "eval-fv",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ])
    .output()
    .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "eval-fv");
    assert_eq!(m["settings"]["tier"], "offline");
    assert_eq!(m["settings"]["surface"], "r1");
    assert_eq!(m["backend"]["endpoint"], "stub");
    assert_eq!(m["inputs"]["data"].as_str().unwrap().len(), 64);
    assert!(m["outputs"]["report.json"].is_string());
}
