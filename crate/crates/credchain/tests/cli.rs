use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_credchain"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn write_script(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("script.scenario");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn hash_prints_md5() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::write(&empty, b"").unwrap();
    let o = run(&["hash", empty.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("d41d8cd98f00b204e9800998ecf8427e"));

    let abc = dir.path().join("abc");
    fs::write(&abc, b"abc").unwrap();
    let o = run(&["--json", "hash", abc.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["digest"], "900150983cd24fb0d6963f7d28e17f72");

    let o = run(&["hash", "/definitely/not/here"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/definitely/not/here"));
}

#[test]
fn bundled_scenarios_pass() {
    for name in ["figure1.scenario", "figure1_forged.scenario"] {
        let o = run(&["scenario", "run", scenario_path(name).to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}{}",
            stdout(&o),
            stderr(&o)
        );
    }
}

#[test]
fn false_assertion_on_forged_digest_fails_with_step() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(
        dir.path(),
        "# claims a digest nobody stored is valid\nverify {\"digest\": \"0123456789abcdef0123456789abcdef\", \"expect\": true}\n",
    );
    let o = run(&["scenario", "run", script.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn scenario_parse_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), "mine {}\n\ntransmogrify {}\n");
    let o = run(&["scenario", "run", script.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(stderr(&o).contains("transmogrify"));

    let o = run(&["scenario", "run", "/no/such.scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such.scenario"));
}

#[test]
fn usage_errors_exit_2() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["--difficulty", "9", "mine", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mine_inspect_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().to_str().unwrap();
    let o = run(&["--data-dir", data, "mine", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = run(&["--data-dir", data, "--json", "chain", "inspect"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["length"], 4);
    assert_eq!(v["valid"], true);
    for block in v["blocks"].as_array().unwrap() {
        assert!(block["hash"].as_str().unwrap().starts_with("000"));
        assert_eq!(block["transactions"].as_array().unwrap().len(), 0);
    }

    let o = run(&[
        "--data-dir",
        data,
        "faucet",
        "00000000000000000000000000000000000000aa",
        "7",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("balance 7"));
    let o = run(&["--data-dir", data, "faucet", "not-an-address", "7"]);
    assert_eq!(o.status.code(), Some(2));

    let chain = dir.path().join("chain.jsonl");
    let text = fs::read_to_string(&chain).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = lines[2].replacen("\"timestamp\":2", "\"timestamp\":3", 1);
    assert_ne!(lines.join("\n") + "\n", text);
    fs::write(&chain, lines.join("\n") + "\n").unwrap();

    let o = run(&["--data-dir", data, "chain", "inspect"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("INVALID"));

    // The service refuses a data dir whose chain file disagrees with the journal.
    let o = run(&["--data-dir", data, "mine", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("chain.jsonl"), "{}", stderr(&o));
}

#[test]
fn inspect_without_chain_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--data-dir",
        dir.path().to_str().unwrap(),
        "chain",
        "inspect",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("chain.jsonl"));
}

#[test]
fn identical_runs_write_identical_chain_files() {
    let script = scenario_path("figure1.scenario");
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&[
            "--seed",
            "42",
            "--data-dir",
            dir.path().to_str().unwrap(),
            "scenario",
            "run",
            script.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(fs::read(dir.path().join("chain.jsonl")).unwrap());
    }
    assert_eq!(files[0], files[1]);

    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--seed",
        "43",
        "--data-dir",
        dir.path().to_str().unwrap(),
        "scenario",
        "run",
        script.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_ne!(fs::read(dir.path().join("chain.jsonl")).unwrap(), files[0]);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"difficulty": 1, "seed": 3}"#).unwrap();
    let data = dir.path().join("data");
    let o = run(&[
        "--config",
        config.to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
        "--json",
        "mine",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "--config",
        config.to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
        "--json",
        "chain",
        "inspect",
    ]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["valid"], true);

    fs::write(&config, r#"{"colour": "blue"}"#).unwrap();
    let o = run(&["--config", config.to_str().unwrap(), "mine", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config.json"));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn wait_for_port(port: u16) {
    let deadline = Instant::now() + Duration::from_secs(20);
    while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "service did not start");
        sleep(Duration::from_millis(50));
    }
}

#[test]
fn serve_refuses_busy_port() {
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port().to_string();
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--data-dir",
        dir.path().to_str().unwrap(),
        "serve",
        "--port",
        &port,
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(&port), "{}", stderr(&o));
}

#[cfg(unix)]
#[test]
fn serve_stops_cleanly_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().to_str().unwrap();
    let port = free_port();
    let mut child = bin()
        .args([
            "--data-dir",
            data,
            "serve",
            "--port",
            &port.to_string(),
            "--tick-ms",
            "50",
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    wait_for_port(port);
    sleep(Duration::from_millis(300));
    let status = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));

    let o = run(&["--data-dir", data, "chain", "inspect"]);
    assert!(o.status.success(), "{}", stdout(&o));
    // The admin and the contract deployment were bootstrapped and persisted.
    let events = fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert!(events.contains("\"deploy\""));
    assert!(!events.contains("change-me"));
}
