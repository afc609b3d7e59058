//! The `moodtune` binary, driven as an operator would.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn moodtune() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_moodtune"));
    cmd.env_clear();
    cmd
}

fn run(args: &[&str]) -> Output {
    moodtune().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn ingest_counts_and_violations() {
    let songs = fixture("seven_songs.json");
    let ok = run(&["ingest", "--fixture", songs.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("tracks      7"));
    assert!(stdout(&ok).contains("violations  0"));

    let machine = run(&["ingest", "--fixture", songs.to_str().unwrap(), "--format", "machine"]);
    let doc: Value = serde_json::from_slice(&machine.stdout).unwrap();
    assert_eq!(doc["tracks"], 7);
    assert_eq!(doc["features"], 7);

    let dir = tempfile::tempdir().unwrap();
    let mut bad: Value = serde_json::from_str(&std::fs::read_to_string(&songs).unwrap()).unwrap();
    bad["tracks"][2]["valence"] = 1.3.into();
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, bad.to_string()).unwrap();
    let rejected = run(&["ingest", "--fixture", bad_path.to_str().unwrap()]);
    assert_eq!(rejected.status.code(), Some(1));
    assert!(stdout(&rejected).contains("tracks[2] (sp-c) valence"), "{}", stdout(&rejected));

    let missing = run(&["ingest", "--fixture", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("absent.json"));

    let truncated = dir.path().join("truncated.json");
    std::fs::write(&truncated, "{\"schema_version\": 1,").unwrap();
    assert_eq!(run(&["ingest", "--fixture", truncated.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible() {
    let catalog = fixture("catalog.json");
    let args = |seed: &str, trials: &str| {
        run(&[
            "simulate", "--fixture", catalog.to_str().unwrap(), "--mood", "relaxed",
            "--trials", trials, "--seed", seed, "--format", "machine",
        ])
    };
    let a = args("9", "500");
    let b = args("9", "500");
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, args("10", "500").stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["trials"], 500);
    assert!(doc["treatment_mean_distance"].as_f64().unwrap() < doc["control_mean_distance"].as_f64().unwrap());

    let empty = args("9", "0");
    assert_eq!(empty.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&empty.stdout).unwrap();
    assert_eq!(doc["trials"], 0);
    assert!(doc["treatment_mean_distance"].is_null());
    assert!(doc["frequencies"].as_array().unwrap().iter().all(|f| f["treatment_count"] == 0));

    let small = run(&["simulate", "--fixture", fixture("seven_songs.json").to_str().unwrap(), "--mood", "sad"]);
    assert_eq!(small.status.code(), Some(1));
    assert!(stderr(&small).contains("need at least"));

    let bad_mood = run(&["simulate", "--fixture", catalog.to_str().unwrap(), "--mood", "gloomy"]);
    assert_eq!(bad_mood.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn analyze_rejects_bad_exports() {
    let dir = tempfile::tempdir().unwrap();
    let study = std::fs::read_to_string(fixture("study_ratings.csv")).unwrap();
    let control_only: String = study
        .lines()
        .enumerate()
        .filter(|(i, l)| *i == 0 || l.contains(",control,"))
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    let path = dir.path().join("control.csv");
    std::fs::write(&path, control_only).unwrap();
    let out = run(&["analyze", "--export", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("treatment group has no ratings"), "{}", stderr(&out));

    let garbled = dir.path().join("garbled.csv");
    std::fs::write(&garbled, study.replacen(",relaxed,", ",blissful,", 1)).unwrap();
    let out = run(&["analyze", "--export", garbled.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = run(&["analyze", "--export", dir.path().join("none.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_startup_errors() {
    let live = run(&["serve", "--mode", "live"]);
    assert_eq!(live.status.code(), Some(1));
    assert!(stderr(&live).contains("MOODTUNE_TASTE_CLIENT_ID"), "{}", stderr(&live));

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = run(&["serve", "--fixture", fixture("catalog.json").to_str().unwrap(), "--bind", &addr]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot bind"), "{}", stderr(&out));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn wait_for_health(server: &str) {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let out = moodtune().args(["session", "--server", server, "--pseudonym", "probe"]).output().unwrap();
        if out.status.success() {
            return;
        }
        assert!(Instant::now() < deadline, "service did not come up: {}", stderr(&out));
        std::thread::sleep(Duration::from_millis(100));
    }
}

#[test]
fn client_commands_drive_a_served_instance() {
    let port = free_port();
    let server = format!("http://127.0.0.1:{port}");
    let _serve = Server(
        moodtune()
            .args(["serve", "--fixture", fixture("catalog.json").to_str().unwrap()])
            .args(["--bind", &format!("127.0.0.1:{port}"), "--seed", "5"])
            .env("MOODTUNE_ADMIN_TOKEN", "s3cret-admin")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    wait_for_health(&server);

    let session = run(&["session", "--server", &server, "--pseudonym", "p09", "--format", "machine"]);
    let session: Value = serde_json::from_slice(&session.stdout).unwrap();
    let sid = session["session_id"].as_str().unwrap().to_string();

    let pair = run(&["pair", "--server", &server, "--session", &sid, "--mood", "tired", "--format", "machine"]);
    assert_eq!(pair.status.code(), Some(0), "{}", stderr(&pair));
    let pair: Value = serde_json::from_slice(&pair.stdout).unwrap();
    let pid = pair["pair_id"].as_str().unwrap().to_string();
    assert_eq!(pair["items"].as_array().unwrap().len(), 2);

    let again = run(&["pair", "--server", &server, "--session", &sid, "--mood", "tired"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("pair_pending"));

    let rate = |label: &str, rating: &str| {
        run(&["rate", "--server", &server, "--session", &sid, "--pair", &pid, "--label", label, "--rating", rating])
    };
    assert_eq!(stdout(&rate("A", "4")), "recorded\n");
    assert_eq!(rate("B", "9").status.code(), Some(1));
    assert_eq!(stdout(&rate("B", "2")), "recorded, pair closed\n");

    let export = moodtune()
        .args(["export", "--server", &server, "--session", &sid])
        .env("MOODTUNE_ADMIN_TOKEN", "s3cret-admin")
        .output()
        .unwrap();
    assert_eq!(export.status.code(), Some(0), "{}", stderr(&export));
    let csv = stdout(&export);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains(",tired,"));

    let denied = run(&["export", "--server", &server, "--admin-token", "wrong"]);
    assert_eq!(denied.status.code(), Some(1));
    assert!(!stderr(&denied).contains("s3cret-admin"));

    let down = run(&["session", "--server", &format!("http://127.0.0.1:{}", free_port()), "--pseudonym", "x"]);
    assert_eq!(down.status.code(), Some(2));
}
