//! The `orgsim` binary end to end.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use orgsim_core::analysis::read_csv;
use orgsim_core::orchestrator::Trajectory;

fn orgsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orgsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path, ext: &str) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    if let Ok(rd) = std::fs::read_dir(dir) {
        for e in rd.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(files_under(&p, ext));
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = orgsim(dir.path(), &["run", "--seed", "3", "--out-dir", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("prepare_afternoon_tea"));
    let logs = files_under(&dir.path().join("out"), "jsonl");
    assert_eq!(logs.len(), 1);
    let t = Trajectory::load(&logs[0]).unwrap();
    assert_eq!(t.header.config.seed, 3);

    // Same seed, same bytes.
    let o = orgsim(dir.path(), &["run", "--seed", "3", "--out-dir", "again"]);
    assert_eq!(o.status.code(), Some(0));
    let again = files_under(&dir.path().join("again"), "jsonl");
    assert_eq!(std::fs::read(&logs[0]).unwrap(), std::fs::read(&again[0]).unwrap());
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = orgsim(dir.path(), &["run", "--backend", "nobody"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("episode.team[0].backend_ref"), "{}", stderr(&o));

    let o = orgsim(dir.path(), &["run", "--scenario", "moon_base"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("episode.scenario"), "{}", stderr(&o));

    std::fs::write(
        dir.path().join("secret.toml"),
        r#"
[backends.gpt]
kind = "http_chat"
base_url = "https://example.invalid/v1"
model = "m"
auth_env = "X"
api_key = "sk-123"

[episode]
scenario = "prepare_afternoon_tea"
seed = 0
team = [{ agent_id = 1, backend_ref = "leaderful" }]
"#,
    )
    .unwrap();
    let o = orgsim(dir.path(), &["--config", "secret.toml", "run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("backends.gpt.api_key"), "{}", stderr(&o));

    assert_eq!(orgsim(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(orgsim(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn batch_writes_csv_and_compares_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let o = orgsim(dir.path(), &["batch", "--seeds", "20", "--out-dir", "b"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("t-test leader < disorganized (steps): t = "), "{text}");
    assert!(text.contains("df = 38"), "{text}");
    let rows = read_csv(std::fs::File::open(dir.path().join("b/batch.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 40);
    assert_eq!(rows.iter().filter(|r| r.condition == "leader").count(), 20);
    assert_eq!(files_under(&dir.path().join("b/trajectories"), "jsonl").len(), 40);

    let o = orgsim(dir.path(), &["report", "--csv", "b/batch.csv", "--baseline", "disorganized", "--out-dir", "r", "b/trajectories/leader"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("t-test leader < disorganized"));
    assert_eq!(files_under(&dir.path().join("r/graphs"), "dot").len(), 20);
    assert_eq!(files_under(&dir.path().join("r/graphs"), "json").len(), 20);

    let o = orgsim(dir.path(), &["report", "--csv", "b/batch.csv", "--baseline", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(orgsim(dir.path(), &["report"]).status.code(), Some(1));
}

#[test]
fn reflect_writes_a_lineage() {
    let dir = tempfile::tempdir().unwrap();
    let o = orgsim(dir.path(), &["reflect", "--iterations", "4", "--out-dir", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lineage = std::fs::read_to_string(dir.path().join("r/lineage.jsonl")).unwrap();
    assert_eq!(lineage.lines().count(), 5);
    assert!(stdout(&o).contains("(5 records)"));

    let o = orgsim(dir.path(), &["reflect", "--iterations", "2", "--no-critic", "--lineage", "nc.jsonl", "--out-dir", "r2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("nc.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn unusable_coordinator_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        r#"
[backends.garbage]
kind = "scripted"
policy = "replay"
params = { replies = ["no candidates here", "still nothing"] }

[episode]
scenario = "prepare_afternoon_tea"
seed = 0
team = [
  { agent_id = 1, backend_ref = "leaderful" },
  { agent_id = 2, backend_ref = "leaderful" },
]

[reflect]
iterations = 2
coordinator_backend = "garbage"
"#,
    )
    .unwrap();
    let o = orgsim(dir.path(), &["--config", "bad.toml", "reflect", "--no-critic", "--out-dir", "r"]);
    assert_eq!(o.status.code(), Some(2), "{}\n{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("coordinator"), "{}", stderr(&o));
}

#[test]
fn classify_echo_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = orgsim(dir.path(), &["classify", "--echo"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("= 100.00%"), "{}", stdout(&o));

    let o = orgsim(dir.path(), &["classify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy: "));

    orgsim(dir.path(), &["run", "--out-dir", "one"]);
    let log = files_under(&dir.path().join("one"), "jsonl").remove(0);
    let o = orgsim(dir.path(), &["classify", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Agent_1"));
    assert_eq!(orgsim(dir.path(), &["classify", "--echo", log.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn human_seat_over_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_orgsim"))
        .current_dir(dir.path())
        .args(["run", "--human", "1", "--max-steps", "2", "--out-dir", "h"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let script = "SEND TO ALL: Agent_2 search the bedroom, Agent_3 the bathroom.\n\n1\nbogus\n\nSILENCE\n\n1\n";
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = Trajectory::load(&files_under(&dir.path().join("h"), "jsonl")[0]).unwrap();
    let mine: Vec<String> = t
        .comm_records()
        .filter(|c| c.sender == 1)
        .flat_map(|c| c.messages.iter().map(|m| m.content.clone()))
        .collect();
    assert_eq!(mine, ["Agent_2 search the bedroom, Agent_3 the bathroom."]);
    assert_eq!(t.action_records().filter(|a| a.agent == 1).count(), 2);
}
