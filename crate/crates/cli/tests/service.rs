//! HTTP service contract, exercised in-process.

mod common;

use axum::http::StatusCode;
use common::*;
use orgsim_cli::commands::{run_one, Workspace};
use orgsim_cli::server::FrameKind;
use orgsim_core::comms::Recipients;
use orgsim_core::config::ExperimentConfig;
use orgsim_core::orchestrator::{EpisodeConfig, Record, Trajectory};
use serde_json::json;

fn leader_config(seed: u64) -> EpisodeConfig {
    let mut c = EpisodeConfig::uniform("prepare_afternoon_tea", seed, 3, "leaderful");
    c.organization_prompt = LEADER_PROMPT.into();
    c
}

async fn finished_artifact(app: &axum::Router, run: &str) -> std::path::PathBuf {
    let (status, manifest) = send(app, "GET", &format!("/runs/{run}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(manifest["status"], "done", "{manifest}");
    manifest["artifacts"][0].as_str().unwrap().into()
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_reconstruct_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let run = create(&app, &leader_config(3)).await;
    let frames = FrameReader::open(&app, &run, None).await.drain().await;
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f.seq, i as u64);
        assert_eq!(f.run_id, run);
    }
    assert_eq!(frames[0].kind, FrameKind::Start);
    assert!(frames.iter().any(|f| f.kind == FrameKind::Metrics && f.payload["type"] == "running"));
    let records: Vec<Record> = frames.iter().filter_map(|f| f.record()).collect();
    let rebuilt = Trajectory::from_records(records).unwrap();
    let stored = std::fs::read_to_string(finished_artifact(&app, &run).await).unwrap();
    assert_eq!(rebuilt.to_jsonl(), stored);
}

#[tokio::test(flavor = "multi_thread")]
async fn service_and_cli_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = leader_config(8);
    let ws = Workspace::new(ExperimentConfig::for_episode(config.clone())).unwrap();
    let (cli_path, _) = run_one(&ws, &dir.path().join("cli"), None).unwrap();

    let app = app(dir.path());
    let run = create(&app, &config).await;
    FrameReader::open(&app, &run, None).await.drain().await;
    let service_path = finished_artifact(&app, &run).await;
    assert_eq!(std::fs::read(cli_path).unwrap(), std::fs::read(service_path).unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn reconnect_resumes_after_last_event_id() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let run = create(&app, &leader_config(1)).await;
    let all = FrameReader::open(&app, &run, None).await.drain().await;
    assert!(all.len() > 20);
    let tail = FrameReader::open(&app, &run, Some(17)).await.drain().await;
    assert_eq!(tail[0].seq, 18);
    assert_eq!(tail, all[18..]);
    let (status, _) = send(&app, "GET", &format!("/runs/{run}/events?from=5"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_runs_and_bad_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(send(&app, "GET", "/runs/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(send(&app, "GET", "/runs/nope/events", None).await.0, StatusCode::NOT_FOUND);
    let (s, body) = send(&app, "POST", "/runs/nope/human/action", Some(json!({"action": "[wait]"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{body}");

    let mut bad = serde_json::to_value(leader_config(0)).unwrap();
    bad["team"][1]["backend_ref"] = json!("mystery");
    let (s, body) = send(&app, "POST", "/runs", Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"][0]["field"], "team[1].backend_ref");

    let mut bad = serde_json::to_value(leader_config(0)).unwrap();
    bad["scenario"] = json!("moon_base");
    let (s, body) = send(&app, "POST", "/runs", Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"][0]["field"], "scenario");

    let mut bad = serde_json::to_value(leader_config(0)).unwrap();
    bad["max_steps"] = json!("many");
    let (s, body) = send(&app, "POST", "/runs", Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"][0]["field"], "max_steps");

    // A finished run takes no human input.
    let run = create(&app, &leader_config(2)).await;
    FrameReader::open(&app, &run, None).await.drain().await;
    let (s, _) = send(&app, "POST", &format!("/runs/{run}/human/message"), Some(json!({"mode": "silence"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, list) = send(&app, "GET", "/scenarios", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(list.as_array().unwrap().iter().any(|x| x["name"] == "prepare_afternoon_tea"));
}

/// Human leader: one broadcast, one targeted pair, one action per step.
#[tokio::test(flavor = "multi_thread")]
async fn human_leader_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut config = leader_config(4);
    config.team[0].is_human = true;
    config.max_steps = 2;
    let run = create(&app, &config).await;
    let base = format!("/runs/{run}/human");

    let mut reader = FrameReader::open(&app, &run, None).await;
    let mut comm_turns = 0;
    let mut chosen = Vec::new();
    let mut seen = Vec::new();
    let mut after_broadcast: Option<u64> = None;
    while let Some(f) = reader.next().await {
        seen.push(f.clone());
        if let Some(seq) = after_broadcast.take() {
            // The submitted message is the next thing on the stream after the turn frame.
            let rec = f.record().unwrap();
            assert!(f.seq > seq);
            assert!(matches!(rec, Record::Comm(ref c) if c.sender == 1), "{rec:?}");
        }
        if f.kind != FrameKind::AwaitingHuman {
            continue;
        }
        let turn = f.payload["turn_id"].as_u64().unwrap();
        let (_, manifest) = send(&app, "GET", &format!("/runs/{run}"), None).await;
        assert_eq!(manifest["status"], "awaiting_human");
        match f.payload["phase"].as_str().unwrap() {
            "communicate" => {
                let (s, _) = send(&app, "POST", &format!("{base}/action"), Some(json!({"action": "[wait]"}))).await;
                assert_eq!(s, StatusCode::CONFLICT);
                let (s, body) = send(&app, "POST", &format!("{base}/message"), Some(json!({"mode": "broadcast", "content": "line one\nline two"}))).await;
                assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
                let msg = if comm_turns == 0 {
                    json!({"mode": "broadcast", "content": "I will check the kitchen; everyone else search the bedroom.", "turn_id": turn})
                } else {
                    json!({"mode": "targeted", "payloads": [
                        {"to": 2, "content": "Agent_2, please search the bedroom."},
                        {"to": 3, "content": "Agent_3, please search the bathroom."}
                    ], "turn_id": turn})
                };
                let (s, body) = send(&app, "POST", &format!("{base}/message"), Some(msg.clone())).await;
                assert_eq!(s, StatusCode::OK, "{body}");
                let (s, _) = send(&app, "POST", &format!("{base}/message"), Some(msg)).await;
                assert_eq!(s, StatusCode::CONFLICT, "second submission for one turn");
                comm_turns += 1;
                after_broadcast = Some(f.seq);
            }
            "act" => {
                let (s, _) = send(&app, "POST", &format!("{base}/message"), Some(json!({"mode": "silence"}))).await;
                assert_eq!(s, StatusCode::CONFLICT);
                let (s, body) = send(&app, "POST", &format!("{base}/action"), Some(json!({"action": "[fly] <moon>"}))).await;
                assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
                assert_eq!(body["fields"][0]["field"], "action");
                let label = f.payload["available_actions"][0]["label"].as_str().unwrap().to_string();
                let (s, body) = send(&app, "POST", &format!("{base}/action"), Some(json!({"action": label}))).await;
                assert_eq!(s, StatusCode::OK, "{body}");
                chosen.push(label);
            }
            p => panic!("unexpected phase {p}"),
        }
    }
    assert_eq!(comm_turns, 2);
    assert_eq!(chosen.len(), 2);

    let t = Trajectory::load(&finished_artifact(&app, &run).await).unwrap();
    let sent: Vec<(Recipients, String)> = t
        .comm_records()
        .filter(|c| c.sender == 1)
        .flat_map(|c| c.messages.iter().map(|m| (m.recipients.clone(), m.content.clone())))
        .collect();
    assert_eq!(
        sent,
        vec![
            (Recipients::All, "I will check the kitchen; everyone else search the bedroom.".to_string()),
            (Recipients::Agents(vec![2]), "Agent_2, please search the bedroom.".to_string()),
            (Recipients::Agents(vec![3]), "Agent_3, please search the bathroom.".to_string()),
        ]
    );
    let acted: Vec<String> = t.action_records().filter(|a| a.agent == 1).map(|a| a.label.clone()).collect();
    assert_eq!(acted, chosen);
    let records: Vec<Record> = seen.iter().filter_map(|f| f.record()).collect();
    assert_eq!(Trajectory::from_records(records).unwrap(), t);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_submissions_have_one_winner() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut config = leader_config(6);
    config.team[0].is_human = true;
    config.max_steps = 1;
    let run = create(&app, &config).await;
    let mut reader = FrameReader::open(&app, &run, None).await;
    let mut last = 0;
    while let Some(f) = reader.next().await {
        last = f.seq;
        if f.kind == FrameKind::AwaitingHuman {
            break;
        }
    }
    let uri = format!("/runs/{run}/human/message");
    let body = json!({"mode": "silence"});
    let results = futures::future::join_all((0..8).map(|_| send(&app, "POST", &uri, Some(body.clone())))).await;
    let ok = results.iter().filter(|(s, _)| *s == StatusCode::OK).count();
    assert_eq!(ok, 1, "{results:?}");
    assert!(results.iter().all(|(s, _)| *s == StatusCode::OK || *s == StatusCode::CONFLICT));

    // Reconnect mid-run and keep going from where we left off.
    drop(reader);
    let mut reader = FrameReader::open(&app, &run, Some(last)).await;
    let next = reader.next().await.unwrap();
    assert_eq!(next.seq, last + 1);
    let mut f = Some(next);
    while let Some(frame) = f {
        if frame.kind == FrameKind::AwaitingHuman {
            let label = frame.payload["available_actions"][0]["label"].as_str().unwrap().to_string();
            send(&app, "POST", &format!("/runs/{run}/human/action"), Some(json!({"action": label}))).await;
        }
        f = reader.next().await;
    }
    finished_artifact(&app, &run).await;
}
