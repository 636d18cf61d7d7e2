#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use futures::StreamExt;
use http_body_util::BodyExt;
use orgsim_cli::commands::Workspace;
use orgsim_cli::server::{router, AppState, EventFrame};
use orgsim_core::config::ExperimentConfig;
use orgsim_core::orchestrator::EpisodeConfig;
use serde_json::Value;
use tower::ServiceExt;

pub const LEADER_PROMPT: &str = "Agent 1 is the leader to coordinate the task.";

pub fn app(out_dir: &Path) -> Router {
    let cfg = ExperimentConfig::for_episode(EpisodeConfig::uniform("prepare_afternoon_tea", 0, 3, "leaderful"));
    router(AppState::new(Workspace::new(cfg).unwrap(), out_dir.to_path_buf()))
}

pub async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

/// An open event stream, parsed frame by frame.
pub struct FrameReader {
    body: axum::body::BodyDataStream,
    buf: String,
}

impl FrameReader {
    pub async fn open(app: &Router, run: &str, last_event_id: Option<u64>) -> FrameReader {
        let mut req = Request::builder().uri(format!("/runs/{run}/events"));
        if let Some(id) = last_event_id {
            req = req.header("Last-Event-ID", id.to_string());
        }
        let resp = app.clone().oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
        FrameReader {
            body: resp.into_body().into_data_stream(),
            buf: String::new(),
        }
    }

    /// Next frame, or `None` when the stream ends.
    pub async fn next(&mut self) -> Option<EventFrame> {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let mut id = None;
                let mut event = None;
                let mut data = String::new();
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("id:") {
                        id = Some(v.trim().parse::<u64>().unwrap());
                    } else if let Some(v) = line.strip_prefix("event:") {
                        event = Some(v.trim().to_string());
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.strip_prefix(' ').unwrap_or(v));
                    }
                }
                if data.is_empty() {
                    continue;
                }
                let frame: EventFrame = serde_json::from_str(&data).unwrap();
                assert_eq!(id, Some(frame.seq));
                assert_eq!(event.as_deref(), serde_json::to_value(frame.kind).unwrap().as_str());
                return Some(frame);
            }
            let chunk = tokio::time::timeout(std::time::Duration::from_secs(20), self.body.next())
                .await
                .expect("stream stalled")?
                .unwrap();
            self.buf.push_str(std::str::from_utf8(&chunk).unwrap());
        }
    }

    pub async fn drain(&mut self) -> Vec<EventFrame> {
        let mut out = Vec::new();
        while let Some(f) = self.next().await {
            out.push(f);
        }
        out
    }
}

pub async fn create(app: &Router, config: &EpisodeConfig) -> String {
    let (status, body) = send(app, "POST", "/runs", Some(serde_json::to_value(config).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert!(matches!(body["status"].as_str(), Some("pending" | "running" | "awaiting_human" | "done")));
    body["run_id"].as_str().unwrap().to_string()
}
