//! The HTTP archival client against a local stand-in for a Software
//! Heritage save-request endpoint.

mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::Router;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::Json;
use common::{clock, engine, snapshot, start, Client};
use serde_json::{Value, json};
use softlink_core::lifecycle::{AuthorDecision, LifecycleEngine, LifecycleState};
use softlink_gateway::config::ArchivalSettings;
use softlink_gateway::http::HttpArchivalClient;

const SNAPSHOT: &str = "swh:1:snp:c7c108084bc0bf3d81436bf980b46e98bd338453";

#[derive(Default)]
struct Archive {
    /// Save requests to answer with 503 before accepting.
    unavailable: u32,
    saves: Vec<String>,
    polls: u32,
    auth: Vec<Option<String>>,
}

type Shared = Arc<Mutex<Archive>>;

async fn save(State(s): State<Shared>, Path(origin): Path<String>, headers: axum::http::HeaderMap) -> (StatusCode, Json<Value>) {
    let mut a = s.lock().unwrap();
    a.auth.push(headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string));
    if a.unavailable > 0 {
        a.unavailable -= 1;
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "busy"})));
    }
    a.saves.push(origin.clone());
    let id = a.saves.len();
    (
        StatusCode::OK,
        Json(json!({
            "id": id,
            "origin_url": origin,
            "save_request_status": "accepted",
            "save_task_status": "pending",
            "snapshot_swhid": null,
        })),
    )
}

async fn status(State(s): State<Shared>, Path(id): Path<String>) -> Json<Value> {
    let mut a = s.lock().unwrap();
    a.polls += 1;
    let done = a.polls >= 2;
    Json(json!({
        "id": id.parse::<u64>().unwrap(),
        "save_request_status": "accepted",
        "save_task_status": if done { "succeeded" } else { "running" },
        "snapshot_swhid": if done { Value::from(SNAPSHOT) } else { Value::Null },
    }))
}

fn serve_archive(archive: Shared) -> (String, std::thread::JoinHandle<()>, tokio::sync::oneshot::Sender<()>) {
    let app = Router::new()
        .route("/api/1/origin/save/git/url/{origin}/", post(save))
        .route("/api/1/origin/save/{id}/", get(status))
        .with_state(archive);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
        });
    });
    (base, thread, stop)
}

fn settings(base: &str) -> ArchivalSettings {
    let mut s: ArchivalSettings = toml::from_str("").unwrap();
    s.base_url = base.to_string();
    s.auth_token = Some("secret".into());
    s
}

fn validated(engine: &LifecycleEngine, name: &str, url: Option<&str>) -> String {
    let (r, _) = engine.create_record("paper-1", snapshot(name, url)).unwrap();
    let (_, token, _) = engine.manager_approve(&r.record_id).unwrap();
    engine.author_decision(&token.token, AuthorDecision::Confirm).unwrap();
    r.record_id.clone()
}

#[test]
fn save_request_with_retry_and_polling() {
    let archive: Shared = Arc::new(Mutex::new(Archive {
        unavailable: 1,
        ..Archive::default()
    }));
    let (base, thread, stop) = serve_archive(archive.clone());
    let client = HttpArchivalClient::new(&settings(&base), Duration::from_secs(10));
    let engine = engine(clock());
    let id = validated(&engine, "TreeCount", Some("https://github.com/forest-lab/treecount"));

    let record = engine.register_and_archive(&id, &client).unwrap();
    assert_eq!(record.state, LifecycleState::Archived);
    assert_eq!(record.swhid.as_ref().unwrap().to_string(), SNAPSHOT);
    {
        let a = archive.lock().unwrap();
        assert_eq!(a.saves, ["https://github.com/forest-lab/treecount"]);
        assert_eq!(a.auth.len(), 2);
        assert!(a.auth.iter().all(|h| h.as_deref() == Some("Bearer secret")));
        assert_eq!(a.polls, 2);
    }
    let _ = stop.send(());
    thread.join().unwrap();
}

#[test]
fn failures_are_recorded_and_retryable_through_the_api() {
    let archive: Shared = Arc::new(Mutex::new(Archive {
        unavailable: 10,
        ..Archive::default()
    }));
    let (base, thread, stop) = serve_archive(archive.clone());
    let client = Arc::new(HttpArchivalClient::new(&settings(&base), Duration::from_secs(10)));
    let engine = engine(clock());
    let with_repo = validated(&engine, "TreeCount", Some("https://github.com/forest-lab/treecount"));
    let without_repo = validated(&engine, "FieldNotes", None);
    let server = start(engine.clone(), client);
    let http = Client::new(&server);

    // three 503s in a row exhaust the attempts
    let r = http.post(&format!("/api/records/{with_repo}/register"), "").json();
    assert_eq!(r["state"], "RegistrationRequested");
    assert!(r["archival_failure"].as_str().unwrap().contains("503"), "{r}");
    assert_eq!(archive.lock().unwrap().auth.len(), 3);

    archive.lock().unwrap().unavailable = 0;
    let r = http.post(&format!("/api/records/{with_repo}/register"), "").json();
    assert_eq!(r["state"], "Archived");
    assert_eq!(r["swhid"], SNAPSHOT);
    assert!(r["archival_failure"].is_null());

    // nothing to point a save request at
    let r = http.post(&format!("/api/records/{without_repo}/register"), "").json();
    assert_eq!(r["state"], "RegistrationRequested");
    assert!(r["archival_failure"].as_str().unwrap().contains("public origins"), "{r}");
    let kinds: Vec<&str> = r["history"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(&kinds[kinds.len() - 2..], ["registration_sent", "archival_failed"]);

    drop(server);
    let _ = stop.send(());
    thread.join().unwrap();
}
