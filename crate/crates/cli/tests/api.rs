use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use picbreeder::orchestrator::{build_agents, ExperimentConfig, RunControl, Runner, SessionHub};
use picbreeder::{Archive, SessionConfig, SharedArchive};
use picbreeder_cli::server::router;

fn hub_with(archive: Archive) -> Arc<SessionHub> {
    let config = SessionConfig {
        render_width: 16,
        render_height: 16,
        ..SessionConfig::default()
    };
    Arc::new(SessionHub::new(SharedArchive::new(archive), config, 1).unwrap())
}

fn seeded_archive(n: u64) -> Archive {
    let config = ExperimentConfig {
        sessions: n,
        parallel_agents: 5,
        pop_size: 4,
        generations: 2,
        render_size: 8,
        seed: 9,
        ..ExperimentConfig::default()
    };
    let mut runner = Runner::new(config.clone(), build_agents(&config, None).unwrap(), None).unwrap();
    runner.run(&RunControl::default()).unwrap();
    runner.into_archive()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, bytes) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn fresh_session_to_publication() {
    let app = router(hub_with(Archive::in_memory()));
    let (s, v) = call_json(&app, "POST", "/sessions", Some(json!({"origin": "fresh"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["generation"], 0);
    assert_eq!(v["color_mode"], false);
    assert_eq!(v["image_urls"].as_array().unwrap().len(), 15);
    let sid = v["id"].as_str().unwrap().to_string();

    let (s, png) = call(&app, "GET", &format!("/sessions/{sid}/images/3.png"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");

    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/publish"), Some(json!({"index": 0, "title": "early"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "publish_not_due");

    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/action"), Some(json!("ToggleColor"))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["color_mode"], true);
    for g in 0..20 {
        let body = if g == 0 {
            json!({"Select": {"indices": [0, 2], "strength": 0.8, "mode": "both"}})
        } else {
            json!({"Select": {"parents": [1]}})
        };
        let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/action"), Some(body)).await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    let (_, v) = call_json(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!((v["generation"].as_u64(), v["can_publish"].as_bool()), (Some(20), Some(true)));
    assert_eq!(v["strength"], 0.8);

    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/action"), Some(json!({"Select": {"indices": [0]}}))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("publish_required")));
    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/publish"), Some(json!({"index": 4, "title": "sunrise"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["entry_id"], 0);
    let (s, v) = call_json(&app, "POST", &format!("/sessions/{sid}/action"), Some(json!({"Select": {"indices": [0]}}))).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::CONFLICT, Some("session_finished")));

    let (s, v) = call_json(&app, "GET", "/archive/entries/0", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["title"], "sunrise");
    assert_eq!(v["color_mode"], true);
    let (s, _) = call(&app, "GET", "/archive/entries/0/image.png", None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = call_json(&app, "GET", "/archive/entries/7", None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_entry")));
}

#[tokio::test]
async fn sample_branch_rate_and_summary() {
    let app = router(hub_with(seeded_archive(120)));
    let (s, v) = call_json(&app, "GET", "/archive/sample", None).await;
    assert_eq!(s, StatusCode::OK);
    let mut seen = std::collections::HashSet::new();
    for c in ["top_rated", "best_new", "most_branched", "latest", "random"] {
        let items = v[c].as_array().unwrap();
        assert_eq!(items.len(), 20, "{c}");
        for it in items {
            assert!(seen.insert(it["id"].as_u64().unwrap()), "category overlap");
        }
    }
    let target = v["latest"][0]["id"].as_u64().unwrap();
    let (s, sv) = call_json(&app, "POST", "/sessions", Some(json!({"origin": {"branch": target}, "user": "ann"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(sv["origin"]["parent"], target);
    let (_, e) = call_json(&app, "GET", &format!("/archive/entries/{target}"), None).await;
    assert!(e["branch_count"].as_u64().unwrap() >= 1);

    let (s, lineage) = call_json(&app, "GET", &format!("/archive/entries/{target}/lineage"), None).await;
    assert_eq!(s, StatusCode::OK);
    let chain = lineage.as_array().unwrap();
    assert_eq!(chain.last().unwrap()["id"], target);
    assert!(chain[0]["parent"].is_null());

    let (s, r) = call_json(&app, "POST", "/ratings", Some(json!({"scores": {"0": 5, "1": 9}, "rater": "ann"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["applied"], 1);
    assert_eq!(r["rejected"].as_array().unwrap().len(), 1);

    let (s, m) = call_json(&app, "GET", "/metrics/summary", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(m["size"], 120);
    assert!(m["j1"].as_f64().is_some());

    let (s, v) = call_json(&app, "GET", "/sessions/nope", None).await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));
}

#[tokio::test]
async fn empty_archive_sample_is_empty() {
    let app = router(hub_with(Archive::in_memory()));
    let (s, v) = call_json(&app, "GET", "/archive/sample", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["top_rated"].as_array().unwrap().is_empty());
    let (s, _) = call_json(&app, "POST", "/sessions", Some(json!({"origin": {"branch": 0}}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
