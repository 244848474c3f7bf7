use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use binlabel_core::oracle_sim::make_synthetic;
use binlabel_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(AppState::new(ServiceConfig::default()))
}

fn jsonl(classes: usize, per_class: usize) -> String {
    let ds = make_synthetic(classes, per_class, 8, 8.0, 3).unwrap();
    let mut out = Vec::new();
    ds.write_jsonl(&mut out).unwrap();
    String::from_utf8(out).unwrap()
}

fn truth(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .map(|v| (v["id"].as_str().unwrap().to_string(), v["label"].as_str().unwrap().to_string()))
        .collect()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let request = match body {
        Some(b) => request.body(Body::from(b.to_string())).unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

struct Live {
    app: Router,
    id: String,
    truth: BTreeMap<String, String>,
}

impl Live {
    async fn create(classes: usize, per_class: usize, config: Value) -> (Self, Vec<String>) {
        let app = app();
        let text = jsonl(classes, per_class);
        let body = json!({"dataset": {"inline": {"name": "toy", "jsonl": text}}, "config": config});
        let (status, value) = call(&app, "POST", "/sessions", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{value}");
        let ids = value["bootstrap_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
        let live = Live {
            app,
            id: value["session_id"].as_str().unwrap().to_string(),
            truth: truth(&text),
        };
        (live, ids)
    }

    async fn bootstrap(&self, ids: &[String]) -> Value {
        let labels: BTreeMap<&String, &String> = ids.iter().map(|id| (id, &self.truth[id])).collect();
        let (status, value) = self.post("labels", json!(labels)).await;
        assert_eq!(status, StatusCode::OK, "{value}");
        value
    }

    async fn post(&self, tail: &str, body: Value) -> (StatusCode, Value) {
        call(&self.app, "POST", &format!("/sessions/{}/{tail}", self.id), Some(body)).await
    }

    async fn get(&self, tail: &str) -> (StatusCode, Value) {
        call(&self.app, "GET", &format!("/sessions/{}/{tail}", self.id), None).await
    }

    /// Corrects `count` entries of `batch` to a wrong class and accepts the rest.
    async fn mistake(&self, batch: &Value, count: usize) -> Value {
        let classes: Vec<String> = {
            let mut c: Vec<String> = self.truth.values().cloned().collect();
            c.sort();
            c.dedup();
            c
        };
        let corrections: BTreeMap<String, String> = batch["entries"]
            .as_array()
            .unwrap()
            .iter()
            .take(count)
            .map(|e| {
                let predicted = e["predicted_class"].as_str().unwrap();
                let other = classes.iter().find(|c| c.as_str() != predicted).unwrap();
                (e["sample_id"].as_str().unwrap().to_string(), other.clone())
            })
            .collect();
        let (status, value) = self.post("labels", json!(corrections)).await;
        assert_eq!(status, StatusCode::OK, "{value}");
        value
    }
}

#[tokio::test]
async fn health_answers() {
    let (status, value) = call(&app(), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(value["status"], "ok");
}

#[tokio::test]
async fn create_returns_thirty_bootstrap_ids() {
    let (live, ids) = Live::create(3, 40, json!({})).await;
    assert_eq!(ids.len(), 30);
    let (status, value) = live.get("").await;
    assert_eq!(status, StatusCode::NOT_FOUND, "trailing slash is not a route: {value}");
    let (status, value) = call(&live.app, "GET", &format!("/sessions/{}", live.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(value["phase"], "Bootstrap");
    assert_eq!(value["unlabelled"], 120);
}

#[tokio::test]
async fn oversized_bootstrap_is_a_bad_request() {
    let body = json!({"dataset": {"inline": {"name": "toy", "jsonl": jsonl(2, 10)}}, "config": {"bootstrap_size": 21}});
    let (status, value) = call(&app(), "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(value["field"], "config.bootstrap_size");
}

#[tokio::test]
async fn malformed_config_names_the_field() {
    let text = jsonl(2, 10);
    for (config, field) in [
        (json!({"batch_size": "thirty"}), "config.batch_size"),
        (json!({"train_config": {"epochs": -1}}), "config.train_config.epochs"),
        (json!({"sort_direction": "Sideways"}), "config.sort_direction"),
        (json!({"batch_size": 0}), "config.batch_size"),
    ] {
        let body = json!({"dataset": {"inline": {"name": "toy", "jsonl": text}}, "config": config});
        let (status, value) = call(&app(), "POST", "/sessions", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{value}");
        assert_eq!(value["field"], field, "{value}");
    }
    let body = json!({"dataset": {"inline": {"name": "toy", "jsonl": text}}, "config": {"batch": 3}});
    let (status, value) = call(&app(), "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(value["message"].as_str().unwrap().contains("batch"), "{value}");
}

#[tokio::test]
async fn dataset_errors_are_unprocessable() {
    for text in [
        "{\"id\":\"a\",\"features\":[1.0]}\n{\"id\":\"a\",\"features\":[2.0]}\n".to_string(),
        "{\"id\":\"a\",\"features\":[NaN]}\n".to_string(),
        "{\"id\":\"a\",\"features\":[1.0]}\n{\"id\":\"b\",\"features\":[1.0,2.0]}\n".to_string(),
        "not json\n".to_string(),
    ] {
        let body = json!({"dataset": {"inline": {"name": "bad", "jsonl": text}}});
        let (status, value) = call(&app(), "POST", "/sessions", Some(body)).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{text}: {value}");
    }
    let body = json!({"dataset": {"path": "/nonexistent/data.jsonl"}});
    let (status, _) = call(&app(), "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn relative_paths_use_the_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.jsonl"), jsonl(2, 20)).unwrap();
    let app = router(AppState::new(ServiceConfig {
        data_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    }));
    let (status, value) = call(&app, "POST", "/sessions", Some(json!({"dataset": {"path": "toy.jsonl"}}))).await;
    assert_eq!(status, StatusCode::CREATED, "{value}");
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let app = app();
    for (method, tail, body) in [
        ("GET", "", None),
        ("GET", "/batch", None),
        ("GET", "/metrics", None),
        ("GET", "/snapshot", None),
        ("POST", "/labels", Some(json!({}))),
        ("POST", "/classes", Some(json!({"class_label": "x"}))),
        ("DELETE", "", None),
    ] {
        let (status, value) = call(&app, method, &format!("/sessions/nope{tail}"), body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {tail}");
        assert_eq!(value["error"], "not_found");
    }
}

#[tokio::test]
async fn phase_mismatches_conflict() {
    let (live, ids) = Live::create(3, 40, json!({})).await;
    let (status, _) = live.get("batch").await;
    assert_eq!(status, StatusCode::CONFLICT, "batch during bootstrap");

    let outcome = live.bootstrap(&ids).await;
    assert_eq!(outcome["phase"], "BulkEdit");
    let (status, value) = live.post("labels", json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT, "labels before a batch: {value}");
    assert_eq!(value["error"], "phase");

    let (status, batch) = live.get("batch").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(batch["phase"], "AwaitCorrections");
    let (status, _) = live.get("batch").await;
    assert_eq!(status, StatusCode::CONFLICT, "batch while awaiting corrections");
}

#[tokio::test]
async fn invalid_labels_are_rejected_without_mutation() {
    let (live, ids) = Live::create(3, 40, json!({})).await;
    let mut labels: BTreeMap<String, String> = ids.iter().map(|id| (id.clone(), live.truth[id].clone())).collect();
    labels.insert("ghost".into(), "class_0".into());
    let (status, _) = live.post("labels", json!(labels)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, status_body) = call(&live.app, "GET", &format!("/sessions/{}", live.id), None).await;
    assert_eq!(status_body["phase"], "Bootstrap");
    assert_eq!(status_body["labelled"], 0);
}

#[tokio::test]
async fn sixteen_mistakes_send_the_session_back_to_bootstrap() {
    let (live, ids) = Live::create(3, 60, json!({})).await;
    live.bootstrap(&ids).await;
    let (_, batch) = live.get("batch").await;
    let outcome = live.mistake(&batch, 16).await;
    assert_eq!(outcome["phase"], "Bootstrap");
    assert_eq!(outcome["outcome"]["kind"], "TooManyMistakes");
    assert_eq!(outcome["bootstrap_request"].as_array().unwrap().len(), 30);
}

#[tokio::test]
async fn filling_the_buffer_retrains() {
    let (live, ids) = Live::create(3, 100, json!({})).await;
    live.bootstrap(&ids).await;
    let mut outcome = Value::Null;
    for _ in 0..4 {
        let (_, batch) = live.get("batch").await;
        outcome = live.mistake(&batch, 15).await;
    }
    assert_eq!(outcome["outcome"]["kind"], "BufferFull", "{outcome}");
    assert!(!outcome["outcome"]["retrained_classes"].as_array().unwrap().is_empty());
    assert_eq!(outcome["training"]["trigger"], "buffer_full");
    let (_, metrics) = live.get("metrics").await;
    assert_eq!(metrics["training_series"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn metrics_track_iterations_and_match_the_final_report() {
    let (live, ids) = Live::create(2, 45, json!({"timing": "logical"})).await;
    live.bootstrap(&ids).await;
    let (_, batch) = live.get("batch").await;
    live.mistake(&batch, 0).await;
    let (_, batch) = live.get("batch").await;
    live.mistake(&batch, 1).await;
    let (_, metrics) = live.get("metrics").await;
    assert_eq!(metrics["iteration_series"].as_array().unwrap().len(), 3);
    assert_eq!(metrics["training_series"].as_array().unwrap().len(), 1);
    assert_eq!(metrics["finalized"], false);

    let (_, batch) = live.get("batch").await;
    assert_eq!(batch["entries"].as_array().unwrap().len(), 0);
    assert_eq!(batch["phase"], "Done");
    let (status, _) = live.post("labels", json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT, "labels after Done");

    let (_, metrics) = live.get("metrics").await;
    let (status, report) = live.get("report").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["finalized"], true);
    assert_eq!(metrics["model_contribution_percent"], report["model_contribution_percent"]);
}

#[tokio::test]
async fn classes_can_be_added_once() {
    let (live, ids) = Live::create(2, 30, json!({})).await;
    live.bootstrap(&ids).await;
    let (status, value) = live.post("classes", json!({"class_label": "zebra"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(value["classes"], json!(["class_0", "class_1", "zebra"]));
    assert_eq!(value["buffer_capacity"], 60);
    let (status, value) = live.post("classes", json!({"class_label": "zebra"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(value["error"], "duplicate_class");
    let (status, _) = live.post("classes", json!({"class_label": " "})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, value) = live.post("classes", json!({"label": "x"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{value}");
}

#[tokio::test]
async fn snapshots_restore_into_a_new_session() {
    let (live, ids) = Live::create(2, 40, json!({"timing": "logical"})).await;
    live.bootstrap(&ids).await;
    let (_, snapshot) = live.get("snapshot").await;
    let text = jsonl(2, 40);
    let body = json!({"dataset": {"inline": {"name": "toy", "jsonl": text}}, "snapshot": snapshot});
    let (status, restored) = call(&live.app, "POST", "/sessions/restore", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{restored}");
    assert_ne!(restored["session_id"], json!(live.id));
    assert_eq!(restored["phase"], "BulkEdit");
    assert_eq!(restored["labelled"], 30);

    let wrong = json!({"dataset": {"inline": {"name": "toy", "jsonl": jsonl(2, 41)}}, "snapshot": snapshot});
    let (status, _) = call(&live.app, "POST", "/sessions/restore", Some(wrong)).await;
    assert!(status.is_client_error(), "fingerprint mismatch gave {status}");
}

#[tokio::test]
async fn async_submissions_are_polled() {
    let app = app();
    let text = jsonl(2, 40);
    let body = json!({"dataset": {"inline": {"name": "toy", "jsonl": text}}, "async_training": true});
    let (_, created) = call(&app, "POST", "/sessions", Some(body)).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let labels_truth = truth(&text);
    let labels: BTreeMap<&str, &String> = created["bootstrap_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .map(|id| (id, &labels_truth[id]))
        .collect();

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/labels"), Some(json!({"ghost": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "invalid labels fail before 202");

    let (status, accepted) = call(&app, "POST", &format!("/sessions/{id}/labels"), Some(json!(labels))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(accepted["submission"], 1);
    let mut status_body = Value::Null;
    for _ in 0..1000 {
        let (_, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        status_body = body;
        if status_body["training"] == false && status_body["completed_submissions"] == 1 {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    }
    assert_eq!(status_body["training"], false);
    assert_eq!(status_body["phase"], "BulkEdit");
    assert_eq!(status_body["last_outcome"]["phase"], "BulkEdit");
    assert_eq!(status_body["last_outcome"]["training"]["trigger"], "bootstrap");
}

#[tokio::test]
async fn deleted_sessions_are_gone() {
    let (live, _) = Live::create(2, 20, json!({})).await;
    let (status, _) = call(&live.app, "GET", "/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&live.app, "DELETE", &format!("/sessions/{}", live.id), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&live.app, "GET", &format!("/sessions/{}", live.id), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn samples_show_thumbnails_and_user_labels_only() {
    let app = app();
    let text = "{\"id\":\"a\",\"features\":[1.0],\"label\":\"x\",\"thumbnail_url\":\"http://t/a.png\"}\n\
                {\"id\":\"b\",\"features\":[2.0],\"label\":\"y\"}\n";
    let body = json!({"dataset": {"inline": {"name": "thumbs", "jsonl": text}}, "config": {"bootstrap_size": 1, "batch_size": 2, "mistake_threshold": 1}});
    let (status, created) = call(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let id = created["session_id"].as_str().unwrap();
    let first = created["bootstrap_ids"][0].as_str().unwrap().to_string();

    let (status, view) = call(&app, "GET", &format!("/sessions/{id}/samples/a"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view, json!({"sample_id": "a", "thumbnail_url": "http://t/a.png", "label": null}));

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/labels"), Some(json!({&first: "mine"}))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, view) = call(&app, "GET", &format!("/sessions/{id}/samples/{first}"), None).await;
    assert_eq!(view["label"], "mine");
    let other = if first == "a" { "b" } else { "a" };
    let (_, view) = call(&app, "GET", &format!("/sessions/{id}/samples/{other}"), None).await;
    assert_eq!(view["label"], Value::Null, "truth labels stay hidden");

    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/samples/zzz"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
