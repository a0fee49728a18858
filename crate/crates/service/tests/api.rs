use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use anon_core::detect::{DetectError, DetectorConfig, LabelRequest, LabelResponse, LabelService, ResponseSentence};
use anon_core::store::ProjectStore;
use anon_core::uniformize::UniformizeConfig;
use anon_service::api::{router, AppState};

const RULING: &str = "Urteil vom 3. März 2020\n\
Hans Meier, Beschwerdeführer,\n\
gegen\n\
Zurich Insurance Group, Beschwerdegegnerin.\n\
Sachverhalt:\n\
Hans Meier verlangte von der Zurich Insurance Group Leistungen. Später klagte Hans Meier erneut.";

struct Down;

impl LabelService for Down {
    fn label(&self, _: &LabelRequest) -> Result<LabelResponse, DetectError> {
        Err(DetectError::DetectorUnavailable("connection refused".into()))
    }
}

/// Tags every "Meier" token as a person.
struct Meier;

impl LabelService for Meier {
    fn label(&self, req: &LabelRequest) -> Result<LabelResponse, DetectError> {
        Ok(LabelResponse {
            sentences: req
                .sentences
                .iter()
                .map(|s| ResponseSentence {
                    labels: s
                        .tokens
                        .iter()
                        .map(|t| {
                            if t == "Meier" {
                                "B-PER".to_string()
                            } else {
                                "O".to_string()
                            }
                        })
                        .collect(),
                    confidences: Vec::new(),
                })
                .collect(),
        })
    }
}

fn app(dir: &std::path::Path, service: Option<Arc<dyn LabelService>>) -> Router {
    let store = ProjectStore::open(dir).unwrap();
    let mut state = AppState::new(store, DetectorConfig::default(), UniformizeConfig::default())
        .with_clock(|| Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap());
    if let Some(s) = service {
        state = state.with_label_service(s);
    }
    router(state)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let json = serde_json::from_str(&text).unwrap_or(Value::Null);
    (status, json, text)
}

async fn create(app: &Router) -> Value {
    let (s, body, _) = call(
        app,
        Method::POST,
        "/documents",
        Some(json!({"id": "r1", "language": "de", "text": RULING})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{body}");
    body
}

fn starts(v: &Value) -> Vec<u64> {
    v["suggestions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["entity"]["span"][0].as_u64().unwrap())
        .collect()
}

#[tokio::test]
async fn create_and_fetch() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let created = create(&app).await;
    assert_eq!(created["version"], 0);
    let (s, got, _) = call(&app, Method::GET, "/documents/r1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(got["document"]["text"], RULING);
    let (s, _, _) = call(
        &app,
        Method::POST,
        "/documents",
        Some(json!({"id": "r1", "language": "de", "text": "x"})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    for uri in [
        "/documents/nope",
        "/documents/nope/suggestions",
        "/documents/nope/report",
        "/documents/..%2Fetc",
    ] {
        let (s, body, _) = call(&app, Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"], "not_found");
    }
    let (s, _, _) = call(
        &app,
        Method::POST,
        "/suggestions/nope-0001/decision",
        Some(json!({"decision": "accept", "version": 0})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn validation_errors_are_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    for body in [
        json!({"language": "xx", "text": "Hans"}),
        json!({"language": "de", "text": "   "}),
        json!({"language": "de"}),
        json!({"language": "de", "text": "Hans", "colour": 1}),
    ] {
        let (s, resp, _) = call(&app, Method::POST, "/documents", Some(body.clone())).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {resp}");
        assert!(resp["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    create(&app).await;
    let (s, _, _) = call(&app, Method::POST, "/documents/r1/detect?detectors=telepathy", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _, _) = call(&app, Method::GET, "/documents/r1/export?format=pdf", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _, _) = call(
        &app,
        Method::POST,
        "/documents/r1/manual-span",
        Some(json!({"start": 5, "end": 5, "label": "PER", "version": 0})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn detect_returns_suggestions_in_document_order() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    create(&app).await;
    let (s, body, _) = call(
        &app,
        Method::POST,
        "/documents/r1/detect?detectors=regex,conventional",
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["version"], 1);
    let st = starts(&body);
    assert_eq!(st.len(), 5);
    assert!(st.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(body["added"].as_array().unwrap().len(), 5);
    assert_eq!(body["suggestions"][0]["id"], "r1-0000");
    assert_eq!(body["suggestions"][0]["entity"]["surface"], "Hans Meier");
    assert_eq!(body["suggestions"][0]["status"], "pending");

    let (_, list, _) = call(&app, Method::GET, "/documents/r1/suggestions", None).await;
    assert_eq!(list["version"], 1);
    assert_eq!(starts(&list), st);

    // running again adds nothing new
    let (_, again, _) = call(
        &app,
        Method::POST,
        "/documents/r1/detect?detectors=conventional&version=1",
        None,
    )
    .await;
    assert_eq!(again["version"], 2);
    assert_eq!(again["added"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn stale_versions_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    create(&app).await;
    call(&app, Method::POST, "/documents/r1/detect?detectors=conventional", None).await;
    let (s, body, _) = call(
        &app,
        Method::POST,
        "/suggestions/r1-0000/decision",
        Some(json!({"decision": "accept", "version": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["version"], 2);
    assert_eq!(body["suggestion"]["status"], "accepted");

    let (s, body, _) = call(
        &app,
        Method::POST,
        "/suggestions/r1-0001/decision",
        Some(json!({"decision": "reject", "version": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"], "version_conflict");
    let (s, _, _) = call(&app, Method::POST, "/documents/r1/detect?version=0", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _, _) = call(&app, Method::POST, "/documents/r1/uniformize?version=1", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn manual_span_overlapping_accepted_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    create(&app).await;
    call(&app, Method::POST, "/documents/r1/detect?detectors=conventional", None).await;
    call(
        &app,
        Method::POST,
        "/suggestions/r1-0000/decision",
        Some(json!({"decision": "accept", "version": 1})),
    )
    .await;
    // "Meier" inside the accepted "Hans Meier"
    let start = RULING.find("Hans Meier").unwrap() + 5;
    let (s, body, _) = call(
        &app,
        Method::POST,
        "/documents/r1/manual-span",
        Some(json!({"start": start, "end": start + 5, "label": "PER", "version": 2})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"], "overlap_conflict");

    // "Urteil" is free
    let (s, body, _) = call(
        &app,
        Method::POST,
        "/documents/r1/manual-span",
        Some(json!({"start": 0, "end": 6, "label": "MISC", "replacement": "[X]", "version": 2, "actor": "pl"})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{body}");
    assert_eq!(body["version"], 3);
    let id = body["added"][0].as_str().unwrap();
    let manual = body["suggestions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["id"] == id)
        .unwrap();
    assert_eq!(manual["status"], "accepted");
    assert_eq!(manual["replacement"], "[X]");
    assert_eq!(manual["entity"]["source"], "manual");
}

#[tokio::test]
async fn export_after_accepting_all() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    create(&app).await;
    let (_, body, _) = call(&app, Method::POST, "/documents/r1/detect?detectors=conventional", None).await;
    let mut version = body["version"].as_u64().unwrap();
    for s in body["suggestions"].as_array().unwrap() {
        let uri = format!("/suggestions/{}/decision", s["id"].as_str().unwrap());
        let (st, r, _) = call(
            &app,
            Method::POST,
            &uri,
            Some(json!({"decision": "accept", "version": version})),
        )
        .await;
        assert_eq!(st, StatusCode::OK, "{r}");
        version = r["version"].as_u64().unwrap();
    }
    let (s, _, text) = call(&app, Method::GET, "/documents/r1/export", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(!text.contains("Meier") && !text.contains("Zurich"), "{text}");
    assert_eq!(text.matches("A.________").count(), 3, "{text}");
    assert_eq!(text.matches("B.________").count(), 2, "{text}");
    assert!(text.starts_with("Urteil vom 3. März 2020\nA.________, Beschwerdeführer,"));

    let (s, _, html) = call(&app, Method::GET, "/documents/r1/export?format=html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(html.matches("data-status=\"accepted\"").count(), 5, "{html}");

    let (_, report, _) = call(&app, Method::GET, "/documents/r1/report", None).await;
    assert_eq!(report["by_status"]["accepted"], 5);
    assert_eq!(report["version"], version);
}

#[tokio::test]
async fn rejected_surfaces_stay_in_export() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    create(&app).await;
    call(&app, Method::POST, "/documents/r1/detect?detectors=conventional", None).await;
    call(
        &app,
        Method::POST,
        "/suggestions/r1-0000/decision",
        Some(json!({"decision": "reject", "version": 1})),
    )
    .await;
    let (_, _, text) = call(&app, Method::GET, "/documents/r1/export", None).await;
    assert_eq!(text, RULING);
}

#[tokio::test]
async fn uniformize_propagates_model_detections() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(Arc::new(Meier)));
    create(&app).await;
    let (s, body, _) = call(&app, Method::POST, "/documents/r1/detect?detectors=model", None).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(starts(&body).len(), 3);
    let (s, body, _) = call(
        &app,
        Method::POST,
        "/documents/r1/manual-span",
        Some(json!({"start": 0, "end": 6, "label": "MISC", "version": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{body}");
    let (s, body, _) = call(&app, Method::POST, "/documents/r1/uniformize", None).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    // nothing else reads "Urteil"; every "Meier" is already covered
    assert_eq!(body["added"].as_array().unwrap().len(), 0);
    assert_eq!(body["version"], 3);
}

#[tokio::test]
async fn unavailable_detector_is_502_with_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some(Arc::new(Down)));
    create(&app).await;
    let (s, body, _) = call(
        &app,
        Method::POST,
        "/documents/r1/detect?detectors=conventional,model",
        None,
    )
    .await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
    assert_eq!(body["partial"], true);
    assert_eq!(body["failures"][0]["detector"], "model");
    assert_eq!(starts(&body).len(), 5);
    let (_, list, _) = call(&app, Method::GET, "/documents/r1/suggestions", None).await;
    assert_eq!(list["version"], 1);
}

#[tokio::test]
async fn replacement_override_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = app(dir.path(), None);
        create(&app).await;
        call(&app, Method::POST, "/documents/r1/detect?detectors=conventional", None).await;
        let (s, body, _) = call(
            &app,
            Method::POST,
            "/documents/r1/replacement",
            Some(json!({"surface": "Hans Meier", "replacement": "X.", "version": 1})),
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{body}");
        call(
            &app,
            Method::POST,
            "/suggestions/r1-0000/decision",
            Some(json!({"decision": "accept", "version": 2, "actor": "pl"})),
        )
        .await;
    }
    // a fresh service over the same directory sees every decision
    let app = app(dir.path(), None);
    let (_, p, _) = call(&app, Method::GET, "/documents/r1", None).await;
    assert_eq!(p["version"], 3);
    assert_eq!(p["audit"].as_array().unwrap().len(), 3);
    assert_eq!(p["suggestions"][0]["decided_by"], "pl");
    assert_eq!(p["suggestions"][0]["decided_at"], "2024-05-01T12:00:00Z");
    let (_, _, text) = call(&app, Method::GET, "/documents/r1/export", None).await;
    assert!(text.contains("\nX., Beschwerdeführer"), "{text}");
}

#[tokio::test]
async fn json_content_type_required() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let req = Request::post("/documents").body(Body::from("{}")).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
}

#[tokio::test]
async fn openapi_lists_routes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (s, doc, _) = call(&app, Method::GET, "/openapi.json", None).await;
    assert_eq!(s, StatusCode::OK);
    for path in [
        "/documents",
        "/documents/{id}",
        "/documents/{id}/detect",
        "/documents/{id}/uniformize",
        "/documents/{id}/suggestions",
        "/suggestions/{id}/decision",
        "/documents/{id}/manual-span",
        "/documents/{id}/export",
        "/documents/{id}/report",
    ] {
        assert!(doc["paths"].get(path).is_some(), "{path}");
    }
}
