use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use hasod_core::api::{ApiSessionSummary, ErrorBody, SurfacePoint};
use hasod_core::numkit::RandomStream;
use hasod_core::session::{
    create_session, HasodResult, PendingRun, Response, SessionConfig, SessionPhase, SessionState,
};
use hasod_service::{router, Store};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::json;
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    bytes: Vec<u8>,
}

impl Reply {
    fn json<T: DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.bytes))
        })
    }

    fn error(&self) -> String {
        self.json::<ErrorBody>().error
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<serde_json::Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, bytes }
}

fn app(dir: &std::path::Path) -> Router {
    router(Arc::new(Store::open(dir).unwrap()), None)
}

fn truth(x: &[f64], noise: &mut RandomStream) -> f64 {
    8.0 * x[0] + 6.5 * x[1] + 3.0 * x[0] * x[1] - 2.0 * x[0] * x[0] + 2.0 * noise.next_normal()
}

async fn new_session(app: &Router, k: usize, seed: u64) -> ApiSessionSummary {
    let r = call(app, Method::POST, "/api/sessions", Some(json!({"k": k, "seed": seed}))).await;
    assert_eq!(r.status, StatusCode::CREATED);
    r.json()
}

async fn answer_current(app: &Router, id: &str, noise: &mut RandomStream) -> Vec<Response> {
    let runs: Vec<PendingRun> = call(app, Method::GET, &format!("/api/sessions/{id}/batch"), None)
        .await
        .json();
    let batch: Vec<Response> = runs
        .iter()
        .map(|p| Response { row_id: p.row_id, y: truth(&p.levels, noise) })
        .collect();
    let r = call(
        app,
        Method::POST,
        &format!("/api/sessions/{id}/responses"),
        Some(serde_json::to_value(&batch).unwrap()),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
    batch
}

#[tokio::test]
async fn create_and_list() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let s = new_session(&app, 6, 42).await;
    assert_eq!((s.k, s.pending_run_count, s.phase), (6, 15, SessionPhase::AwaitP1Responses));
    assert!(dir.path().join(format!("{}.json", s.id)).exists());

    let list: Vec<ApiSessionSummary> = call(&app, Method::GET, "/api/sessions", None).await.json();
    assert_eq!(list, vec![s.clone()]);

    let state: SessionState = call(&app, Method::GET, &format!("/api/sessions/{}", s.id), None)
        .await
        .json();
    assert_eq!(state, create_session(SessionConfig::new(6, 42)).unwrap());
}

#[tokio::test]
async fn config_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let body = json!({"k": 3, "seed": 5, "config": {"n3": 2}});
    let s: ApiSessionSummary = call(&app, Method::POST, "/api/sessions", Some(body)).await.json();
    let state: SessionState = call(&app, Method::GET, &format!("/api/sessions/{}", s.id), None)
        .await
        .json();
    assert_eq!(state.config.n3, 2);
}

#[tokio::test]
async fn malformed_requests() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let r = call(&app, Method::POST, "/api/sessions", Some(json!({"k": 1, "seed": 0}))).await;
    assert_eq!((r.status, r.error()), (StatusCode::BAD_REQUEST, "KTooSmall".into()));
    let r = call(&app, Method::POST, "/api/sessions", Some(json!({"k": "six"}))).await;
    assert_eq!((r.status, r.error()), (StatusCode::BAD_REQUEST, "Parse".into()));
    let r = call(&app, Method::POST, "/api/sessions", Some(json!({"k": 4, "seed": 0, "config": {"zzz": 1}}))).await;
    assert_eq!((r.status, r.error()), (StatusCode::BAD_REQUEST, "InvalidConfig".into()));

    let raw = Request::post("/api/sessions").body(Body::from("{\"k\":6,\"seed\":1}")).unwrap();
    let resp = app.clone().oneshot(raw).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let raw = Request::post("/api/sessions")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(app.clone().oneshot(raw).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let r = call(&app, Method::GET, "/api/sessions/nope", None).await;
    assert_eq!((r.status, r.error()), (StatusCode::NOT_FOUND, "UnknownSession".into()));
}

#[tokio::test]
async fn gated_endpoints_before_completion() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let s = new_session(&app, 4, 1).await;
    let base = format!("/api/sessions/{}", s.id);
    let r = call(&app, Method::GET, &format!("{base}/report"), None).await;
    assert_eq!((r.status, r.error()), (StatusCode::CONFLICT, "NotComplete".into()));
    let r = call(&app, Method::GET, &format!("{base}/screening"), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = call(&app, Method::GET, &format!("{base}/surface?x=0,0,0,0"), None).await;
    assert_eq!((r.status, r.error()), (StatusCode::CONFLICT, "NotAvailable".into()));
}

#[tokio::test]
async fn rejected_responses_leave_state_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let s = new_session(&app, 6, 3).await;
    let base = format!("/api/sessions/{}", s.id);
    let ok = call(&app, Method::POST, &format!("{base}/responses"), Some(json!([{"row_id": 0, "y": 1.5}]))).await;
    assert_eq!(ok.status, StatusCode::OK);
    assert_eq!(ok.json::<ApiSessionSummary>().pending_run_count, 14);

    let before = call(&app, Method::GET, &base, None).await.bytes;
    let on_disk = std::fs::read(dir.path().join(format!("{}.json", s.id))).unwrap();
    assert_eq!(before, on_disk);

    let dup = call(
        &app,
        Method::POST,
        &format!("{base}/responses"),
        Some(json!([{"row_id": 1, "y": 2.0}, {"row_id": 0, "y": 1.0}])),
    )
    .await;
    assert_eq!((dup.status, dup.error()), (StatusCode::UNPROCESSABLE_ENTITY, "DuplicateResponse".into()));
    let unknown = call(&app, Method::POST, &format!("{base}/responses"), Some(json!([{"row_id": 99, "y": 2.0}]))).await;
    assert_eq!((unknown.status, unknown.error()), (StatusCode::NOT_FOUND, "UnknownRowId".into()));
    let bad = call(&app, Method::POST, &format!("{base}/responses"), Some(json!([{"row_id": 2}]))).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);

    assert_eq!(call(&app, Method::GET, &base, None).await.bytes, before);
    assert_eq!(std::fs::read(dir.path().join(format!("{}.json", s.id))).unwrap(), on_disk);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_duplicates_resolve_to_one_success() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let s = new_session(&app, 6, 8).await;
    let uri = format!("/api/sessions/{}/responses", s.id);
    let body = json!([{"row_id": 4, "y": 0.25}]);
    let spawn = || {
        let (app, uri, body) = (app.clone(), uri.clone(), body.clone());
        tokio::spawn(async move { call(&app, Method::POST, &uri, Some(body)).await.status })
    };
    let (a, b) = (spawn(), spawn());
    let mut codes = [a.await.unwrap(), b.await.unwrap()];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::UNPROCESSABLE_ENTITY]);
}

#[tokio::test]
async fn full_session_matches_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let s = new_session(&app, 6, 21).await;
    let base = format!("/api/sessions/{}", s.id);
    let mut noise = RandomStream::new(77);
    let mut local = create_session(SessionConfig::new(6, 21)).unwrap();
    loop {
        let batch = answer_current(&app, &s.id, &mut noise).await;
        local = local.ingest_responses(&batch).unwrap();
        let list: Vec<ApiSessionSummary> = call(&app, Method::GET, "/api/sessions", None).await.json();
        let summary = &list[0];
        assert_eq!(summary.phase, local.phase);
        if local.phase == SessionPhase::AwaitP2Responses {
            let r = call(&app, Method::GET, &format!("{base}/screening"), None).await;
            assert_eq!(r.status, StatusCode::OK);
        }
        if local.phase == SessionPhase::Complete {
            break;
        }
    }
    let remote: HasodResult = call(&app, Method::GET, &format!("{base}/report"), None).await.json();
    assert_eq!(remote, local.finalize_report().unwrap());
    assert_eq!(call(&app, Method::GET, &base, None).await.bytes, local.to_canonical_json().unwrap());

    let x: Vec<String> = remote.x_star.iter().map(|v| format!("{v:e}")).collect();
    let r = call(&app, Method::GET, &format!("{base}/surface?x={}", x.join(",")), None).await;
    let p: SurfacePoint = r.json();
    assert_eq!(p.mean, remote.predicted_y);
    let r = call(&app, Method::GET, &format!("{base}/surface?x=0,0"), None).await;
    assert_eq!((r.status, r.error()), (StatusCode::BAD_REQUEST, "Shape".into()));
    let r = call(&app, Method::GET, &format!("{base}/surface?x=a,b"), None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = call(&app, Method::GET, &format!("{base}/batch"), None).await;
    assert_eq!((r.status, r.error()), (StatusCode::CONFLICT, "SessionComplete".into()));
    let r = call(&app, Method::POST, &format!("{base}/responses"), Some(json!([{"row_id": 0, "y": 1.0}]))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = app(dir.path());
    let s = new_session(&first, 5, 2).await;
    let uri = format!("/api/sessions/{}", s.id);
    call(&first, Method::POST, &format!("{uri}/responses"), Some(json!([{"row_id": 3, "y": -1.0}]))).await;
    let before = call(&first, Method::GET, &uri, None).await.bytes;
    drop(first);

    let second = app(dir.path());
    assert_eq!(call(&second, Method::GET, &uri, None).await.bytes, before);
    let list: Vec<ApiSessionSummary> = call(&second, Method::GET, "/api/sessions", None).await.json();
    assert_eq!(list[0].created_at, s.created_at);
    assert_eq!(list[0].pending_run_count, 12);
}

#[tokio::test]
async fn cors_and_static_ui() {
    let dir = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<p>ui</p>").unwrap();
    let app = router(Arc::new(Store::open(dir.path()).unwrap()), Some(ui.path().to_path_buf()));

    let req = Request::get("/api/sessions")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));

    let r = call(&app, Method::GET, "/index.html", None).await;
    assert_eq!((r.status, r.bytes.as_slice()), (StatusCode::OK, b"<p>ui</p>".as_slice()));
}
