use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use maptrix_server::{router, ServiceConfig, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const BOUNDARY: &str = "maptrix-test-boundary";

fn multipart(fields: &[(&str, &str)]) -> Body {
    let mut body = String::new();
    for (name, value) in fields {
        body.push_str(&format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n{value}\r\n"
        ));
    }
    body.push_str(&format!("--{BOUNDARY}--\r\n"));
    Body::from(body)
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn json_of(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, bytes) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn upload(fields: &[(&str, &str)]) -> Request<Body> {
    Request::post("/datasets")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(multipart(fields))
        .unwrap()
}

fn put_selection(id: &str, body: Value) -> Request<Body> {
    Request::put(format!("/sessions/{id}/selection"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn app() -> axum::Router {
    router(Arc::new(Store::new(ServiceConfig::default())))
}

async fn au_session(app: &axum::Router) -> (String, String) {
    let (status, created) = json_of(app, upload(&[("flows", &fixture("au.csv")), ("boundaries", &fixture("au.geojson"))])).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    (
        created["session"].as_str().unwrap().to_string(),
        created["layout_hash"].as_str().unwrap().to_string(),
    )
}

fn count_ids(svg: &str, prefix: &str, tag: &str) -> usize {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    doc.descendants()
        .filter(|n| n.has_tag_name(tag) && n.attribute("id").is_some_and(|id| id.starts_with(prefix)))
        .count()
}

#[tokio::test]
async fn healthz() {
    let (status, body) = json_of(&app(), get("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn au_upload_renders_sixteen_leaders() {
    let app = app();
    let (id, _) = au_session(&app).await;
    let (status, svg) = send(&app, get(&format!("/sessions/{id}/svg"))).await;
    assert_eq!(status, StatusCode::OK);
    let svg = String::from_utf8(svg).unwrap();
    assert_eq!(count_ids(&svg, "leader-", "path"), 16);
    assert_eq!(count_ids(&svg, "cell-", "rect"), 64);

    let (status, body) = json_of(&app, get(&format!("/sessions/{id}/layout"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], 0);
    assert_eq!(body["layout"]["cells"].as_array().unwrap().len(), 64);
    assert_eq!(body["layout"]["ordering"]["rows"], body["layout"]["ordering"]["cols"]);
}

#[tokio::test]
async fn highlight_only_reuses_layout() {
    let app = app();
    let (id, hash) = au_session(&app).await;
    let (status, body) = json_of(
        &app,
        put_selection(&id, json!({ "version": 0, "highlights": [{ "kind": "origin", "id": "QLD" }] })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["layout_hash"], hash.as_str());
    assert_eq!(body["relayout"], false);
    assert_eq!(body["version"], 1);

    let (_, svg) = send(&app, get(&format!("/sessions/{id}/svg"))).await;
    let svg = String::from_utf8(svg).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let hl_cells = doc
        .descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("cell hl"))
        .count();
    assert_eq!(hl_cells, 8);
}

#[tokio::test]
async fn identity_range_keeps_hash() {
    let app = app();
    let (id, hash) = au_session(&app).await;
    let (_, body) = json_of(&app, get(&format!("/sessions/{id}/layout"))).await;
    let max = body["layout"]["max_flow"].as_f64().unwrap();
    let (status, body) = json_of(&app, put_selection(&id, json!({ "version": 0, "range": [0.0, max] }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["layout_hash"], hash.as_str());
}

#[tokio::test]
async fn range_filter_relayouts_and_caches() {
    let app = app();
    let (id, hash) = au_session(&app).await;
    let (_, first) = json_of(&app, put_selection(&id, json!({ "version": 0, "range": [2000.0, 20000.0] }))).await;
    assert_eq!(first["relayout"], true, "{first}");
    assert_ne!(first["layout_hash"], hash.as_str());
    let shown = first["layout"]["leaders"]["origin"].as_array().unwrap().len();
    assert!(shown < 8);

    // Clearing the range returns to the cached initial layout, and setting
    // it again hits the cache too.
    let (_, cleared) = json_of(&app, put_selection(&id, json!({ "version": 1, "range": null }))).await;
    assert_eq!(cleared["layout_hash"], hash.as_str());
    assert_eq!(cleared["relayout"], false);
    let (_, again) = json_of(&app, put_selection(&id, json!({ "version": 2, "range": [2000.0, 20000.0] }))).await;
    assert_eq!(again["relayout"], false);
    assert_eq!(again["layout_hash"], first["layout_hash"]);
}

#[tokio::test]
async fn stale_version_conflicts() {
    let app = app();
    let (id, _) = au_session(&app).await;
    let (status, _) = json_of(&app, put_selection(&id, json!({ "version": 0, "highlights": [] }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = json_of(&app, put_selection(&id, json!({ "version": 0, "highlights": [] }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "StaleVersion");
}

#[tokio::test]
async fn inverted_range_is_a_range_error() {
    let app = app();
    let (id, _) = au_session(&app).await;
    let (status, body) = json_of(&app, put_selection(&id, json!({ "version": 0, "range": [10.0, 5.0] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "RangeError");
    // The failed update did not bump the version.
    let (_, body) = json_of(&app, get(&format!("/sessions/{id}/layout"))).await;
    assert_eq!(body["version"], 0);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let (status, body) = json_of(&app(), get("/sessions/nope/layout")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "NotFound");
}

#[tokio::test]
async fn mismatched_ids_are_an_ingest_error() {
    let app = app();
    let (status, body) = json_of(&app, upload(&[("flows", &fixture("au.csv")), ("boundaries", &fixture("nz.geojson"))])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "IngestError");
}

#[tokio::test]
async fn missing_field_is_a_bad_request() {
    let (status, body) = json_of(&app(), upload(&[("flows", &fixture("au.csv"))])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "BadRequest");
}

#[tokio::test]
async fn two_country_upload() {
    let app = app();
    let (status, created) = json_of(
        &app,
        upload(&[
            ("flows", &fixture("nz_us.csv")),
            ("boundaries", &fixture("nz.geojson")),
            ("destination_boundaries", &fixture("us.geojson")),
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["mode"], "two-country");
    let id = created["session"].as_str().unwrap();
    let (_, body) = json_of(&app, get(&format!("/sessions/{id}/layout"))).await;
    assert_eq!(body["layout"]["leaders"]["origin"].as_array().unwrap().len(), 16);
    assert_eq!(body["layout"]["leaders"]["destination"].as_array().unwrap().len(), 51);
    assert_eq!(body["layout"]["cells"].as_array().unwrap().len(), 16 * 51);
}

#[tokio::test]
async fn sessions_are_independent_under_concurrency() {
    let app = app();
    let (a, _) = au_session(&app).await;
    let (b, _) = au_session(&app).await;
    let ra = put_selection(&a, json!({ "version": 0, "range": [1000.0, 20000.0] }));
    let rb = put_selection(&b, json!({ "version": 0, "highlights": [{ "kind": "destination", "id": "WA" }] }));
    let ((sa, ja), (sb, jb)) = tokio::join!(json_of(&app, ra), json_of(&app, rb));
    assert_eq!((sa, sb), (StatusCode::OK, StatusCode::OK));
    assert_eq!(ja["version"], 1);
    assert_eq!(jb["version"], 1);
    assert_eq!(jb["relayout"], false);
}

#[tokio::test]
async fn snapshot_round_trip() {
    let store = Arc::new(Store::new(ServiceConfig::default()));
    let app = router(store.clone());
    let (id, _) = au_session(&app).await;
    let (_, before) = json_of(&app, put_selection(&id, json!({ "version": 0, "range": [500.0, 20000.0] }))).await;

    let snapshot = store.snapshot().await;
    let json = serde_json::to_string(&snapshot).unwrap();
    let restored = Arc::new(Store::new(ServiceConfig::default()));
    let failed = restored.restore(serde_json::from_str(&json).unwrap()).await;
    assert!(failed.is_empty());
    let (status, after) = json_of(&router(restored), get(&format!("/sessions/{id}/layout"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after["layout_hash"], before["layout_hash"]);
    assert_eq!(after["version"], 1);
}
