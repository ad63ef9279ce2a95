use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sitebias_core::grid::GridConfig;
use sitebias_service::{router, AppState};
use tower::ServiceExt;

fn coarse_grid() -> GridConfig {
    GridConfig::new(6371.0072, 255_000.0)
}

/// A 2° global raster; `f(lat, lon)` gives the pixel value.
fn global_asc(f: impl Fn(f64, f64) -> f64) -> String {
    let mut s = String::from("ncols 180\nnrows 90\nxllcorner -180\nyllcorner -90\ncellsize 2\nNODATA_value -9999\n");
    for row in 0..90 {
        let lat = 89.0 - 2.0 * row as f64;
        let line: Vec<String> = (0..180).map(|c| f(lat, -179.0 + 2.0 * c as f64).to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

fn sites_csv(n: usize) -> String {
    let mut s = String::from("site_id,lat,lon\n");
    for i in 0..n {
        let lat = -60.0 + (i as f64 * 37.0) % 120.0;
        let lon = -170.0 + (i as f64 * 53.0) % 340.0;
        s.push_str(&format!("s{i},{lat},{lon}\n"));
    }
    s
}

async fn send(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn send_json(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let (status, bytes) = send(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn wait_done(app: &Router, id: &str) -> Value {
    for _ in 0..600 {
        let (status, body) = send_json(app, "GET", &format!("/analyses/{id}"), Body::empty()).await;
        assert_eq!(status, StatusCode::OK);
        match body["status"].as_str().unwrap() {
            "done" | "failed" => return body,
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("analysis {id} did not finish");
}

async fn seeded_app(dir: &std::path::Path) -> Router {
    let app = router(AppState::open(dir, coarse_grid()).unwrap());
    let (s, _) = send_json(&app, "POST", "/collections?collection_id=sites", sites_csv(157)).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = send_json(
        &app,
        "POST",
        "/variables?variable_id=temp&kind=continuous&stat=mean&units=C",
        global_asc(|lat, _| 30.0 - lat.abs() / 3.0),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = send_json(
        &app,
        "POST",
        "/variables?variable_id=zone&kind=categorical&stat=majority",
        global_asc(|lat, _| if lat.abs() < 23.0 { 1.0 } else { 2.0 }),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    app
}

#[tokio::test(flavor = "multi_thread")]
async fn uploads_and_listings() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(dir.path()).await;

    let (s, body) = send_json(&app, "GET", "/variables", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["schema_version"], 1);
    let ids: Vec<&str> = body["variables"].as_array().unwrap().iter().map(|v| v["variable_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["temp", "zone"]);

    let (s, body) = send_json(&app, "POST", "/collections?collection_id=big", sites_csv(157)).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(body["site_count"], 157);

    let (s, body) = send_json(&app, "POST", "/collections", "site_id,lat,lon\na,1,2\n").await;
    assert_eq!(s, StatusCode::CREATED);
    assert!(body["collection_id"].as_str().unwrap().starts_with("c-"));

    let (s, body) = send_json(&app, "GET", "/collections", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["collections"].as_array().unwrap().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn upload_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(dir.path()).await;

    let (s, body) = send_json(&app, "POST", "/collections?collection_id=bad", "site_id,lat,lon\na,1,2\nb,91,0\n").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["schema_version"], 1);
    assert!(body["error"].as_str().unwrap().contains("row 3"), "{body}");

    let (s, _) = send_json(&app, "POST", "/collections?collection_id=sites", sites_csv(3)).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, _) = send_json(&app, "POST", "/variables?variable_id=temp&kind=continuous&stat=mean", global_asc(|_, _| 1.0)).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, body) = send_json(&app, "POST", "/variables?variable_id=x&kind=continuous", "ncols 2\nnrows 1\n").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("line"), "{body}");

    let (s, _) = send_json(&app, "POST", "/variables?variable_id=y&kind=categorical&stat=mean", global_asc(|_, _| 1.0)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn analysis_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(dir.path()).await;

    let req = json!({ "collection_id": "sites", "variable_id": "temp", "samples": 200 });
    let (s, record) = send_json(&app, "POST", "/analyses", req.to_string()).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(record["status"], "pending");
    assert_eq!(record["schema_version"], 1);
    let seed = record["request"]["seed"].as_u64().expect("generated seed is echoed");
    let id = record["analysis_id"].as_str().unwrap().to_string();

    let done = wait_done(&app, &id).await;
    assert_eq!(done["status"], "done", "{done}");
    let result = &done["result"];
    let indicator = result["indicator"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&indicator));
    assert_eq!(result["null"]["seed"].as_u64(), Some(seed));
    assert_eq!(result["null"]["histogram"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 200);

    let (_, again) = send_json(&app, "GET", &format!("/analyses/{id}"), Body::empty()).await;
    assert_eq!(again, done);

    let (s, map) = send_json(&app, "GET", &format!("/analyses/{id}/map"), Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(map["schema_version"], 1);
    let features = map["features"].as_array().unwrap();
    assert_eq!(features.len() as u64, result["extent"]["populated_cell_count"].as_u64().unwrap());
    let classes = ["very_under", "under", "well", "over", "very_over"];
    assert!(features.iter().all(|f| classes.contains(&f["properties"]["class"].as_str().unwrap())));

    let (s, csv) = send(&app, "GET", &format!("/analyses/{id}/report.csv"), Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("bin,lower,upper,category,p_sample,p_population,score,class"));
    assert_eq!(text.lines().count(), 21);
}

#[tokio::test(flavor = "multi_thread")]
async fn analysis_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(dir.path()).await;

    let (s, body) = send_json(&app, "POST", "/analyses", json!({"collection_id": "sites", "variable_id": "nope"}).to_string()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));

    let (s, _) = send_json(&app, "POST", "/analyses", json!({"collection_id": "ghost", "variable_id": "temp"}).to_string()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let mask = json!({"collection_id": "sites", "variable_id": "temp", "extent": {"type": "mask", "variable_id": "nomask", "included_values": [1]}});
    let (s, _) = send_json(&app, "POST", "/analyses", mask.to_string()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = send_json(&app, "POST", "/analyses", json!({"collection_id": "sites", "variable_id": "temp", "samples": 0}).to_string()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = send_json(&app, "POST", "/analyses", "{not json").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = send_json(&app, "GET", "/analyses/00000000-0000-0000-0000-000000000000", Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = send_json(&app, "GET", "/analyses/..%2Fcatalog", Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // Empty mask extent: accepted, then fails while running.
    let empty = json!({"collection_id": "sites", "variable_id": "temp", "seed": 1,
        "extent": {"type": "mask", "variable_id": "zone", "included_values": [7]}});
    let (s, record) = send_json(&app, "POST", "/analyses", empty.to_string()).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = record["analysis_id"].as_str().unwrap();
    let failed = wait_done(&app, id).await;
    assert_eq!(failed["status"], "failed");
    assert!(failed.get("result").is_none());
    let (s, _) = send_json(&app, "GET", &format!("/analyses/{id}/map"), Body::empty()).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn masked_and_seeded_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(dir.path()).await;
    let req = json!({"collection_id": "sites", "variable_id": "temp", "seed": 99, "samples": 100,
        "extent": {"type": "mask", "variable_id": "zone", "included_values": [1]}});
    let mut results = Vec::new();
    for _ in 0..2 {
        let (_, record) = send_json(&app, "POST", "/analyses", req.to_string()).await;
        let done = wait_done(&app, record["analysis_id"].as_str().unwrap()).await;
        assert_eq!(done["status"], "done", "{done}");
        results.push(done["result"].clone());
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0]["extent"]["extent_id"], "mask:zone:1");
}

#[tokio::test(flavor = "multi_thread")]
async fn records_survive_restart_and_pending_work_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(dir.path()).await;
    let (_, record) = send_json(&app, "POST", "/analyses", json!({"collection_id": "sites", "variable_id": "temp", "seed": 5, "samples": 50}).to_string()).await;
    let id = record["analysis_id"].as_str().unwrap().to_string();
    let done = wait_done(&app, &id).await;
    drop(app);

    // A record left pending by a crashed process.
    let state = AppState::open(dir.path(), coarse_grid()).unwrap();
    let mut stale = sitebias_service::AnalysisRecord::new(
        "11111111-1111-4111-8111-111111111111".into(),
        serde_json::from_value(json!({"collection_id": "sites", "variable_id": "temp", "seed": 5, "samples": 50})).unwrap(),
    );
    stale.status = sitebias_service::AnalysisStatus::Running;
    state.store().put_record(&stale).unwrap();

    assert_eq!(state.resume_unfinished().unwrap(), 1);
    let app = router(state);
    let (_, again) = send_json(&app, "GET", &format!("/analyses/{id}"), Body::empty()).await;
    assert_eq!(again, done);
    let resumed = wait_done(&app, &stale.analysis_id).await;
    assert_eq!(resumed["status"], "done");
    assert_eq!(resumed["result"], done["result"]);
}
