//! Live-mode sessions against a local stand-in for the provider APIs.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, Query};
use axum::http::{HeaderMap, Request, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Form, Json, Router};
use http_body_util::BodyExt;
use moodtune_core::catalog::{LiveCatalog, LiveEndpoints, ProviderCredentials};
use moodtune_core::{ExperimentStore, FetchPolicy, PipelineConfig, SessionMode};
use moodtune_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;
use url::Url;

const USER_TOKEN: &str = "user-token-abc";

fn track(i: usize) -> Value {
    json!({"id": format!("sp{i}"), "name": format!("Song {i}"), "artists": [{"name": format!("Artist {i}")}]})
}

async fn token(Form(form): Form<HashMap<String, String>>) -> Response {
    match form.get("code").map(String::as_str) {
        Some("good") => Json(json!({"access_token": USER_TOKEN})).into_response(),
        None => Json(json!({"access_token": "app-token"})).into_response(),
        _ => StatusCode::BAD_REQUEST.into_response(),
    }
}

async fn top(headers: HeaderMap) -> Response {
    if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some(&format!("Bearer {USER_TOKEN}")) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    Json(json!({"items": (0..4).map(track).collect::<Vec<_>>()})).into_response()
}

async fn similar(Query(q): Query<HashMap<String, String>>) -> Json<Value> {
    let seed: usize = q["track"].trim_start_matches("Song ").parse().unwrap();
    let related: Vec<_> = (0..12)
        .map(|j| {
            let i = 100 + seed * 12 + j;
            json!({"name": format!("Song {i}"), "artist": {"name": format!("Artist {i}")}})
        })
        .collect();
    Json(json!({"similartracks": {"track": related}}))
}

async fn search(Query(q): Query<HashMap<String, String>>) -> Json<Value> {
    let title = q["q"].split(" artist:").next().unwrap().trim_start_matches("track:");
    let i: usize = title.trim_start_matches("Song ").parse().unwrap();
    Json(json!({"tracks": {"items": [track(i)]}}))
}

async fn feature_id(Query(q): Query<HashMap<String, String>>) -> Json<Value> {
    Json(json!({"content": [{"id": format!("rb-{}", q["ids"])}]}))
}

async fn features(Path(id): Path<String>) -> Json<Value> {
    let i: f64 = id.trim_start_matches("rb-sp").parse().unwrap();
    Json(json!({"valence": (i * 0.37) % 1.0, "energy": (i * 0.61) % 1.0}))
}

async fn stand_in() -> Url {
    let app = Router::new()
        .route("/api/token", post(token))
        .route("/v1/me/top/tracks", get(top))
        .route("/2.0/", get(similar))
        .route("/v1/search", get(search))
        .route("/v1/track", get(feature_id))
        .route("/v1/track/{id}/audio-features", get(features));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Url::parse(&format!("http://{addr}/")).unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn post_json(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get_uri(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn login_then_pair() {
    let base = stand_in().await;
    let creds = ProviderCredentials::from_lookup(|name| Some(format!("{name}-value"))).unwrap();
    let live = Arc::new(LiveCatalog::new(creds, LiveEndpoints::all_at(&base), "http://localhost/cb"));
    let pipeline = PipelineConfig {
        fetch: FetchPolicy::local(),
        ..PipelineConfig::default()
    };
    let state = AppState::new(
        SessionMode::Live,
        live.clone(),
        Arc::new(ExperimentStore::in_memory()),
        pipeline,
        Some(3),
    )
    .with_live(live);
    let app = router(Arc::new(state), None);

    let (status, doc) = send(&app, post_json("/api/v1/session", json!({"participant_pseudonym": "p07"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["mode"], "live");
    let session = doc["session_id"].as_str().unwrap().to_string();
    let redirect = Url::parse(doc["auth_redirect"].as_str().unwrap()).unwrap();
    let params: HashMap<_, _> = redirect.query_pairs().into_owned().collect();
    assert_eq!(params["state"], session);
    assert_eq!(params["client_id"], "MOODTUNE_TASTE_CLIENT_ID-value");
    assert!(!redirect.as_str().contains("SECRET-value"));

    let pair_uri = format!("/api/v1/session/{session}/pair");
    let (status, doc) = send(&app, post_json(&pair_uri, json!({"mood": "happy"}))).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(doc["error"]["code"], "auth_required");

    let cb = |q: &str| get_uri(&format!("/api/v1/auth/callback?{q}"));
    assert_eq!(send(&app, cb(&format!("state={session}&error=access_denied"))).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, cb(&format!("state={}&code=good", uuid::Uuid::new_v4()))).await.0, StatusCode::NOT_FOUND);
    assert_eq!(send(&app, cb(&format!("state={session}&code=stale"))).await.0, StatusCode::UNAUTHORIZED);
    let (status, doc) = send(&app, cb(&format!("state={session}&code=good"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["status"], "authorized");
    assert!(!doc.to_string().contains(USER_TOKEN));

    let (status, doc) = send(&app, post_json(&pair_uri, json!({"mood": "happy"}))).await;
    assert_eq!(status, StatusCode::OK, "{doc}");
    let items = doc["items"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    for item in items {
        // Seeds are Song 0..3; candidates are numbered from 100.
        let n: usize = item["title"].as_str().unwrap().trim_start_matches("Song ").parse().unwrap();
        assert!(n >= 100);
    }
}

#[tokio::test]
async fn offline_server_has_no_login() {
    let catalog = moodtune_core::catalog::load_fixture_catalog(format!(
        "{}/../../fixtures/seven_songs.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    let state = AppState::new(
        SessionMode::Offline,
        Arc::new(catalog),
        Arc::new(ExperimentStore::in_memory()),
        PipelineConfig::default(),
        None,
    );
    let app = router(Arc::new(state), None);
    let (status, _) = send(&app, get_uri("/api/v1/auth/callback?state=x&code=y")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
