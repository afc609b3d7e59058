//! The client against a real listener.

use std::sync::Arc;

use moodtune_client::{ClientError, ExportQuery, MoodtuneClient};
use moodtune_core::catalog::{load_fixture_catalog, Secret};
use moodtune_core::{ExperimentStore, PipelineConfig, SessionMode};
use moodtune_service::AppState;
use tokio::sync::oneshot;

const ADMIN: &str = "export-key";

async fn start() -> (String, oneshot::Sender<()>) {
    let catalog = load_fixture_catalog(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/catalog.json")).unwrap();
    let state = AppState::new(
        SessionMode::Offline,
        Arc::new(catalog),
        Arc::new(ExperimentStore::in_memory()),
        PipelineConfig::default(),
        Some(11),
    )
    .with_admin_token(Some(Secret::new(ADMIN)));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    tokio::spawn(moodtune_service::run(listener, Arc::new(state), None, async {
        rx.await.ok();
    }));
    (format!("http://{addr}"), tx)
}

#[tokio::test]
async fn session_pair_rate_export() {
    let (base, stop) = start().await;
    let client = MoodtuneClient::new(&base).unwrap();
    assert_eq!(client.health().await.unwrap()["mode"], "offline");

    let session = client.create_session("p01", None).await.unwrap();
    assert_eq!(session.mode, SessionMode::Offline);
    assert!(session.auth_redirect.is_none());

    for mood in ["happy", "relaxed"] {
        let pair = client.request_pair(session.session_id, mood).await.unwrap();
        assert_eq!(pair.items.len(), 2);
        let pending = client.request_pair(session.session_id, mood).await.unwrap_err();
        assert!(matches!(&pending, ClientError::Api { status: 409, code, .. } if code == "pair_pending"));
        let first = client.submit_rating(session.session_id, pair.pair_id, "A", 4, None).await.unwrap();
        assert!(!first.pair_closed);
        let again = client.submit_rating(session.session_id, pair.pair_id, "A", 2, None).await.unwrap_err();
        assert_eq!(again.status(), Some(409));
        let second = client
            .submit_rating(session.session_id, pair.pair_id, "B", 2, Some("fine".into()))
            .await
            .unwrap();
        assert!(second.pair_closed);
    }

    let err = client.request_pair(session.session_id, "gloomy").await.unwrap_err();
    assert!(matches!(&err, ClientError::Api { status: 422, code, retryable: false, .. } if code == "unknown_mood"));

    let denied = client.export(&ExportQuery::default()).await.unwrap_err();
    assert_eq!(denied.status(), Some(401));

    let admin = client.clone().with_admin_token(ADMIN);
    let csv = admin.export(&ExportQuery::default()).await.unwrap();
    assert_eq!(csv.lines().count(), 5);
    let happy = admin
        .export(&ExportQuery {
            mood: Some("happy".into()),
            session_id: Some(session.session_id),
            ..ExportQuery::default()
        })
        .await
        .unwrap();
    assert_eq!(happy.lines().count(), 3);
    stop.send(()).unwrap();
}

#[tokio::test]
async fn unreachable_service_is_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = MoodtuneClient::new(&format!("http://{addr}")).unwrap();
    assert!(matches!(client.health().await, Err(ClientError::Transport(_))));
}
