use hasod_client::{Client, ClientError};
use hasod_core::api::CreateSessionRequest;
use hasod_core::numkit::RandomStream;
use hasod_core::session::{create_session, Response, SessionConfig, SessionPhase};
use tokio::net::TcpListener;

async fn spawn_service() -> (Client, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(hasod_service::serve(listener, dir.path().to_path_buf()));
    (Client::new(format!("http://{addr}/")), dir)
}

fn truth(x: &[f64], noise: &mut RandomStream) -> f64 {
    5.0 * x[0] - 4.0 * x[2] + 2.0 * x[0] * x[2] + 2.0 * noise.next_normal()
}

#[tokio::test]
async fn drives_a_session_to_completion() {
    let (client, _dir) = spawn_service().await;
    let s = client.create_session(&CreateSessionRequest::new(4, 12)).await.unwrap();
    assert_eq!(s.pending_run_count, 11);
    assert!(matches!(
        client.screening(&s.id).await,
        Err(ClientError::Api { status: 404, .. })
    ));

    let mut local = create_session(SessionConfig::new(4, 12)).unwrap();
    let mut noise = RandomStream::new(3);
    while local.phase != SessionPhase::Complete {
        let runs = client.batch(&s.id).await.unwrap();
        assert_eq!(runs, local.propose_runs().unwrap());
        let batch: Vec<Response> = runs
            .iter()
            .map(|p| Response { row_id: p.row_id, y: truth(&p.levels, &mut noise) })
            .collect();
        let summary = client.submit_responses(&s.id, &batch).await.unwrap();
        local = local.ingest_responses(&batch).unwrap();
        assert_eq!(summary.phase, local.phase);
    }
    assert_eq!(client.session(&s.id).await.unwrap(), local);
    let report = client.report(&s.id).await.unwrap();
    assert_eq!(report, local.finalize_report().unwrap());
    assert_eq!(client.screening(&s.id).await.unwrap(), local.screening.clone().unwrap());
    let p = client.surface(&s.id, &report.x_star).await.unwrap();
    assert_eq!((p.mean, p.variance), local.surface(&report.x_star).unwrap());
    assert_eq!(client.list_sessions().await.unwrap().len(), 1);
}

#[tokio::test]
async fn errors_carry_the_service_error_name() {
    let (client, _dir) = spawn_service().await;
    let s = client.create_session(&CreateSessionRequest::new(6, 1)).await.unwrap();
    let one = [Response { row_id: 2, y: 1.0 }];
    client.submit_responses(&s.id, &one).await.unwrap();
    let e = client.submit_responses(&s.id, &one).await.unwrap_err();
    assert_eq!((e.name(), matches!(e, ClientError::Api { status: 422, .. })), ("DuplicateResponse", true));
    assert_eq!(client.report(&s.id).await.unwrap_err().name(), "NotComplete");
    assert_eq!(client.batch("missing").await.unwrap_err().name(), "UnknownSession");
    let e = client.create_session(&CreateSessionRequest::new(40, 1)).await.unwrap_err();
    assert_eq!(e.name(), "KTooLarge");
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let e = Client::new(format!("http://{addr}")).list_sessions().await.unwrap_err();
    assert_eq!(e.name(), "Transport");
}
