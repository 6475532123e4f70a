use std::sync::Arc;
use std::time::Duration;

use cardiac_core::agent::{Agent, AgentMessage, SessionState};
use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};
use cardiac_core::backends::{segment_via_backend, Backend, BackendDescriptor, BackendError, DirectoryExchange, ExchangeWorker, InProcessBackend, ReferenceService, Transport};
use cardiac_core::tool::ToolId;
use cardiac_server::remote::{infer_router, HttpBackend};

/// Reference service at `POST /infer` on an ephemeral port.
fn http_service() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, infer_router(Arc::new(ReferenceService::default()))).await.unwrap();
        });
    });
    endpoint
}

fn http_backend(endpoint: String) -> Arc<dyn Backend> {
    Arc::new(HttpBackend::new(BackendDescriptor::full("http", Transport::Http { endpoint })).unwrap())
}

#[test]
fn exchange_and_http_return_identical_masks() {
    let p = phantom_generate(&PhantomSpec::normal()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_string_lossy().into_owned();
    let worker = ExchangeWorker::new(dir.path(), Arc::new(ReferenceService::default())).spawn(Duration::from_millis(5));
    let exchange = DirectoryExchange::new(BackendDescriptor::full("dir", Transport::DirectoryExchange { root })).unwrap();
    let http = http_backend(http_service());
    let local = InProcessBackend::reference();

    let (ch4, _) = p.ch4.as_ref().unwrap();
    for (volume, task) in [(&p.sax, ToolId::Saxcs), (ch4, ToolId::Ch4cs)] {
        let a = segment_via_backend(volume, task, &exchange).unwrap();
        let b = segment_via_backend(volume, task, http.as_ref()).unwrap();
        let c = segment_via_backend(volume, task, &local).unwrap();
        assert_eq!(a, b, "{task}");
        assert_eq!(b, c, "{task}");
    }
    worker.stop();
}

#[test]
fn full_report_is_transport_independent() {
    let p = phantom_generate(&PhantomSpec::normal()).unwrap();
    let session = || {
        let mut s = SessionState::new("t");
        for v in [&p.sax, &p.ch2.as_ref().unwrap().0, &p.ch4.as_ref().unwrap().0, &p.lge.as_ref().unwrap().0] {
            s.add_study(v.clone()).unwrap();
        }
        s
    };
    let run = |agent: &Agent| {
        let mut s = session();
        agent.run_turn(&mut s, AgentMessage::user("generate a full report")).unwrap();
        s.log().to_vec()
    };
    let local = run(&Agent::reference());
    let remote = run(&Agent::reference().with_backends(vec![http_backend(http_service())]));
    assert!(local.iter().any(|a| a.starts_with("report-")));
    assert_eq!(local, remote);
}

#[test]
fn unreachable_and_slow_backends_fail_cleanly() {
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", dead.local_addr().unwrap());
    drop(dead);
    let p = phantom_generate(&PhantomSpec::normal()).unwrap();
    let err = segment_via_backend(&p.sax, ToolId::Saxcs, http_backend(endpoint).as_ref()).unwrap_err();
    assert!(matches!(err, BackendError::Unreachable(_)), "{err}");

    // Accepts connections but never answers.
    let silent = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", silent.local_addr().unwrap());
    let mut d = BackendDescriptor::full("slow", Transport::Http { endpoint });
    d.timeout_ms = 200;
    let backend = HttpBackend::new(d).unwrap();
    let err = segment_via_backend(&p.sax, ToolId::Saxcs, &backend).unwrap_err();
    assert!(matches!(err, BackendError::Timeout(200)), "{err}");
    drop(silent);
}
