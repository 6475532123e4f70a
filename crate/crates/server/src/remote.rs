//! HTTP transports: the inference backend client and server, and the remote
//! planner client.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use cardiac_core::agent::RemotePlanner;
use cardiac_core::backends::{Backend, BackendDescriptor, BackendError, InferRequest, InferResponse, InferenceService, Transport};

const BODY_LIMIT: u64 = 1 << 30;

fn client(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// `POST <endpoint>/infer` with the request JSON; payloads travel inline.
pub struct HttpBackend {
    descriptor: BackendDescriptor,
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self, BackendError> {
        descriptor.validate()?;
        let Transport::Http { endpoint } = &descriptor.transport else {
            return Err(BackendError::InvalidDescriptor("not an http transport".into()));
        };
        let url = format!("{}/infer", endpoint.trim_end_matches('/'));
        let agent = client(descriptor.timeout());
        Ok(HttpBackend { descriptor, url, agent })
    }
}

impl Backend for HttpBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn call(&self, request: &InferRequest) -> Result<InferResponse, BackendError> {
        let mut req = request.clone();
        for p in req.payloads_mut() {
            *p = p.embedded(None)?;
        }
        let mut resp = self.agent.post(&self.url).send_json(&req).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.descriptor.timeout_ms),
            e => BackendError::Unreachable(format!("{}: {e}", self.url)),
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Remote(format!("HTTP {status}: {body}")));
        }
        resp.body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_json()
            .map_err(|e| BackendError::Protocol(format!("bad response document: {e}")))
    }
}

async fn infer(State(service): State<Arc<dyn InferenceService>>, Json(req): Json<InferRequest>) -> Json<InferResponse> {
    let id = req.request_id.clone();
    let resp = tokio::task::spawn_blocking(move || service.infer(req))
        .await
        .unwrap_or_else(|e| InferResponse::error(&id, format!("inference task failed: {e}")));
    Json(resp)
}

/// Serves `service` at `POST /infer`.
pub fn infer_router(service: Arc<dyn InferenceService>) -> Router {
    Router::new()
        .route("/infer", post(infer))
        .layer(axum::extract::DefaultBodyLimit::disable())
        .with_state(service)
}

/// A planner that POSTs the request JSON to `endpoint` and expects a
/// tool-use command back.
pub fn http_planner(endpoint: String, timeout: Duration) -> RemotePlanner {
    let agent = client(timeout);
    RemotePlanner::new(move |body: &str| {
        let mut resp = agent
            .post(&endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| format!("{endpoint}: {e}"))?;
        if !resp.status().is_success() {
            return Err(format!("{endpoint}: HTTP {}", resp.status()));
        }
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    })
}
