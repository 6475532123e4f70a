#![allow(dead_code)]

use std::sync::Arc;

use cardiac_core::agent::Agent;
use cardiac_core::volume::{CineVolume, DeskHeader};
use cardiac_server::api::{router, AppState};
use serde_json::Value;

/// A service on an ephemeral port, running until the test process exits.
pub struct TestServer {
    pub base: String,
    pub http: ureq::Agent,
}

pub fn start(agent: Agent, root: &std::path::Path) -> TestServer {
    let app = AppState::new(agent, root).expect("data root usable");
    start_app(app)
}

pub fn start_app(app: Arc<AppState>) -> TestServer {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, router(app)).await.unwrap();
        });
    });
    let http = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    TestServer { base, http }
}

impl TestServer {
    pub fn get(&self, path: &str) -> (u16, String) {
        let mut r = self.http.get(format!("{}{path}", self.base)).call().unwrap();
        (r.status().as_u16(), r.body_mut().read_to_string().unwrap())
    }

    pub fn get_json(&self, path: &str) -> (u16, Value) {
        let (s, b) = self.get(path);
        (s, serde_json::from_str(&b).unwrap_or(Value::Null))
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut r = self.http.post(format!("{}{path}", self.base)).send_json(body).unwrap();
        let text = r.body_mut().read_to_string().unwrap();
        (r.status().as_u16(), serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    pub fn create_session(&self) -> String {
        let (s, v) = self.post_json("/v1/sessions", &Value::Null);
        assert_eq!(s, 201, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    /// Multipart upload of `volume` as header JSON plus raw payload.
    pub fn upload(&self, session: &str, volume: &CineVolume) -> (u16, Value) {
        let header = serde_json::to_vec(&DeskHeader::for_volume(volume, "payload")).unwrap();
        let boundary = "----cardiac-test-boundary";
        let mut body = Vec::new();
        for (name, ctype, bytes) in [("header", "application/json", header), ("payload", "application/octet-stream", volume.payload_bytes())] {
            body.extend_from_slice(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\nContent-Type: {ctype}\r\n\r\n").as_bytes());
            body.extend_from_slice(&bytes);
            body.extend_from_slice(b"\r\n");
        }
        body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
        let mut r = self
            .http
            .post(format!("{}/v1/sessions/{session}/studies", self.base))
            .header("content-type", format!("multipart/form-data; boundary={boundary}"))
            .send(&body[..])
            .unwrap();
        let text = r.body_mut().read_to_string().unwrap();
        (r.status().as_u16(), serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    pub fn say(&self, session: &str, text: &str) -> (u16, Value) {
        self.post_json(&format!("/v1/sessions/{session}/messages"), &serde_json::json!({ "text": text }))
    }
}
