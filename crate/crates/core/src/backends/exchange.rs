//! Directory-exchange transport.
//!
//! The client writes `req-<id>.json` into the exchange root with its
//! volumes as desk files (`pay-<id>-<n>.json` + `.raw`). A worker answers
//! with `res-<id>.json`, referencing a returned mask as `pay-<id>-mask`.
//! Documents are written under a dot-prefixed name and renamed into place,
//! so readers never see partial files. Calls are serialised per root.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::wire::{InferRequest, InferResponse, StudyPayload};
use super::{Backend, BackendDescriptor, BackendError, InferenceService, Transport};

const POLL: Duration = Duration::from_millis(5);

fn io_err(path: &Path, e: std::io::Error) -> BackendError {
    BackendError::Io(format!("{}: {e}", path.display()))
}

fn root_lock(root: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let key = root.canonicalize().unwrap_or_else(|_| root.to_path_buf());
    let mut map = LOCKS.get_or_init(Default::default).lock().unwrap_or_else(|p| p.into_inner());
    map.entry(key).or_default().clone()
}

fn write_atomic(dir: &Path, name: &str, text: &str) -> Result<(), BackendError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    let dst = dir.join(name);
    fs::rename(&tmp, &dst).map_err(|e| io_err(&dst, e))
}

fn remove_payload(dir: &Path, p: &StudyPayload) {
    if let Some(name) = p.ref_path() {
        let header = dir.join(name);
        let _ = fs::remove_file(header.with_extension("raw"));
        let _ = fs::remove_file(header);
    }
}

/// Request id of a `req-<id>.json` file name.
fn request_id(name: &str) -> Option<&str> {
    name.strip_prefix("req-")?.strip_suffix(".json")
}

/// Client side of the directory exchange.
pub struct DirectoryExchange {
    descriptor: BackendDescriptor,
    root: PathBuf,
}

impl DirectoryExchange {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self, BackendError> {
        descriptor.validate()?;
        let Transport::DirectoryExchange { root } = &descriptor.transport else {
            return Err(BackendError::InvalidDescriptor("not a directory-exchange transport".into()));
        };
        let root = PathBuf::from(root);
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        Ok(DirectoryExchange { descriptor, root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn cleanup(&self, req: &InferRequest) {
        let _ = fs::remove_file(self.root.join(format!("req-{}.json", req.request_id)));
        for p in req.clone().payloads_mut() {
            remove_payload(&self.root, p);
        }
    }
}

impl Backend for DirectoryExchange {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn call(&self, request: &InferRequest) -> Result<InferResponse, BackendError> {
        let lock = root_lock(&self.root);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let id = request.request_id.clone();
        let mut req = request.clone();
        for (n, p) in req.payloads_mut().into_iter().enumerate() {
            if p.ref_path().is_none() {
                *p = StudyPayload::write_ref(&p.resolve(None)?, &self.root, &format!("pay-{id}-{n}"))?;
            }
        }
        let text = serde_json::to_string(&req).map_err(|e| BackendError::Protocol(e.to_string()))?;
        write_atomic(&self.root, &format!("req-{id}.json"), &text)?;

        let res_path = self.root.join(format!("res-{id}.json"));
        let deadline = Instant::now() + self.descriptor.timeout();
        while !res_path.exists() {
            if Instant::now() >= deadline {
                self.cleanup(&req);
                return Err(BackendError::Timeout(self.descriptor.timeout_ms));
            }
            std::thread::sleep(POLL);
        }
        let text = fs::read_to_string(&res_path).map_err(|e| io_err(&res_path, e))?;
        let _ = fs::remove_file(&res_path);
        self.cleanup(&req);
        let mut resp: InferResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("bad response document: {e}")))?;
        if let Some(mask) = resp.mask_ref.take() {
            let inline = mask.embedded(Some(&self.root));
            remove_payload(&self.root, &mask);
            resp.mask_ref = Some(inline?);
        }
        Ok(resp)
    }
}

/// Server side: answers request files with an [`InferenceService`].
#[derive(Clone)]
pub struct ExchangeWorker {
    root: PathBuf,
    service: Arc<dyn InferenceService>,
}

impl ExchangeWorker {
    pub fn new(root: impl Into<PathBuf>, service: Arc<dyn InferenceService>) -> Self {
        ExchangeWorker {
            root: root.into(),
            service,
        }
    }

    fn answer(&self, id: &str, path: &Path) -> Result<(), BackendError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let resp = match serde_json::from_str::<InferRequest>(&text) {
            Ok(mut req) => {
                let mut embed = Ok(());
                for p in req.payloads_mut() {
                    match p.embedded(Some(&self.root)) {
                        Ok(inline) => *p = inline,
                        Err(e) => embed = Err(e),
                    }
                }
                match embed {
                    Ok(()) => self.service.infer(req),
                    Err(e) => InferResponse::error(id, e.to_string()),
                }
            }
            Err(e) => InferResponse::error(id, format!("bad request document: {e}")),
        };
        let mut resp = resp;
        if let Some(mask) = resp.mask_ref.take() {
            resp.mask_ref = Some(StudyPayload::write_ref(&mask.resolve(None)?, &self.root, &format!("pay-{id}-mask"))?);
        }
        let text = serde_json::to_string(&resp).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let _ = fs::remove_file(path);
        write_atomic(&self.root, &format!("res-{id}.json"), &text)
    }

    /// Answers every pending request once; returns how many were served.
    pub fn serve_pending(&self) -> Result<usize, BackendError> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)
            .map_err(|e| io_err(&self.root, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| request_id(&e.file_name().to_string_lossy()).map(str::to_string))
            .collect();
        ids.sort();
        for id in &ids {
            self.answer(id, &self.root.join(format!("req-{id}.json")))?;
        }
        Ok(ids.len())
    }

    /// Polls the root on a background thread until the handle is stopped.
    pub fn spawn(self, interval: Duration) -> WorkerHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                if let Err(e) = self.serve_pending() {
                    tracing::warn!(root = %self.root.display(), "exchange worker: {e}");
                }
                std::thread::sleep(interval);
            }
        });
        WorkerHandle {
            stop,
            thread: Some(thread),
        }
    }
}

/// Stops the worker thread when dropped.
pub struct WorkerHandle {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl WorkerHandle {
    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        self.halt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::phantom::{phantom_generate, PhantomSpec};
    use crate::backends::{segment_via_backend, ReferenceService};
    use crate::tool::ToolId;

    fn exchange(root: &Path, timeout_ms: u64) -> DirectoryExchange {
        let mut d = BackendDescriptor::full(
            "dir",
            Transport::DirectoryExchange {
                root: root.display().to_string(),
            },
        );
        d.timeout_ms = timeout_ms;
        DirectoryExchange::new(d).unwrap()
    }

    #[test]
    fn round_trip_leaves_an_empty_root() {
        let dir = tempfile::tempdir().unwrap();
        let client = exchange(dir.path(), 20_000);
        let worker = ExchangeWorker::new(dir.path(), Arc::new(ReferenceService::default())).spawn(Duration::from_millis(2));
        let p = phantom_generate(&PhantomSpec::annulus(10.0, 4.0)).unwrap();
        let masks = segment_via_backend(&p.sax, ToolId::Saxcs, &client).unwrap();
        assert_eq!(masks, p.sax_masks);
        worker.stop();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn no_worker_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let client = exchange(dir.path(), 30);
        let p = phantom_generate(&PhantomSpec::annulus(10.0, 4.0)).unwrap();
        let err = segment_via_backend(&p.sax, ToolId::Saxcs, &client).unwrap_err();
        assert!(matches!(err, BackendError::Timeout(30)), "{err}");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn garbage_request_gets_an_error_response() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("req-x.json"), "{").unwrap();
        let w = ExchangeWorker::new(dir.path(), Arc::new(ReferenceService::default()));
        assert_eq!(w.serve_pending().unwrap(), 1);
        let r: InferResponse = serde_json::from_str(&fs::read_to_string(dir.path().join("res-x.json")).unwrap()).unwrap();
        assert!(r.message.unwrap().contains("bad request"));
    }

    #[test]
    fn descriptor_must_name_a_directory() {
        let d = BackendDescriptor::full("h", Transport::Http { endpoint: "http://x".into() });
        assert!(DirectoryExchange::new(d).is_err());
    }
}
