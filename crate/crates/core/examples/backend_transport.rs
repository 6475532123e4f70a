//! Segment through the directory-exchange transport served by a worker
//! thread, and check the result matches the in-process backend.
//!
//! `cargo run -p cardiac-core --example backend_transport`

use std::sync::Arc;
use std::time::Duration;

use cardiac_core::backends::phantom::{phantom_generate, PhantomSpec};
use cardiac_core::backends::{segment_via_backend, BackendDescriptor, DirectoryExchange, ExchangeWorker, InProcessBackend, ReferenceService, Transport};
use cardiac_core::tool::ToolId;

fn main() {
    let p = phantom_generate(&PhantomSpec::normal()).expect("valid phantom");
    let dir = tempfile::tempdir().expect("temp dir");
    let worker = ExchangeWorker::new(dir.path(), Arc::new(ReferenceService::default())).spawn(Duration::from_millis(5));
    let root = dir.path().to_string_lossy().into_owned();
    let exchange = DirectoryExchange::new(BackendDescriptor::full("exchange", Transport::DirectoryExchange { root })).expect("valid descriptor");

    let remote = segment_via_backend(&p.sax, ToolId::Saxcs, &exchange).expect("exchange answers");
    let local = segment_via_backend(&p.sax, ToolId::Saxcs, &InProcessBackend::reference()).expect("in-process answers");
    println!("{} phases segmented through {}", remote.len(), dir.path().display());
    println!("identical to in-process: {}", remote == local);
    worker.stop();
}
