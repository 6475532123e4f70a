use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cardiac_core::agent::{Agent, Planner, ReferencePlanner, Registry, ToolDescriptor};
use cardiac_core::backends::knowledge::KnowledgeBase;
use cardiac_core::backends::{Backend, BackendDescriptor, DirectoryExchange, InProcessBackend, ReferenceService, Transport};
use cardiac_core::tool::ToolId;
use serde::{Deserialize, Serialize};

use crate::remote::{http_planner, HttpBackend};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerConfig {
    Reference,
    /// POSTs the planner request JSON to `endpoint`.
    Remote { endpoint: String, timeout_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_root: PathBuf,
    /// Empty means the in-process reference backend.
    pub backends: Vec<BackendDescriptor>,
    pub planner: PlannerConfig,
    /// JSON-lines guideline corpus; the bundled corpus when absent.
    pub corpus: Option<PathBuf>,
    /// Registered tools; all nine when absent.
    pub tools: Option<Vec<ToolId>>,
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            data_root: PathBuf::from("cardiac-data"),
            backends: Vec::new(),
            planner: PlannerConfig::Reference,
            corpus: None,
            tools: None,
            seed: 0,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }

    pub fn registry(&self) -> Result<Registry, ServiceError> {
        match &self.tools {
            None => Ok(Registry::standard()),
            Some(tools) => {
                let mut r = Registry::new();
                for &t in tools {
                    r.register(ToolDescriptor::standard(t)).map_err(|e| ServiceError::Config(e.to_string()))?;
                }
                Ok(r)
            }
        }
    }

    pub fn knowledge(&self) -> Result<KnowledgeBase, ServiceError> {
        match &self.corpus {
            None => Ok(KnowledgeBase::builtin()),
            Some(p) => {
                let docs = KnowledgeBase::load_jsonl(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                let mut kb = KnowledgeBase::new();
                kb.ingest(docs).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Ok(kb)
            }
        }
    }

    pub fn connect_backends(&self) -> Result<Vec<Arc<dyn Backend>>, ServiceError> {
        if self.backends.is_empty() {
            return Ok(vec![Arc::new(InProcessBackend::reference())]);
        }
        self.backends.iter().map(|d| connect(d.clone())).collect()
    }

    pub fn planner(&self) -> Box<dyn Planner> {
        match &self.planner {
            PlannerConfig::Reference => Box::new(ReferencePlanner),
            PlannerConfig::Remote { endpoint, timeout_ms } => Box::new(http_planner(endpoint.clone(), Duration::from_millis(*timeout_ms))),
        }
    }

    pub fn build_agent(&self) -> Result<Agent, ServiceError> {
        Ok(Agent::new(
            self.registry()?,
            self.planner(),
            self.connect_backends()?,
            Arc::new(self.knowledge()?),
        ))
    }
}

/// A backend client for `descriptor`.
pub fn connect(descriptor: BackendDescriptor) -> Result<Arc<dyn Backend>, ServiceError> {
    let backend: Arc<dyn Backend> = match &descriptor.transport {
        Transport::InProcess => Arc::new(InProcessBackend::new(descriptor, Arc::new(ReferenceService::default()))?),
        Transport::DirectoryExchange { .. } => Arc::new(DirectoryExchange::new(descriptor)?),
        Transport::Http { .. } => Arc::new(HttpBackend::new(descriptor)?),
    };
    Ok(backend)
}
