use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{AgentName, BackendError, BackendKind, BackendRequest, BackendResponse, ModelBackend};

/// Replays a fixed list of replies in order; the last reply repeats.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: Vec<String>,
    failure: Option<String>,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedBackend {
            replies,
            ..Default::default()
        }
    }

    /// Every call fails as a transport error.
    pub fn failing(reason: impl Into<String>) -> Self {
        ScriptedBackend {
            failure: Some(reason.into()),
            ..Default::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl ModelBackend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Fixture
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(request.prompt.clone());
        if let Some(reason) = &self.failure {
            return Err(BackendError::Unavailable(reason.clone()));
        }
        let reply = self
            .replies
            .get(n)
            .or_else(|| self.replies.last())
            .cloned()
            .unwrap_or_default();
        Ok(BackendResponse::text(reply))
    }
}

/// Wraps a backend and counts calls per agent.
pub struct CountingBackend {
    inner: Arc<dyn ModelBackend>,
    counts: Mutex<BTreeMap<AgentName, usize>>,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn ModelBackend>) -> Self {
        CountingBackend {
            inner,
            counts: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn count(&self, agent: AgentName) -> usize {
        self.counts.lock().unwrap().get(&agent).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.lock().unwrap().values().sum()
    }
}

impl ModelBackend for CountingBackend {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        *self.counts.lock().unwrap().entry(request.agent).or_insert(0) += 1;
        self.inner.complete(request)
    }
}
