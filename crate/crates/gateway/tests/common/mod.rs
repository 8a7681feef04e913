#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chatbank_core::backend::{BackendError, BackendKind, BackendRequest, BackendResponse, FixtureBackend, ModelBackend};
use chatbank_core::banking::{AmlList, Bank, BankConfig, SeedFile};
use chatbank_core::clock::ManualClock;
use chatbank_core::pipeline::AgentRegistry;
use chatbank_gateway::{router, AuditLog, Gateway, GatewaySettings};
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const ACCOUNT: &str = "1001234567";
pub const TOKEN: &str = "test-admin-token";
pub const JOHN_TRANSFER: &str = "Transfer RM1000 to John's account at Bank ABC account  number 5512345678";

/// Fixture backend that can be held closed so a turn stays in flight.
#[derive(Default)]
pub struct Gate {
    state: Mutex<(bool, bool)>,
    cv: Condvar,
}

impl Gate {
    /// Closes the gate; the next backend call blocks until `open`.
    pub fn close(&self) {
        *self.state.lock().unwrap() = (true, false);
    }

    pub fn open(&self) {
        self.state.lock().unwrap().0 = false;
        self.cv.notify_all();
    }

    /// Blocks until a backend call is waiting at the closed gate.
    pub fn wait_entered(&self) {
        let mut s = self.state.lock().unwrap();
        while !s.1 {
            s = self.cv.wait(s).unwrap();
        }
    }
}

pub struct GatedBackend {
    inner: FixtureBackend,
    gate: Arc<Gate>,
}

impl ModelBackend for GatedBackend {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let mut s = self.gate.state.lock().unwrap();
        if s.0 {
            s.1 = true;
            self.gate.cv.notify_all();
            while s.0 {
                s = self.gate.cv.wait(s).unwrap();
            }
        }
        drop(s);
        self.inner.complete(request)
    }
}

pub struct TestGateway {
    pub app: Router,
    pub gateway: Arc<Gateway>,
    pub clock: Arc<ManualClock>,
    pub bank: Arc<Bank>,
    pub gate: Arc<Gate>,
    pub audit_path: PathBuf,
    _dir: tempfile::TempDir,
}

pub fn gateway() -> TestGateway {
    let dir = tempfile::tempdir().unwrap();
    let audit_path = dir.path().join("audit.jsonl");
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 3, 2, 4, 0, 0).unwrap()));
    let bank = Arc::new(Bank::with_clock(
        SeedFile::builtin(),
        BankConfig::default(),
        AmlList::default(),
        clock.clone(),
    ));
    let gate = Arc::new(Gate::default());
    let backend = GatedBackend {
        inner: FixtureBackend::builtin(),
        gate: gate.clone(),
    };
    let registry = Arc::new(AgentRegistry::builtin(Arc::new(backend), bank.clone()));
    let settings = GatewaySettings {
        admin_token: Some(TOKEN.to_string()),
        ..GatewaySettings::default()
    };
    let gateway = Arc::new(Gateway::new(
        registry,
        clock.clone(),
        AuditLog::open(&audit_path).unwrap(),
        settings,
    ));
    TestGateway {
        app: router(gateway.clone()),
        gateway,
        clock,
        bank,
        gate,
        audit_path,
        _dir: dir,
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
    pub raw: String,
}

impl TestGateway {
    pub async fn send(&self, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(v) => req
                .header("content-type", "application/json")
                .body(Body::from(v.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        self.call(req).await
    }

    pub async fn send_text(&self, uri: &str, text: &str, token: Option<&str>) -> Reply {
        let mut req = Request::builder().method(Method::POST).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        self.call(req.body(Body::from(text.to_string())).unwrap()).await
    }

    async fn call(&self, req: Request<Body>) -> Reply {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let raw = String::from_utf8(bytes.to_vec()).unwrap();
        let body = serde_json::from_str(&raw).unwrap_or(Value::Null);
        Reply { status, body, raw }
    }

    pub async fn open(&self) -> String {
        let r = self
            .send(Method::POST, "/sessions", Some(serde_json::json!({"accountId": ACCOUNT})), None)
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.raw);
        r.body["sessionId"].as_str().unwrap().to_string()
    }

    pub async fn say(&self, session: &str, text: &str) -> Reply {
        self.send(
            Method::POST,
            &format!("/sessions/{session}/messages"),
            Some(serde_json::json!({ "text": text })),
            None,
        )
        .await
    }

    pub async fn decide(&self, session: &str, tx: &str, body: Value) -> Reply {
        self.send(
            Method::POST,
            &format!("/sessions/{session}/transactions/{tx}/decision"),
            Some(body),
            None,
        )
        .await
    }

    pub fn audit_lines(&self) -> Vec<Value> {
        std::fs::read_to_string(&self.audit_path)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}
