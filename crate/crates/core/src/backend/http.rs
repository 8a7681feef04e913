//! Generic chat-completion client.
//!
//! Sends `{"model": <adapter id>, "messages": [...]}` to
//! `<endpoint>/chat/completions` and reads `choices[0].message.content`.
//! Decoding parameters are passed through untouched from configuration.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{BackendError, BackendKind, BackendRequest, BackendResponse, ModelBackend};
use crate::envelope::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct HttpBackendConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Opaque decoding parameters merged into the request body.
    pub params: Map<String, Value>,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: "http://127.0.0.1:8000/v1".to_string(),
            api_key_env: "CHATBANK_MODEL_API_KEY".to_string(),
            timeout_secs: 30,
            params: Map::new(),
        }
    }
}

pub struct HttpChatBackend {
    url: String,
    api_key: Option<String>,
    params: Map<String, Value>,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(config: &HttpBackendConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: &HttpBackendConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        HttpChatBackend {
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            api_key,
            params: config.params.clone(),
            agent,
        }
    }

    pub fn request_body(&self, request: &BackendRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.prompt})];
        for turn in &request.history {
            let role = match turn.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": turn.text}));
        }
        messages.push(json!({"role": "user", "content": request.message}));
        let mut body = Map::new();
        for (k, v) in &self.params {
            body.insert(k.clone(), v.clone());
        }
        body.insert("model".into(), Value::String(request.adapter_id.clone()));
        body.insert("messages".into(), Value::Array(messages));
        Value::Object(body)
    }
}

#[derive(Deserialize)]
struct CompletionReply {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl ModelBackend for HttpChatBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::HttpChatCompletion
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(self.request_body(request))
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let reply: CompletionReply = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Unavailable(format!("unreadable completion: {e}")))?;
        let text = reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        Ok(BackendResponse {
            text,
            prompt_tokens: reply.usage.as_ref().and_then(|u| u.prompt_tokens),
            completion_tokens: reply.usage.as_ref().and_then(|u| u.completion_tokens),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::AgentName;
    use crate::canonical::SchemaId;
    use crate::envelope::ChatTurn;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn request() -> BackendRequest {
        BackendRequest {
            agent: AgentName::Intent,
            adapter_id: "intent-lora-v3".into(),
            schema: SchemaId::IntentResult,
            prompt: "classify".into(),
            history: vec![ChatTurn::user("hi"), ChatTurn::assistant("hello")],
            message: "tsfr 200 to bank acc".into(),
            attempt: 1,
        }
    }

    #[test]
    fn body_carries_adapter_and_params() {
        let mut cfg = HttpBackendConfig::default();
        cfg.params.insert("temperature".into(), json!(0.0));
        let backend = HttpChatBackend::with_key(&cfg, None);
        let body = backend.request_body(&request());
        assert_eq!(body["model"], "intent-lora-v3");
        assert_eq!(body["temperature"], 0.0);
        let msgs = body["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 4);
        assert_eq!(msgs[0]["role"], "system");
        assert_eq!(msgs[2]["role"], "assistant");
        assert_eq!(msgs[3]["content"], "tsfr 200 to bank acc");
    }

    #[test]
    fn round_trip_against_local_server() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).unwrap();
            let sent: Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(sent["model"], "intent-lora-v3");
            let reply = r#"{"choices":[{"message":{"content":"{\"intent\":\"PAYMENT\",\"clarificationNeeded\":false,\"message\":null}"}}],"usage":{"prompt_tokens":42,"completion_tokens":7}}"#;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
            auth
        });
        let cfg = HttpBackendConfig {
            endpoint: format!("http://{addr}/v1/"),
            ..Default::default()
        };
        let backend = HttpChatBackend::with_key(&cfg, Some("secret".into()));
        let out = backend.complete(&request()).unwrap();
        assert!(out.text.contains("PAYMENT"));
        assert_eq!(out.prompt_tokens, Some(42));
        assert_eq!(out.completion_tokens, Some(7));
        assert!(server.join().unwrap().eq_ignore_ascii_case("authorization: Bearer secret"));
    }

    #[test]
    fn refused_connection_is_unavailable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let cfg = HttpBackendConfig {
            endpoint: format!("http://{addr}"),
            timeout_secs: 2,
            ..Default::default()
        };
        let err = HttpChatBackend::with_key(&cfg, None).complete(&request()).unwrap_err();
        assert!(matches!(err, BackendError::Unavailable(_)));
    }
}
