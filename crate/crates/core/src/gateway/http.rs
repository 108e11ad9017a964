use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendReply, ChatRequest, GatewayError, MockContext, ProviderConfig};

/// The JSON body sent for a request: `model`, `messages` (system then user),
/// `temperature`, and `max_tokens` when set.
pub fn wire_payload(req: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if !req.system_text.is_empty() {
        messages.push(json!({"role": "system", "content": req.system_text}));
    }
    messages.push(json!({"role": "user", "content": req.user_text}));
    let mut body = json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.effective_temperature(),
    });
    if let Some(max) = req.max_output {
        body["max_tokens"] = json!(max);
    }
    body
}

/// Pull the completion text out of a provider reply.
pub fn extract_text(body: &str) -> Result<(String, BTreeMap<String, String>), GatewayError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::MalformedResponse(format!("body is not JSON: {e}")))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))?;
    let mut meta = BTreeMap::new();
    for key in ["id", "model", "created"] {
        if let Some(val) = v.get(key) {
            meta.insert(key.to_string(), val.as_str().map_or_else(|| val.to_string(), str::to_string));
        }
    }
    if let Some(reason) = v.pointer("/choices/0/finish_reason").and_then(Value::as_str) {
        meta.insert("finish_reason".into(), reason.into());
    }
    if let Some(usage) = v.get("usage").and_then(Value::as_object) {
        for (k, val) in usage {
            meta.insert(format!("usage.{k}"), val.to_string());
        }
    }
    Ok((text.to_string(), meta))
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    credential: String,
}

impl HttpBackend {
    pub fn new(cfg: &ProviderConfig) -> Result<HttpBackend, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: cfg.endpoint.clone(),
            credential: cfg.credential.clone(),
        })
    }
}

impl Backend for HttpBackend {
    fn send(&self, req: &ChatRequest, _ctx: Option<&MockContext>) -> Result<BackendReply, GatewayError> {
        let key = std::env::var(&self.credential).map_err(|_| {
            GatewayError::AuthFailure(format!("environment variable {} is not set", self.credential))
        })?;
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(&wire_payload(req))
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::from_status(status, body.chars().take(500).collect()));
        }
        let (text, meta) = extract_text(&body)?;
        Ok(BackendReply { text, meta })
    }

    fn name(&self) -> &str {
        "http"
    }
}
