use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionProvider, CompletionRequest, ConfidenceProvider, ProviderError};
use crate::promptcodec::PromptMode;

/// Where and how to reach an HTTP service. The API key is read from the
/// named environment variable at request time and sent as a bearer token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEndpoint {
    pub url: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        HttpEndpoint { url: url.into(), api_key_env: None, timeout_secs: default_timeout_secs() }
    }

    fn api_key(&self) -> Result<Option<String>, ProviderError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ProviderError::Fatal(format!("environment variable {var} is not set"))),
        }
    }
}

/// POSTs a JSON body and returns the decoded JSON response. 429, 5xx and
/// transport failures are transient; other 4xx are fatal.
pub fn post_json(endpoint: &HttpEndpoint, body: &Value) -> Result<Value, ProviderError> {
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(endpoint.timeout_secs))).build().into();
    let mut req = agent.post(&endpoint.url).header("Content-Type", "application/json");
    if let Some(key) = endpoint.api_key()? {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let payload = serde_json::to_string(body).map_err(|e| ProviderError::Fatal(e.to_string()))?;
    match req.send(payload.as_str()) {
        Ok(mut resp) => {
            let text = resp.body_mut().read_to_string().map_err(|e| ProviderError::transient(None, e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| ProviderError::Protocol(e.to_string()))
        }
        Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
            Err(ProviderError::transient(Some(code), format!("HTTP {code}")))
        }
        Err(ureq::Error::StatusCode(code)) => Err(ProviderError::Fatal(format!("HTTP {code}"))),
        Err(e) => Err(ProviderError::transient(None, e.to_string())),
    }
}

/// Chat-completion service: `{model, messages, temperature, max_tokens}` is
/// answered with `{content}`. Confidence requests add `"logprobs": true` and
/// expect a `mean_logprob` field (mean token log-probability of the output).
#[derive(Debug, Clone)]
pub struct HttpChatProvider {
    pub endpoint: HttpEndpoint,
    pub model: String,
}

impl HttpChatProvider {
    pub fn new(endpoint: HttpEndpoint, model: impl Into<String>) -> Self {
        HttpChatProvider { endpoint, model: model.into() }
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let messages = match req.prompt.mode {
            PromptMode::MessagePairs => req.prompt.to_messages(),
            PromptMode::Separator => vec![crate::promptcodec::ChatMessage::user(req.prompt.to_text())],
        };
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        })
    }
}

impl CompletionProvider for HttpChatProvider {
    fn tag(&self) -> String {
        format!("http:{}", self.model)
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let resp = post_json(&self.endpoint, &self.body(req))?;
        resp.get("content")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| ProviderError::Protocol("response lacks string field `content`".into()))
    }
}

impl ConfidenceProvider for HttpChatProvider {
    fn tag(&self) -> String {
        format!("http:{}", self.model)
    }

    fn confidence(&self, req: &CompletionRequest) -> Result<f64, ProviderError> {
        let mut body = self.body(req);
        body["logprobs"] = Value::Bool(true);
        let resp = post_json(&self.endpoint, &body)?;
        match resp.get("mean_logprob") {
            Some(v) => v.as_f64().ok_or_else(|| ProviderError::Protocol("`mean_logprob` is not a number".into())),
            None => Err(ProviderError::Capability(format!("{} does not return log-probabilities", self.model))),
        }
    }
}
