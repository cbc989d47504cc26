//! Client for a hosted chat-completion model used as an extraction backend.

use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde_json::{json, Value};

use super::{resolve, Candidates, ExtractionBackend, ExtractionResult, IntakeError};
use crate::skyway::SkywayNetwork;

pub const ENV_ENDPOINT: &str = "DAAS_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "DAAS_LLM_MODEL";
pub const ENV_API_KEY: &str = "DAAS_LLM_API_KEY";

const INSTRUCTION: &str = "You convert drone delivery requests into structured form. \
Read the customer message and answer with exactly one line in this format and nothing else:\n\
start_node=<pickup node id>, destination_node=<drop-off node id>, payload=<weight>kg\n\n\
Customer message:\n";

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
    /// Extra attempts after a malformed reply.
    pub max_retries: usize,
    /// Upper bound on requests in flight during batch extraction.
    pub concurrency: usize,
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        BackendConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            concurrency: 4,
        }
    }

    pub fn from_env() -> Result<Self, IntakeError> {
        let get = |k: &'static str| std::env::var(k).map_err(|_| IntakeError::MissingEnv(k));
        Ok(BackendConfig::new(get(ENV_ENDPOINT)?, get(ENV_MODEL)?, get(ENV_API_KEY)?))
    }
}

/// One prompt in, one reply text out.
pub trait ChatTransport: Sync {
    fn complete(&self, cfg: &BackendConfig, prompt: &str) -> Result<String, IntakeError>;
}

/// Blocking HTTP transport speaking the common chat-completion JSON shape.
#[derive(Debug, Default, Clone, Copy)]
pub struct HttpChatTransport;

impl ChatTransport for HttpChatTransport {
    fn complete(&self, cfg: &BackendConfig, prompt: &str) -> Result<String, IntakeError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(cfg.timeout)).build().into();
        let body = json!({
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => IntakeError::Timeout(cfg.timeout),
            other => IntakeError::BackendUnavailable(other.to_string()),
        };
        let resp = agent
            .post(&cfg.endpoint)
            .header("Authorization", &format!("Bearer {}", cfg.api_key))
            .send_json(&body)
            .map_err(map_err)?;
        let value: Value = resp.into_body().read_json().map_err(map_err)?;
        // A reply without the expected text field is treated as empty so the
        // retry logic sees it as malformed.
        Ok(value["choices"][0]["message"]["content"].as_str().unwrap_or_default().to_string())
    }
}

pub fn prompt_for(text: &str) -> String {
    format!("{INSTRUCTION}{text}")
}

fn reply_regexes() -> &'static [Regex; 3] {
    static RE: OnceLock<[Regex; 3]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"(?i)\bstart_node\s*=\s*(\d+)").expect("valid regex"),
            Regex::new(r"(?i)\bdestination_node\s*=\s*(\d+)").expect("valid regex"),
            Regex::new(r"(?i)\bpayload(?:_kg)?\s*=\s*(\d+(?:\.\d+)?)").expect("valid regex"),
        ]
    })
}

/// Parse a `key=value` reply; `None` if no key is present at all.
pub fn parse_reply(reply: &str, net: &SkywayNetwork) -> Option<ExtractionResult> {
    let [s, d, p] = reply_regexes();
    let grab = |re: &Regex| re.captures(reply).map(|c| c[1].to_string());
    let (s, d, p) = (grab(s), grab(d), grab(p));
    if s.is_none() && d.is_none() && p.is_none() {
        return None;
    }
    let id = |v: Option<String>| v.map(|x| x.parse().unwrap_or(u64::MAX)).into_iter().collect();
    Some(resolve(Candidates { start: id(s), destination: id(d), payload: p.and_then(|x| x.parse().ok()) }, net))
}

/// Query the backend, retrying malformed replies up to `cfg.max_retries` times.
pub fn extract_llm(
    text: &str,
    cfg: &BackendConfig,
    transport: &dyn ChatTransport,
    net: &SkywayNetwork,
) -> Result<ExtractionResult, IntakeError> {
    let prompt = prompt_for(text);
    let attempts = cfg.max_retries + 1;
    let mut last_reply = String::new();
    for _ in 0..attempts {
        last_reply = transport.complete(cfg, &prompt)?;
        if let Some(r) = parse_reply(&last_reply, net) {
            return Ok(r);
        }
    }
    Err(IntakeError::MalformedReplyAfterRetries { attempts, last_reply })
}

pub struct LlmBackend<'a> {
    pub cfg: BackendConfig,
    pub transport: Box<dyn ChatTransport + 'a>,
    pub net: &'a SkywayNetwork,
}

impl<'a> LlmBackend<'a> {
    pub fn http(cfg: BackendConfig, net: &'a SkywayNetwork) -> Self {
        LlmBackend { cfg, transport: Box::new(HttpChatTransport), net }
    }
}

impl ExtractionBackend for LlmBackend<'_> {
    fn name(&self) -> String {
        format!("llm:{}", self.cfg.model)
    }

    fn extract(&self, text: &str) -> Result<ExtractionResult, IntakeError> {
        extract_llm(text, &self.cfg, self.transport.as_ref(), self.net)
    }

    fn concurrency(&self) -> Option<usize> {
        Some(self.cfg.concurrency)
    }
}
