use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use super::{estimate_tokens, ChatMessage, ChatProvider, LimitReason, ProviderError, Role};

/// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
pub const ENDPOINT_ENV: &str = "PICBREEDER_API_BASE";
pub const API_KEY_ENV: &str = "PICBREEDER_API_KEY";
pub const MODEL_ENV: &str = "PICBREEDER_MODEL";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_tokens: u32,
    pub temperature: Option<f64>,
    /// Upper bound on concurrent requests through one client.
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_tokens: 512,
            temperature: None,
            max_in_flight: 16,
        }
    }

    /// Reads the endpoint and key from the environment. `endpoint` overrides
    /// the environment's base URL when given.
    pub fn from_env(endpoint: Option<&str>) -> Result<Self, ProviderError> {
        let base = match endpoint {
            Some(e) => e.to_string(),
            None => std::env::var(ENDPOINT_ENV)
                .map_err(|_| ProviderError::NotConfigured(format!("{ENDPOINT_ENV} is not set")))?,
        };
        let mut config = HttpConfig::new(base);
        config.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(config)
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Gate {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Chat client for OpenAI-compatible `chat/completions` endpoints.
pub struct HttpChat {
    config: HttpConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl std::fmt::Debug for HttpChat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChat")
            .field("endpoint", &self.config.endpoint)
            .finish_non_exhaustive()
    }
}

pub(super) fn make_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(super) fn data_url(png: &[u8]) -> String {
    format!("data:image/png;base64,{}", BASE64.encode(png))
}

fn message_json(m: &ChatMessage) -> Value {
    if m.images.is_empty() || m.role != Role::User {
        return json!({ "role": m.role.as_str(), "content": m.text });
    }
    let mut parts = vec![json!({ "type": "text", "text": m.text })];
    for img in &m.images {
        parts.push(json!({ "type": "image_url", "image_url": { "url": data_url(img) } }));
    }
    json!({ "role": "user", "content": parts })
}

/// Sends `body` to `url` and maps transport and status failures onto [`ProviderError`].
pub(super) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
    estimated_tokens: usize,
) -> Result<Value, ProviderError> {
    let mut request = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        request = request.header("Authorization", format!("Bearer {key}"));
    }
    let mut response = request.send_json(body).map_err(|e| match e {
        ureq::Error::Timeout(_) => ProviderError::RateLimited {
            retry_after: None,
            reason: LimitReason::Timeout,
        },
        other => ProviderError::Network(other.to_string()),
    })?;
    let status = response.status().as_u16();
    let retry_after = response
        .headers()
        .get("retry-after")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<f64>().ok())
        .map(Duration::from_secs_f64);
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| ProviderError::Network(e.to_string()))?;
    let snippet: String = text.chars().take(300).collect();
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string())),
        401 | 403 => Err(ProviderError::Auth(format!("status {status}"))),
        408 | 504 => Err(ProviderError::RateLimited {
            retry_after,
            reason: LimitReason::Timeout,
        }),
        429 => Err(ProviderError::RateLimited {
            retry_after,
            reason: LimitReason::Throttled,
        }),
        400 | 413 if text.contains("context_length") || text.contains("maximum context") => {
            Err(ProviderError::ContextLimit { estimated_tokens })
        }
        _ => Err(ProviderError::Network(format!("status {status}: {snippet}"))),
    }
}

impl HttpChat {
    pub fn new(config: HttpConfig) -> Self {
        HttpChat {
            agent: make_agent(config.timeout),
            gate: Gate::new(config.max_in_flight),
            config,
        }
    }

    pub fn request_body(&self, messages: &[ChatMessage], model: &str) -> Value {
        let mut body = json!({
            "model": model,
            "messages": messages.iter().map(message_json).collect::<Vec<_>>(),
            "max_tokens": self.config.max_tokens,
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

impl ChatProvider for HttpChat {
    fn complete(&self, messages: &[ChatMessage], model: &str) -> Result<String, ProviderError> {
        let _slot = self.gate.enter();
        let url = format!("{}/chat/completions", self.config.endpoint);
        let reply = post_json(
            &self.agent,
            &url,
            self.config.api_key.as_deref(),
            &self.request_body(messages, model),
            estimate_tokens(messages),
        )?;
        let choice = &reply["choices"][0];
        if choice["finish_reason"] == "content_filter" {
            return Err(ProviderError::ContentRefusal("content filter".into()));
        }
        if let Some(refusal) = choice["message"]["refusal"].as_str() {
            return Err(ProviderError::ContentRefusal(refusal.to_string()));
        }
        choice["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("reply has no message content".into()))
    }
}

#[cfg(test)]
pub(super) mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;
    use std::thread::JoinHandle;

    /// Serves one canned HTTP response and hands back the request body.
    pub fn one_shot(status: u16, headers: &str, body: &str) -> (String, JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let response = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{headers}\r\n{body}",
            body.len()
        );
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = stream;
            stream.write_all(response.as_bytes()).unwrap();
            String::from_utf8(buf).unwrap()
        });
        (format!("http://{addr}"), handle)
    }

    fn client(endpoint: String) -> HttpChat {
        let mut config = HttpConfig::new(endpoint);
        config.api_key = Some("secret".into());
        config.timeout = Duration::from_secs(5);
        HttpChat::new(config)
    }

    #[test]
    fn sends_images_as_data_urls() {
        let (url, server) = one_shot(
            200,
            "",
            r#"{"choices":[{"message":{"content":"SELECT 1"},"finish_reason":"stop"}]}"#,
        );
        let chat = client(url);
        let msgs = vec![
            ChatMessage::system("sys"),
            ChatMessage::user("look", vec![Arc::from(&[1u8, 2, 3][..])]),
        ];
        assert_eq!(chat.complete(&msgs, "m1").unwrap(), "SELECT 1");
        let sent: Value = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(sent["model"], "m1");
        assert_eq!(sent["messages"][0]["content"], "sys");
        assert_eq!(
            sent["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AQID"
        );
    }

    #[test]
    fn status_codes_map_to_typed_errors() {
        let cases: Vec<(u16, &str, &str)> = vec![
            (401, "", "{}"),
            (429, "Retry-After: 2\r\n", "{}"),
            (504, "", "{}"),
            (400, "", r#"{"error":{"code":"context_length_exceeded"}}"#),
            (200, "", r#"{"choices":[{"message":{"content":null,"refusal":"no"}}]}"#),
            (200, "", "not json"),
        ];
        let mut got = Vec::new();
        for (status, headers, body) in cases {
            let (url, server) = one_shot(status, headers, body);
            got.push(client(url).complete(&[ChatMessage::user("x", vec![])], "m").unwrap_err());
            server.join().unwrap();
        }
        assert!(matches!(got[0], ProviderError::Auth(_)));
        assert_eq!(
            got[1],
            ProviderError::RateLimited {
                retry_after: Some(Duration::from_secs(2)),
                reason: LimitReason::Throttled
            }
        );
        assert!(matches!(got[2], ProviderError::RateLimited { reason: LimitReason::Timeout, .. }));
        assert!(matches!(got[3], ProviderError::ContextLimit { .. }));
        assert!(matches!(got[4], ProviderError::ContentRefusal(_)));
        assert!(matches!(got[5], ProviderError::Malformed(_)));
    }

    #[test]
    fn unreachable_endpoint_is_network_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = client(format!("http://{addr}"))
            .complete(&[ChatMessage::user("x", vec![])], "m")
            .unwrap_err();
        assert!(matches!(err, ProviderError::Network(_)), "{err:?}");
    }
}
