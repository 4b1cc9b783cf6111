use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use pdt_synth::provider::HttpProvider;
use pdt_synth::{ChatRequest, Provider, ProviderConfig, ProviderError};

const OK_BODY: &str = r#"{"model":"gpt-4o-mini","choices":[{"message":{"role":"assistant","content":"WORD: Fast ||| REVIEW: Snappy."}}],"usage":{"prompt_tokens":12,"completion_tokens":7,"total_tokens":19}}"#;

struct Seen {
    bodies: Vec<String>,
    auth: Vec<Option<String>>,
}

/// Serves one scripted `(status, body)` per connection and records requests.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Seen {
        bodies: Vec::new(),
        auth: Vec::new(),
    }));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            {
                let mut s = log.lock().unwrap();
                s.bodies.push(String::from_utf8(buf).unwrap());
                s.auth.push(auth);
            }
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn cfg(base_url: String) -> ProviderConfig {
    ProviderConfig {
        base_url,
        backoff_base_ms: 5,
        request_timeout_s: 5.0,
        ..ProviderConfig::default()
    }
}

fn req() -> ChatRequest {
    ChatRequest {
        model: "gpt-4o-mini".into(),
        system_prompt: "system".into(),
        user_prompt: "Sentiment score: 0.30".into(),
        temperature: 1.0,
        max_output_tokens: 64,
    }
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let (url, seen) = serve(vec![(429, "{}"), (429, "{}"), (200, OK_BODY)]);
    let p = HttpProvider::new(cfg(url), "sk-test".into()).unwrap();
    let resp = p.complete(&req()).unwrap();
    assert_eq!(resp.retries, 2);
    assert_eq!(resp.text, "WORD: Fast ||| REVIEW: Snappy.");
    assert_eq!((resp.prompt_tokens, resp.completion_tokens), (12, 7));
    let seen = seen.lock().unwrap();
    assert_eq!(seen.bodies.len(), 3);
    assert!(seen.auth.iter().all(|a| a.as_deref() == Some("Bearer sk-test")));
    let body: serde_json::Value = serde_json::from_str(&seen.bodies[0]).unwrap();
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "Sentiment score: 0.30");
    assert_eq!(body["temperature"], 1.0);
}

#[test]
fn unauthorized_fails_without_retry() {
    let (url, seen) = serve(vec![(401, r#"{"error":"bad key"}"#), (200, OK_BODY)]);
    let p = HttpProvider::new(cfg(url), "sk-bad".into()).unwrap();
    assert!(matches!(p.complete(&req()), Err(ProviderError::Auth(_))));
    assert_eq!(seen.lock().unwrap().bodies.len(), 1);
}

#[test]
fn server_errors_exhaust_retry_budget() {
    let (url, seen) = serve(vec![(503, "{}"); 3]);
    let mut c = cfg(url);
    c.max_retries = 2;
    let p = HttpProvider::new(c, "k".into()).unwrap();
    match p.complete(&req()) {
        Err(ProviderError::TransientExhausted { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(seen.lock().unwrap().bodies.len(), 3);
}

#[test]
fn bad_request_is_not_retried() {
    let (url, seen) = serve(vec![(400, r#"{"error":"nope"}"#), (200, OK_BODY)]);
    let p = HttpProvider::new(cfg(url), "k".into()).unwrap();
    assert!(matches!(p.complete(&req()), Err(ProviderError::Http { status: 400, .. })));
    assert_eq!(seen.lock().unwrap().bodies.len(), 1);
}

#[test]
fn malformed_success_body() {
    let (url, _) = serve(vec![(200, r#"{"choices":[]}"#)]);
    let p = HttpProvider::new(cfg(url), "k".into()).unwrap();
    assert!(matches!(p.complete(&req()), Err(ProviderError::MalformedReply(_))));
}

#[test]
fn invalid_request_never_reaches_the_wire() {
    let (url, seen) = serve(vec![(200, OK_BODY)]);
    let p = HttpProvider::new(cfg(url), "k".into()).unwrap();
    let mut r = req();
    r.temperature = 3.0;
    assert!(matches!(p.complete(&r), Err(ProviderError::InvalidRequest(_))));
    assert!(seen.lock().unwrap().bodies.is_empty());
}
