use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use agentic_control::provider::{CompletionProvider, CompletionRequest, HttpProvider, ProviderConfig, ProviderError};
use serde_json::Value;

struct Canned {
    status: u16,
    body: String,
    delay_ms: u64,
}

fn canned(status: u16, body: &str) -> Canned {
    Canned {
        status,
        body: body.to_string(),
        delay_ms: 0,
    }
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3}
    })
    .to_string()
}

/// Answers one connection per canned response and returns the raw requests.
fn serve(responses: Vec<Canned>) -> (String, JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for c in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            seen.push(head + &String::from_utf8(body).unwrap());
            thread::sleep(Duration::from_millis(c.delay_ms));
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                c.status,
                c.body.len(),
                c.body
            );
        }
        seen
    });
    (url, handle)
}

fn config(url: &str) -> ProviderConfig {
    ProviderConfig {
        endpoint: url.to_string(),
        model: "stub-model".into(),
        api_key_env: Some("AGENTIC_CONTROL_STUB_KEY".into()),
        backoff_ms: 1,
        timeout_s: 5.0,
        ..ProviderConfig::default()
    }
}

fn json_body(raw: &str) -> Value {
    serde_json::from_str(raw.split("\r\n\r\n").nth(1).unwrap()).unwrap()
}

#[test]
fn retries_server_errors_then_succeeds() {
    std::env::set_var("AGENTIC_CONTROL_STUB_KEY", "sk-test-123");
    let (url, server) = serve(vec![canned(500, "oops"), canned(500, "oops"), canned(200, &ok_body("[0, 1]"))]);
    let p = HttpProvider::new(config(&url)).unwrap();
    let r = p.complete(&CompletionRequest::new("sys", "find a path")).unwrap();
    assert_eq!(r.text, "[0, 1]");
    assert_eq!(r.retries, 2);
    assert_eq!(r.usage.unwrap().completion_tokens, 3);
    assert!(r.latency_s > 0.0);

    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 3);
    let first = &seen[0];
    assert!(first.starts_with("POST /v1/chat/completions "));
    assert!(first.to_ascii_lowercase().contains("authorization: bearer sk-test-123"));
    let body = json_body(first);
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["top_p"], 0.1);
    assert_eq!(body["max_tokens"], 512);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], "sys");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "find a path");
    assert_eq!(json_body(&seen[2]), body);
    assert!(!format!("{p:?}").contains("sk-test-123"));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, server) = serve(vec![canned(400, "{\"error\": \"bad\"}")]);
    let p = HttpProvider::new(config(&url)).unwrap();
    let err = p.complete(&CompletionRequest::new("", "x")).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { status: Some(400), .. }), "{err:?}");
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn retries_are_bounded() {
    let (url, server) = serve((0..4).map(|_| canned(503, "busy")).collect());
    let p = HttpProvider::new(config(&url)).unwrap();
    let err = p.complete(&CompletionRequest::new("", "x")).unwrap_err();
    assert!(matches!(err, ProviderError::Transport { status: Some(503), .. }), "{err:?}");
    assert_eq!(server.join().unwrap().len(), 4);
}

#[test]
fn slow_server_times_out() {
    let (url, server) = serve(vec![Canned {
        status: 200,
        body: ok_body("late"),
        delay_ms: 1500,
    }]);
    let mut cfg = config(&url);
    cfg.timeout_s = 0.3;
    cfg.retries = 0;
    let p = HttpProvider::new(cfg).unwrap();
    let err = p.complete(&CompletionRequest::new("", "x")).unwrap_err();
    assert!(matches!(err, ProviderError::Timeout { .. }), "{err:?}");
    server.join().unwrap();
}

#[test]
fn malformed_reply_is_reported() {
    let (url, server) = serve(vec![canned(200, "{\"choices\": []}"), canned(200, "not json")]);
    let p = HttpProvider::new(config(&url)).unwrap();
    for _ in 0..2 {
        let err = p.complete(&CompletionRequest::new("", "x")).unwrap_err();
        assert!(matches!(err, ProviderError::MalformedResponse(_)), "{err:?}");
    }
    server.join().unwrap();
}
