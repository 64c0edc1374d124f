//! The live backend against a local stub server.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use umls_augment::llm::{
    hash_request, ChatRequest, GenerationParams, LiveBackend, LiveConfig, LlmError, LlmGateway, ResponseCache,
    RetryPolicy,
};

/// Serves one canned status per connection, in order, and returns the
/// request bodies it saw.
fn stub(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]})
        .to_string()
}

fn gateway(url: String) -> LlmGateway {
    let backend = LiveBackend::new(LiveConfig { endpoint: url, api_key: "k".into(), timeout: Duration::from_secs(10) });
    let retry = RetryPolicy { max_retries: 5, base_delay_ms: 1, max_delay_ms: 5 };
    LlmGateway::new(Arc::new(backend), ResponseCache::in_memory(), retry, 2)
}

fn request() -> ChatRequest {
    ChatRequest {
        model_id: "gpt-4-32k-0613".into(),
        system_message: String::new(),
        user_message: "Extract strength information from the text.".into(),
        params: GenerationParams::default(),
    }
}

#[test]
fn rate_limits_are_retried() {
    let (url, server) = stub(vec![
        (429, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("[('aspirin', '81 mg')]")),
    ]);
    let gw = gateway(url);
    let resp = gw.complete(&request()).unwrap();
    assert_eq!(resp.raw_text, "[('aspirin', '81 mg')]");
    assert_eq!(resp.retries, 2);
    assert!(!resp.cached);
    let bodies = server.join().unwrap();
    assert_eq!(bodies.len(), 3);
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(sent["max_tokens"], 200);
    assert_eq!(sent["top_p"], 0.95);
    assert_eq!(sent["presence_penalty"], -1.0);
    assert_eq!(gw.backend_calls(), 3);
    // Cached now: the server is gone, so a second call must not reach it.
    assert!(gw.complete(&request()).unwrap().cached);
}

#[test]
fn auth_failures_are_not_retried() {
    let (url, server) = stub(vec![(401, "{}".into())]);
    let gw = gateway(url);
    assert!(matches!(gw.complete(&request()), Err(LlmError::Auth(_))));
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let (url, server) = stub(vec![(503, "{}".into()); 6]);
    let gw = gateway(url);
    match gw.complete(&request()) {
        Err(LlmError::ExhaustedRetries { attempts, .. }) => assert_eq!(attempts, 6),
        other => panic!("expected exhausted retries, got {other:?}"),
    }
    assert_eq!(server.join().unwrap().len(), 6);
}

#[test]
fn request_keys_do_not_collide() {
    let mut seen = HashSet::new();
    let base = request();
    for i in 0..100_000u32 {
        let mut r = base.clone();
        match i % 4 {
            0 => r.user_message = format!("note {i}"),
            1 => r.model_id = format!("model-{i}"),
            2 => {
                r.user_message = format!("note {}", i / 4);
                r.params.max_tokens = i;
            }
            _ => {
                r.system_message = format!("{i}");
                r.params.temperature = f64::from(i) / 1e5;
            }
        }
        assert!(seen.insert(hash_request(&r)), "collision at {i}");
    }
}
