//! The HTTP backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use vpop_core::gateway::{ChatRequest, Gateway, GatewayError, ProviderConfig};

struct Seen {
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serve the canned `(status, body)` replies in order, one connection each.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap_or((line, ""));
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                authorization,
                body: serde_json::from_slice(&buf).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"model": "m", "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]})
        .to_string()
}

fn gateway(url: &str, env: &str, retry_limit: u32) -> Gateway {
    let cfg = ProviderConfig {
        endpoint: url.into(),
        credential: env.into(),
        model_id: "test-model".into(),
        retry_limit,
        backoff_base_ms: 1,
        timeout_ms: 5_000,
        ..ProviderConfig::default()
    };
    Gateway::http(cfg).unwrap().with_sleeper(Arc::new(|_: Duration| {}))
}

fn request() -> ChatRequest {
    ChatRequest::new("p1/enrichment/0", "You are a helpful assistant.", "Describe the person.", "")
}

#[test]
fn rate_limited_then_success() {
    std::env::set_var("VPOP_TEST_KEY_RETRY", "sk-test");
    let (url, seen, server) = serve(vec![(429, "{}".into()), (200, ok_body("A narrative."))]);
    let gw = gateway(&url, "VPOP_TEST_KEY_RETRY", 3);
    let resp = gw.complete(&request(), None).unwrap();
    server.join().unwrap();
    assert_eq!(resp.text, "A narrative.");
    assert_eq!(resp.attempt_count, 2);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer sk-test"));
    assert_eq!(seen[1].body["model"], "test-model");
    assert_eq!(seen[1].body["temperature"], 0.7);
    assert_eq!(seen[1].body["messages"][0]["role"], "system");
    let transcript = gw.drain_transcript();
    assert_eq!(transcript.len(), 2);
    assert!(transcript[0].error.as_deref().unwrap().contains("429"));
    assert_eq!(transcript[1].response_text.as_deref(), Some("A narrative."));
    assert!(transcript.iter().all(|t| !t.user_text.contains("sk-test")));
}

#[test]
fn unauthorized_is_not_retried() {
    std::env::set_var("VPOP_TEST_KEY_401", "sk-bad");
    let (url, seen, server) = serve(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let gw = gateway(&url, "VPOP_TEST_KEY_401", 3);
    let err = gw.complete(&request(), None).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, GatewayError::AuthFailure(_)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    std::env::set_var("VPOP_TEST_KEY_500", "sk-test");
    let (url, seen, server) = serve(vec![(500, "oops".into()), (503, "busy".into()), (502, "gw".into())]);
    let gw = gateway(&url, "VPOP_TEST_KEY_500", 2);
    let err = gw.complete(&request(), None).unwrap_err();
    server.join().unwrap();
    match err {
        GatewayError::Exhausted { attempts, last } => {
            assert_eq!(attempts, 3);
            assert!(matches!(*last, GatewayError::Server { status: 502, .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn bad_request_and_empty_content_fail_once() {
    std::env::set_var("VPOP_TEST_KEY_400", "sk-test");
    let (url, seen, server) = serve(vec![(400, "bad".into()), (200, ok_body("   "))]);
    let gw = gateway(&url, "VPOP_TEST_KEY_400", 3);
    assert!(matches!(
        gw.complete(&request(), None).unwrap_err(),
        GatewayError::Rejected { status: 400, .. }
    ));
    assert!(matches!(
        gw.complete(&request(), None).unwrap_err(),
        GatewayError::MalformedResponse(_)
    ));
    server.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn missing_credential_sends_nothing() {
    let gw = gateway("http://127.0.0.1:9/never", "VPOP_TEST_KEY_UNSET_ANYWHERE", 3);
    assert!(matches!(gw.complete(&request(), None).unwrap_err(), GatewayError::AuthFailure(_)));
    assert_eq!(gw.drain_transcript().len(), 1);
}
