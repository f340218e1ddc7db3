//! HTTP backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use diversity_harness::model_backend::{
    query, Backend, BackendError, BackendKind, HttpBackend, HttpSettings, ModelConfig, ParseStatus,
    RetryPolicy,
};
use diversity_harness::perturbation::inject;
use diversity_harness::rng::RngStream;
use serde_json::Value;

enum Reply {
    Status(u16, String),
    Stall(Duration),
}

struct Captured {
    head: String,
    body: String,
}

struct FakeServer {
    base_url: String,
    captured: Arc<Mutex<Vec<Captured>>>,
    handle: JoinHandle<()>,
}

fn serve(script: Vec<Reply>) -> FakeServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let captured = Arc::new(Mutex::new(Vec::new()));
    let sink = captured.clone();
    let handle = std::thread::spawn(move || {
        for reply in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).unwrap();
            sink.lock().unwrap().push(Captured {
                head,
                body: String::from_utf8(body).unwrap(),
            });
            let mut stream = reader.into_inner();
            match reply {
                Reply::Status(code, body) => {
                    let resp = format!(
                        "HTTP/1.1 {code} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    let _ = stream.write_all(resp.as_bytes());
                }
                Reply::Stall(d) => std::thread::sleep(d),
            }
        }
    });
    FakeServer {
        base_url,
        captured,
        handle,
    }
}

fn chat(content: &str) -> Reply {
    let body = serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    });
    Reply::Status(200, body.to_string())
}

fn backend(server: &FakeServer, max_retries: u32, key_env: Option<&str>) -> HttpBackend {
    let config = ModelConfig {
        backend: BackendKind::Http,
        model_name: "test-model".into(),
        temperature: 0.7,
        max_retries,
        request_timeout_secs: 0.5,
        http: HttpSettings {
            base_url: server.base_url.clone(),
            path: "/v1/chat/completions".into(),
            api_key_env: key_env.map(str::to_string),
        },
    };
    let policy = RetryPolicy {
        base_delay: Duration::from_millis(1),
        ..RetryPolicy::standard(max_retries)
    };
    HttpBackend::with_retry(&config, policy).unwrap()
}

fn prompt() -> diversity_harness::perturbation::InjectedPrompt {
    inject("clone", "Name 3 Shakespeare plays.").unwrap()
}

#[test]
fn successful_request_carries_prompt_and_instruction() {
    std::env::set_var("HARNESS_TEST_KEY", "sekrit-123");
    let server = serve(vec![chat(r#"["Hamlet", "Macbeth", "Othello"]"#)]);
    let b = backend(&server, 0, Some("HARNESS_TEST_KEY"));
    let r = query(&b, &prompt(), 3, &mut RngStream::derive(0, "t", &[])).unwrap();
    assert_eq!(r.parse_status, ParseStatus::Ok);
    assert_eq!(r.items, vec!["Hamlet", "Macbeth", "Othello"]);
    server.handle.join().unwrap();

    let captured = server.captured.lock().unwrap();
    assert_eq!(captured.len(), 1);
    assert!(captured[0].head.starts_with("POST /v1/chat/completions "));
    assert!(captured[0]
        .head
        .to_ascii_lowercase()
        .contains("authorization: bearer sekrit-123"));
    let body: Value = serde_json::from_str(&captured[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["messages"][0]["role"], "system");
    assert!(body["messages"][0]["content"]
        .as_str()
        .unwrap()
        .contains("exactly 3 strings"));
    assert_eq!(
        body["messages"][1]["content"],
        "clone\nName 3 Shakespeare plays."
    );
}

#[test]
fn server_errors_are_retried() {
    let server = serve(vec![
        Reply::Status(500, "{}".into()),
        Reply::Status(429, "{}".into()),
        chat(r#"["a", "b", "c"]"#),
    ]);
    let b = backend(&server, 3, None);
    let text = b
        .complete(&prompt(), 3, &mut RngStream::derive(0, "t", &[]))
        .unwrap();
    assert_eq!(text, r#"["a", "b", "c"]"#);
    server.handle.join().unwrap();
    assert_eq!(server.captured.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_report_unavailable() {
    let server = serve(vec![
        Reply::Status(503, "{}".into()),
        Reply::Status(503, "{}".into()),
        Reply::Status(503, "{}".into()),
    ]);
    let b = backend(&server, 2, None);
    let err = b
        .complete(&prompt(), 3, &mut RngStream::derive(0, "t", &[]))
        .unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
    server.handle.join().unwrap();
    assert_eq!(server.captured.lock().unwrap().len(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let server = serve(vec![Reply::Status(401, r#"{"error":"bad key"}"#.into())]);
    let b = backend(&server, 3, None);
    let err = b
        .complete(&prompt(), 3, &mut RngStream::derive(0, "t", &[]))
        .unwrap_err();
    assert!(matches!(err, BackendError::AuthFailure(_)), "{err:?}");
    server.handle.join().unwrap();
    assert_eq!(server.captured.lock().unwrap().len(), 1);
}

#[test]
fn stalled_server_times_out() {
    let server = serve(vec![
        Reply::Stall(Duration::from_millis(1500)),
        Reply::Stall(Duration::from_millis(1500)),
    ]);
    let b = backend(&server, 1, None);
    let err = b
        .complete(&prompt(), 3, &mut RngStream::derive(0, "t", &[]))
        .unwrap_err();
    assert_eq!(err, BackendError::Timeout);
    server.handle.join().unwrap();
}

#[test]
fn unreachable_server_is_unavailable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let config = ModelConfig {
        backend: BackendKind::Http,
        max_retries: 1,
        http: HttpSettings {
            base_url: format!("http://{addr}"),
            ..HttpSettings::default()
        },
        ..ModelConfig::default()
    };
    let policy = RetryPolicy {
        base_delay: Duration::from_millis(1),
        ..RetryPolicy::standard(1)
    };
    let b = HttpBackend::with_retry(&config, policy).unwrap();
    let err = b
        .complete(&prompt(), 3, &mut RngStream::derive(0, "t", &[]))
        .unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
}

#[test]
fn malformed_reply_is_a_parse_failure_not_an_error() {
    let server = serve(vec![chat("Hamlet, Macbeth and Othello.")]);
    let b = backend(&server, 0, None);
    let r = query(&b, &prompt(), 3, &mut RngStream::derive(0, "t", &[])).unwrap();
    assert!(matches!(r.parse_status, ParseStatus::Failed(_)));
    assert!(r.items.is_empty());
    server.handle.join().unwrap();
}
