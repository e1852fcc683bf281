//! The HTTP transport against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use gagne_core::gateway::{CompletionRequest, Gateway, ProviderConfig, RetryPolicy, SecretString};
use gagne_core::GatewayError;

struct Captured {
    request_line: String,
    headers: Vec<(String, String)>,
    body: serde_json::Value,
}

/// Serve one canned response per entry, capturing each request.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, payload) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
            }
            let len: usize = headers.iter().find(|(k, _)| k == "content-length").map(|(_, v)| v.parse().unwrap()).unwrap_or(0);
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&body).unwrap(),
            })
            .unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), rx)
}

fn config(base_url: String) -> ProviderConfig {
    ProviderConfig {
        base_url,
        api_key: SecretString::new("sk-wire-test"),
        model_name: "test-model".into(),
        timeout: Duration::from_secs(5),
        ..ProviderConfig::default()
    }
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn posts_chat_completion_with_bearer_auth() {
    let (url, rx) = serve(vec![(200, ok_body("Let's begin with a puzzle."))]);
    let gateway = Gateway::http(config(url)).unwrap();
    let text = gateway.complete(&CompletionRequest::new("system words", "user words").with_seed(9)).unwrap();
    assert_eq!(text, "Let's begin with a puzzle.");

    let seen = rx.recv().unwrap();
    assert_eq!(seen.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert!(seen.headers.contains(&("authorization".into(), "Bearer sk-wire-test".into())));
    assert_eq!(seen.body["model"], "test-model");
    assert_eq!(seen.body["seed"], 9);
    assert_eq!(seen.body["temperature"], 0.7);
    assert_eq!(seen.body["messages"][0]["role"], "system");
    assert_eq!(seen.body["messages"][0]["content"], "system words");
    assert_eq!(seen.body["messages"][1]["role"], "user");
    assert_eq!(seen.body["messages"][1]["content"], "user words");
}

#[test]
fn retries_server_errors_over_the_wire() {
    let (url, rx) = serve(vec![(503, "{}".into()), (200, ok_body("ok"))]);
    let gateway = Gateway::http(config(url)).unwrap().with_retry(RetryPolicy::immediate());
    let done = gateway.complete_traced(&CompletionRequest::new("s", "u")).unwrap();
    assert_eq!(done.text, "ok");
    assert_eq!(done.attempts.len(), 2);
    assert_eq!(rx.iter().take(2).count(), 2);
}

#[test]
fn unauthorized_is_not_retried() {
    let (url, rx) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let gateway = Gateway::http(config(url)).unwrap().with_retry(RetryPolicy::immediate());
    let err = gateway.complete(&CompletionRequest::new("s", "u")).unwrap_err();
    assert!(matches!(err, GatewayError::Auth { status: 401 }));
    assert!(!format!("{err}").contains("sk-wire-test"));
    assert_eq!(rx.iter().count(), 1);
}

#[test]
fn unreachable_host_is_a_transport_error() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let mut cfg = config(format!("http://127.0.0.1:{port}"));
    cfg.max_retries = 1;
    let gateway = Gateway::http(cfg).unwrap().with_retry(RetryPolicy::immediate());
    match gateway.complete(&CompletionRequest::new("s", "u")) {
        Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected transport error, got {other:?}"),
    }
}
