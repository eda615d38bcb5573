//! The chat-completions client against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use comprank::agents::{
    build_prompt, complete, Agent, AgentError, AgentKind, LlmConfig, OpenAiClient,
};
use comprank::Item;

struct Request {
    headers: Vec<String>,
    body: serde_json::Value,
}

fn read_request(stream: &mut TcpStream) -> Request {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut headers = Vec::new();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end().to_string();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        headers.push(line);
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    Request {
        headers,
        body: serde_json::from_slice(&body).unwrap(),
    }
}

/// Serves `script` (status, body) in order, one connection each, and records
/// every request it saw.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let (mut stream, _) = listener.accept().unwrap();
            let req = read_request(&mut stream);
            log.lock().unwrap().push(req);
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "id": "x",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

fn config(base_url: String, max_retries: u32) -> LlmConfig {
    LlmConfig {
        base_url,
        model: "test-model".into(),
        api_key_env: "COMPRANK_TEST_KEY_THAT_IS_UNSET".into(),
        max_retries,
        timeout: Duration::from_secs(5),
        initial_backoff: Duration::from_millis(5),
        ..LlmConfig::default()
    }
}

fn one_candidate_prompt() -> comprank::agents::PromptBundle {
    let q = Item::new("q", "Phone");
    let c = Item::new("c", "Phone Case");
    build_prompt(&q, &[&c], AgentKind::Diversity).unwrap()
}

#[test]
fn echo_transport() {
    let (url, seen) = serve(vec![(200, ok_body("[0]"))]);
    let prompt = one_candidate_prompt();
    let out = complete(&prompt, &config(url, 0)).unwrap();
    assert_eq!(out, "[0]");

    let seen = seen.lock().unwrap();
    let body = &seen[0].body;
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"].as_array().unwrap().len(), 1);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], prompt.text.as_str());
    assert!(!seen[0]
        .headers
        .iter()
        .any(|h| h.to_ascii_lowercase().starts_with("authorization")));
}

#[test]
fn retries_through_server_errors() {
    let (url, seen) = serve(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (200, ok_body("[0]")),
    ]);
    let client = OpenAiClient::new(config(url, 3)).unwrap();
    assert_eq!(client.complete(&one_candidate_prompt()).unwrap(), "[0]");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_carry_last_status() {
    let (url, _) = serve(vec![(503, "busy".into()), (502, "bad gateway".into())]);
    let client = OpenAiClient::new(config(url, 1)).unwrap();
    match client.complete(&one_candidate_prompt()).unwrap_err() {
        AgentError::RetriesExhausted { attempts, last } => {
            assert_eq!(attempts, 2);
            assert!(
                matches!(*last, AgentError::Status { status: 502, .. }),
                "{last:?}"
            );
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_host_surfaces_transport_error() {
    // Bind then drop to get a port with nothing listening.
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let client = OpenAiClient::new(config(format!("http://127.0.0.1:{port}/v1"), 0)).unwrap();
    match client.complete(&one_candidate_prompt()).unwrap_err() {
        AgentError::RetriesExhausted { attempts: 1, last } => {
            assert!(matches!(*last, AgentError::Transport(_)), "{last:?}")
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bearer_token_from_named_env_var() {
    let (url, seen) = serve(vec![(200, ok_body("[0]"))]);
    let mut cfg = config(url, 0);
    cfg.api_key_env = "COMPRANK_TEST_BEARER".into();
    std::env::set_var("COMPRANK_TEST_BEARER", "sekret");
    let client = OpenAiClient::new(cfg).unwrap();
    client.complete(&one_candidate_prompt()).unwrap();
    let seen = seen.lock().unwrap();
    assert!(seen[0]
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer sekret")));
}

#[test]
fn missing_content_is_not_retried() {
    let (url, seen) = serve(vec![(200, r#"{"choices":[]}"#.into())]);
    let client = OpenAiClient::new(config(url, 3)).unwrap();
    assert!(matches!(
        client.complete(&one_candidate_prompt()),
        Err(AgentError::MalformedResponse(_))
    ));
    assert_eq!(seen.lock().unwrap().len(), 1);
}
