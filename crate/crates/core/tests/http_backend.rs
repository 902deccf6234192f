use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use copb::llm::{
    ChatBackend, ChatMessage, CompletionParams, HttpBackend, LlmError, RetryPolicy, Sleeper, StepKey,
};

struct Request {
    headers: Vec<String>,
    body: String,
}

/// Serves one canned `(status, body)` per connection, in order, then stops.
fn serve(responses: Vec<(u16, String)>) -> (String, JoinHandle<Vec<Request>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0;
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
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.push(Request { headers, body: String::from_utf8(buf).unwrap() });
            let reason = if status == 200 { "OK" } else { "Error" };
            write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
        seen
    });
    (url, handle)
}

#[derive(Default)]
struct Recorder(Mutex<Vec<Duration>>);

impl Sleeper for Recorder {
    fn sleep(&self, d: Duration) {
        self.0.lock().unwrap().push(d);
    }
}

fn ok_body(text: &str, usage: bool) -> String {
    let mut v = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
    if usage {
        v["usage"] = serde_json::json!({"prompt_tokens": 31, "completion_tokens": 4});
    }
    v.to_string()
}

fn backend(url: &str, sleeper: Arc<Recorder>) -> HttpBackend {
    let policy = RetryPolicy { max_attempts: 3, backoff_initial_ms: 100, backoff_factor: 2.0 };
    HttpBackend::new(url, Some("secret".into()), policy, Duration::from_secs(5)).with_sleeper(sleeper)
}

fn params() -> CompletionParams {
    CompletionParams { model: "test-model".into(), ..CompletionParams::default() }
}

const KEY: StepKey<'static> = StepKey { tag: "intention", persona_id: "p1", turn: 0 };

#[test]
fn rate_limited_then_ok() {
    let (url, server) = serve(vec![(429, "{}".into()), (200, ok_body("eat", true))]);
    let sleeper = Arc::new(Recorder::default());
    let msgs = [ChatMessage::system("s"), ChatMessage::user("next?")];
    let c = backend(&url, sleeper.clone()).complete(&msgs, &params(), &KEY).unwrap();
    assert_eq!(c.text, "eat");
    assert_eq!((c.usage.prompt_tokens, c.usage.completion_tokens), (31, 4));
    assert!(!c.estimated);
    assert_eq!(*sleeper.0.lock().unwrap(), vec![Duration::from_millis(100)]);

    let reqs = server.join().unwrap();
    assert_eq!(reqs.len(), 2);
    assert!(reqs[0].headers[0].starts_with("POST /v1/chat/completions"));
    assert!(reqs[0]
        .headers
        .iter()
        .any(|h| h == "authorization: Bearer secret" || h == "Authorization: Bearer secret"));
    let body: serde_json::Value = serde_json::from_str(&reqs[1].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][1]["content"], "next?");
    assert_eq!(body["messages"][0]["role"], "system");
}

#[test]
fn client_error_is_not_retried() {
    let (url, server) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let sleeper = Arc::new(Recorder::default());
    let e = backend(&url, sleeper.clone()).complete(&[ChatMessage::user("q")], &params(), &KEY).unwrap_err();
    assert!(matches!(e, LlmError::Status { status: 400, .. }), "{e:?}");
    assert!(sleeper.0.lock().unwrap().is_empty());
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn retries_exhausted() {
    let (url, server) = serve(vec![(503, "{}".into()), (429, "{}".into()), (502, "{}".into())]);
    let sleeper = Arc::new(Recorder::default());
    let e = backend(&url, sleeper.clone()).complete(&[ChatMessage::user("q")], &params(), &KEY).unwrap_err();
    assert!(matches!(e, LlmError::Transport { attempts: 3, .. }), "{e:?}");
    assert_eq!(*sleeper.0.lock().unwrap(), vec![Duration::from_millis(100), Duration::from_millis(200)]);
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn missing_usage_is_estimated() {
    let (url, server) = serve(vec![(200, ok_body("go home", false))]);
    let c = backend(&url, Arc::new(Recorder::default()))
        .complete(&[ChatMessage::user("12345678")], &params(), &KEY)
        .unwrap();
    assert!(c.estimated);
    assert_eq!((c.usage.prompt_tokens, c.usage.completion_tokens), (2, 2));
    server.join().unwrap();
}

#[test]
fn malformed_body_is_protocol_error() {
    let (url, server) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    let e = backend(&url, Arc::new(Recorder::default()))
        .complete(&[ChatMessage::user("q")], &params(), &KEY)
        .unwrap_err();
    assert!(matches!(e, LlmError::Protocol(_)), "{e:?}");
    server.join().unwrap();
}
