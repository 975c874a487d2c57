//! HTTP oracle against a local scripted server: retry policy, fatal statuses,
//! key handling and the response cache.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use personaload::oracle::{CachedOracle, HttpOracle, Oracle, OracleConfig, Prompt, PromptMeta};
use personaload::{Error, ErrorClass};

const KEY: &str = "sk-test-0123456789abcdef";

#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves one scripted `(status, body)` per connection, then 500s.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut length, mut authorization) = (0usize, None);
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    authorization = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen {
                authorization,
                body: serde_json::from_slice(&body).unwrap(),
            });
            let (status, text) = script.next().unwrap_or((500, "exhausted".into()));
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn ok(content: &str) -> (u16, String) {
    (
        200,
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
    )
}

fn oracle(url: &str, retries: u32) -> HttpOracle {
    let config = OracleConfig {
        endpoint_url: url.into(),
        max_retries: retries,
        ..Default::default()
    };
    HttpOracle::with_api_key(config, Some(KEY.into()))
        .unwrap()
        .with_backoff(Duration::from_millis(1))
}

fn prompt(user: &str) -> Prompt {
    Prompt {
        system: "system text".into(),
        user: user.into(),
        meta: PromptMeta::default(),
        payload: None,
    }
}

#[test]
fn rate_limits_and_server_errors_are_retried() {
    let (url, seen) = serve(vec![(429, "slow down".into()), (503, "busy".into()), ok("Answer: Car")]);
    let o = oracle(&url, 3);
    assert_eq!(o.complete(&prompt("q")).unwrap(), "Answer: Car");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].authorization.as_deref(), Some(format!("Bearer {KEY}").as_str()));
    assert_eq!(seen[0].body["messages"][1]["content"], "q");
    assert_eq!(seen[0].body["model"], "gpt-4o");
    assert_eq!(o.stats().calls, 3);
}

#[test]
fn client_errors_are_fatal_without_retry() {
    let (url, seen) = serve(vec![(401, "bad key".into()), ok("never")]);
    let err = oracle(&url, 3).complete(&prompt("q")).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 1, .. }), "{err:?}");
    assert_eq!(err.class(), ErrorClass::Oracle);
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn retries_are_bounded() {
    let (url, seen) = serve(vec![
        (500, "a".into()),
        (500, "b".into()),
        (500, "c".into()),
        ok("late"),
    ]);
    let err = oracle(&url, 2).complete(&prompt("q")).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn malformed_body_is_fatal() {
    let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    assert!(matches!(
        oracle(&url, 3).complete(&prompt("q")),
        Err(Error::Transport { attempts: 1, .. })
    ));
}

#[test]
fn api_key_never_appears_in_output() {
    let (url, _) = serve(vec![(403, "forbidden".into())]);
    let o = oracle(&url, 0);
    let err = o.complete(&prompt("q")).unwrap_err();
    for text in [
        err.to_string(),
        format!("{err:?}"),
        o.identity(),
        format!("{:?}", o.config()),
    ] {
        assert!(!text.contains(KEY), "{text}");
    }
}

#[test]
fn cache_serves_repeats_and_persists() {
    let (url, seen) = serve(vec![ok("Answer: Train"), ok("Answer: Car")]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    {
        let cached = CachedOracle::new(oracle(&url, 0), &path).unwrap();
        assert_eq!(cached.complete(&prompt("a")).unwrap(), "Answer: Train");
        assert_eq!(cached.complete(&prompt("a")).unwrap(), "Answer: Train");
        assert_eq!(cached.stats().cache_hits, 1);
        assert!(cached.is_replayable());
    }
    let reopened = CachedOracle::new(oracle(&url, 0), &path).unwrap();
    assert_eq!(reopened.complete(&prompt("a")).unwrap(), "Answer: Train");
    assert_eq!(reopened.complete(&prompt("b")).unwrap(), "Answer: Car");
    assert_eq!(seen.lock().unwrap().len(), 2);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(!text.contains(KEY));
}
