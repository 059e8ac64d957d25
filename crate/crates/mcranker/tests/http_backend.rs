//! HTTP backend behavior against a scripted local server: transient
//! failures retry with backoff, non-transient failures surface
//! immediately, and exhaustion is reported.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use mcranker::llm::{Backend, HttpBackend, LlmRequest, Stage};
use mcranker::Error;

/// Serve one scripted (status, body) response per connection.
fn scripted_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    std::thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            counter.fetch_add(1, Ordering::SeqCst);
            // Drain the request: headers, then content-length bytes.
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            let mut content_length = 0usize;
            let mut header_end = None;
            while header_end.is_none() {
                let n = stream.read(&mut chunk).unwrap_or(0);
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_subsequence(&buf, b"\r\n\r\n") {
                    header_end = Some(pos + 4);
                    let headers = String::from_utf8_lossy(&buf[..pos]);
                    for line in headers.lines() {
                        if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                            content_length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
            }
            if let Some(end) = header_end {
                while buf.len() < end + content_length {
                    let n = stream.read(&mut chunk).unwrap_or(0);
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                }
            }
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (endpoint, hits)
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn completion_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn request() -> LlmRequest {
    LlmRequest::new("test-model", 0.0, "score this", Stage::Direct)
}

#[test]
fn transient_errors_retry_until_success() {
    let (endpoint, hits) = scripted_server(vec![
        (500, "oops".into()),
        (429, "slow down".into()),
        (200, completion_body("{\"Score\": 7}")),
    ]);
    let backend = Backend::Http(
        HttpBackend::new(endpoint, "test-key").with_retry(3, Duration::from_millis(5)),
    );
    let text = backend.call(&request()).unwrap();
    assert_eq!(text, "{\"Score\": 7}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn non_transient_error_fails_fast() {
    let (endpoint, hits) = scripted_server(vec![(401, "bad key".into())]);
    let backend = Backend::Http(
        HttpBackend::new(endpoint, "test-key").with_retry(3, Duration::from_millis(5)),
    );
    let err = backend.call(&request()).unwrap_err();
    match err {
        Error::Http { status, body } => {
            assert_eq!(status, 401);
            assert_eq!(body, "bad key");
        }
        other => panic!("unexpected: {other}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn exhausted_retries_report_attempts() {
    let (endpoint, hits) = scripted_server(vec![
        (503, "down".into()),
        (503, "down".into()),
        (503, "down".into()),
    ]);
    let backend = Backend::Http(
        HttpBackend::new(endpoint, "test-key").with_retry(2, Duration::from_millis(5)),
    );
    let err = backend.call(&request()).unwrap_err();
    assert!(matches!(err, Error::RetriesExhausted { attempts: 3, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn malformed_completion_body_is_transport_error() {
    let (endpoint, _) = scripted_server(vec![(200, "{\"unexpected\": true}".into())]);
    let backend = Backend::Http(
        HttpBackend::new(endpoint, "test-key").with_retry(0, Duration::from_millis(5)),
    );
    let err = backend.call(&request()).unwrap_err();
    assert!(matches!(err, Error::HttpTransport { .. }), "{err}");
}
