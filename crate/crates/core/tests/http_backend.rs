//! The HTTP client against an in-process mock sidecar.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use claimgate::backends::{
    Backend, BackendError, Capability, CorefProposal, HttpBackend, HttpOptions,
};
use serde_json::{json, Value};

struct Request {
    method: String,
    path: String,
    auth: Option<String>,
    body: Value,
}

type Handler = dyn Fn(&Request) -> (u16, Value) + Send + Sync;
/// Path and Authorization header of each request.
type Seen = Arc<Mutex<Vec<(String, Option<String>)>>>;

struct Mock {
    url: String,
    hits: Arc<AtomicUsize>,
    seen: Seen,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_owned();
    let path = parts.next()?.to_owned();
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        match k.to_ascii_lowercase().as_str() {
            "content-length" => len = v.trim().parse().ok()?,
            "authorization" => auth = Some(v.trim().to_owned()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    let body = if body.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&body).ok()?
    };
    Some(Request {
        method,
        path,
        auth,
        body,
    })
}

fn serve(handler: Box<Handler>) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(Mutex::new(Vec::new()));
    let (h2, s2) = (hits.clone(), seen.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(req) = read_request(&mut stream) else {
                continue;
            };
            h2.fetch_add(1, Ordering::SeqCst);
            s2.lock()
                .unwrap()
                .push((req.path.clone(), req.auth.clone()));
            let (status, body) = handler(&req);
            let body = body.to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    Mock { url, hits, seen }
}

fn health(version: &str) -> Value {
    json!({
        "status": "ok",
        "protocol_version": version,
        "capabilities": {
            "nli_logits": "nli/test-1",
            "embed": "embed/test-1",
            "punctuate": "punct/test-1",
            "truecase": "case/test-1",
            "coref_propose": "coref/test-1",
            "antecedent_select": "select/test-1",
            "decoder_rewrite": "rewrite/test-1",
            "cross_encode": "ce/test-1"
        }
    })
}

/// A well-behaved sidecar with fixed answers.
fn good(req: &Request) -> (u16, Value) {
    match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/health") => (200, health("1")),
        ("POST", "/nli") => {
            let n = req.body["pairs"].as_array().unwrap().len();
            let logits: Vec<Value> = (0..n)
                .map(|i| json!([i as f64, 0.0, -(i as f64)]))
                .collect();
            (200, json!({"model_id": "nli/test-1", "logits": logits}))
        }
        ("POST", "/embed") => {
            let n = req.body["texts"].as_array().unwrap().len();
            (
                200,
                json!({"model_id": "embed/test-1", "vectors": vec![[1.0, 0.0]; n]}),
            )
        }
        ("POST", "/punctuate") | ("POST", "/truecase") => {
            let texts: Vec<String> = req.body["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| format!("{}.", t.as_str().unwrap()))
                .collect();
            (200, json!({"model_id": "x/test-1", "texts": texts}))
        }
        ("POST", "/coref/propose") => (
            200,
            json!({"model_id": "coref/test-1", "proposals": [{"start": 0, "end": 2, "candidates": ["Elvis"]}]}),
        ),
        ("POST", "/coref/select") => (200, json!({"model_id": "select/test-1", "index": 0})),
        ("POST", "/rewrite") => (
            200,
            json!({"model_id": "rewrite/test-1", "text": req.body["claim"].as_str().unwrap().to_uppercase()}),
        ),
        ("POST", "/cross_encode") => {
            let n = req.body["passages"].as_array().unwrap().len();
            let scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
            (200, json!({"model_id": "ce/test-1", "scores": scores}))
        }
        _ => (404, json!({"error": "no such endpoint"})),
    }
}

fn fast() -> HttpOptions {
    HttpOptions {
        timeout: Duration::from_secs(5),
        retries: 2,
        backoff: Duration::from_millis(1),
        auth_token: None,
    }
}

#[test]
fn all_endpoints_round_trip() {
    let mock = serve(Box::new(good));
    let b = HttpBackend::connect(&mock.url, fast()).unwrap();
    assert!(b.descriptor().is_network());
    assert_eq!(b.descriptor().models.len(), 8);

    let z = b
        .nli_logits_batch(&[("a", "b"), ("c", "d"), ("e", "f")])
        .unwrap();
    assert_eq!(z.len(), 3);
    assert_eq!(z[2].as_array(), [2.0, 0.0, -2.0]);
    assert_eq!(b.embed("x").unwrap().0, vec![1.0, 0.0]);
    assert_eq!(b.punctuate("hi").unwrap(), "hi.");
    assert_eq!(b.truecase("hi").unwrap(), "hi.");
    let p = b.coref_propose(&["Elvis sang.".into()], "He sang").unwrap();
    assert_eq!(p[0].pronoun_span, (0, 2));
    assert_eq!(b.antecedent_select(&[], "He sang", &p[0]).unwrap(), 0);
    assert_eq!(b.decoder_rewrite(&[], "abc").unwrap(), "ABC");
    assert_eq!(
        b.cross_encode_batch("q", &["a", "b"]).unwrap(),
        vec![0.0, 1.0]
    );
    let observed = b.observed_models();
    assert_eq!(observed[&Capability::NliLogits], "nli/test-1");
    assert_eq!(observed[&Capability::DecoderRewrite], "rewrite/test-1");
}

#[test]
fn bearer_token_is_sent() {
    let mock = serve(Box::new(|r: &Request| {
        if r.auth.as_deref() != Some("Bearer s3cret") {
            return (401, json!({"error": "unauthorized"}));
        }
        good(r)
    }));
    let mut opts = fast();
    opts.auth_token = Some("s3cret".into());
    let b = HttpBackend::connect(&mock.url, opts).unwrap();
    b.embed("x").unwrap();
    assert!(mock
        .seen
        .lock()
        .unwrap()
        .iter()
        .all(|(_, a)| a.as_deref() == Some("Bearer s3cret")));

    let err = HttpBackend::connect(&mock.url, fast()).err().unwrap();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err}");
}

#[test]
fn protocol_version_mismatch_is_rejected() {
    let mock = serve(Box::new(|r: &Request| {
        if r.path == "/health" {
            (200, health("2"))
        } else {
            good(r)
        }
    }));
    let err = HttpBackend::connect(&mock.url, fast()).err().unwrap();
    assert!(err.to_string().contains("protocol"), "{err}");
}

#[test]
fn server_errors_are_retried_then_reported() {
    let failures = Arc::new(AtomicUsize::new(0));
    let f2 = failures.clone();
    let mock = serve(Box::new(move |r: &Request| {
        if r.path == "/embed" && f2.fetch_add(1, Ordering::SeqCst) < 2 {
            return (503, json!({"error": "warming up"}));
        }
        good(r)
    }));
    let b = HttpBackend::connect(&mock.url, fast()).unwrap();
    assert!(b.embed("x").is_ok());
    assert_eq!(failures.load(Ordering::SeqCst), 3);

    let mock = serve(Box::new(|r: &Request| {
        if r.path == "/embed" {
            (500, json!({"error": "boom"}))
        } else {
            good(r)
        }
    }));
    let b = HttpBackend::connect(&mock.url, fast()).unwrap();
    let before = mock.hits.load(Ordering::SeqCst);
    match b.embed("x") {
        Err(BackendError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(mock.hits.load(Ordering::SeqCst) - before, 3);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = serve(Box::new(|r: &Request| {
        if r.path == "/nli" {
            (422, json!({"error": "bad input"}))
        } else {
            good(r)
        }
    }));
    let b = HttpBackend::connect(&mock.url, fast()).unwrap();
    let before = mock.hits.load(Ordering::SeqCst);
    assert!(matches!(
        b.nli_logits("a", "b"),
        Err(BackendError::Protocol { .. })
    ));
    assert_eq!(mock.hits.load(Ordering::SeqCst) - before, 1);
}

#[test]
fn batch_length_and_shape_are_checked() {
    let mock = serve(Box::new(|r: &Request| match r.path.as_str() {
        "/nli" => (200, json!({"model_id": "m", "logits": [[1.0, 0.0, 0.0]]})),
        "/embed" => (
            200,
            json!({"model_id": "m", "vectors": [[1.0, 0.0], [1.0]]}),
        ),
        _ => good(r),
    }));
    let b = HttpBackend::connect(&mock.url, fast()).unwrap();
    let err = b.nli_logits_batch(&[("a", "b"), ("c", "d")]).unwrap_err();
    assert!(err.to_string().contains("expected 2"), "{err}");
    assert!(b.embed_batch(&["a", "b"]).is_err());
}

#[test]
fn missing_capability_fails_before_any_request() {
    let mock = serve(Box::new(|r: &Request| {
        if r.path == "/health" {
            (
                200,
                json!({"status": "ok", "protocol_version": "1", "capabilities": {"embed": "e"}}),
            )
        } else {
            good(r)
        }
    }));
    let b = HttpBackend::connect(&mock.url, fast()).unwrap();
    let before = mock.hits.load(Ordering::SeqCst);
    let err = b
        .antecedent_select(
            &[],
            "x",
            &CorefProposal {
                pronoun_span: (0, 1),
                candidates: vec![],
            },
        )
        .unwrap_err();
    assert!(
        matches!(err, BackendError::MissingCapability { .. }),
        "{err}"
    );
    assert_eq!(mock.hits.load(Ordering::SeqCst), before);
}

#[test]
fn unreachable_sidecar_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = HttpBackend::connect(&format!("http://127.0.0.1:{port}"), fast())
        .err()
        .unwrap();
    assert!(matches!(err, BackendError::Transport { .. }), "{err}");
}
