//! Remote backend against small in-process HTTP fakes.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use imputebench::genimpute::{
    build_finetune_pairs, CompleteRequest, FinetuneRequest, GenerativeBackend, GenerativeImputer,
    PromptTemplate, RemoteBackend, RemoteConfig,
};
use imputebench::impute::Imputer;
use imputebench::table::{
    default_missing_tokens, split_complete_incomplete, ColumnSchema, Table, TableSchema, Value,
};
use imputebench::Error;

struct Request {
    method: String,
    path: String,
    body: String,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        method,
        path,
        body: String::from_utf8(body).ok()?,
    })
}

/// Serve every connection with `handler(request) -> (status, body)`.
fn serve<F>(handler: F) -> String
where
    F: Fn(&Request) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handler = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            thread::spawn(move || {
                if let Some(req) = read_request(&mut stream) {
                    let (status, body) = handler(&req);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                }
            });
        }
    });
    format!("http://{addr}")
}

fn config(endpoint: String) -> RemoteConfig {
    let mut cfg = RemoteConfig::new(endpoint);
    cfg.backoff = Duration::from_millis(1);
    cfg.poll_interval = Duration::from_millis(1);
    cfg
}

#[test]
fn completion_roundtrip() {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let url = serve(move |r| {
        log.lock()
            .unwrap()
            .push((r.method.clone(), r.path.clone(), r.body.clone()));
        (200, r#"{"text":"4.0"}"#.into())
    });
    let b = RemoteBackend::new(config(url));
    assert_eq!(
        b.generate(
            "given a Genre of Drama, what is the corresponding Rating?",
            16,
            0.0
        )
        .unwrap(),
        "4.0"
    );
    let seen = seen.lock().unwrap();
    let (method, path, body) = &seen[0];
    assert_eq!((method.as_str(), path.as_str()), ("POST", "/v1/complete"));
    let req: CompleteRequest = serde_json::from_str(body).unwrap();
    assert_eq!(req.max_new_tokens, 16);
    assert_eq!(req.temperature, 0.0);
}

#[test]
fn server_errors_exhaust_retries() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let url = serve(move |_| {
        h.fetch_add(1, Ordering::SeqCst);
        (500, r#"{"error":"boom"}"#.into())
    });
    let b = RemoteBackend::new(config(url));
    let err = b.generate("x", 4, 0.0).unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable(_)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert!(err.is_user_error());
}

#[test]
fn transient_failure_then_success() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let url = serve(move |_| {
        if h.fetch_add(1, Ordering::SeqCst) == 0 {
            (503, String::new())
        } else {
            (200, r#"{"text":"Drama"}"#.into())
        }
    });
    let b = RemoteBackend::new(config(url));
    assert_eq!(b.generate("x", 4, 0.0).unwrap(), "Drama");
}

#[test]
fn failed_job_carries_detail() {
    let url = serve(|r| match (r.method.as_str(), r.path.as_str()) {
        ("POST", "/v1/finetune") => (200, r#"{"job_id":"j1"}"#.into()),
        ("GET", "/v1/finetune/j1") => (
            200,
            r#"{"status":"failed","detail":"out of memory"}"#.into(),
        ),
        _ => (404, "{}".into()),
    });
    let mut b = RemoteBackend::new(config(url));
    let err = b.fit(&[]).unwrap_err();
    match err {
        Error::ProtocolError(msg) => assert!(msg.contains("out of memory"), "{msg}"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn malformed_response_is_protocol_error() {
    let url = serve(|_| (200, r#"{"txt":"4.0"}"#.into()));
    let b = RemoteBackend::new(config(url));
    assert!(matches!(
        b.generate("x", 4, 0.0),
        Err(Error::ProtocolError(_))
    ));
}

#[test]
fn client_error_is_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let url = serve(move |_| {
        h.fetch_add(1, Ordering::SeqCst);
        (400, r#"{"error":"bad"}"#.into())
    });
    let b = RemoteBackend::new(config(url));
    assert!(matches!(
        b.generate("x", 4, 0.0),
        Err(Error::ProtocolError(_))
    ));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

/// Full imputation through a fake server that records the fine-tuning pairs
/// and answers by target column.
#[test]
fn generative_imputer_over_the_wire() {
    let schema = TableSchema::new(vec![
        ColumnSchema::identifier("UserID"),
        ColumnSchema::categorical("Genre"),
        ColumnSchema::numeric("Rating").with_range(0.0, 5.0),
    ])
    .unwrap();
    let csv = "UserID,Genre,Rating\n1,Drama,4\n2,Drama,4\n3,Comedy,2\n4,Drama,\n5,,2\n";
    let t = Table::parse_csv(csv, &schema, &default_missing_tokens()).unwrap();
    let (complete, _) = split_complete_incomplete(&t);
    let tpl = PromptTemplate::for_table(&complete);

    let pairs = Arc::new(Mutex::new(Vec::<(String, String)>::new()));
    let store = pairs.clone();
    let url = serve(move |r| match (r.method.as_str(), r.path.as_str()) {
        ("POST", "/v1/finetune") => {
            let req: FinetuneRequest = serde_json::from_str(&r.body).unwrap();
            *store.lock().unwrap() = req
                .pairs
                .into_iter()
                .map(|p| (p.prompt, p.completion))
                .collect();
            (200, r#"{"job_id":"ok"}"#.into())
        }
        ("GET", "/v1/finetune/ok") => (200, r#"{"status":"done"}"#.into()),
        ("POST", "/v1/complete") => {
            let req: CompleteRequest = serde_json::from_str(&r.body).unwrap();
            let text = if req.prompt.contains("Rating?") {
                "4.0"
            } else {
                "Comedy"
            };
            (200, serde_json::json!({ "text": text }).to_string())
        }
        _ => (404, "{}".into()),
    });

    let mut imp = GenerativeImputer::new(Box::new(RemoteBackend::new(config(url))), tpl.clone());
    imp.fit(&complete).unwrap();
    assert_eq!(
        pairs.lock().unwrap().len(),
        build_finetune_pairs(&complete, &tpl).unwrap().len()
    );
    let out = imp.impute(&t).unwrap();
    assert_eq!(out.value(3, 2), Some(Value::Num(4.0)));
    assert_eq!(out.value(4, 1), Some(Value::Cat("Comedy".into())));
    assert_eq!(out.n_missing(), 0);
}
